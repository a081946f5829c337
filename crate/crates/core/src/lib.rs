//! Label-noise dilution for training classifiers on noisy labels.
//!
//! Each mini-batch is embedded by the current model, linked into a
//! k-nearest-neighbor similarity graph, and the observed labels are diffused
//! over that graph. A per-example running average of the diffused label
//! mass decides which examples keep a training weight: only those whose
//! observed label still wins.
//!
//! The modules follow the pipeline:
//!
//! | module | role |
//! |--------|------|
//! | [`dataset`] | datasets, noise models, synthetic blobs, `LEND-DS` files |
//! | [`knn_graph`] | exact kNN, affinity `A`, normalized operator `W` |
//! | [`dilution`] | diffusion iterations and the running label store |
//! | [`classifier`] | two-layer perceptron, loss, gradients, SGD |
//! | [`trainer`] | the epoch loop and the cross-entropy baseline |
//! | [`metrics`] | accuracies, selection quality, history CSVs |
//! | [`experiment`] | config files and paired experiment runs |

pub mod classifier;
pub mod dataset;
pub mod dilution;
pub mod error;
pub mod experiment;
pub mod knn_graph;
mod linalg;
pub mod metrics;
pub mod trainer;

pub use classifier::{ClassifierModel, Gradients, LrSchedule, OptimizerState};
pub use dataset::{LabeledDataset, NoiseSpec, NoisyView, Split};
pub use dilution::{DilutedLabelStore, DilutionParams};
pub use error::{Error, ErrorCategory, Result};
pub use knn_graph::{NeighborList, SimilarityGraph};
pub use metrics::{EpochMetrics, Summary};
pub use trainer::{Method, TrainConfig};

//! The training loop: per-batch graph construction, dilution, running
//! average, agreement-based selection and weighted SGD, plus the plain
//! cross-entropy baseline.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::classifier::{weighted_loss, ClassifierModel, LrSchedule, OptimizerState, DEFAULT_EMBEDDING_DIM};
use crate::dataset::{LabeledDataset, NoisyView};
use crate::dilution::{dilute, init_batch, row_argmax, DilutedLabelStore, DilutionParams};
use crate::error::{Error, Result};
use crate::knn_graph::{SimilarityGraph, DEFAULT_GAMMA};
use crate::metrics::{clean_by_id, diluted_accuracy, predicted_accuracy, EpochMetrics, SelectionCounts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Lend,
    Standard,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Method::Lend => "lend",
            Method::Standard => "standard",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lend" => Ok(Method::Lend),
            "standard" => Ok(Method::Standard),
            other => Err(Error::Config(format!("unknown method {other:?} (expected lend or standard)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub k: usize,
    pub gamma: f64,
    pub dilution: DilutionParams,
    /// Epochs during which every example is trained on.
    pub warmup_epochs: usize,
    pub schedule: LrSchedule,
    pub momentum: f64,
    pub weight_decay: f64,
    pub embedding_dim: usize,
    pub seed: u64,
    /// Commit the running average once per epoch instead of once per batch.
    pub epoch_momentum: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Lend,
            max_epochs: 200,
            batch_size: 256,
            k: 8,
            gamma: DEFAULT_GAMMA,
            dilution: DilutionParams::default(),
            warmup_epochs: 5,
            schedule: LrSchedule::default(),
            momentum: 0.9,
            weight_decay: 5e-4,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            seed: 0,
            epoch_momentum: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidParameter(format!("batch_size must be at least 2, got {}", self.batch_size)));
        }
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if !(self.dilution.alpha > 0.0 && self.dilution.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {}", self.dilution.alpha)));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.embedding_dim == 0 {
            return Err(Error::InvalidParameter("embedding_dim must be positive".into()));
        }
        self.dilution.validate()?;
        OptimizerState::new(self.schedule, self.momentum, self.weight_decay)?;
        Ok(())
    }

    pub fn optimizer(&self) -> Result<OptimizerState> {
        OptimizerState::new(self.schedule, self.momentum, self.weight_decay)
    }
}

/// Binary sample weights for one mini-batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionMask {
    pub epoch: usize,
    pub batch_ids: Vec<usize>,
    pub weights: Vec<bool>,
    pub selected: usize,
}

impl SelectionMask {
    fn new(epoch: usize, batch_ids: Vec<usize>, weights: Vec<bool>) -> Self {
        let selected = weights.iter().filter(|&&w| w).count();
        Self { epoch, batch_ids, weights, selected }
    }
}

fn agreement(noisy_labels: &[usize], rows: ArrayView2<'_, f64>, batch_ids: &[usize]) -> Result<Vec<bool>> {
    noisy_labels
        .iter()
        .zip(rows.rows())
        .zip(batch_ids)
        .map(|((&y, row), &id)| row_argmax(row).map(|a| a == y).ok_or(Error::DegenerateRow(id)))
        .collect()
}

/// Keeps an example iff its observed label equals its stored diluted argmax.
pub fn select(noisy_labels: &[usize], batch_ids: &[usize], store: &DilutedLabelStore, epoch: usize) -> Result<SelectionMask> {
    if noisy_labels.len() != batch_ids.len() {
        return Err(Error::DimensionMismatch { what: "batch labels vs ids", expected: batch_ids.len(), got: noisy_labels.len() });
    }
    let mut weights = Vec::with_capacity(batch_ids.len());
    for (&y, &id) in noisy_labels.iter().zip(batch_ids) {
        if !store.is_initialized(id) {
            return Err(if id >= store.len() { Error::UnknownExample(id) } else { Error::UninitializedRow(id) });
        }
        weights.push(store.diluted_argmax(id)? == y);
    }
    Ok(SelectionMask::new(epoch, batch_ids.to_vec(), weights))
}

/// What one epoch did, without any reference to clean labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochTrace {
    pub epoch: usize,
    pub learning_rate: f64,
    pub masks: Vec<SelectionMask>,
    /// Sum of per-example losses over selected examples.
    pub loss_sum: f64,
    pub skipped: usize,
}

impl EpochTrace {
    pub fn selected(&self) -> usize {
        self.masks.iter().map(|m| m.selected).sum()
    }

    pub fn processed(&self) -> usize {
        self.masks.iter().map(|m| m.batch_ids.len()).sum()
    }

    pub fn mean_loss(&self) -> f64 {
        match self.selected() {
            0 => 0.0,
            s => self.loss_sum / s as f64,
        }
    }
}

/// Seeded per-epoch shuffle of storage positions.
pub fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng);
    order
}

/// Positions of each mini-batch for `epoch`; a short trailing batch is
/// kept only if it has at least `min_tail` members.
pub fn epoch_batches(len: usize, config: &TrainConfig, epoch: usize) -> (Vec<Vec<usize>>, usize) {
    let order = epoch_order(len, config.seed, epoch);
    let min_tail = match config.method {
        Method::Lend => config.k + 1,
        Method::Standard => 1,
    };
    let mut batches = Vec::new();
    let mut skipped = 0;
    for chunk in order.chunks(config.batch_size) {
        if chunk.len() < config.batch_size && chunk.len() < min_tail {
            skipped += chunk.len();
            continue;
        }
        batches.push(chunk.to_vec());
    }
    (batches, skipped)
}

/// Runs one epoch over shuffled mini-batches of `data`.
pub fn train_epoch(
    model: &mut ClassifierModel,
    optimizer: &mut OptimizerState,
    store: &mut DilutedLabelStore,
    data: NoisyView<'_>,
    config: &TrainConfig,
    epoch: usize,
) -> Result<EpochTrace> {
    let (batches, skipped) = epoch_batches(data.len(), config, epoch);
    let lr = optimizer.lr(epoch);
    let in_warmup = epoch < config.warmup_epochs;
    let mut masks = Vec::with_capacity(batches.len());
    let mut loss_sum = 0.0;
    let mut staged: Vec<(Vec<usize>, Array2<f64>)> = Vec::new();

    for positions in batches {
        let features = data.features().select(Axis(0), &positions);
        let ids: Vec<usize> = positions.iter().map(|&p| data.ids()[p]).collect();
        let labels: Vec<usize> = positions.iter().map(|&p| data.noisy_labels()[p]).collect();
        let pass = model.forward(features.view())?;

        let weights = match config.method {
            Method::Standard => vec![true; ids.len()],
            Method::Lend => {
                let graph = SimilarityGraph::build(&ids, pass.embeddings.view(), config.k, config.gamma)?;
                let z0 = init_batch(&labels, data.num_classes())?;
                let p = &config.dilution;
                let z = dilute(z0.view(), graph.normalized(), p.alpha, p.iterations, p.tol)?.labels;
                let weights = if config.epoch_momentum {
                    let rows = store.blended(&ids, z.view())?;
                    let w = agreement(&labels, rows.view(), &ids)?;
                    staged.push((ids.clone(), rows));
                    w
                } else {
                    store.momentum_update(&ids, z.view())?;
                    select(&labels, &ids, store, epoch)?.weights
                };
                if in_warmup {
                    vec![true; ids.len()]
                } else {
                    weights
                }
            }
        };

        let (loss, d_logits) = weighted_loss(pass.logits.view(), &labels, &weights)?;
        if !loss.is_finite() {
            return Err(Error::NumericalAbort { epoch, detail: format!("batch loss is {loss}") });
        }
        let mut grads = model.backward(features.view(), &pass, d_logits.view(), &weights);
        grads.scale(1.0 / ids.len() as f64);
        optimizer.sgd_step(model, &grads, epoch).map_err(|e| match e {
            Error::NonFinite(what) => Error::NumericalAbort { epoch, detail: format!("non-finite {what}") },
            other => other,
        })?;
        loss_sum += loss;
        masks.push(SelectionMask::new(epoch, ids, weights));
    }

    if config.epoch_momentum && config.method == Method::Lend {
        for (ids, rows) in &staged {
            store.write_rows(ids, rows.view())?;
        }
        store.advance();
    }
    Ok(EpochTrace { epoch, learning_rate: lr, masks, loss_sum, skipped })
}

/// Observed labels reindexed by example id.
pub fn noisy_by_id(data: NoisyView<'_>) -> Vec<usize> {
    let mut out = vec![0; data.len()];
    for (&id, &label) in data.ids().iter().zip(data.noisy_labels()) {
        out[id] = label;
    }
    out
}

/// Everything produced by a full training run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub history: Vec<EpochMetrics>,
    pub traces: Vec<EpochTrace>,
    pub model: ClassifierModel,
    pub store: DilutedLabelStore,
}

/// Folds an epoch trace and the clean labels into reportable metrics.
pub fn epoch_metrics(
    trace: &EpochTrace,
    model: &ClassifierModel,
    store: &DilutedLabelStore,
    train: &LabeledDataset,
    test: &LabeledDataset,
) -> Result<EpochMetrics> {
    let clean = clean_by_id(train);
    let noisy = noisy_by_id(train.noisy_view());
    let mut counts = SelectionCounts::default();
    for mask in &trace.masks {
        for (&id, &w) in mask.batch_ids.iter().zip(&mask.weights) {
            let is_clean = clean[id] == noisy[id];
            counts.processed += 1;
            counts.selected += w as usize;
            counts.clean += is_clean as usize;
            counts.selected_clean += (w && is_clean) as usize;
        }
    }
    let (precision, undefined) = counts.precision();
    Ok(EpochMetrics {
        epoch: trace.epoch,
        test_accuracy: predicted_accuracy(model, test)?,
        diluted_label_accuracy: diluted_accuracy(store, &clean)?,
        predicted_label_accuracy: predicted_accuracy(model, train)?,
        selection_precision: precision,
        precision_undefined: undefined,
        selection_recall: counts.recall(),
        selection_fraction: counts.fraction(),
        mean_loss: trace.mean_loss(),
        learning_rate: trace.learning_rate,
        counts,
    })
}

/// Trains a fresh model for `config.max_epochs` epochs, evaluating after each.
pub fn run(train: &LabeledDataset, test: &LabeledDataset, config: &TrainConfig) -> Result<RunOutcome> {
    run_with_observer(train, test, config, |_, _, _| Ok(()))
}

/// Like [`run`], calling `observe` after each epoch's metrics are computed.
pub fn run_with_observer<F>(train: &LabeledDataset, test: &LabeledDataset, config: &TrainConfig, mut observe: F) -> Result<RunOutcome>
where
    F: FnMut(&EpochMetrics, &ClassifierModel, &DilutedLabelStore) -> Result<()>,
{
    config.validate()?;
    if train.dim() != test.dim() {
        return Err(Error::DimensionMismatch { what: "train vs test feature width", expected: train.dim(), got: test.dim() });
    }
    if train.num_classes() != test.num_classes() {
        return Err(Error::DimensionMismatch { what: "train vs test classes", expected: train.num_classes(), got: test.num_classes() });
    }
    let view = train.noisy_view();
    let mut model = ClassifierModel::new(train.dim(), config.embedding_dim, train.num_classes(), config.seed);
    let mut optimizer = config.optimizer()?;
    let mut store = DilutedLabelStore::new(&noisy_by_id(view), train.num_classes(), config.dilution)?;
    let mut history = Vec::with_capacity(config.max_epochs);
    let mut traces = Vec::with_capacity(config.max_epochs);
    for epoch in 0..config.max_epochs {
        let trace = train_epoch(&mut model, &mut optimizer, &mut store, view, config, epoch)?;
        let metrics = epoch_metrics(&trace, &model, &store, train, test)?;
        observe(&metrics, &model, &store)?;
        history.push(metrics);
        traces.push(trace);
    }
    Ok(RunOutcome { history, traces, model, store })
}

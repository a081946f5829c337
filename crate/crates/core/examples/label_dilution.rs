//! Dilutes noisy labels over a kNN graph built on the raw features, then
//! folds the result into a running store, reporting label accuracy.
//!
//! ```text
//! cargo run --release --example label_dilution -- [noise_rate] [seed]
//! ```

use lend::dataset::{inject_noise, make_gaussian_clusters, make_symmetric_spec, ClusterParams, Split};
use lend::dilution::{dilute, init_batch, row_argmax};
use lend::knn_graph::DEFAULT_GAMMA;
use lend::{DilutedLabelStore, DilutionParams, SimilarityGraph};

fn main() -> lend::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let rate: f64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(0.4);
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);

    let params = ClusterParams { num_classes: 4, per_class: 500, dim: 128, separation: 10.0, spread: 1.0, seed };
    let clean = make_gaussian_clusters(&params, Split::Train)?;
    let ds = inject_noise(&clean, &make_symmetric_spec(4, rate, seed + 1)?)?;
    println!("observed-label accuracy {:.4}", 1.0 - ds.noise_fraction());

    let graph = SimilarityGraph::build(ds.ids(), ds.features(), 8, DEFAULT_GAMMA)?;
    let z0 = init_batch(ds.noisy_labels(), 4)?;
    for t in [1, 2, 5, 10] {
        let z = dilute(z0.view(), graph.normalized(), 0.99, t, 0.0)?.labels;
        let hits = (0..ds.len()).filter(|&i| row_argmax(z.row(i)) == Some(ds.clean_labels()[i])).count();
        println!("T={t:2}: diluted-label accuracy {:.4}", hits as f64 / ds.len() as f64);
    }

    let params = DilutionParams::default();
    let mut store = DilutedLabelStore::new(ds.noisy_labels(), 4, params)?;
    let z = dilute(z0.view(), graph.normalized(), params.alpha, params.iterations, params.tol)?.labels;
    for round in 1..=30 {
        store.momentum_update(ds.ids(), z.view())?;
        if round % 5 == 0 {
            let hits = ds.ids().iter().filter(|&&id| store.diluted_argmax(id).ok() == Some(ds.clean_labels()[id])).count();
            println!("store after {round:2} updates (beta {}): accuracy {:.4}", params.beta, hits as f64 / ds.len() as f64);
        }
    }
    Ok(())
}

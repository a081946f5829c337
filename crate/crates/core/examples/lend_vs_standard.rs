//! Paired LEND / Standard runs on noisy Gaussian blobs, printing per-epoch
//! curves and the Best/Last summary.
//!
//! ```text
//! cargo run --release --example lend_vs_standard -- [dim] [noise_rate] [seed]
//! ```

use lend::dataset::ClusterParams;
use lend::experiment::{NoiseSetting, SyntheticData};
use lend::metrics::summarize_history;
use lend::trainer::{run, Method, TrainConfig};
use lend::LrSchedule;

fn main() -> lend::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    let dim = arg(0, 128.0) as usize;
    let rate = arg(1, 0.4);
    let seed = arg(2, 0.0) as u64;

    let data = SyntheticData {
        clusters: ClusterParams { num_classes: 4, per_class: 500, dim, separation: 10.0, spread: 1.0, seed },
        test_per_class: 250,
        noise: NoiseSetting::Symmetric { rate },
        noise_seed: seed + 1,
    };
    let (train, test) = data.generate()?;
    println!("train n={} observed noise {:.3}", train.len(), train.noise_fraction());

    let base = TrainConfig {
        max_epochs: 100,
        batch_size: 256,
        schedule: LrSchedule { initial: 0.05, decay_epoch: 50, divisor: 10.0 },
        seed,
        ..Default::default()
    };
    for method in [Method::Standard, Method::Lend] {
        let out = run(&train, &test, &TrainConfig { method, ..base.clone() })?;
        println!("{method}: epoch test diluted predicted precision recall fraction");
        for m in out.history.iter().step_by(5) {
            println!(
                "  {:3} {:.3} {:.3} {:.3} {:.3} {:.3} {:.3}",
                m.epoch, m.test_accuracy, m.diluted_label_accuracy, m.predicted_label_accuracy, m.selection_precision, m.selection_recall, m.selection_fraction
            );
        }
        if let Some(s) = summarize_history(&out.history) {
            println!("{method}: best {:.4} (epoch {}) last {:.4}", s.best, s.best_epoch, s.last);
        }
    }
    Ok(())
}

//! Runs every method listed in a config file and prints the Best/Last table.
//!
//! ```text
//! cargo run --release --example experiment_from_config -- crates/core/examples/configs/quick.cfg [out_dir]
//! ```

use std::path::PathBuf;

use lend::experiment::{run_experiment, ExperimentConfig};

fn main() -> lend::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let path = args
        .first()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/quick.cfg"));
    let config = ExperimentConfig::load(&path, None)?;
    let out = args.get(1).map(PathBuf::from).unwrap_or_else(|| config.out_dir.clone());
    let report = run_experiment(&config, &out)?;
    print!("{}", report.summary_table());
    for r in &report.reports {
        println!("{} history in {}", r.method, r.metrics_path.display());
    }
    Ok(())
}

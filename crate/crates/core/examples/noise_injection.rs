//! Builds symmetric and pair-flip noise models, injects them into a clean
//! dataset and compares observed flip frequencies with the transition rows.

use lend::dataset::{default_partners, inject_noise, make_asymmetric_spec, make_gaussian_clusters, make_symmetric_spec, ClusterParams, Split};
use lend::NoiseSpec;

fn show(name: &str, spec: &NoiseSpec, clean: &lend::LabeledDataset) -> lend::Result<()> {
    let noisy = inject_noise(clean, spec)?;
    let c = spec.num_classes();
    let mut counts = vec![vec![0usize; c]; c];
    for (&y, &obs) in noisy.clean_labels().iter().zip(noisy.noisy_labels()) {
        counts[y][obs] += 1;
    }
    println!("{name}: observed noise {:.4}", noisy.noise_fraction());
    for (i, row) in counts.iter().enumerate() {
        let total: usize = row.iter().sum();
        let observed: Vec<String> = row.iter().map(|&n| format!("{:.3}", n as f64 / total as f64)).collect();
        let expected: Vec<String> = spec.transition().row(i).iter().map(|p| format!("{p:.3}")).collect();
        println!("  class {i}: observed [{}]  expected [{}]", observed.join(" "), expected.join(" "));
    }
    Ok(())
}

fn main() -> lend::Result<()> {
    let params = ClusterParams { num_classes: 5, per_class: 2000, dim: 2, separation: 10.0, spread: 1.0, seed: 1 };
    let clean = make_gaussian_clusters(&params, Split::Train)?;
    show("symmetric 0.4", &make_symmetric_spec(5, 0.4, 17)?, &clean)?;
    show("pair flip 0.4", &make_asymmetric_spec(5, 0.4, &default_partners(5), 17)?, &clean)?;

    match make_asymmetric_spec(5, 0.5, &default_partners(5), 17) {
        Err(e) => println!("rate 0.5 pair flip rejected: {e}"),
        Ok(_) => println!("rate 0.5 pair flip unexpectedly accepted"),
    }
    Ok(())
}

//! Compares analytic gradients of the selected-example loss against
//! central differences, then takes a few SGD steps.

use lend::classifier::{ClassifierModel, LrSchedule, OptimizerState};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> lend::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, d_in, d, c) = (10, 6, 8, 4);
    let x = Array2::from_shape_simple_fn((n, d_in), || rng.random_range(-2.0..2.0));
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let selected: Vec<bool> = (0..n).map(|i| i % 3 != 0).collect();
    let mut model = ClassifierModel::new(d_in, d, c, 11);

    let (loss, grads) = model.loss_and_gradients(x.view(), &labels, &selected)?;
    let analytic = grads.to_flat();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for p in 0..model.num_parameters() {
        let mut plus = model.clone();
        *plus.parameter_mut(p) += h;
        let mut minus = model.clone();
        *minus.parameter_mut(p) -= h;
        let numeric = (plus.loss_and_gradients(x.view(), &labels, &selected)?.0 - minus.loss_and_gradients(x.view(), &labels, &selected)?.0) / (2.0 * h);
        let scale = analytic[p].abs().max(numeric.abs()).max(1e-12);
        worst = worst.max((analytic[p] - numeric).abs() / scale);
    }
    println!("{} parameters, loss {loss:.6}, worst relative gradient error {worst:.2e}", model.num_parameters());

    let mut opt = OptimizerState::new(LrSchedule { initial: 0.1, decay_epoch: 1000, divisor: 10.0 }, 0.9, 5e-4)?;
    for step in 0..20 {
        let (loss, mut grads) = model.loss_and_gradients(x.view(), &labels, &selected)?;
        grads.scale(1.0 / n as f64);
        opt.sgd_step(&mut model, &grads, 0)?;
        if step % 5 == 0 {
            println!("step {step:2}: loss {loss:.5}");
        }
    }
    Ok(())
}

use ndarray::ArrayView1;

/// Sequential left-to-right dot product.
///
/// The fixed reduction order makes `dot(a, b) == dot(b, a)` bit for bit and
/// keeps results independent of where a row sits in a batch.
pub fn dot(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc + x * y)
}

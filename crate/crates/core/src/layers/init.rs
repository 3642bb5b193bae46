use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `(fan_in, fan_out)` for a weight shape.
///
/// `[out, in]` matrices use the obvious pair; `[filters, kernel, channels]`
/// convolution kernels count the receptive field on both sides.
pub fn fans(shape: &[usize]) -> (usize, usize) {
    match *shape {
        [n] => (n, n),
        [out, inp] => (inp, out),
        [filters, kernel, channels] => (kernel * channels, kernel * filters),
        _ => {
            let n: usize = shape.iter().product();
            (n, n)
        }
    }
}

pub fn glorot_bound(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = fans(shape);
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Glorot-uniform weights in `[-√(6/(fan_in+fan_out)), √(6/(fan_in+fan_out))]`.
pub fn init_params<T: Scalar, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor<T> {
    let bound = glorot_bound(shape);
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::of(rng.gen_range(-bound..=bound)))
        .collect();
    Tensor::new(shape, data).expect("sized from shape")
}

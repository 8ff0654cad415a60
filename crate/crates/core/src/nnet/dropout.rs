use rand::Rng;

use crate::nnet::tensor::{Real, Tensor};

/// Inverted-dropout mask: `0` with probability `rate`, else `1 / (1 - rate)`.
pub fn dropout_mask<T: Real, R: Rng>(len: usize, rate: f64, rng: &mut R) -> Vec<T> {
    assert!((0.0..1.0).contains(&rate), "dropout rate must lie in [0, 1)");
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| {
            if rate > 0.0 && rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect()
}

/// Applies dropout in training mode; identity at inference.
pub fn dropout<T: Real, R: Rng>(x: &Tensor<T>, rate: f64, training: bool, rng: &mut R) -> Tensor<T> {
    if !training || rate == 0.0 {
        return x.clone();
    }
    let mask = dropout_mask::<T, R>(x.len(), rate, rng);
    let mut y = x.clone();
    for (v, m) in y.data_mut().iter_mut().zip(&mask) {
        *v *= *m;
    }
    y
}

use crate::error::{Error, Result};
use crate::nnet::{Real, Tensor};

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(weights: &[&Tensor<T>], beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Tensor<T>> = weights.iter().map(|w| Tensor::zeros(w.shape())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1,
            beta2,
            epsilon,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<T: Real>(
    weights: &mut [&mut Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    if weights.len() != grads.len() || weights.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam: {} weights, {} grads, {} moment tensors",
            weights.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (w, g)) in weights.iter().zip(grads).enumerate() {
        if w.shape() != g.shape() || w.shape() != state.m[i].shape() {
            return Err(Error::Shape(format!(
                "adam: tensor {i} has shape {:?} but gradient {:?}",
                w.shape(),
                g.shape()
            )));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let b1 = T::from_f64_lossy(state.beta1);
    let b2 = T::from_f64_lossy(state.beta2);
    let one = T::one();
    let c1 = T::from_f64_lossy(1.0 / (1.0 - state.beta1.powi(t)));
    let c2 = T::from_f64_lossy(1.0 / (1.0 - state.beta2.powi(t)));
    let eps = T::from_f64_lossy(state.epsilon);
    let lr = T::from_f64_lossy(lr);
    for ((w, g), (m, v)) in weights
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((wv, &gv), mv), vv) in w
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mv = b1 * *mv + (one - b1) * gv;
            *vv = b2 * *vv + (one - b2) * gv * gv;
            let m_hat = *mv * c1;
            let v_hat = *vv * c2;
            *wv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(w: &Tensor<f64>) -> AdamState<f64> {
        AdamState::new(&[w], 0.9, 0.999, 1e-8)
    }

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut w = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let before = w.clone();
        let mut s = state(&w);
        adam_step(&mut [&mut w], &[Tensor::zeros(&[3])], &mut s, 0.1).unwrap();
        assert_eq!(w, before);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut w = Tensor::<f64>::zeros(&[4]);
        let g = Tensor::from_vec(&[4], vec![3.0, -0.01, 100.0, -7.0]).unwrap();
        let mut s = state(&w);
        adam_step(&mut [&mut w], &[g.clone()], &mut s, 0.025).unwrap();
        for (wv, gv) in w.data().iter().zip(g.data()) {
            assert!((wv + 0.025 * gv.signum()).abs() < 1e-6, "{wv}");
        }
    }

    #[test]
    fn quadratic_converges() {
        // f(x, y) = (x - 1)^2 + 4 (y + 2)^2, minimum at (1, -2).
        let mut w = Tensor::<f64>::zeros(&[2]);
        let mut s = state(&w);
        for _ in 0..200 {
            let d = w.data();
            let g = Tensor::from_vec(&[2], vec![2.0 * (d[0] - 1.0), 8.0 * (d[1] + 2.0)]).unwrap();
            adam_step(&mut [&mut w], &[g], &mut s, 0.1).unwrap();
        }
        let d = w.data();
        assert!((d[0] - 1.0).abs() < 1e-3 && (d[1] + 2.0).abs() < 1e-3, "{d:?}");
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let mut w = Tensor::<f64>::zeros(&[2]);
        let mut s = state(&w);
        let r = adam_step(&mut [&mut w], &[Tensor::zeros(&[3])], &mut s, 0.1);
        assert!(matches!(r, Err(Error::Shape(_))));
    }
}

use rand::Rng;

use crate::error::{Error, Result};
use crate::nnet::init::glorot_uniform;
use crate::nnet::tensor::{
    matmul_a_bt_into, matmul_at_b_acc, matmul_into, Real, Tensor,
};

/// Multi-head self-attention with a residual connection:
/// `y = x + concat_h(softmax(Q_h K_h^T / sqrt(d_k)) V_h) W_o + b_o`.
///
/// No positional encoding is applied, so the block is permutation
/// equivariant over time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention<T> {
    pub heads: usize,
    pub key_dim: usize,
    pub wq: Tensor<T>,
    pub bq: Tensor<T>,
    pub wk: Tensor<T>,
    pub bk: Tensor<T>,
    pub wv: Tensor<T>,
    pub bv: Tensor<T>,
    pub wo: Tensor<T>,
    pub bo: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct AttentionCache<T> {
    x: Tensor<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// Attention weights, `heads x T x T`.
    weights: Vec<T>,
    concat: Vec<T>,
}

impl<T> AttentionCache<T> {
    /// Attention weights of one head, row-major `T x T`.
    pub fn head_weights(&self, head: usize, steps: usize) -> &[T] {
        &self.weights[head * steps * steps..(head + 1) * steps * steps]
    }
}

/// Copies head columns `[off, off + dk)` of a `steps x inner` buffer.
fn gather_head<T: Real>(src: &[T], inner: usize, off: usize, dk: usize, dst: &mut [T]) {
    for (d, s) in dst.chunks_exact_mut(dk).zip(src.chunks_exact(inner)) {
        d.copy_from_slice(&s[off..off + dk]);
    }
}

fn scatter_head<T: Real>(src: &[T], inner: usize, off: usize, dk: usize, dst: &mut [T]) {
    for (s, d) in src.chunks_exact(dk).zip(dst.chunks_exact_mut(inner)) {
        d[off..off + dk].copy_from_slice(s);
    }
}

/// `row <- softmax(scale * row)`.
fn softmax_in_place<T: Real>(row: &mut [T], scale: T) {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = ((*v - max) * scale).exp();
        sum += *v;
    }
    let inv = T::one() / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

impl<T: Real> MultiHeadAttention<T> {
    pub fn new<R: Rng>(model_dim: usize, heads: usize, key_dim: usize, rng: &mut R) -> Self {
        let inner = heads * key_dim;
        Self {
            heads,
            key_dim,
            wq: glorot_uniform(&[model_dim, inner], model_dim, inner, rng),
            bq: Tensor::zeros(&[inner]),
            wk: glorot_uniform(&[model_dim, inner], model_dim, inner, rng),
            bk: Tensor::zeros(&[inner]),
            wv: glorot_uniform(&[model_dim, inner], model_dim, inner, rng),
            bv: Tensor::zeros(&[inner]),
            wo: glorot_uniform(&[inner, model_dim], inner, model_dim, rng),
            bo: Tensor::zeros(&[model_dim]),
        }
    }

    pub fn model_dim(&self) -> usize {
        self.wq.shape()[0]
    }

    fn inner(&self) -> usize {
        self.heads * self.key_dim
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn project(x: &[T], w: &Tensor<T>, b: &Tensor<T>, steps: usize) -> Vec<T> {
        let (d, n) = (w.shape()[0], w.shape()[1]);
        let mut out = Vec::with_capacity(steps * n);
        for _ in 0..steps {
            out.extend_from_slice(b.data());
        }
        matmul_into(x, w.data(), steps, d, n, &mut out, true);
        out
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, AttentionCache<T>)> {
        let (steps, d) = (x.rows(), x.cols());
        if d != self.model_dim() {
            return Err(Error::Shape(format!(
                "attention expects model dim {}, got {d}",
                self.model_dim()
            )));
        }
        let inner = self.inner();
        let dk = self.key_dim;
        let q = Self::project(x.data(), &self.wq, &self.bq, steps);
        let k = Self::project(x.data(), &self.wk, &self.bk, steps);
        let v = Self::project(x.data(), &self.wv, &self.bv, steps);
        let scale = T::from_f64_lossy(1.0 / (dk as f64).sqrt());

        let mut weights = vec![T::zero(); self.heads * steps * steps];
        let mut concat = vec![T::zero(); steps * inner];
        let mut qh = vec![T::zero(); steps * dk];
        let mut kt = vec![T::zero(); dk * steps];
        let mut vh = vec![T::zero(); steps * dk];
        let mut oh = vec![T::zero(); steps * dk];
        for h in 0..self.heads {
            let off = h * dk;
            gather_head(&q, inner, off, dk, &mut qh);
            gather_head(&v, inner, off, dk, &mut vh);
            for t in 0..steps {
                for c in 0..dk {
                    kt[c * steps + t] = k[t * inner + off + c];
                }
            }
            let a = &mut weights[h * steps * steps..(h + 1) * steps * steps];
            matmul_into(&qh, &kt, steps, dk, steps, a, false);
            for row in a.chunks_exact_mut(steps) {
                softmax_in_place(row, scale);
            }
            matmul_into(a, &vh, steps, steps, dk, &mut oh, false);
            scatter_head(&oh, inner, off, dk, &mut concat);
        }

        let mut y = Tensor::zeros(&[steps, d]);
        {
            let yd = y.data_mut();
            for t in 0..steps {
                yd[t * d..(t + 1) * d].copy_from_slice(self.bo.data());
            }
            matmul_into(&concat, self.wo.data(), steps, inner, d, yd, true);
            for (yv, xv) in yd.iter_mut().zip(x.data()) {
                *yv += *xv;
            }
        }
        Ok((
            y,
            AttentionCache {
                x: x.clone(),
                q,
                k,
                v,
                weights,
                concat,
            },
        ))
    }

    /// Grad order: wq, bq, wk, bk, wv, bv, wo, bo.
    pub fn backward(&self, cache: &AttentionCache<T>, dy: &Tensor<T>, grads: &mut [Tensor<T>]) -> Tensor<T> {
        let x = &cache.x;
        let (steps, d) = (x.rows(), x.cols());
        let inner = self.inner();
        let dk = self.key_dim;
        let scale = T::from_f64_lossy(1.0 / (dk as f64).sqrt());
        let dyd = dy.data();

        // Output projection.
        matmul_at_b_acc(&cache.concat, dyd, steps, inner, d, grads[6].data_mut());
        {
            let gbo = grads[7].data_mut();
            for t in 0..steps {
                for (g, v) in gbo.iter_mut().zip(&dyd[t * d..(t + 1) * d]) {
                    *g += *v;
                }
            }
        }
        let mut dconcat = vec![T::zero(); steps * inner];
        matmul_a_bt_into(dyd, self.wo.data(), steps, d, inner, &mut dconcat, false);

        let mut dq = vec![T::zero(); steps * inner];
        let mut dk_ = vec![T::zero(); steps * inner];
        let mut dv = vec![T::zero(); steps * inner];
        let mut qh = vec![T::zero(); steps * dk];
        let mut kh = vec![T::zero(); steps * dk];
        let mut vt = vec![T::zero(); dk * steps];
        let mut doh = vec![T::zero(); steps * dk];
        let mut ds = vec![T::zero(); steps * steps];
        let mut gh = vec![T::zero(); steps * dk];
        for h in 0..self.heads {
            let off = h * dk;
            let a = &cache.weights[h * steps * steps..(h + 1) * steps * steps];
            gather_head(&cache.q, inner, off, dk, &mut qh);
            gather_head(&cache.k, inner, off, dk, &mut kh);
            gather_head(&dconcat, inner, off, dk, &mut doh);
            for t in 0..steps {
                for c in 0..dk {
                    vt[c * steps + t] = cache.v[t * inner + off + c];
                }
            }
            // dV = A^T dO
            gh.iter_mut().for_each(|g| *g = T::zero());
            matmul_at_b_acc(a, &doh, steps, steps, dk, &mut gh);
            scatter_head(&gh, inner, off, dk, &mut dv);
            // dA = dO V^T, then through the softmax.
            matmul_into(&doh, &vt, steps, dk, steps, &mut ds, false);
            for (drow, arow) in ds.chunks_exact_mut(steps).zip(a.chunks_exact(steps)) {
                let dot: T = arow.iter().zip(drow.iter()).fold(T::zero(), |s, (a, g)| s + *a * *g);
                for (g, av) in drow.iter_mut().zip(arow) {
                    *g = *av * (*g - dot) * scale;
                }
            }
            // dQ = dS K, dK = dS^T Q
            matmul_into(&ds, &kh, steps, steps, dk, &mut gh, false);
            scatter_head(&gh, inner, off, dk, &mut dq);
            gh.iter_mut().for_each(|g| *g = T::zero());
            matmul_at_b_acc(&ds, &qh, steps, steps, dk, &mut gh);
            scatter_head(&gh, inner, off, dk, &mut dk_);
        }

        let mut dx = dy.clone();
        for (gi, (dproj, w)) in [(&dq, &self.wq), (&dk_, &self.wk), (&dv, &self.wv)]
            .into_iter()
            .enumerate()
        {
            matmul_at_b_acc(x.data(), dproj, steps, d, inner, grads[2 * gi].data_mut());
            let gb = grads[2 * gi + 1].data_mut();
            for t in 0..steps {
                for (g, v) in gb.iter_mut().zip(&dproj[t * inner..(t + 1) * inner]) {
                    *g += *v;
                }
            }
            matmul_a_bt_into(dproj, w.data(), steps, inner, d, dx.data_mut(), true);
        }
        dx
    }

    pub fn params(&self) -> [&Tensor<T>; 8] {
        [
            &self.wq, &self.bq, &self.wk, &self.bk, &self.wv, &self.bv, &self.wo, &self.bo,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor<T>; 8] {
        [
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer() -> MultiHeadAttention<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        MultiHeadAttention::new(8, 8, 8, &mut rng)
    }

    fn random_x(steps: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(&[steps, 8], |_| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn identical_rows_give_uniform_weights() {
        let row: Vec<f64> = (0..8).map(|i| i as f64 * 0.3 - 1.0).collect();
        let x = Tensor::from_vec(&[6, 8], row.repeat(6)).unwrap();
        let (y, cache) = layer().forward(&x).unwrap();
        for h in 0..8 {
            for w in cache.head_weights(h, 6) {
                assert!((w - 1.0 / 6.0).abs() < 1e-12);
            }
        }
        for t in 1..6 {
            assert_eq!(y.row(t), y.row(0));
        }
    }

    #[test]
    fn single_step_attends_to_itself() {
        let l = layer();
        let x = random_x(1, 2);
        let (y, cache) = l.forward(&x).unwrap();
        for h in 0..8 {
            assert_eq!(cache.head_weights(h, 1), &[1.0]);
        }
        // y = x + (x Wv + bv) Wo + bo
        let mut v = l.bv.data().to_vec();
        matmul_into(x.data(), l.wv.data(), 1, 8, 64, &mut v, true);
        let mut expected = l.bo.data().to_vec();
        matmul_into(&v, l.wo.data(), 1, 64, 8, &mut expected, true);
        for (i, e) in expected.iter().enumerate() {
            assert!((y.data()[i] - (x.data()[i] + e)).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_rows_sum_to_one() {
        let (_, cache) = layer().forward(&random_x(17, 3)).unwrap();
        for h in 0..8 {
            for row in cache.head_weights(h, 17).chunks(17) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn permutation_equivariance() {
        let l = layer();
        let x = random_x(9, 4);
        let perm = [3usize, 0, 8, 1, 7, 2, 6, 4, 5];
        let mut xp = Tensor::zeros(&[9, 8]);
        for (new, &old) in perm.iter().enumerate() {
            xp.data_mut()[new * 8..(new + 1) * 8].copy_from_slice(x.row(old));
        }
        let (y, _) = l.forward(&x).unwrap();
        let (yp, _) = l.forward(&xp).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            for (a, b) in yp.row(new).iter().zip(y.row(old)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mismatched_dim_rejected() {
        assert!(layer().forward(&Tensor::zeros(&[4, 7])).is_err());
    }

    #[test]
    fn table_settings_param_count() {
        // 3 * (8*64 + 64) + 64*8 + 8
        assert_eq!(layer().param_count(), 2248);
    }
}

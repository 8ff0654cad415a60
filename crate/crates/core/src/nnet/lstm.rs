use rand::Rng;

use crate::error::{Error, Result};
use crate::nnet::init::glorot_uniform;
use crate::nnet::tensor::{matmul_a_bt_into, sigmoid, Real, Tensor};

/// LSTM returning the full hidden sequence, zero initial state.
///
/// Gate blocks in the `4u` columns are ordered input, forget, candidate,
/// output.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm<T> {
    pub units: usize,
    pub w_input: Tensor<T>,
    pub w_hidden: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct LstmCache<T> {
    x: Tensor<T>,
    /// Post-activation gates per step, `T x 4u`.
    gates: Vec<T>,
    /// Cell state per step, `T x u`.
    cells: Vec<T>,
    hidden: Vec<T>,
}

impl<T: Real> Lstm<T> {
    pub fn new<R: Rng>(inputs: usize, units: usize, rng: &mut R) -> Self {
        Self {
            units,
            w_input: glorot_uniform(&[inputs, 4 * units], inputs, 4 * units, rng),
            w_hidden: glorot_uniform(&[units, 4 * units], units, 4 * units, rng),
            bias: Tensor::zeros(&[4 * units]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w_input.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.w_input.len() + self.w_hidden.len() + self.bias.len()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, LstmCache<T>)> {
        let (steps, d) = (x.rows(), x.cols());
        if d != self.inputs() {
            return Err(Error::Shape(format!(
                "lstm expects {} inputs, got {d}",
                self.inputs()
            )));
        }
        let u = self.units;
        let g4 = 4 * u;
        let wx = self.w_input.data();
        let wh = self.w_hidden.data();
        let mut gates = vec![T::zero(); steps * g4];
        let mut cells = vec![T::zero(); steps * u];
        let mut hidden = vec![T::zero(); steps * u];
        let mut z = vec![T::zero(); g4];
        for t in 0..steps {
            z.copy_from_slice(self.bias.data());
            for (i, &xv) in x.row(t).iter().enumerate() {
                for (zv, w) in z.iter_mut().zip(&wx[i * g4..(i + 1) * g4]) {
                    *zv += xv * *w;
                }
            }
            if t > 0 {
                let hp = &hidden[(t - 1) * u..t * u];
                for (i, &hv) in hp.iter().enumerate() {
                    for (zv, w) in z.iter_mut().zip(&wh[i * g4..(i + 1) * g4]) {
                        *zv += hv * *w;
                    }
                }
            }
            let g = &mut gates[t * g4..(t + 1) * g4];
            for j in 0..u {
                g[j] = sigmoid(z[j]);
                g[u + j] = sigmoid(z[u + j]);
                g[2 * u + j] = z[2 * u + j].tanh();
                g[3 * u + j] = sigmoid(z[3 * u + j]);
            }
            for j in 0..u {
                let c_prev = if t > 0 { cells[(t - 1) * u + j] } else { T::zero() };
                let c = g[u + j] * c_prev + g[j] * g[2 * u + j];
                cells[t * u + j] = c;
                hidden[t * u + j] = g[3 * u + j] * c.tanh();
            }
        }
        let y = Tensor::from_vec(&[steps, u], hidden.clone())?;
        Ok((
            y,
            LstmCache {
                x: x.clone(),
                gates,
                cells,
                hidden,
            },
        ))
    }

    /// Grad order: w_input, w_hidden, bias.
    pub fn backward(&self, cache: &LstmCache<T>, dy: &Tensor<T>, grads: &mut [Tensor<T>]) -> Tensor<T> {
        let x = &cache.x;
        let (steps, d) = (x.rows(), x.cols());
        let u = self.units;
        let g4 = 4 * u;
        let one = T::one();
        let mut dx = Tensor::zeros(&[steps, d]);
        let mut dh_next = vec![T::zero(); u];
        let mut dc_next = vec![T::zero(); u];
        let mut dz = vec![T::zero(); g4];
        for t in (0..steps).rev() {
            let g = &cache.gates[t * g4..(t + 1) * g4];
            for j in 0..u {
                let (i_g, f_g, c_g, o_g) = (g[j], g[u + j], g[2 * u + j], g[3 * u + j]);
                let c = cache.cells[t * u + j];
                let c_prev = if t > 0 { cache.cells[(t - 1) * u + j] } else { T::zero() };
                let tc = c.tanh();
                let dh = dy.data()[t * u + j] + dh_next[j];
                let d_o = dh * tc;
                let dc = dc_next[j] + dh * o_g * (one - tc * tc);
                dz[j] = dc * c_g * i_g * (one - i_g);
                dz[u + j] = dc * c_prev * f_g * (one - f_g);
                dz[2 * u + j] = dc * i_g * (one - c_g * c_g);
                dz[3 * u + j] = d_o * o_g * (one - o_g);
                dc_next[j] = dc * f_g;
            }
            {
                let gwx = grads[0].data_mut();
                for (i, &xv) in x.row(t).iter().enumerate() {
                    for (gw, dzv) in gwx[i * g4..(i + 1) * g4].iter_mut().zip(&dz) {
                        *gw += xv * *dzv;
                    }
                }
            }
            if t > 0 {
                let hp = &cache.hidden[(t - 1) * u..t * u];
                let gwh = grads[1].data_mut();
                for (i, &hv) in hp.iter().enumerate() {
                    for (gw, dzv) in gwh[i * g4..(i + 1) * g4].iter_mut().zip(&dz) {
                        *gw += hv * *dzv;
                    }
                }
            }
            for (gb, dzv) in grads[2].data_mut().iter_mut().zip(&dz) {
                *gb += *dzv;
            }
            matmul_a_bt_into(&dz, self.w_input.data(), 1, g4, d, &mut dx.data_mut()[t * d..(t + 1) * d], false);
            matmul_a_bt_into(&dz, self.w_hidden.data(), 1, g4, u, &mut dh_next, false);
        }
        dx
    }

    pub fn params(&self) -> [&Tensor<T>; 3] {
        [&self.w_input, &self.w_hidden, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor<T>; 3] {
        [&mut self.w_input, &mut self.w_hidden, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(wx: f64, wh: f64, b: [f64; 4]) -> Lstm<f64> {
        Lstm {
            units: 1,
            w_input: Tensor::from_vec(&[1, 4], vec![wx; 4]).unwrap(),
            w_hidden: Tensor::from_vec(&[1, 4], vec![wh; 4]).unwrap(),
            bias: Tensor::from_vec(&[4], b.to_vec()).unwrap(),
        }
    }

    #[test]
    fn zero_everything_gives_zero() {
        let l = scalar(0.0, 0.0, [0.0; 4]);
        let (y, _) = l.forward(&Tensor::zeros(&[5, 1])).unwrap();
        assert!(y.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hand_unrolled_three_steps() {
        let (wx, wh) = (0.5, -0.3);
        let b = [0.1, 0.2, -0.1, 0.05];
        let l = scalar(wx, wh, b);
        let xs = [1.0, -0.5, 2.0];
        let (y, _) = l.forward(&Tensor::from_vec(&[3, 1], xs.to_vec()).unwrap()).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (mut h, mut c) = (0.0f64, 0.0f64);
        let mut expected = Vec::new();
        for x in xs {
            let i = sig(wx * x + wh * h + b[0]);
            let f = sig(wx * x + wh * h + b[1]);
            let g = (wx * x + wh * h + b[2]).tanh();
            let o = sig(wx * x + wh * h + b[3]);
            c = f * c + i * g;
            h = o * c.tanh();
            expected.push(h);
        }
        for (a, e) in y.data().iter().zip(&expected) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
    }

    #[test]
    fn saturated_forget_gate_accumulates() {
        // Input and forget gates pinned open, candidate = tanh(x): the cell
        // state is the running sum of tanh(x_t).
        let l = Lstm::<f64> {
            units: 1,
            w_input: Tensor::from_vec(&[1, 4], vec![0.0, 0.0, 1.0, 0.0]).unwrap(),
            w_hidden: Tensor::zeros(&[1, 4]),
            bias: Tensor::from_vec(&[4], vec![60.0, 60.0, 0.0, 60.0]).unwrap(),
        };
        let xs = [0.3, -0.2, 0.7, 0.1];
        let (y, _) = l.forward(&Tensor::from_vec(&[4, 1], xs.to_vec()).unwrap()).unwrap();
        let mut sum = 0.0f64;
        for (t, x) in xs.iter().enumerate() {
            sum += x.tanh();
            assert!((y.data()[t] - sum.tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn table_settings_param_count() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        assert_eq!(Lstm::<f32>::new(8, 50, &mut rng).param_count(), 4 * 50 * (8 + 50 + 1));
    }
}

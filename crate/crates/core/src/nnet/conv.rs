use rand::Rng;

use crate::error::{Error, Result};
use crate::nnet::init::glorot_uniform;
use crate::nnet::tensor::{Real, Tensor};

/// 1-D valid convolution over `[length, channels]` inputs, followed by ReLU.
///
/// The weight is stored as `[out_channels, kernel, in_channels]` so the
/// receptive field of one output position is a contiguous input slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub relu: bool,
}

#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    input: Tensor<T>,
    output: Tensor<T>,
}

impl<T: Real> Conv1d<T> {
    pub fn new<R: Rng>(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, rng: &mut R) -> Self {
        Self {
            weight: glorot_uniform(
                &[out_channels, kernel, in_channels],
                in_channels * kernel,
                out_channels * kernel,
                rng,
            ),
            bias: Tensor::zeros(&[out_channels]),
            stride,
            relu: true,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn output_len(&self, len: usize) -> Result<usize> {
        conv_output_len(len, self.kernel(), self.stride)
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>)> {
        let y = self.apply(x)?;
        Ok((
            y.clone(),
            ConvCache {
                input: x.clone(),
                output: y,
            },
        ))
    }

    /// Forward pass without keeping a cache.
    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (len, c_in) = (x.rows(), x.cols());
        if c_in != self.in_channels() {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {c_in}",
                self.in_channels()
            )));
        }
        let out_len = self.output_len(len)?;
        let (c_out, k) = (self.out_channels(), self.kernel());
        let field = k * c_in;
        let w = self.weight.data();
        let b = self.bias.data();
        let xd = x.data();
        let mut y = Tensor::zeros(&[out_len, c_out]);
        let yd = y.data_mut();
        for t in 0..out_len {
            let window = &xd[t * self.stride * c_in..][..field];
            for o in 0..c_out {
                let wo = &w[o * field..(o + 1) * field];
                let mut acc = b[o];
                for (a, bv) in wo.iter().zip(window) {
                    acc += *a * *bv;
                }
                yd[t * c_out + o] = if self.relu { acc.max(T::zero()) } else { acc };
            }
        }
        Ok(y)
    }

    /// Accumulates `[d_weight, d_bias]` into `grads` and returns `d_input`.
    pub fn backward(&self, cache: &ConvCache<T>, dy: &Tensor<T>, grads: &mut [Tensor<T>]) -> Tensor<T> {
        let x = &cache.input;
        let (c_in, c_out, k) = (x.cols(), self.out_channels(), self.kernel());
        let field = k * c_in;
        let out_len = cache.output.rows();
        let w = self.weight.data();
        let xd = x.data();
        let yd = cache.output.data();
        let dyd = dy.data();
        let mut dx = Tensor::zeros(x.shape());
        let (gw, gb) = grads.split_at_mut(1);
        let gw = gw[0].data_mut();
        let gb = gb[0].data_mut();
        let dxd = dx.data_mut();
        for t in 0..out_len {
            let start = t * self.stride * c_in;
            for o in 0..c_out {
                let idx = t * c_out + o;
                let dz = if self.relu && yd[idx] <= T::zero() {
                    T::zero()
                } else {
                    dyd[idx]
                };
                if dz == T::zero() {
                    continue;
                }
                gb[o] += dz;
                let wo = &w[o * field..(o + 1) * field];
                let gwo = &mut gw[o * field..(o + 1) * field];
                for j in 0..field {
                    gwo[j] += dz * xd[start + j];
                    dxd[start + j] += dz * wo[j];
                }
            }
        }
        dx
    }

    pub fn params(&self) -> [&Tensor<T>; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// `floor((len - kernel) / stride) + 1` for valid padding.
pub fn conv_output_len(len: usize, kernel: usize, stride: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 {
        return Err(Error::Shape("kernel and stride must be positive".into()));
    }
    if len < kernel {
        return Err(Error::Shape(format!(
            "input length {len} shorter than kernel {kernel}"
        )));
    }
    Ok((len - kernel) / stride + 1)
}

/// Fully connected layer `y = x W + b` on a flat vector, optional ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub relu: bool,
}

#[derive(Debug, Clone)]
pub struct DenseCache<T> {
    input: Vec<T>,
    output: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, relu: bool, rng: &mut R) -> Self {
        Self {
            weight: glorot_uniform(&[inputs, outputs], inputs, outputs, rng),
            bias: Tensor::zeros(&[outputs]),
            relu,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.inputs() {
            return Err(Error::Shape(format!(
                "dense expects {} inputs, got {}",
                self.inputs(),
                x.len()
            )));
        }
        let n = self.outputs();
        let mut y = self.bias.data().to_vec();
        let w = self.weight.data();
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            for (yv, wv) in y.iter_mut().zip(&w[i * n..(i + 1) * n]) {
                *yv += xi * *wv;
            }
        }
        if self.relu {
            y.iter_mut().for_each(|v| *v = v.max(T::zero()));
        }
        Ok(y)
    }

    pub fn forward(&self, x: &[T]) -> Result<(Vec<T>, DenseCache<T>)> {
        let y = self.apply(x)?;
        Ok((
            y.clone(),
            DenseCache {
                input: x.to_vec(),
                output: y,
            },
        ))
    }

    pub fn backward(&self, cache: &DenseCache<T>, dy: &[T], grads: &mut [Tensor<T>]) -> Vec<T> {
        let n = self.outputs();
        let dz: Vec<T> = dy
            .iter()
            .zip(&cache.output)
            .map(|(&g, &y)| if self.relu && y <= T::zero() { T::zero() } else { g })
            .collect();
        let (gw, gb) = grads.split_at_mut(1);
        for (b, d) in gb[0].data_mut().iter_mut().zip(&dz) {
            *b += *d;
        }
        let gw = gw[0].data_mut();
        let w = self.weight.data();
        let mut dx = vec![T::zero(); cache.input.len()];
        for (i, &xi) in cache.input.iter().enumerate() {
            let row = &mut gw[i * n..(i + 1) * n];
            let wrow = &w[i * n..(i + 1) * n];
            let mut acc = T::zero();
            for j in 0..n {
                row[j] += xi * dz[j];
                acc += wrow[j] * dz[j];
            }
            dx[i] = acc;
        }
        dx
    }

    pub fn params(&self) -> [&Tensor<T>; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn length_chain_for_256() {
        assert_eq!(conv_output_len(256, 8, 2).unwrap(), 125);
        assert_eq!(conv_output_len(125, 4, 2).unwrap(), 61);
        assert_eq!(conv_output_len(61, 3, 1).unwrap(), 59);
        assert!(matches!(conv_output_len(2, 3, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn unit_kernel_is_relu() {
        let conv = Conv1d::<f64> {
            weight: Tensor::from_vec(&[1, 1, 1], vec![1.0]).unwrap(),
            bias: Tensor::zeros(&[1]),
            stride: 1,
            relu: true,
        };
        let x = Tensor::from_vec(&[5, 1], vec![-2.0, -0.5, 0.0, 0.5, 3.0]).unwrap();
        let y = conv.apply(&x).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 0.0, 0.5, 3.0]);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv = Conv1d::<f64>::new(3, 8, 4, 2, &mut rng);
        let y = conv.apply(&Tensor::zeros(&[40, 3])).unwrap();
        assert!(y.data().iter().all(|v| *v == 0.0));
        assert_eq!(y.shape(), &[19, 8]);
    }

    #[test]
    fn parameter_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(Conv1d::<f32>::new(1, 8, 8, 2, &mut rng).param_count(), 72);
        assert_eq!(Dense::<f32>::new(80, 100, true, &mut rng).param_count(), 8100);
    }

    #[test]
    fn wrong_channels_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv = Conv1d::<f64>::new(2, 4, 3, 1, &mut rng);
        assert!(conv.apply(&Tensor::zeros(&[10, 3])).is_err());
        let dense = Dense::<f64>::new(4, 2, false, &mut rng);
        assert!(dense.apply(&[0.0; 3]).is_err());
    }
}

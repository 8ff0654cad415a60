//! Two-headed classifier.
//!
//! ```text
//! rssi [W,1] -> conv x3 -> attention | lstm -> dropout --+
//!                                                       concat -> conv x3 -> dropout
//! sinr [W,1] -> conv x3 -> attention | lstm -> dropout --+        -> flatten -> dense(100, relu)
//!                                                                 -> dense(classes) -> softmax
//! ```

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nnet::attention::{AttentionCache, MultiHeadAttention};
use crate::nnet::conv::{conv_output_len, Conv1d, ConvCache, Dense, DenseCache};
use crate::nnet::dropout::dropout_mask;
use crate::nnet::lstm::{Lstm, LstmCache};
use crate::nnet::tensor::{
    cross_entropy, softmax, softmax_cross_entropy_grad, Real, Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Attention,
    Lstm,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Attention => "attention",
            Variant::Lstm => "lstm",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attention" => Ok(Variant::Attention),
            "lstm" => Ok(Variant::Lstm),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

pub const TABLE_CONVS: [ConvSpec; 3] = [
    ConvSpec {
        filters: 8,
        kernel: 8,
        stride: 2,
    },
    ConvSpec {
        filters: 8,
        kernel: 4,
        stride: 2,
    },
    ConvSpec {
        filters: 8,
        kernel: 3,
        stride: 1,
    },
];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub convs: Vec<ConvSpec>,
    pub heads: usize,
    pub key_dim: usize,
    pub lstm_units: usize,
    pub dropout_rate: f64,
    pub dense_units: usize,
    pub output_classes: usize,
    pub window: usize,
}

impl ModelConfig {
    /// Published layer settings for the given variant, class count and window.
    pub fn table(variant: Variant, output_classes: usize, window: usize) -> Self {
        Self {
            variant,
            convs: TABLE_CONVS.to_vec(),
            heads: 8,
            key_dim: 8,
            lstm_units: 50,
            dropout_rate: 0.4,
            dense_units: 100,
            output_classes,
            window,
        }
    }

    pub fn is_canonical(&self) -> bool {
        let reference = Self::table(self.variant, self.output_classes, self.window);
        *self == reference
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.output_classes) {
            return Err(Error::Config(format!(
                "output_classes must be 2 or 3, got {}",
                self.output_classes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout rate must lie in [0, 1)".into()));
        }
        if self.convs.is_empty() {
            return Err(Error::Config("at least one convolution is required".into()));
        }
        self.flattened_len().map(|_| ())
    }

    /// Sequence length leaving each head.
    pub fn head_steps(&self) -> Result<usize> {
        self.convs
            .iter()
            .try_fold(self.window, |len, c| conv_output_len(len, c.kernel, c.stride))
    }

    /// Channels leaving each head.
    pub fn head_channels(&self) -> usize {
        match self.variant {
            Variant::Attention => self.convs.last().map(|c| c.filters).unwrap_or(1),
            Variant::Lstm => self.lstm_units,
        }
    }

    /// Length of the flattened body output that feeds the dense layer.
    pub fn flattened_len(&self) -> Result<usize> {
        let steps = self
            .convs
            .iter()
            .try_fold(self.head_steps()?, |len, c| conv_output_len(len, c.kernel, c.stride))?;
        Ok(steps * self.convs.last().map(|c| c.filters).unwrap_or(1))
    }

    /// Smallest window the layer stack accepts.
    pub fn min_window(&self) -> usize {
        (1..)
            .find(|&w| Self { window: w, ..self.clone() }.flattened_len().is_ok())
            .expect("some window fits")
    }

    pub fn to_kv(&self) -> String {
        let convs: Vec<String> = self
            .convs
            .iter()
            .map(|c| format!("{}:{}:{}", c.filters, c.kernel, c.stride))
            .collect();
        format!(
            "variant={}\nconvs={}\nheads={}\nkey_dim={}\nlstm_units={}\ndropout_rate={}\ndense_units={}\noutput_classes={}\nwindow={}\n",
            self.variant,
            convs.join(","),
            self.heads,
            self.key_dim,
            self.lstm_units,
            self.dropout_rate,
            self.dense_units,
            self.output_classes,
            self.window
        )
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::table(Variant::Attention, 2, 256);
        let bad = |k: &str, v: &str| Error::Checkpoint(format!("bad model config value {k}={v}"));
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("bad config line `{line}`")))?;
            match k {
                "variant" => cfg.variant = v.parse().map_err(|_| bad(k, v))?,
                "convs" => {
                    cfg.convs = v
                        .split(',')
                        .map(|spec| {
                            let parts: Vec<usize> = spec
                                .split(':')
                                .map(|p| p.parse().map_err(|_| bad(k, v)))
                                .collect::<Result<_>>()?;
                            match parts[..] {
                                [filters, kernel, stride] => Ok(ConvSpec {
                                    filters,
                                    kernel,
                                    stride,
                                }),
                                _ => Err(bad(k, v)),
                            }
                        })
                        .collect::<Result<_>>()?
                }
                "heads" => cfg.heads = v.parse().map_err(|_| bad(k, v))?,
                "key_dim" => cfg.key_dim = v.parse().map_err(|_| bad(k, v))?,
                "lstm_units" => cfg.lstm_units = v.parse().map_err(|_| bad(k, v))?,
                "dropout_rate" => cfg.dropout_rate = v.parse().map_err(|_| bad(k, v))?,
                "dense_units" => cfg.dense_units = v.parse().map_err(|_| bad(k, v))?,
                "output_classes" => cfg.output_classes = v.parse().map_err(|_| bad(k, v))?,
                "window" => cfg.window = v.parse().map_err(|_| bad(k, v))?,
                other => return Err(Error::Checkpoint(format!("unknown config key `{other}`"))),
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Temporal<T> {
    Attention(MultiHeadAttention<T>),
    Lstm(Lstm<T>),
}

#[derive(Debug, Clone)]
enum TemporalCache<T> {
    Attention(AttentionCache<T>),
    Lstm(LstmCache<T>),
}

impl<T: Real> Temporal<T> {
    fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Temporal::Attention(a) => a.params().to_vec(),
            Temporal::Lstm(l) => l.params().to_vec(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Temporal::Attention(a) => a.params_mut().into_iter().collect(),
            Temporal::Lstm(l) => l.params_mut().into_iter().collect(),
        }
    }

    fn param_names(&self) -> &'static [&'static str] {
        match self {
            Temporal::Attention(_) => &["wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"],
            Temporal::Lstm(_) => &["w_input", "w_hidden", "bias"],
        }
    }

    fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, TemporalCache<T>)> {
        Ok(match self {
            Temporal::Attention(a) => {
                let (y, c) = a.forward(x)?;
                (y, TemporalCache::Attention(c))
            }
            Temporal::Lstm(l) => {
                let (y, c) = l.forward(x)?;
                (y, TemporalCache::Lstm(c))
            }
        })
    }

    fn backward(&self, cache: &TemporalCache<T>, dy: &Tensor<T>, grads: &mut [Tensor<T>]) -> Tensor<T> {
        match (self, cache) {
            (Temporal::Attention(a), TemporalCache::Attention(c)) => a.backward(c, dy, grads),
            (Temporal::Lstm(l), TemporalCache::Lstm(c)) => l.backward(c, dy, grads),
            _ => unreachable!("cache variant matches layer variant"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Head<T> {
    pub convs: Vec<Conv1d<T>>,
    pub temporal: Temporal<T>,
}

impl<T: Real> Head<T> {
    fn new<R: Rng>(config: &ModelConfig, rng: &mut R) -> Self {
        let mut convs = Vec::new();
        let mut channels = 1;
        for spec in &config.convs {
            convs.push(Conv1d::new(channels, spec.filters, spec.kernel, spec.stride, rng));
            channels = spec.filters;
        }
        let temporal = match config.variant {
            Variant::Attention => {
                Temporal::Attention(MultiHeadAttention::new(channels, config.heads, config.key_dim, rng))
            }
            Variant::Lstm => Temporal::Lstm(Lstm::new(channels, config.lstm_units, rng)),
        };
        Self { convs, temporal }
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        let mut out: Vec<&Tensor<T>> = self.convs.iter().flat_map(|c| c.params()).collect();
        out.extend(self.temporal.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> =
            self.convs.iter_mut().flat_map(|c| c.params_mut()).collect();
        out.extend(self.temporal.params_mut());
        out
    }
}

#[derive(Debug, Clone)]
struct HeadCache<T> {
    convs: Vec<ConvCache<T>>,
    temporal: TemporalCache<T>,
    mask: Option<Vec<T>>,
}

/// Activations kept from a training forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    heads: Vec<HeadCache<T>>,
    head_channels: usize,
    steps: usize,
    body: Vec<ConvCache<T>>,
    body_shape: Vec<usize>,
    body_mask: Option<Vec<T>>,
    dense: DenseCache<T>,
    output: DenseCache<T>,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

/// The two-headed network with all trainable weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub heads: Vec<Head<T>>,
    pub body: Vec<Conv1d<T>>,
    pub dense: Dense<T>,
    pub output: Dense<T>,
}

pub const HEAD_NAMES: [&str; 2] = ["rssi", "sinr"];

impl<T: Real> Model<T> {
    /// Glorot-initialized model, zero biases.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let heads = vec![Head::new(&config, &mut rng), Head::new(&config, &mut rng)];
        let mut body = Vec::new();
        let mut channels = 2 * config.head_channels();
        for spec in &config.convs {
            body.push(Conv1d::new(channels, spec.filters, spec.kernel, spec.stride, &mut rng));
            channels = spec.filters;
        }
        let flat = config.flattened_len()?;
        let dense = Dense::new(flat, config.dense_units, true, &mut rng);
        let output = Dense::new(config.dense_units, config.output_classes, false, &mut rng);
        Ok(Self {
            config,
            heads,
            body,
            dense,
            output,
        })
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut out: Vec<&Tensor<T>> = self.heads.iter().flat_map(|h| h.params()).collect();
        out.extend(self.body.iter().flat_map(|c| c.params()));
        out.extend(self.dense.params());
        out.extend(self.output.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> =
            self.heads.iter_mut().flat_map(|h| h.params_mut()).collect();
        out.extend(self.body.iter_mut().flat_map(|c| c.params_mut()));
        out.extend(self.dense.params_mut());
        out.extend(self.output.params_mut());
        out
    }

    /// Stable tensor names, aligned with [`Model::params`].
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (h, head) in self.heads.iter().enumerate() {
            for i in 0..head.convs.len() {
                names.push(format!("{}.conv{}.weight", HEAD_NAMES[h], i + 1));
                names.push(format!("{}.conv{}.bias", HEAD_NAMES[h], i + 1));
            }
            let kind = match head.temporal {
                Temporal::Attention(_) => "attention",
                Temporal::Lstm(_) => "lstm",
            };
            for p in head.temporal.param_names() {
                names.push(format!("{}.{kind}.{p}", HEAD_NAMES[h]));
            }
        }
        for i in 0..self.body.len() {
            names.push(format!("body.conv{}.weight", i + 1));
            names.push(format!("body.conv{}.bias", i + 1));
        }
        names.extend(["dense.weight", "dense.bias", "output.weight", "output.bias"].map(String::from));
        names
    }

    pub fn zero_grads(&self) -> Vec<Tensor<T>> {
        self.params().iter().map(|p| Tensor::zeros(p.shape())).collect()
    }

    /// Number of trainable scalars.
    pub fn count_parameters(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Flattened copy of every weight, in parameter order.
    pub fn flat_weights(&self) -> Vec<T> {
        self.params().iter().flat_map(|p| p.data().iter().copied()).collect()
    }

    pub fn set_flat_weights(&mut self, flat: &[T]) {
        let mut off = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len(), "flat weight vector length mismatch");
    }

    fn check_input(&self, rssi: &[f64], sinr: &[f64]) -> Result<()> {
        let w = self.config.window;
        if rssi.len() != w || sinr.len() != w {
            return Err(Error::Shape(format!(
                "model window is {w}, got rssi {} / sinr {}",
                rssi.len(),
                sinr.len()
            )));
        }
        Ok(())
    }

    /// Full forward pass. Dropout is active iff `rng` is given.
    pub fn forward_cached(
        &self,
        rssi: &[f64],
        sinr: &[f64],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardCache<T>> {
        self.check_input(rssi, sinr)?;
        let rate = self.config.dropout_rate;
        let mut head_outs = Vec::with_capacity(2);
        let mut head_caches = Vec::with_capacity(2);
        for (head, signal) in self.heads.iter().zip([rssi, sinr]) {
            let mut x = Tensor::from_vec(
                &[signal.len(), 1],
                signal.iter().map(|&v| T::from_f64_lossy(v)).collect(),
            )?;
            let mut convs = Vec::with_capacity(head.convs.len());
            for conv in &head.convs {
                let (y, c) = conv.forward(&x)?;
                convs.push(c);
                x = y;
            }
            let (mut y, temporal) = head.temporal.forward(&x)?;
            let mask = rng.as_deref_mut().map(|r| {
                let m = dropout_mask::<T, _>(y.len(), rate, r);
                for (v, mv) in y.data_mut().iter_mut().zip(&m) {
                    *v *= *mv;
                }
                m
            });
            head_outs.push(y);
            head_caches.push(HeadCache {
                convs,
                temporal,
                mask,
            });
        }
        let steps = head_outs[0].rows();
        let hc = head_outs[0].cols();
        let mut x = Tensor::zeros(&[steps, 2 * hc]);
        {
            let xd = x.data_mut();
            for t in 0..steps {
                xd[t * 2 * hc..t * 2 * hc + hc].copy_from_slice(head_outs[0].row(t));
                xd[t * 2 * hc + hc..(t + 1) * 2 * hc].copy_from_slice(head_outs[1].row(t));
            }
        }
        let mut body = Vec::with_capacity(self.body.len());
        for conv in &self.body {
            let (y, c) = conv.forward(&x)?;
            body.push(c);
            x = y;
        }
        let body_shape = x.shape().to_vec();
        let body_mask = rng.as_deref_mut().map(|r| {
            let m = dropout_mask::<T, _>(x.len(), rate, r);
            for (v, mv) in x.data_mut().iter_mut().zip(&m) {
                *v *= *mv;
            }
            m
        });
        let (hidden, dense) = self.dense.forward(x.data())?;
        let (logits, output) = self.output.forward(&hidden)?;
        let probs = softmax(&logits);
        if cfg!(debug_assertions) {
            debug_assert!(probs.iter().all(|p| p.is_finite()), "non-finite probabilities");
        }
        Ok(ForwardCache {
            heads: head_caches,
            head_channels: hc,
            steps,
            body,
            body_shape,
            body_mask,
            dense,
            output,
            logits,
            probs,
        })
    }

    /// Class probabilities in inference mode (dropout off).
    pub fn predict(&self, rssi: &[f64], sinr: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .forward_cached(rssi, sinr, None)?
            .probs
            .into_iter()
            .map(|p| p.to_f64_lossy())
            .collect())
    }

    /// Pre-softmax activations in inference mode.
    pub fn logits(&self, rssi: &[f64], sinr: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .forward_cached(rssi, sinr, None)?
            .logits
            .into_iter()
            .map(|p| p.to_f64_lossy())
            .collect())
    }

    /// Back-propagates `d_loss / d_logits` and accumulates into `grads`.
    pub fn backward_from_logits(&self, cache: &ForwardCache<T>, dlogits: &[T], grads: &mut [Tensor<T>]) {
        let n = grads.len();
        let (rest, out_g) = grads.split_at_mut(n - 2);
        let dhidden = self.output.backward(&cache.output, dlogits, out_g);
        let n = rest.len();
        let (rest, dense_g) = rest.split_at_mut(n - 2);
        let mut dflat = self.dense.backward(&cache.dense, &dhidden, dense_g);
        if let Some(mask) = &cache.body_mask {
            for (g, m) in dflat.iter_mut().zip(mask) {
                *g *= *m;
            }
        }
        let mut dx = Tensor::from_vec(&cache.body_shape, dflat).expect("body shape");
        let body_params = 2 * self.body.len();
        let n = rest.len();
        let (head_g, body_g) = rest.split_at_mut(n - body_params);
        for (i, conv) in self.body.iter().enumerate().rev() {
            dx = conv.backward(&cache.body[i], &dx, &mut body_g[2 * i..2 * i + 2]);
        }

        let hc = cache.head_channels;
        let steps = cache.steps;
        let per_head = head_g.len() / 2;
        for (h, (head, hcache)) in self.heads.iter().zip(&cache.heads).enumerate() {
            let mut dy = Tensor::zeros(&[steps, hc]);
            {
                let dyd = dy.data_mut();
                let src = dx.data();
                for t in 0..steps {
                    dyd[t * hc..(t + 1) * hc]
                        .copy_from_slice(&src[t * 2 * hc + h * hc..][..hc]);
                }
                if let Some(mask) = &hcache.mask {
                    for (g, m) in dyd.iter_mut().zip(mask) {
                        *g *= *m;
                    }
                }
            }
            let g = &mut head_g[h * per_head..(h + 1) * per_head];
            let conv_params = 2 * head.convs.len();
            let (conv_g, temporal_g) = g.split_at_mut(conv_params);
            let mut d = head.temporal.backward(&hcache.temporal, &dy, temporal_g);
            for (i, conv) in head.convs.iter().enumerate().rev() {
                d = conv.backward(&hcache.convs[i], &d, &mut conv_g[2 * i..2 * i + 2]);
            }
        }
    }

    /// Cross-entropy loss of one example; gradients are accumulated.
    pub fn loss_and_grad(
        &self,
        rssi: &[f64],
        sinr: &[f64],
        target: usize,
        rng: Option<&mut ChaCha8Rng>,
        grads: &mut [Tensor<T>],
    ) -> Result<T> {
        let cache = self.forward_cached(rssi, sinr, rng)?;
        if target >= cache.probs.len() {
            return Err(Error::Data(format!(
                "target class {target} out of range for {} outputs",
                cache.probs.len()
            )));
        }
        let loss = cross_entropy(&cache.probs, target);
        let dlogits = softmax_cross_entropy_grad(&cache.probs, target);
        self.backward_from_logits(&cache, &dlogits, grads);
        Ok(loss)
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        let mut out = Model::<U>::new(self.config.clone(), 0).expect("config already validated");
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            *dst = src.cast();
        }
        out
    }
}

/// Number of trainable scalars of `model`.
pub fn count_parameters<T: Real>(model: &Model<T>) -> usize {
    model.count_parameters()
}

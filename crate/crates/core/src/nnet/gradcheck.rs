//! Central finite-difference checks of every hand-written backward pass.
//!
//! Each layer is reduced to the scalar loss `L = sum(y * r)` for a fixed
//! random `r`, so the upstream gradient is exactly `r`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nnet::attention::MultiHeadAttention;
use crate::nnet::conv::{Conv1d, Dense};
use crate::nnet::lstm::Lstm;
use crate::nnet::model::{Model, ModelConfig, Variant};
use crate::nnet::tensor::{cross_entropy, softmax, softmax_cross_entropy_grad, Tensor};

pub const EPSILON: f64 = 1e-5;
/// Denominator floor of the relative error, for gradients that vanish.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub layer: &'static str,
    pub shapes: Vec<String>,
    pub max_rel_error: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Max relative error over every element of `values`, using `loss` for the
/// numeric side and `analytic` for the reference.
fn compare(values: &mut [f64], analytic: &[f64], mut loss: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..values.len() {
        let orig = values[i];
        values[i] = orig + EPSILON;
        let up = loss(values);
        values[i] = orig - EPSILON;
        let down = loss(values);
        values[i] = orig;
        let numeric = (up - down) / (2.0 * EPSILON);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

/// Checks input and parameter gradients of a layer given as
/// `(params, forward, backward)`.
fn check_layer(
    params: Vec<Tensor<f64>>,
    x: Tensor<f64>,
    forward: &dyn Fn(&[Tensor<f64>], &Tensor<f64>) -> Tensor<f64>,
    backward: &dyn Fn(&[Tensor<f64>], &Tensor<f64>, &Tensor<f64>, &mut [Tensor<f64>]) -> Tensor<f64>,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let y = forward(&params, &x);
    let r = random_tensor(y.shape(), rng);
    let mut grads: Vec<Tensor<f64>> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
    let dx = backward(&params, &x, &r, &mut grads);

    let mut worst = {
        let mut xv = x.data().to_vec();
        compare(&mut xv, dx.data(), |v| {
            let xt = Tensor::from_vec(x.shape(), v.to_vec()).expect("shape");
            dot(forward(&params, &xt).data(), r.data())
        })
    };
    for (pi, g) in grads.iter().enumerate() {
        let mut pv = params[pi].data().to_vec();
        let e = compare(&mut pv, g.data(), |v| {
            let mut ps = params.clone();
            ps[pi] = Tensor::from_vec(params[pi].shape(), v.to_vec()).expect("shape");
            dot(forward(&ps, &x).data(), r.data())
        });
        worst = worst.max(e);
    }
    worst
}

fn conv_from(params: &[Tensor<f64>], stride: usize) -> Conv1d<f64> {
    Conv1d {
        weight: params[0].clone(),
        bias: params[1].clone(),
        stride,
        relu: true,
    }
}

pub fn check_conv1d(shapes: usize, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut names = Vec::new();
    for _ in 0..shapes {
        let c_in = rng.random_range(1..4);
        let c_out = rng.random_range(1..5);
        let k = rng.random_range(1..5);
        let stride = rng.random_range(1..3);
        let len = k + rng.random_range(0..8);
        names.push(format!("len={len} c_in={c_in} c_out={c_out} k={k} s={stride}"));
        let mut conv = Conv1d::<f64>::new(c_in, c_out, k, stride, &mut rng);
        conv.bias = random_tensor(&[c_out], &mut rng);
        let x = random_tensor(&[len, c_in], &mut rng);
        let params = vec![conv.weight.clone(), conv.bias.clone()];
        worst = worst.max(check_layer(
            params,
            x,
            &|p, x| conv_from(p, stride).apply(x).expect("shape"),
            &|p, x, dy, g| {
                let c = conv_from(p, stride);
                let (_, cache) = c.forward(x).expect("shape");
                c.backward(&cache, dy, g)
            },
            &mut rng,
        ));
    }
    GradCheckReport {
        layer: "conv1d",
        shapes: names,
        max_rel_error: worst,
    }
}

fn attention_from(params: &[Tensor<f64>], heads: usize, key_dim: usize) -> MultiHeadAttention<f64> {
    MultiHeadAttention {
        heads,
        key_dim,
        wq: params[0].clone(),
        bq: params[1].clone(),
        wk: params[2].clone(),
        bk: params[3].clone(),
        wv: params[4].clone(),
        bv: params[5].clone(),
        wo: params[6].clone(),
        bo: params[7].clone(),
    }
}

pub fn check_attention(shapes: usize, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut names = Vec::new();
    for _ in 0..shapes {
        let d = rng.random_range(1..5);
        let heads = rng.random_range(1..4);
        let key_dim = rng.random_range(1..4);
        let steps = rng.random_range(1..6);
        names.push(format!("steps={steps} d={d} heads={heads} key_dim={key_dim}"));
        let layer = MultiHeadAttention::<f64>::new(d, heads, key_dim, &mut rng);
        let params: Vec<Tensor<f64>> = layer
            .params()
            .iter()
            .map(|p| random_tensor(p.shape(), &mut rng))
            .collect();
        let x = random_tensor(&[steps, d], &mut rng);
        worst = worst.max(check_layer(
            params,
            x,
            &|p, x| attention_from(p, heads, key_dim).forward(x).expect("shape").0,
            &|p, x, dy, g| {
                let a = attention_from(p, heads, key_dim);
                let (_, cache) = a.forward(x).expect("shape");
                a.backward(&cache, dy, g)
            },
            &mut rng,
        ));
    }
    GradCheckReport {
        layer: "attention",
        shapes: names,
        max_rel_error: worst,
    }
}

fn lstm_from(params: &[Tensor<f64>], units: usize) -> Lstm<f64> {
    Lstm {
        units,
        w_input: params[0].clone(),
        w_hidden: params[1].clone(),
        bias: params[2].clone(),
    }
}

pub fn check_lstm(shapes: usize, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut names = Vec::new();
    for _ in 0..shapes {
        let d = rng.random_range(1..4);
        let units = rng.random_range(1..5);
        let steps = rng.random_range(1..6);
        names.push(format!("steps={steps} d={d} units={units}"));
        let params = vec![
            random_tensor(&[d, 4 * units], &mut rng),
            random_tensor(&[units, 4 * units], &mut rng),
            random_tensor(&[4 * units], &mut rng),
        ];
        let x = random_tensor(&[steps, d], &mut rng);
        worst = worst.max(check_layer(
            params,
            x,
            &|p, x| lstm_from(p, units).forward(x).expect("shape").0,
            &|p, x, dy, g| {
                let l = lstm_from(p, units);
                let (_, cache) = l.forward(x).expect("shape");
                l.backward(&cache, dy, g)
            },
            &mut rng,
        ));
    }
    GradCheckReport {
        layer: "lstm",
        shapes: names,
        max_rel_error: worst,
    }
}

fn dense_from(params: &[Tensor<f64>], relu: bool) -> Dense<f64> {
    Dense {
        weight: params[0].clone(),
        bias: params[1].clone(),
        relu,
    }
}

pub fn check_dense(shapes: usize, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut names = Vec::new();
    for s in 0..shapes {
        let inputs = rng.random_range(1..8);
        let outputs = rng.random_range(1..6);
        let relu = s % 2 == 0;
        names.push(format!("in={inputs} out={outputs} relu={relu}"));
        let params = vec![
            random_tensor(&[inputs, outputs], &mut rng),
            random_tensor(&[outputs], &mut rng),
        ];
        let x = random_tensor(&[inputs], &mut rng);
        worst = worst.max(check_layer(
            params,
            x,
            &|p, x| {
                let y = dense_from(p, relu).apply(x.data()).expect("shape");
                Tensor::from_vec(&[y.len()], y).expect("shape")
            },
            &|p, x, dy, g| {
                let d = dense_from(p, relu);
                let (_, cache) = d.forward(x.data()).expect("shape");
                let dx = d.backward(&cache, dy.data(), g);
                Tensor::from_vec(x.shape(), dx).expect("shape")
            },
            &mut rng,
        ));
    }
    GradCheckReport {
        layer: "dense",
        shapes: names,
        max_rel_error: worst,
    }
}

pub fn check_softmax_cross_entropy(shapes: usize, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut names = Vec::new();
    for _ in 0..shapes {
        let n = rng.random_range(2..7);
        let target = rng.random_range(0..n);
        names.push(format!("classes={n} target={target}"));
        let mut logits: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let analytic = softmax_cross_entropy_grad(&softmax(&logits), target);
        worst = worst.max(compare(&mut logits, &analytic, |z| {
            cross_entropy(&softmax(z), target)
        }));
    }
    GradCheckReport {
        layer: "softmax+cross-entropy",
        shapes: names,
        max_rel_error: worst,
    }
}

/// End-to-end check of the assembled model on `samples` random weights.
pub fn check_model(variant: Variant, window: usize, samples: usize, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::<f64>::new(ModelConfig::table(variant, 3, window), seed).expect("config");
    for p in model.params_mut() {
        for v in p.data_mut() {
            if *v == 0.0 {
                *v = rng.random_range(-0.1..0.1);
            }
        }
    }
    let rssi: Vec<f64> = (0..window).map(|_| rng.random_range(-2.0..2.0)).collect();
    let sinr: Vec<f64> = (0..window).map(|_| rng.random_range(-2.0..2.0)).collect();
    let target = rng.random_range(0..3);
    let mut grads = model.zero_grads();
    model
        .loss_and_grad(&rssi, &sinr, target, None, &mut grads)
        .expect("shape");
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.data().iter().copied()).collect();
    let mut flat = model.flat_weights();
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let i = rng.random_range(0..flat.len());
        let orig = flat[i];
        let mut eval = |v: f64, flat: &mut Vec<f64>| {
            flat[i] = v;
            model.set_flat_weights(flat);
            let p = model.predict(&rssi, &sinr).expect("shape");
            cross_entropy(&p, target)
        };
        let up = eval(orig + EPSILON, &mut flat);
        let down = eval(orig - EPSILON, &mut flat);
        flat[i] = orig;
        worst = worst.max(relative_error(analytic[i], (up - down) / (2.0 * EPSILON)));
    }
    model.set_flat_weights(&flat);
    GradCheckReport {
        layer: match variant {
            Variant::Attention => "model(attention)",
            Variant::Lstm => "model(lstm)",
        },
        shapes: vec![format!("window={window} samples={samples}")],
        max_rel_error: worst,
    }
}

/// Runs the per-layer checks with `shapes` random shapes each.
pub fn run_layer_checks(shapes: usize, seed: u64) -> Vec<GradCheckReport> {
    vec![
        check_conv1d(shapes, seed),
        check_attention(shapes, seed + 1),
        check_lstm(shapes, seed + 2),
        check_dense(shapes, seed + 3),
        check_softmax_cross_entropy(shapes, seed + 4),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_passes() {
        for report in run_layer_checks(5, 100) {
            assert_eq!(report.shapes.len(), 5);
            assert!(report.max_rel_error < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn assembled_model_passes() {
        for variant in [Variant::Attention, Variant::Lstm] {
            let report = check_model(variant, 128, 60, 7);
            assert!(report.max_rel_error < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-12);
    }

    #[test]
    fn broken_gradient_is_caught() {
        let mut v = vec![1.0, 2.0];
        let e = compare(&mut v, &[2.0, 4.0], |x| x[0] * x[0] + x[1] * x[1] * 0.5);
        assert!(e > 0.3);
    }
}

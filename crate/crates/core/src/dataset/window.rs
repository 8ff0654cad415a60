use crate::dataset::{BinaryLabel, JamLabel, MotionLabel, TracePair};
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 256;
pub const DEFAULT_STRIDE: usize = 128;
const MIN_WINDOW: usize = 64;
const MAX_WINDOW: usize = 1024;
const MIN_ACF_LEN: usize = 512;

/// A standardized slice of one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedExample {
    pub rssi: Vec<f64>,
    pub sinr: Vec<f64>,
    pub binary_label: BinaryLabel,
    pub motion_label: Option<MotionLabel>,
    pub trace_id: usize,
    pub offset: usize,
}

impl WindowedExample {
    pub fn label(&self) -> JamLabel {
        JamLabel::from_labels(self.binary_label, self.motion_label)
    }

    pub fn len(&self) -> usize {
        self.rssi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rssi.is_empty()
    }
}

/// Zero mean, unit variance. A constant slice maps to all zeros.
pub fn standardize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var <= 1e-24 {
        return vec![0.0; x.len()];
    }
    let inv = 1.0 / var.sqrt();
    x.iter().map(|v| (v - mean) * inv).collect()
}

/// Normalized sample autocorrelation for lags `0..=max_lag`.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let denom: f64 = centered.iter().map(|v| v * v).sum();
    if denom <= 1e-24 * n as f64 {
        return Err(Error::DegenerateInput(
            "series has zero variance; autocorrelation undefined".into(),
        ));
    }
    Ok((0..=max_lag.min(n - 1))
        .map(|lag| {
            centered[..n - lag]
                .iter()
                .zip(&centered[lag..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / denom
        })
        .collect())
}

/// Window size from the decorrelation lag of the mean ACF: the first lag `L`
/// where the ACF drops below 1/e, then the next power of two >= 4L, clamped
/// to [64, 1024].
pub fn select_window_size(traces: &[&[f64]]) -> Result<usize> {
    if traces.is_empty() {
        return Err(Error::DegenerateInput("no traces supplied".into()));
    }
    let max_lag = MAX_WINDOW;
    let mut mean_acf: Vec<f64> = Vec::new();
    for t in traces {
        if t.len() < MIN_ACF_LEN {
            return Err(Error::DegenerateInput(format!(
                "trace length {} below the minimum {MIN_ACF_LEN}",
                t.len()
            )));
        }
        let acf = autocorrelation(t, max_lag)?;
        if mean_acf.is_empty() {
            mean_acf = acf;
        } else {
            let len = mean_acf.len().min(acf.len());
            mean_acf.truncate(len);
            for (m, a) in mean_acf.iter_mut().zip(acf) {
                *m += a;
            }
        }
    }
    let threshold = (-1.0f64).exp() * traces.len() as f64;
    let lag = mean_acf
        .iter()
        .position(|&a| a < threshold)
        .unwrap_or(mean_acf.len());
    Ok((4 * lag.max(1)).next_power_of_two().clamp(MIN_WINDOW, MAX_WINDOW))
}

pub fn window_count(len: usize, window: usize, stride: usize) -> usize {
    if window > len || window == 0 || stride == 0 {
        0
    } else {
        (len - window) / stride + 1
    }
}

/// Sliding standardized windows over one trace.
pub fn window_trace(trace: &TracePair, window: usize, stride: usize) -> Result<Vec<WindowedExample>> {
    if stride == 0 || window == 0 {
        return Err(Error::Config("window and stride must be positive".into()));
    }
    if window > trace.len() {
        return Err(Error::Config(format!(
            "window {window} exceeds trace {} length {}",
            trace.id,
            trace.len()
        )));
    }
    Ok((0..window_count(trace.len(), window, stride))
        .map(|i| {
            let offset = i * stride;
            WindowedExample {
                rssi: standardize(&trace.rssi[offset..offset + window]),
                sinr: standardize(&trace.sinr[offset..offset + window]),
                binary_label: trace.binary_label,
                motion_label: trace.motion_label,
                trace_id: trace.id,
                offset,
            }
        })
        .collect())
}

/// Windows every trace; windows inherit their trace's labels.
pub fn window_dataset(
    traces: &[TracePair],
    window: usize,
    stride: usize,
) -> Result<Vec<WindowedExample>> {
    let mut out = Vec::new();
    for t in traces {
        out.extend(window_trace(t, window, stride)?);
    }
    Ok(out)
}

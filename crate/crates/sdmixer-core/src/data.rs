//! Series preparation: normalization, chronological splits, sliding windows,
//! and the dataset diagnostics (spectral forecastability and the
//! season/trend covariance ratio).
//!
//! A raw series is a `[T, C]` tensor of T time steps over C channels. File
//! parsing lives in the CLI crate; everything here assumes the numbers are
//! already in memory.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::fft;
use crate::math;
use crate::tensor::{arg_err, dim_err, Result, Tensor};

fn series_dims(values: &Tensor, what: &str) -> Result<(usize, usize)> {
    match values.shape() {
        &[t, c] if t > 0 && c > 0 => Ok((t, c)),
        s => dim_err(format!("{what} must be a non-empty [T, C] tensor, got {s:?}")),
    }
}

/// Per-channel mean/std fitted on the training region only.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Channels whose variance was zero; their std is clamped to 1 so the
    /// transform is well defined (the channel normalizes to all zeros).
    pub clamped: Vec<bool>,
}

impl NormStats {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn any_clamped(&self) -> bool {
        self.clamped.iter().any(|&c| c)
    }

    pub fn apply(&self, values: &Tensor) -> Result<Tensor> {
        let (_, c) = series_dims(values, "normalize input")?;
        if c != self.channels() {
            return dim_err(format!(
                "normalizer fitted on {} channels, input has {c}",
                self.channels()
            ));
        }
        let mut out = values.clone();
        for row in out.data_mut().chunks_exact_mut(c) {
            for (ci, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[ci]) / self.std[ci];
            }
        }
        Ok(out)
    }

    pub fn invert(&self, values: &Tensor) -> Result<Tensor> {
        let (_, c) = series_dims(values, "denormalize input")?;
        if c != self.channels() {
            return dim_err(format!(
                "normalizer fitted on {} channels, input has {c}",
                self.channels()
            ));
        }
        let mut out = values.clone();
        for row in out.data_mut().chunks_exact_mut(c) {
            for (ci, v) in row.iter_mut().enumerate() {
                *v = *v * self.std[ci] + self.mean[ci];
            }
        }
        Ok(out)
    }
}

/// Population mean and std per channel (divide by T, not T-1).
pub fn fit_normalizer(values: &Tensor) -> Result<NormStats> {
    let (t, c) = series_dims(values, "normalizer input")?;
    let mut mean = vec![0.0; c];
    for row in values.data().chunks_exact(c) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= t as f64;
    }
    let mut var = vec![0.0; c];
    for row in values.data().chunks_exact(c) {
        for (ci, &v) in row.iter().enumerate() {
            let d = v - mean[ci];
            var[ci] += d * d;
        }
    }
    let mut std = vec![0.0; c];
    let mut clamped = vec![false; c];
    for ci in 0..c {
        let s = math::sqrt(var[ci] / t as f64);
        if s == 0.0 {
            std[ci] = 1.0;
            clamped[ci] = true;
        } else {
            std[ci] = s;
        }
    }
    Ok(NormStats { mean, std, clamped })
}

/// Fresh (non-overlapping) row counts of the three chronological splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

/// Row ranges into the source series for each split. Validation and test
/// ranges start `lookback` rows early so the first forecast window sits at
/// the split boundary; those prefix rows are never forecast targets of the
/// preceding split, only context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

pub fn split(total_rows: usize, spec: &SplitSpec, lookback: usize) -> Result<SplitRanges> {
    if spec.n_train == 0 || spec.n_val == 0 || spec.n_test == 0 {
        return arg_err("all three splits need at least one row");
    }
    let need = spec.n_train + spec.n_val + spec.n_test;
    if need > total_rows {
        return arg_err(format!(
            "splits need {need} rows but the series has {total_rows}"
        ));
    }
    if lookback == 0 {
        return arg_err("lookback must be positive");
    }
    if spec.n_train < lookback {
        return arg_err(format!(
            "training split of {} rows cannot supply a {lookback}-row context prefix",
            spec.n_train
        ));
    }
    let t0 = spec.n_train;
    let v0 = t0 + spec.n_val;
    Ok(SplitRanges {
        train: 0..t0,
        val: t0 - lookback..v0,
        test: v0 - lookback..v0 + spec.n_test,
    })
}

/// Copies a row range out of a `[T, C]` tensor.
pub fn slice_rows(values: &Tensor, rows: Range<usize>) -> Result<Tensor> {
    let (t, c) = series_dims(values, "slice input")?;
    if rows.start >= rows.end || rows.end > t {
        return arg_err(format!("row range {rows:?} outside series of {t} rows"));
    }
    let data = values.data()[rows.start * c..rows.end * c].to_vec();
    Tensor::new(vec![rows.end - rows.start, c], data)
}

/// All complete (lookback, horizon) window pairs over one split, in time
/// order. Window i reads rows `[i, i+L)` as input and `[i+L, i+L+H)` as
/// target.
#[derive(Debug, Clone)]
pub struct WindowDataset {
    data: Tensor,
    lookback: usize,
    horizon: usize,
    count: usize,
}

impl WindowDataset {
    pub fn new(data: Tensor, lookback: usize, horizon: usize) -> Result<Self> {
        let (t, _) = series_dims(&data, "window source")?;
        if lookback == 0 || horizon == 0 {
            return arg_err("lookback and horizon must be positive");
        }
        if t < lookback + horizon {
            return arg_err(format!(
                "{t} rows cannot fit one window of lookback {lookback} + horizon {horizon}"
            ));
        }
        let count = t - lookback - horizon + 1;
        Ok(WindowDataset {
            data,
            lookback,
            horizon,
            count,
        })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Materializes a batch: `x` is `[B, L, C]`, `y` is `[B, H, C]`.
    pub fn gather(&self, windows: &[usize]) -> Result<(Tensor, Tensor)> {
        let c = self.channels();
        let (l, h) = (self.lookback, self.horizon);
        let b = windows.len();
        if b == 0 {
            return arg_err("cannot gather an empty batch");
        }
        let mut x = Tensor::zeros(vec![b, l, c]);
        let mut y = Tensor::zeros(vec![b, h, c]);
        for (bi, &w) in windows.iter().enumerate() {
            if w >= self.count {
                return arg_err(format!("window {w} out of range ({} windows)", self.count));
            }
            let src = self.data.data();
            x.data_mut()[bi * l * c..(bi + 1) * l * c]
                .copy_from_slice(&src[w * c..(w + l) * c]);
            y.data_mut()[bi * h * c..(bi + 1) * h * c]
                .copy_from_slice(&src[(w + l) * c..(w + l + h) * c]);
        }
        Ok((x, y))
    }
}

/// Centered moving average with replicated edges, and the residual around it.
/// Returns `(trend, season)` with `trend + season == values` to round-off.
pub fn moving_average_decompose(values: &Tensor, window: usize) -> Result<(Tensor, Tensor)> {
    let (t, c) = series_dims(values, "moving average input")?;
    if window < 3 || window.is_multiple_of(2) {
        return arg_err(format!("window {window} must be odd and at least 3"));
    }
    if window > t {
        return arg_err(format!(
            "window {window} exceeds series length {t}"
        ));
    }
    let half = window / 2;
    let mut trend = Tensor::zeros(vec![t, c]);
    let src = values.data();
    let clamp = |i: isize| -> usize { i.clamp(0, t as isize - 1) as usize };
    for ci in 0..c {
        // Sliding sum over the edge-replicated series, O(T) per channel.
        let mut sum = 0.0;
        for d in -(half as isize)..=(half as isize) {
            sum += src[clamp(d) * c + ci];
        }
        trend.data_mut()[ci] = sum / window as f64;
        for ti in 1..t {
            let incoming = clamp(ti as isize + half as isize);
            let outgoing = clamp(ti as isize - 1 - half as isize);
            sum += src[incoming * c + ci] - src[outgoing * c + ci];
            trend.data_mut()[ti * c + ci] = sum / window as f64;
        }
    }
    let mut season = values.clone();
    for (s, tr) in season.data_mut().iter_mut().zip(trend.data()) {
        *s -= tr;
    }
    Ok((trend, season))
}

/// Population variance of one strided channel.
fn channel_variance(data: &[f64], c: usize, ci: usize, t: usize) -> f64 {
    let mut mean = 0.0;
    for ti in 0..t {
        mean += data[ti * c + ci];
    }
    mean /= t as f64;
    let mut var = 0.0;
    for ti in 0..t {
        let d = data[ti * c + ci] - mean;
        var += d * d;
    }
    var / t as f64
}

/// Mean spectral-concentration score over channels, in `[0, 1]`.
///
/// Per channel the whole-series periodogram (DC excluded) is normalized to a
/// distribution and scored `1 - H / ln(F-1)` where H is its Shannon entropy:
/// a pure tone scores 1, white noise near 0. Channels with no non-DC energy
/// contribute 0.
pub fn forecastability(values: &Tensor) -> Result<f64> {
    let (t, c) = series_dims(values, "forecastability input")?;
    if t < 8 {
        return arg_err(format!("forecastability needs at least 8 rows, got {t}"));
    }
    let f = fft::bin_count(t);
    let plan = crate::fft::FftPlan::new(t);
    let mut series = vec![0.0; t];
    let mut re = vec![0.0; f];
    let mut im = vec![0.0; f];
    let norm = math::ln((f - 1) as f64);
    let mut total = 0.0;
    for ci in 0..c {
        for (ti, s) in series.iter_mut().enumerate() {
            *s = values.data()[ti * c + ci];
        }
        fft::rfft_slice(&plan, &series, &mut re, &mut im);
        let mut energy = 0.0;
        for k in 1..f {
            energy += re[k] * re[k] + im[k] * im[k];
        }
        // A flat channel has no non-DC energy and scores 0. The comparison
        // is relative to the DC term because a constant input leaves
        // round-off dust in the other bins, and an entropy over dust would
        // be noise, not signal.
        let dc = re[0] * re[0] + im[0] * im[0];
        if energy <= (energy + dc) * 1e-24 {
            continue;
        }
        let mut entropy = 0.0;
        for k in 1..f {
            let p = (re[k] * re[k] + im[k] * im[k]) / energy;
            if p > 0.0 {
                entropy -= p * math::ln(p);
            }
        }
        total += (1.0 - entropy / norm).clamp(0.0, 1.0);
    }
    Ok(total / c as f64)
}

/// Mean over channels of var(season)/var(trend) after a moving-average
/// decomposition. Channels whose trend has zero variance are skipped; the
/// second return is how many were.
pub fn cov_ratio(values: &Tensor, window: usize) -> Result<(f64, usize)> {
    let (t, c) = series_dims(values, "cov_ratio input")?;
    let (trend, season) = moving_average_decompose(values, window)?;
    let mut total = 0.0;
    let mut used = 0usize;
    for ci in 0..c {
        let vt = channel_variance(trend.data(), c, ci, t);
        if vt == 0.0 {
            continue;
        }
        let vs = channel_variance(season.data(), c, ci, t);
        total += vs / vt;
        used += 1;
    }
    if used == 0 {
        return arg_err("every channel has a zero-variance trend");
    }
    Ok((total / used as f64, c - used))
}

/// The two per-dataset diagnostics, computed the way the reports expect:
/// forecastability on the raw series, covariance ratio on the whole series
/// normalized with its own statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetDiagnostics {
    pub channels: usize,
    pub rows: usize,
    pub forecastability: f64,
    pub cov_ratio: f64,
    pub cov_skipped_channels: usize,
}

pub fn diagnose(values: &Tensor, ma_window: usize) -> Result<DatasetDiagnostics> {
    let (t, c) = series_dims(values, "diagnostics input")?;
    let fc = forecastability(values)?;
    let stats = fit_normalizer(values)?;
    let normalized = stats.apply(values)?;
    let (ratio, skipped) = cov_ratio(&normalized, ma_window)?;
    Ok(DatasetDiagnostics {
        channels: c,
        rows: t,
        forecastability: fc,
        cov_ratio: ratio,
        cov_skipped_channels: skipped,
    })
}

//! Spectral season/trend decomposition.
//!
//! Per batch element and channel, the K rfft bins with the largest magnitude
//! are kept; their inverse transform is the season and the pointwise
//! remainder is the trend. Season and trend always add back to the input
//! (the trend is literally that subtraction), and the selected support is a
//! fixed point: decomposing a season again selects the same bins.
//!
//! Nothing here involves model parameters, so the whole decomposition is
//! constant with respect to training and lives outside the gradient tape.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::fft;
use crate::ops;
use crate::tensor::{arg_err, dim_err, ComplexTensor, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecomposeConfig {
    /// How many spectral bins form the season, per batch element and channel.
    pub k: usize,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        DecomposeConfig { k: 8 }
    }
}

/// Season/trend planes plus the spectral bookkeeping behind them.
#[derive(Debug, Clone)]
pub struct DecomposedBatch {
    pub season: Tensor,
    pub trend: Tensor,
    /// rfft of the input, kept for energy reporting.
    pub spectrum: ComplexTensor,
    /// The top-K-masked spectrum. The season is its inverse transform, so a
    /// consumer wanting rfft(season) can use this directly instead of
    /// transforming the season again.
    pub season_spectrum: ComplexTensor,
    /// Selected bin indices per (batch, channel), each sorted ascending.
    selected: Vec<Vec<usize>>,
    channels: usize,
}

impl DecomposedBatch {
    /// Bins selected for one batch element and channel.
    pub fn selected(&self, batch: usize, channel: usize) -> &[usize] {
        &self.selected[batch * self.channels + channel]
    }
}

fn check_input(x: &Tensor, cfg: &DecomposeConfig) -> Result<(usize, usize, usize)> {
    let &[b, l, c] = x.shape() else {
        return dim_err(format!("decompose expects [B, L, C], got {:?}", x.shape()));
    };
    if b == 0 || l == 0 || c == 0 {
        return dim_err("decompose expects non-degenerate dimensions");
    }
    let f = fft::bin_count(l);
    if cfg.k == 0 || cfg.k > f {
        return arg_err(format!(
            "season width k={} outside 1..={f} for lookback {l}",
            cfg.k
        ));
    }
    Ok((b, l, c))
}

/// Splits `[B, L, C]` into season and trend by top-K spectral magnitude.
pub fn decompose(x: &Tensor, cfg: &DecomposeConfig) -> Result<DecomposedBatch> {
    let (b, l, c) = check_input(x, cfg)?;
    let f = fft::bin_count(l);
    let spectrum = fft::rfft_time(x)?;
    let mut selected = Vec::with_capacity(b * c);
    let mut masked = ComplexTensor::zeros(vec![b, f, c]);
    let mut mags = vec![0.0; f];
    for bi in 0..b {
        for ci in 0..c {
            let base = bi * f * c + ci;
            for (k, mag) in mags.iter_mut().enumerate() {
                let (re, im) = (spectrum.re()[base + k * c], spectrum.im()[base + k * c]);
                *mag = re * re + im * im;
            }
            let bins = ops::topk_indices(&mags, cfg.k)?;
            for &bin in &bins {
                let idx = base + bin * c;
                masked.re_mut()[idx] = spectrum.re()[idx];
                masked.im_mut()[idx] = spectrum.im()[idx];
            }
            selected.push(bins);
        }
    }
    let season = fft::irfft_time(&masked, l)?;
    let trend = ops::sub(x, &season)?;
    Ok(DecomposedBatch {
        season,
        trend,
        spectrum,
        season_spectrum: masked,
        selected,
        channels: c,
    })
}

/// One spectral bin in an energy report.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRow {
    pub channel: usize,
    pub bin: usize,
    pub magnitude: f64,
    pub selected: bool,
}

/// Per-channel bin magnitudes, sorted by channel then descending magnitude
/// (ties by ascending bin), with the top-K rows flagged. Defined for a
/// single batch element; per-element selections could disagree otherwise.
pub fn energy_report(x: &Tensor, cfg: &DecomposeConfig) -> Result<Vec<EnergyRow>> {
    let (b, l, c) = check_input(x, cfg)?;
    if b != 1 {
        return arg_err(format!("energy report is defined for B=1, got B={b}"));
    }
    let f = fft::bin_count(l);
    let done = decompose(x, cfg)?;
    let mut rows = Vec::with_capacity(c * f);
    for ci in 0..c {
        let chosen = done.selected(0, ci);
        let mut channel_rows: Vec<EnergyRow> = (0..f)
            .map(|bin| {
                let idx = bin * c + ci;
                let (re, im) = (done.spectrum.re()[idx], done.spectrum.im()[idx]);
                EnergyRow {
                    channel: ci,
                    bin,
                    magnitude: crate::math::sqrt(re * re + im * im),
                    selected: chosen.binary_search(&bin).is_ok(),
                }
            })
            .collect();
        channel_rows.sort_by(|a, b| {
            b.magnitude
                .partial_cmp(&a.magnitude)
                .expect("magnitudes are finite")
                .then(a.bin.cmp(&b.bin))
        });
        rows.extend(channel_rows);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use alloc::vec::Vec;

    fn tone_batch(b: usize, l: usize, c: usize, f: impl Fn(usize, usize, usize) -> f64) -> Tensor {
        let mut data = Vec::with_capacity(b * l * c);
        for bi in 0..b {
            for t in 0..l {
                for ci in 0..c {
                    data.push(f(bi, t, ci));
                }
            }
        }
        Tensor::new(vec![b, l, c], data).unwrap()
    }

    fn random_batch(b: usize, l: usize, c: usize, seed: u64) -> Tensor {
        let mut rng = Rng::from_seed(seed);
        tone_batch(b, l, c, |_, _, _| 0.0).map(|_| rng.uniform(-1.0, 1.0))
    }

    #[test]
    fn keeping_every_bin_reproduces_the_input() {
        let l = 16;
        let x = random_batch(2, l, 3, 1);
        let cfg = DecomposeConfig {
            k: fft::bin_count(l),
        };
        let d = decompose(&x, &cfg).unwrap();
        assert!(d.season.max_abs_diff(&x) < 1e-9);
        assert!(d.trend.data().iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn constant_input_is_pure_season_via_dc() {
        let x = tone_batch(1, 12, 2, |_, _, ci| 3.0 + ci as f64);
        let d = decompose(&x, &DecomposeConfig { k: 1 }).unwrap();
        assert_eq!(d.selected(0, 0), &[0]);
        assert_eq!(d.selected(0, 1), &[0]);
        assert!(d.season.max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn strongest_tone_wins_and_matches_truncation_oracle() {
        // Channel signal: strong bin 3 plus weak bin 7. K=1 must take bin 3,
        // and the season must equal a hand-built single-bin reconstruction.
        let l = 32;
        let x = tone_batch(1, l, 1, |_, t, _| {
            let w = core::f64::consts::TAU * t as f64 / l as f64;
            2.0 * libm::cos(3.0 * w) + 0.5 * libm::sin(7.0 * w)
        });
        let d = decompose(&x, &DecomposeConfig { k: 1 }).unwrap();
        assert_eq!(d.selected(0, 0), &[3]);

        // Oracle: project onto the bin-3 pair analytically.
        for t in 0..l {
            let w = core::f64::consts::TAU * t as f64 / l as f64;
            let want = 2.0 * libm::cos(3.0 * w);
            assert!(
                (d.season.at(&[0, t, 0]) - want).abs() < 1e-9,
                "season at t={t}"
            );
            let want_trend = 0.5 * libm::sin(7.0 * w);
            assert!((d.trend.at(&[0, t, 0]) - want_trend).abs() < 1e-9);
        }
    }

    #[test]
    fn reconstruction_is_exact_by_construction() {
        for round in 0..100 {
            let x = random_batch(2, 24, 2, 100 + round);
            let d = decompose(&x, &DecomposeConfig { k: 3 }).unwrap();
            let sum = ops::add(&d.season, &d.trend).unwrap();
            assert!(sum.max_abs_diff(&x) < 1e-12);
        }
    }

    #[test]
    fn season_support_is_idempotent() {
        for round in 0..100 {
            let x = random_batch(1, 20, 2, 300 + round);
            let cfg = DecomposeConfig { k: 4 };
            let d1 = decompose(&x, &cfg).unwrap();
            let d2 = decompose(&d1.season, &cfg).unwrap();
            for ci in 0..2 {
                assert_eq!(d1.selected(0, ci), d2.selected(0, ci));
            }
            assert!(d2.season.max_abs_diff(&d1.season) < 1e-9);
        }
    }

    #[test]
    fn scaling_preserves_selection_and_scales_season() {
        for round in 0..100 {
            let x = random_batch(1, 18, 2, 500 + round);
            let cfg = DecomposeConfig { k: 3 };
            let a = 2.5;
            let d1 = decompose(&x, &cfg).unwrap();
            let d2 = decompose(&ops::scale(&x, a), &cfg).unwrap();
            for ci in 0..2 {
                assert_eq!(d1.selected(0, ci), d2.selected(0, ci));
            }
            let scaled = ops::scale(&d1.season, a);
            assert!(d2.season.max_abs_diff(&scaled) < 1e-9);
        }
    }

    #[test]
    fn decompose_is_deterministic() {
        let x = random_batch(2, 16, 3, 7);
        let cfg = DecomposeConfig { k: 2 };
        let a = decompose(&x, &cfg).unwrap();
        let b = decompose(&x, &cfg).unwrap();
        assert_eq!(a.season, b.season);
        assert_eq!(a.trend, b.trend);
    }

    #[test]
    fn zero_input_selects_first_bins_by_tie_rule() {
        let x = Tensor::zeros(vec![1, 16, 1]);
        let d = decompose(&x, &DecomposeConfig { k: 3 }).unwrap();
        assert_eq!(d.selected(0, 0), &[0, 1, 2]);
        assert!(d.season.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn k_must_fit_the_spectrum() {
        let x = random_batch(1, 16, 1, 9);
        assert!(decompose(&x, &DecomposeConfig { k: 0 }).is_err());
        assert!(decompose(&x, &DecomposeConfig { k: 10 }).is_err());
        assert!(decompose(&x, &DecomposeConfig { k: 9 }).is_ok());
    }

    #[test]
    fn energy_report_orders_and_flags() {
        let l = 32;
        let x = tone_batch(1, l, 1, |_, t, _| {
            let w = core::f64::consts::TAU * t as f64 / l as f64;
            2.0 * libm::cos(3.0 * w) + 0.5 * libm::sin(7.0 * w)
        });
        let cfg = DecomposeConfig { k: 2 };
        let rows = energy_report(&x, &cfg).unwrap();
        assert_eq!(rows.len(), fft::bin_count(l));
        assert_eq!(rows[0].bin, 3);
        assert_eq!(rows[1].bin, 7);
        assert!(rows[0].selected && rows[1].selected);
        assert_eq!(rows.iter().filter(|r| r.selected).count(), 2);
        for pair in rows.windows(2) {
            assert!(pair[0].magnitude >= pair[1].magnitude);
        }
    }

    #[test]
    fn energy_report_on_zeros_flags_first_bins() {
        let x = Tensor::zeros(vec![1, 16, 1]);
        let rows = energy_report(&x, &DecomposeConfig { k: 3 }).unwrap();
        // All magnitudes tie at zero, so rows come back in bin order and the
        // flagged set is the first K bins.
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.bin, i);
            assert_eq!(row.selected, i < 3);
        }
    }

    #[test]
    fn energy_report_rejects_batches() {
        let x = random_batch(2, 16, 1, 10);
        assert!(energy_report(&x, &DecomposeConfig { k: 2 }).is_err());
    }

    #[test]
    fn selection_uses_per_channel_spectra() {
        // Channel 0 peaks at bin 2, channel 1 at bin 5.
        let l = 24;
        let x = tone_batch(1, l, 2, |_, t, ci| {
            let w = core::f64::consts::TAU * t as f64 / l as f64;
            if ci == 0 {
                libm::cos(2.0 * w)
            } else {
                libm::sin(5.0 * w)
            }
        });
        let d = decompose(&x, &DecomposeConfig { k: 1 }).unwrap();
        assert_eq!(d.selected(0, 0), &[2]);
        assert_eq!(d.selected(0, 1), &[5]);
    }
}

//! Finite-difference verification of the reverse-mode gradients.
//!
//! The check perturbs every parameter scalar in both directions, rebuilds
//! the loss, and compares the central-difference slope against the tape
//! gradient. Models are initialized with [`ModelParams::init_random_all`]
//! rather than the training init: zero-initialized layers would zero out
//! upstream gradients and make the comparison vacuous.
//!
//! The loss is piecewise in the top-k selections, so a perturbation could in
//! principle flip a selection and break the comparison. The shipped
//! configurations are deterministic (fixed seeds), verified to sit away from
//! selection boundaries.

use alloc::vec::Vec;

use crate::model::{forward, ModelDims, ModelHyper, ModelParams, Variant};
use crate::rng::Rng;
use crate::tape::GradTape;
use crate::tensor::{Result, Tensor};

/// Relative errors are measured against max(|ad|, |fd|, this floor) so that
/// near-zero gradient pairs do not divide by dust.
pub const REL_FLOOR: f64 = 1e-6;

/// Central-difference gradient of a scalar function at `at`.
pub fn finite_diff_grad(
    f: &mut dyn FnMut(&Tensor) -> Result<f64>,
    at: &Tensor,
    step: f64,
) -> Result<Tensor> {
    let mut grad = Tensor::zeros(at.shape().to_vec());
    let mut probe = at.clone();
    for i in 0..at.len() {
        let base = at.data()[i];
        probe.data_mut()[i] = base + step;
        let up = f(&probe)?;
        probe.data_mut()[i] = base - step;
        let down = f(&probe)?;
        probe.data_mut()[i] = base;
        grad.data_mut()[i] = (up - down) / (2.0 * step);
    }
    Ok(grad)
}

/// Worst relative disagreement between two gradients of the same shape.
pub fn max_rel_err(ad: &Tensor, fd: &Tensor) -> f64 {
    assert_eq!(ad.shape(), fd.shape(), "gradients must share a shape");
    let mut worst = 0.0;
    for (&a, &f) in ad.data().iter().zip(fd.data()) {
        let denom = a.abs().max(f.abs()).max(REL_FLOOR);
        let rel = (a - f).abs() / denom;
        if rel > worst {
            worst = rel;
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub batch: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub channels: usize,
    pub d_hidden: usize,
    pub k_freq: usize,
    pub alpha: f64,
    pub k_attn: usize,
    pub seed: u64,
    /// Finite-difference step.
    pub step: f64,
    /// Maximum relative error accepted per parameter tensor.
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            batch: 2,
            lookback: 16,
            horizon: 8,
            channels: 4,
            d_hidden: 16,
            k_freq: 3,
            alpha: 0.5,
            k_attn: 4,
            seed: 7,
            step: 1e-5,
            tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub variant: Variant,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }
}

fn mse_value(pred: &Tensor, target: &Tensor) -> f64 {
    let n = pred.len() as f64;
    pred.data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum::<f64>()
        / n
}

/// Compares tape gradients against central differences for every parameter
/// tensor of one model variant.
pub fn check_model(variant: Variant, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let dims = ModelDims {
        lookback: cfg.lookback,
        horizon: cfg.horizon,
        channels: cfg.channels,
        d_hidden: cfg.d_hidden,
    };
    let hyper = ModelHyper {
        k_freq: cfg.k_freq,
        alpha: cfg.alpha,
        k_attn: cfg.k_attn,
    };
    let params = ModelParams::init_random_all(dims, variant, hyper, cfg.seed)?;

    let mut rng = Rng::substream(cfg.seed, 2);
    let mut x = Tensor::zeros(alloc::vec![cfg.batch, cfg.lookback, cfg.channels]);
    x.map_mut(|_| rng.uniform(-1.0, 1.0));
    let mut target = Tensor::zeros(alloc::vec![cfg.batch, cfg.horizon, cfg.channels]);
    target.map_mut(|_| rng.uniform(-1.0, 1.0));

    // Reverse-mode gradients from a single taped loss.
    let mut tape = GradTape::new();
    let nodes = crate::model::insert_params(&mut tape, &params);
    let pred = crate::model::forward_graph(&mut tape, &x, &params, &nodes)?;
    let diff = tape.sub_const(pred, target.clone())?;
    let sq = tape.mul(diff, diff)?;
    let loss = tape.mean_all(sq);
    let mut grads = tape.backward(loss)?;

    let names: Vec<&'static str> = params.named_tensors().iter().map(|(n, _)| *n).collect();
    let mut entries = Vec::with_capacity(names.len());
    for (slot, name) in names.iter().enumerate() {
        let ad = {
            let id = nodes
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, id)| id)
                .expect("graph registers every named tensor");
            let shape = params.named_tensors()[slot].1.shape().to_vec();
            grads.take(id).unwrap_or_else(|| Tensor::zeros(shape))
        };
        let at = params.named_tensors()[slot].1.clone();
        let mut eval = |t: &Tensor| -> Result<f64> {
            let mut probe_params = params.clone();
            *probe_params.named_tensors_mut()[slot].1 = t.clone();
            let pred = forward(&x, &probe_params)?;
            Ok(mse_value(&pred, &target))
        };
        let fd = finite_diff_grad(&mut eval, &at, cfg.step)?;
        let err = max_rel_err(&ad, &fd);
        entries.push(GradCheckEntry {
            name,
            max_rel_err: err,
            passed: err < cfg.tolerance,
        });
    }
    Ok(GradCheckReport { variant, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn finite_diff_recovers_a_quadratic_gradient() {
        let at = Tensor::new(vec![3], vec![0.5, -1.5, 2.0]).unwrap();
        let mut f = |t: &Tensor| -> Result<f64> {
            Ok(t.data().iter().map(|&v| v * v).sum())
        };
        let fd = finite_diff_grad(&mut f, &at, 1e-6).unwrap();
        let want = Tensor::new(vec![3], vec![1.0, -3.0, 4.0]).unwrap();
        assert!(fd.max_abs_diff(&want) < 1e-8);
    }

    #[test]
    fn rel_err_is_zero_for_identical_gradients() {
        let g = Tensor::new(vec![2], vec![1.0, -2.0]).unwrap();
        assert_eq!(max_rel_err(&g, &g), 0.0);
    }

    #[test]
    fn rel_err_uses_the_floor_near_zero() {
        let a = Tensor::new(vec![1], vec![1e-9]).unwrap();
        let b = Tensor::new(vec![1], vec![-1e-9]).unwrap();
        // Absolute gap 2e-9 against the 1e-6 floor, not against 1e-9.
        assert!(max_rel_err(&a, &b) < 1e-2);
    }

    #[test]
    fn rel_err_flags_a_real_disagreement() {
        let a = Tensor::new(vec![1], vec![1.0]).unwrap();
        let b = Tensor::new(vec![1], vec![1.1]).unwrap();
        assert!(max_rel_err(&a, &b) > 0.05);
    }

    fn small_config() -> GradCheckConfig {
        GradCheckConfig {
            batch: 1,
            lookback: 8,
            horizon: 4,
            channels: 2,
            d_hidden: 4,
            k_freq: 2,
            alpha: 0.5,
            k_attn: 2,
            seed: 7,
            step: 1e-5,
            tolerance: 1e-3,
        }
    }

    #[test]
    fn small_full_model_gradients_match() {
        let report = check_model(Variant::Full, &small_config()).unwrap();
        assert_eq!(report.entries.len(), 13);
        for e in &report.entries {
            assert!(e.passed, "{} err {}", e.name, e.max_rel_err);
        }
    }

    #[test]
    fn small_ablated_models_match_too() {
        for variant in [Variant::NoCross, Variant::NoTime, Variant::NoFreq] {
            let report = check_model(variant, &small_config()).unwrap();
            assert!(report.passed(), "variant {variant}");
            let expected = match variant {
                Variant::NoCross => 9,
                Variant::NoTime => 8,
                Variant::NoFreq => 11,
                Variant::Full => unreachable!(),
            };
            assert_eq!(report.entries.len(), expected);
        }
    }
}

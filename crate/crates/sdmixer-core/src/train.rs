//! Mini-batch training with Adam, early stopping and best-epoch selection.
//!
//! Each epoch shuffles window indices with a per-epoch RNG substream, so a
//! run is reproducible from its seed alone regardless of how many epochs
//! execute. Validation runs after every epoch; the returned parameters are
//! the ones that scored the best validation MSE, not the final ones.
//!
//! Wall time is observed through the [`Clock`] trait so tests can pin
//! timing-sensitive output to zero.

use alloc::vec::Vec;

use crate::adam::{clip_global_norm, AdamHyper, AdamState};
use crate::data::WindowDataset;
use crate::model::{forward, forward_graph, insert_params, ModelDims, ModelHyper, ModelParams, Variant};
use crate::rng::Rng;
use crate::tape::GradTape;
use crate::tensor::{arg_err, dim_err, Error, Result, Tensor};

/// Losses above this are treated as divergence even while still finite.
const DIVERGENCE_LIMIT: f64 = 1e12;

/// Source of elapsed seconds for epoch timing.
pub trait Clock {
    fn now_seconds(&mut self) -> f64;
}

/// Always reports zero; keeps test output time-independent.
pub struct NullClock;

impl Clock for NullClock {
    fn now_seconds(&mut self) -> f64 {
        0.0
    }
}

/// Wall clock backed by a monotonic timer.
#[cfg(feature = "std")]
pub struct WallClock {
    origin: std::time::Instant,
}

#[cfg(feature = "std")]
impl WallClock {
    pub fn new() -> Self {
        WallClock {
            origin: std::time::Instant::now(),
        }
    }
}

#[cfg(feature = "std")]
impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(feature = "std")]
impl Clock for WallClock {
    fn now_seconds(&mut self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Mean squared error between two equally shaped tensors.
pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return dim_err(format_args!(
            "mse shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        ));
    }
    let n = a.len() as f64;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

/// Mean absolute error between two equally shaped tensors.
pub fn mae(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return dim_err(format_args!(
            "mae shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        ));
    }
    let n = a.len() as f64;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs())
        .sum::<f64>()
        / n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lookback: usize,
    pub horizon: usize,
    pub variant: Variant,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
    /// Global gradient norm ceiling; 0 disables clipping.
    pub grad_clip: f64,
    pub k_freq: usize,
    pub alpha: f64,
    pub k_attn: usize,
    /// MLP width; 0 means four times the channel count.
    pub d_hidden: usize,
}

impl TrainConfig {
    pub fn new(lookback: usize, horizon: usize) -> Self {
        TrainConfig {
            lookback,
            horizon,
            variant: Variant::Full,
            batch_size: 32,
            epochs: 10,
            learning_rate: 1e-3,
            patience: 3,
            seed: 42,
            grad_clip: 5.0,
            k_freq: 8,
            alpha: 0.5,
            k_attn: (lookback / 4).max(1),
            d_hidden: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return arg_err("batch_size must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return arg_err("learning_rate must be finite and non-negative");
        }
        if !(self.grad_clip >= 0.0 && self.grad_clip.is_finite()) {
            return arg_err("grad_clip must be finite and non-negative");
        }
        Ok(())
    }

    fn resolved_dims(&self, channels: usize) -> ModelDims {
        ModelDims {
            lookback: self.lookback,
            horizon: self.horizon,
            channels,
            d_hidden: if self.d_hidden == 0 {
                4 * channels
            } else {
                self.d_hidden
            },
        }
    }

    fn hyper(&self) -> ModelHyper {
        ModelHyper {
            k_freq: self.k_freq,
            alpha: self.alpha,
            k_attn: self.k_attn,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose parameters were returned; 0 if never trained.
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub mse: f64,
    pub mae: f64,
}

fn check_dataset(set: &WindowDataset, cfg: &TrainConfig, what: &str) -> Result<()> {
    if set.lookback() != cfg.lookback || set.horizon() != cfg.horizon {
        return dim_err(format_args!(
            "{what} windows are {}x{} but the run wants {}x{}",
            set.lookback(),
            set.horizon(),
            cfg.lookback,
            cfg.horizon
        ));
    }
    if set.is_empty() {
        return arg_err(format_args!("{what} split produced no windows"));
    }
    Ok(())
}

/// Trains one model and returns the best-validation parameters plus the
/// per-epoch history. `on_epoch` fires once per completed epoch.
pub fn train(
    train_set: &WindowDataset,
    val_set: &WindowDataset,
    cfg: &TrainConfig,
    clock: &mut dyn Clock,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    check_dataset(train_set, cfg, "train")?;
    check_dataset(val_set, cfg, "validation")?;
    if train_set.channels() != val_set.channels() {
        return dim_err("train and validation channel counts differ");
    }

    let dims = cfg.resolved_dims(train_set.channels());
    let mut params = ModelParams::init(dims, cfg.variant, cfg.hyper(), cfg.seed)?;
    let hyper = AdamHyper::with_lr(cfg.learning_rate);
    let mut optim: Vec<AdamState> = params
        .named_tensors()
        .iter()
        .map(|(_, t)| AdamState::new(t.shape().to_vec(), hyper))
        .collect::<Result<_>>()?;

    let mut best_params = params.clone();
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_mse: f64::INFINITY,
        stopped_early: false,
    };
    let mut bad_epochs = 0;

    let mut indices: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        let started = clock.now_seconds();
        let mut rng = Rng::substream(cfg.seed, epoch as u64);
        rng.shuffle(&mut indices);

        let mut sq_sum = 0.0;
        let mut window_count = 0usize;
        for (batch_no, batch) in indices.chunks(cfg.batch_size).enumerate() {
            let (x, y) = train_set.gather(batch)?;
            let mut tape = GradTape::new();
            let nodes = insert_params(&mut tape, &params);
            let pred = forward_graph(&mut tape, &x, &params, &nodes)?;
            let diff = tape.sub_const(pred, y)?;
            let sq = tape.mul(diff, diff)?;
            let loss_node = tape.mean_all(sq);
            let loss = tape.value(loss_node).data()[0];
            if !loss.is_finite() || loss > DIVERGENCE_LIMIT {
                return Err(Error::Training {
                    epoch,
                    batch: batch_no,
                    message: alloc::format!("loss diverged to {loss:e}"),
                });
            }
            let mut grads = tape.backward(loss_node)?;
            let mut grad_list: Vec<Tensor> = nodes
                .iter()
                .zip(params.named_tensors())
                .map(|((_, id), (_, t))| {
                    grads
                        .take(id)
                        .unwrap_or_else(|| Tensor::zeros(t.shape().to_vec()))
                })
                .collect();
            if cfg.grad_clip > 0.0 {
                clip_global_norm(&mut grad_list, cfg.grad_clip);
            }
            for ((state, (_, param)), grad) in optim
                .iter_mut()
                .zip(params.named_tensors_mut())
                .zip(&grad_list)
            {
                state.step(param, grad)?;
            }
            sq_sum += loss * batch.len() as f64;
            window_count += batch.len();
        }

        let val = evaluate(&params, val_set, cfg.batch_size)?;
        let stats = EpochStats {
            epoch,
            train_mse: sq_sum / window_count as f64,
            val_mse: val.mse,
            seconds: clock.now_seconds() - started,
        };
        on_epoch(&stats);
        report.epochs.push(stats);

        if val.mse < report.best_val_mse {
            report.best_val_mse = val.mse;
            report.best_epoch = epoch;
            best_params = params.clone();
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if cfg.patience > 0 && bad_epochs >= cfg.patience {
                report.stopped_early = true;
                break;
            }
        }
    }

    Ok((best_params, report))
}

/// Forecast error of fixed parameters over every window of a dataset.
pub fn evaluate(
    params: &ModelParams,
    set: &WindowDataset,
    batch_size: usize,
) -> Result<EvalMetrics> {
    if batch_size == 0 {
        return arg_err("batch_size must be positive");
    }
    let indices: Vec<usize> = (0..set.len()).collect();
    let mut sq_sum = 0.0;
    let mut abs_sum = 0.0;
    let mut n = 0usize;
    for batch in indices.chunks(batch_size) {
        let (x, y) = set.gather(batch)?;
        let pred = forward(&x, params)?;
        sq_sum += mse(&pred, &y)? * pred.len() as f64;
        abs_sum += mae(&pred, &y)? * pred.len() as f64;
        n += pred.len();
    }
    if n == 0 {
        return arg_err("dataset has no windows to evaluate");
    }
    Ok(EvalMetrics {
        mse: sq_sum / n as f64,
        mae: abs_sum / n as f64,
    })
}

/// Error of the repeat-last-row predictor, the floor any trained model must
/// beat to be worth its parameters.
pub fn persistence_baseline(set: &WindowDataset) -> Result<EvalMetrics> {
    let indices: Vec<usize> = (0..set.len()).collect();
    let (l, h, c) = (set.lookback(), set.horizon(), set.channels());
    let mut sq_sum = 0.0;
    let mut abs_sum = 0.0;
    let mut n = 0usize;
    for batch in indices.chunks(256) {
        let (x, y) = set.gather(batch)?;
        let b = batch.len();
        for bi in 0..b {
            for t in 0..h {
                for ci in 0..c {
                    let last = x.at(&[bi, l - 1, ci]);
                    let want = y.at(&[bi, t, ci]);
                    let d = last - want;
                    sq_sum += d * d;
                    abs_sum += d.abs();
                }
            }
        }
        n += b * h * c;
    }
    if n == 0 {
        return arg_err("dataset has no windows to evaluate");
    }
    Ok(EvalMetrics {
        mse: sq_sum / n as f64,
        mae: abs_sum / n as f64,
    })
}

/// One trained variant's test-set error.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub mse: f64,
    pub mae: f64,
    pub best_epoch: usize,
    pub param_count: usize,
}

/// Trains every variant under the same configuration and seed and scores
/// each on the test split.
pub fn run_ablation_suite(
    train_set: &WindowDataset,
    val_set: &WindowDataset,
    test_set: &WindowDataset,
    cfg: &TrainConfig,
    clock: &mut dyn Clock,
    on_epoch: &mut dyn FnMut(Variant, &EpochStats),
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(Variant::ALL.len());
    for variant in Variant::ALL {
        let mut vcfg = cfg.clone();
        vcfg.variant = variant;
        let (params, report) =
            train(train_set, val_set, &vcfg, clock, &mut |s| on_epoch(variant, s))?;
        let metrics = evaluate(&params, test_set, cfg.batch_size)?;
        rows.push(AblationRow {
            variant,
            mse: metrics.mse,
            mae: metrics.mae,
            best_epoch: report.best_epoch,
            param_count: params.param_count(),
        });
    }
    Ok(rows)
}

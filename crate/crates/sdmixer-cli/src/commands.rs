//! Subcommand implementations.
//!
//! Every command is deterministic for a given configuration and input
//! files: reruns produce byte-identical outputs except for wall-clock
//! fields, which only appear in training logs.

use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use sdmixer_core::checkpoint;
use sdmixer_core::data::{self, SplitSpec, WindowDataset};
use sdmixer_core::decompose::{decompose, energy_report, DecomposeConfig};
use sdmixer_core::fft;
use sdmixer_core::gradcheck::{check_model, GradCheckConfig};
use sdmixer_core::model::{ModelDims, ModelHyper, ModelParams, Variant};
use sdmixer_core::train::{self, EpochStats, TrainConfig, WallClock};
use sdmixer_core::Tensor;

use crate::config::{AutoUsize, RunConfig};
use crate::csvio;
use crate::datasets;
use crate::report::{self, MetricsRow, ReportInputs, StatsRow};

/// A bad invocation rather than a failed run; exits with status 2 like the
/// argument parser's own errors.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage_err(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

/// Split row counts for one dataset: explicit config values if given,
/// otherwise the published counts for known stems, otherwise 7:1:2.
fn split_spec_for(cfg: &RunConfig, stem: &str, total_rows: usize) -> Result<SplitSpec> {
    match (cfg.n_train, cfg.n_val, cfg.n_test) {
        (AutoUsize::Fixed(n_train), AutoUsize::Fixed(n_val), AutoUsize::Fixed(n_test)) => {
            Ok(SplitSpec {
                n_train,
                n_val,
                n_test,
            })
        }
        (AutoUsize::Auto, AutoUsize::Auto, AutoUsize::Auto) => {
            Ok(datasets::auto_split(stem, total_rows))
        }
        _ => Err(usage_err(
            "n_train, n_val, and n_test must be set together or left auto together",
        )),
    }
}

/// A dataset loaded, split chronologically, normalized with training-split
/// statistics, and windowed for the three phases.
pub struct PreparedData {
    pub name: String,
    pub channels: usize,
    pub train: WindowDataset,
    pub val: WindowDataset,
    pub test: WindowDataset,
}

fn prepare(dataset_spec: &str, cfg: &RunConfig) -> Result<PreparedData> {
    let resolved = datasets::resolve(dataset_spec)?;
    let series = csvio::read_series(&resolved.path)?;
    let spec = split_spec_for(cfg, &resolved.name, series.rows())?;
    let ranges = data::split(series.rows(), &spec, cfg.lookback)
        .with_context(|| format!("cannot split {}", resolved.name))?;
    let train_rows = data::slice_rows(&series.values, ranges.train.clone())?;
    let stats = data::fit_normalizer(&train_rows)?;
    let normalized = stats.apply(&series.values)?;
    let window = |rows: core::ops::Range<usize>| -> Result<WindowDataset> {
        Ok(WindowDataset::new(
            data::slice_rows(&normalized, rows)?,
            cfg.lookback,
            cfg.horizon,
        )?)
    };
    Ok(PreparedData {
        name: resolved.name,
        channels: series.channels(),
        train: window(ranges.train)?,
        val: window(ranges.val)?,
        test: window(ranges.test)?,
    })
}

/// Freshly initialized parameters shaped the way `cfg` trains them; the
/// checkpoint decoder needs this as a shape template.
fn model_template(cfg: &TrainConfig, channels: usize) -> Result<ModelParams> {
    let dims = ModelDims {
        lookback: cfg.lookback,
        horizon: cfg.horizon,
        channels,
        d_hidden: if cfg.d_hidden == 0 {
            4 * channels
        } else {
            cfg.d_hidden
        },
    };
    let hyper = ModelHyper {
        k_freq: cfg.k_freq,
        alpha: cfg.alpha,
        k_attn: cfg.k_attn,
    };
    Ok(ModelParams::init(dims, cfg.variant, hyper, cfg.seed)?)
}

fn epoch_line(s: &EpochStats) -> String {
    format!(
        "{}\t{}\t{}\t{:.3}",
        s.epoch, s.train_mse, s.val_mse, s.seconds
    )
}

const METRICS_HEADER: &str = "dataset,horizon,variant,mse,mae";

/// Records the fully resolved configuration a run used, so the output
/// directory is reproducible on its own.
fn write_config_snapshot(cfg: &RunConfig, out: &Path) -> Result<()> {
    csvio::write_file(&out.join("config.txt"), |w| {
        w.write_all(cfg.canonical_text().as_bytes())?;
        Ok(())
    })
}

fn metrics_line(dataset: &str, horizon: usize, variant: Variant, mse: f64, mae: f64) -> String {
    format!("{dataset},{horizon},{variant},{mse:.6},{mae:.6}")
}

/// Prints per-dataset diagnostics and writes `stats.csv` under `out`.
pub fn cmd_stats(dataset_specs: &[String], cfg: &RunConfig, out: &Path) -> Result<()> {
    if dataset_specs.is_empty() {
        return Err(usage_err("stats needs at least one --dataset"));
    }
    let mut lines = Vec::with_capacity(dataset_specs.len());
    for spec in dataset_specs {
        let resolved = datasets::resolve(spec)?;
        let series = csvio::read_series(&resolved.path)?;
        let diag = sdmixer_core::data::diagnose(&series.values, cfg.ma_window)
            .with_context(|| format!("cannot diagnose {}", resolved.name))?;
        let split = split_spec_for(cfg, &resolved.name, series.rows())?;
        lines.push(format!(
            "{},{},{},{},{},{},{:.6},{:.6}",
            resolved.name,
            diag.rows,
            diag.channels,
            split.n_train,
            split.n_val,
            split.n_test,
            diag.forecastability,
            diag.cov_ratio
        ));
    }
    println!("dataset,rows,dim,n_train,n_val,n_test,forecastability,cov_ratio");
    for line in &lines {
        println!("{line}");
    }
    csvio::write_file(&out.join("stats.csv"), |w| {
        writeln!(w, "dataset,rows,dim,n_train,n_val,n_test,forecastability,cov_ratio")?;
        for line in &lines {
            writeln!(w, "{line}")?;
        }
        Ok(())
    })?;
    Ok(())
}

/// Splits one raw lookback window into season and trend and writes the
/// planes plus the spectral energy table under `out`.
pub fn cmd_decompose(
    dataset_spec: &str,
    cfg: &RunConfig,
    k: Option<usize>,
    offset: usize,
    out: &Path,
) -> Result<()> {
    let resolved = datasets::resolve(dataset_spec)?;
    let series = csvio::read_series(&resolved.path)?;
    let l = cfg.lookback;
    let c = series.channels();
    if offset + l > series.rows() {
        return Err(usage_err(format!(
            "window [{offset}, {}) runs past the {} rows of {}",
            offset + l,
            series.rows(),
            resolved.name
        )));
    }
    let k = k.unwrap_or(cfg.k_freq);
    let bins = fft::bin_count(l);
    if k == 0 || k > bins {
        return Err(usage_err(format!(
            "season width k={k} outside 1..={bins} for lookback {l}"
        )));
    }
    let window = data::slice_rows(&series.values, offset..offset + l)?;
    let x = Tensor::new(vec![1, l, c], window.data().to_vec())?;
    let done = decompose(&x, &DecomposeConfig { k })?;

    let plane = |t: &Tensor| Tensor::new(vec![l, c], t.data().to_vec());
    csvio::write_matrix(&out.join("season.csv"), &series.columns, &plane(&done.season)?)?;
    csvio::write_matrix(&out.join("trend.csv"), &series.columns, &plane(&done.trend)?)?;

    let rows = energy_report(&x, &DecomposeConfig { k })?;
    csvio::write_file(&out.join("energy_report.csv"), |w| {
        writeln!(w, "channel,bin,magnitude,selected")?;
        for r in &rows {
            writeln!(w, "{},{},{},{}", r.channel, r.bin, r.magnitude, r.selected)?;
        }
        Ok(())
    })?;

    let mut worst = 0.0f64;
    for (i, &v) in x.data().iter().enumerate() {
        worst = worst.max((done.season.data()[i] + done.trend.data()[i] - v).abs());
    }
    println!(
        "decomposed {} rows [{offset}, {}) with k={k}: reconstruction max error {worst:.3e}",
        resolved.name,
        offset + l
    );
    println!("wrote season.csv, trend.csv, energy_report.csv to {}", out.display());
    Ok(())
}

/// Trains one variant; writes `train.log`, `checkpoint.sdmx`, and
/// `metrics.csv` under `out`.
pub fn cmd_train(dataset_spec: &str, cfg: &RunConfig, out: &Path) -> Result<()> {
    let prepared = prepare(dataset_spec, cfg)?;
    let tcfg = cfg.train_config();
    write_config_snapshot(cfg, out)?;
    let mut clock = WallClock::new();
    let mut log_lines: Vec<String> = Vec::new();
    let (params, report) = train::train(
        &prepared.train,
        &prepared.val,
        &tcfg,
        &mut clock,
        &mut |s| log_lines.push(epoch_line(s)),
    )?;
    csvio::write_file(&out.join("train.log"), |w| {
        for line in &log_lines {
            writeln!(w, "{line}")?;
        }
        Ok(())
    })?;
    csvio::write_file(&out.join("checkpoint.sdmx"), |w| {
        w.write_all(&checkpoint::encode(&params))?;
        Ok(())
    })?;
    let metrics = train::evaluate(&params, &prepared.test, tcfg.batch_size)?;
    csvio::write_file(&out.join("metrics.csv"), |w| {
        writeln!(w, "{METRICS_HEADER}")?;
        writeln!(
            w,
            "{}",
            metrics_line(&prepared.name, cfg.horizon, tcfg.variant, metrics.mse, metrics.mae)
        )?;
        Ok(())
    })?;
    println!(
        "trained {} horizon {} variant {}: test mse {:.6} mae {:.6} (best epoch {} of {})",
        prepared.name,
        cfg.horizon,
        tcfg.variant,
        metrics.mse,
        metrics.mae,
        report.best_epoch,
        report.epochs.len()
    );
    println!(
        "wrote train.log, checkpoint.sdmx, metrics.csv to {}",
        out.display()
    );
    Ok(())
}

/// Scores a checkpoint on the test split; writes `metrics.csv` under `out`.
pub fn cmd_eval(
    dataset_spec: &str,
    cfg: &RunConfig,
    checkpoint_path: &Path,
    out: &Path,
) -> Result<()> {
    let prepared = prepare(dataset_spec, cfg)?;
    let tcfg = cfg.train_config();
    let template = model_template(&tcfg, prepared.channels)?;
    let bytes = std::fs::read(checkpoint_path)
        .with_context(|| format!("cannot read {}", checkpoint_path.display()))?;
    let params = checkpoint::decode(&bytes, &template)
        .with_context(|| format!("cannot load {}", checkpoint_path.display()))?;
    let metrics = train::evaluate(&params, &prepared.test, tcfg.batch_size)?;
    let line = metrics_line(&prepared.name, cfg.horizon, tcfg.variant, metrics.mse, metrics.mae);
    println!("{METRICS_HEADER}");
    println!("{line}");
    csvio::write_file(&out.join("metrics.csv"), |w| {
        writeln!(w, "{METRICS_HEADER}")?;
        writeln!(w, "{line}")?;
        Ok(())
    })?;
    Ok(())
}

struct VariantRun {
    log_lines: Vec<String>,
    checkpoint: Vec<u8>,
    mse: f64,
    mae: f64,
    best_epoch: usize,
    param_count: usize,
}

fn worker_count() -> usize {
    std::env::var("SDMIXER_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .unwrap_or(1)
        .clamp(1, 4)
}

/// Trains all four variants under one configuration; writes per-variant
/// logs and checkpoints plus `ablation.csv` under `out`.
pub fn cmd_ablate(dataset_spec: &str, cfg: &RunConfig, out: &Path) -> Result<()> {
    let prepared = prepare(dataset_spec, cfg)?;
    let base = cfg.train_config();
    write_config_snapshot(cfg, out)?;
    let workers = worker_count();

    let next: Mutex<usize> = Mutex::new(0);
    let done: Mutex<Vec<Option<Result<VariantRun>>>> =
        Mutex::new(Variant::ALL.iter().map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let slot = {
                    let mut n = next.lock().unwrap();
                    let slot = *n;
                    *n += 1;
                    slot
                };
                if slot >= Variant::ALL.len() {
                    return;
                }
                let variant = Variant::ALL[slot];
                let mut vcfg = base.clone();
                vcfg.variant = variant;
                let run = run_variant(&prepared, &vcfg);
                done.lock().unwrap()[slot] = Some(run);
            });
        }
    });

    let runs = done.into_inner().unwrap();
    let mut rows = Vec::with_capacity(Variant::ALL.len());
    for (variant, run) in Variant::ALL.into_iter().zip(runs) {
        let run = run
            .unwrap_or_else(|| Err(anyhow!("variant {variant} never ran")))
            .with_context(|| format!("training variant {variant}"))?;
        csvio::write_file(&out.join(format!("train-{variant}.log")), |w| {
            for line in &run.log_lines {
                writeln!(w, "{line}")?;
            }
            Ok(())
        })?;
        csvio::write_file(&out.join(format!("checkpoint-{variant}.sdmx")), |w| {
            w.write_all(&run.checkpoint)?;
            Ok(())
        })?;
        println!(
            "{variant}: test mse {:.6} mae {:.6} (best epoch {}, {} parameters)",
            run.mse, run.mae, run.best_epoch, run.param_count
        );
        rows.push(metrics_line(&prepared.name, cfg.horizon, variant, run.mse, run.mae));
    }
    csvio::write_file(&out.join("ablation.csv"), |w| {
        writeln!(w, "{METRICS_HEADER}")?;
        for row in &rows {
            writeln!(w, "{row}")?;
        }
        Ok(())
    })?;
    println!(
        "wrote ablation.csv and per-variant logs and checkpoints to {}",
        out.display()
    );
    Ok(())
}

fn run_variant(prepared: &PreparedData, cfg: &TrainConfig) -> Result<VariantRun> {
    let mut clock = WallClock::new();
    let mut log_lines = Vec::new();
    let (params, report) = train::train(
        &prepared.train,
        &prepared.val,
        cfg,
        &mut clock,
        &mut |s| log_lines.push(epoch_line(s)),
    )?;
    let metrics = train::evaluate(&params, &prepared.test, cfg.batch_size)?;
    Ok(VariantRun {
        log_lines,
        checkpoint: checkpoint::encode(&params),
        mse: metrics.mse,
        mae: metrics.mae,
        best_epoch: report.best_epoch,
        param_count: params.param_count(),
    })
}

/// Compares tape gradients with central finite differences on a fixed
/// synthetic configuration; one line per parameter tensor.
pub fn cmd_gradcheck(variant: Option<Variant>, seed: Option<u64>) -> Result<()> {
    let mut cfg = GradCheckConfig::default();
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let variants: Vec<Variant> = match variant {
        Some(v) => vec![v],
        None => Variant::ALL.to_vec(),
    };
    let mut all_passed = true;
    for v in variants {
        let report = check_model(v, &cfg)?;
        for entry in &report.entries {
            println!(
                "{v} {} max_rel_err {:.3e} {}",
                entry.name,
                entry.max_rel_err,
                if entry.passed { "PASS" } else { "FAIL" }
            );
        }
        all_passed &= report.passed();
    }
    if !all_passed {
        bail!("gradient check failed");
    }
    println!("gradcheck: all gradients within tolerance {:.1e}", cfg.tolerance);
    Ok(())
}

fn read_csv_rows(path: &Path, want: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let mut index = Vec::with_capacity(want.len());
    for name in want {
        let pos = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| anyhow!("{} has no {name:?} column", path.display()))?;
        index.push(pos);
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{} row {}", path.display(), i + 2))?;
        let mut row = Vec::with_capacity(want.len());
        for (&pos, name) in index.iter().zip(want) {
            let cell = record
                .get(pos)
                .ok_or_else(|| anyhow!("{} row {}: missing {name}", path.display(), i + 2))?;
            row.push(cell.to_string());
        }
        rows.push(row);
    }
    Ok(rows)
}

fn parse_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let raw = read_csv_rows(path, &["dataset", "horizon", "variant", "mse", "mae"])?;
    let mut rows = Vec::with_capacity(raw.len());
    for cells in raw {
        let bad = |what: &str| anyhow!("{}: bad {what} in row {cells:?}", path.display());
        rows.push(MetricsRow {
            dataset: cells[0].clone(),
            horizon: cells[1].parse().map_err(|_| bad("horizon"))?,
            variant: cells[2].parse().map_err(|_| bad("variant"))?,
            mse: cells[3].parse().map_err(|_| bad("mse"))?,
            mae: cells[4].parse().map_err(|_| bad("mae"))?,
        });
    }
    Ok(rows)
}

fn parse_stats(path: &Path) -> Result<Vec<StatsRow>> {
    let raw = read_csv_rows(
        path,
        &["dataset", "rows", "dim", "n_train", "n_val", "n_test", "forecastability", "cov_ratio"],
    )?;
    let mut rows = Vec::with_capacity(raw.len());
    for cells in raw {
        let bad = |what: &str| anyhow!("{}: bad {what} in row {cells:?}", path.display());
        rows.push(StatsRow {
            dataset: cells[0].clone(),
            rows: cells[1].parse().map_err(|_| bad("rows"))?,
            dim: cells[2].parse().map_err(|_| bad("dim"))?,
            n_train: cells[3].parse().map_err(|_| bad("n_train"))?,
            n_val: cells[4].parse().map_err(|_| bad("n_val"))?,
            n_test: cells[5].parse().map_err(|_| bad("n_test"))?,
            forecastability: cells[6].parse().map_err(|_| bad("forecastability"))?,
            cov_ratio: cells[7].parse().map_err(|_| bad("cov_ratio"))?,
        });
    }
    Ok(rows)
}

/// Renders `report.md` and `scatter.csv` under `out` from whichever of
/// `stats.csv`, `metrics.csv`, and `ablation.csv` exist in `results`.
pub fn cmd_report(results: &Path, out: &Path) -> Result<()> {
    let stats_path = results.join("stats.csv");
    let metrics_path = results.join("metrics.csv");
    let ablation_path = results.join("ablation.csv");
    if !stats_path.is_file() && !metrics_path.is_file() && !ablation_path.is_file() {
        return Err(usage_err(format!(
            "nothing to report: none of {}, {}, {} exist",
            stats_path.display(),
            metrics_path.display(),
            ablation_path.display()
        )));
    }
    let mut inputs = ReportInputs::default();
    if stats_path.is_file() {
        inputs.stats = parse_stats(&stats_path)?;
    }
    if metrics_path.is_file() {
        inputs.metrics = parse_metrics(&metrics_path)?;
    }
    if ablation_path.is_file() {
        inputs.ablation = parse_metrics(&ablation_path)?;
    }

    let md = report::render_markdown(&inputs);
    csvio::write_file(&out.join("report.md"), |w| {
        w.write_all(md.as_bytes())?;
        Ok(())
    })?;
    let rows = report::scatter_rows(&inputs);
    csvio::write_file(&out.join("scatter.csv"), |w| {
        writeln!(w, "dataset,cov_ratio,delta_mse_no_time,delta_mse_no_freq")?;
        for r in &rows {
            writeln!(
                w,
                "{},{:.6},{:.6},{:.6}",
                r.dataset, r.cov_ratio, r.delta_mse_no_time, r.delta_mse_no_freq
            )?;
        }
        Ok(())
    })?;

    let cov: Vec<f64> = rows.iter().map(|r| r.cov_ratio).collect();
    let dnt: Vec<f64> = rows.iter().map(|r| r.delta_mse_no_time).collect();
    let dnf: Vec<f64> = rows.iter().map(|r| r.delta_mse_no_freq).collect();
    println!(
        "report: {} diagnostics rows, {} metric rows, {} ablation rows",
        inputs.stats.len(),
        inputs.metrics.len(),
        inputs.ablation.len()
    );
    let c_nt = report::pearson(&cov, &dnt);
    let c_nf = report::pearson(&cov, &dnf);
    println!(
        "corr(cov_ratio, delta_no_time) = {c_nt:.3} (expected negative: {})",
        if c_nt < 0.0 { "yes" } else { "NO" }
    );
    println!(
        "corr(cov_ratio, delta_no_freq) = {c_nf:.3} (expected positive: {})",
        if c_nf > 0.0 { "yes" } else { "NO" }
    );
    println!("wrote report.md and scatter.csv to {}", out.display());
    Ok(())
}

/// Picks exactly one dataset out of the repeatable `--dataset` flag.
pub fn single_dataset<'a>(specs: &'a [String], command: &str) -> Result<&'a str> {
    match specs {
        [one] => Ok(one),
        [] => Err(usage_err(format!("{command} needs --dataset"))),
        _ => Err(usage_err(format!("{command} takes exactly one --dataset"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(cfg: &mut RunConfig, train: usize, val: usize, test: usize) {
        cfg.n_train = AutoUsize::Fixed(train);
        cfg.n_val = AutoUsize::Fixed(val);
        cfg.n_test = AutoUsize::Fixed(test);
    }

    #[test]
    fn split_spec_prefers_explicit_counts() {
        let mut cfg = RunConfig::default();
        fixed(&mut cfg, 70, 10, 20);
        let spec = split_spec_for(&cfg, "ETTh1", 12345).unwrap();
        assert_eq!(spec, SplitSpec { n_train: 70, n_val: 10, n_test: 20 });
    }

    #[test]
    fn split_spec_uses_benchmark_counts_for_known_stems() {
        let cfg = RunConfig::default();
        let spec = split_spec_for(&cfg, "ETTh1", 20000).unwrap();
        assert_eq!(spec.n_train, 8545);
    }

    #[test]
    fn split_spec_rejects_partial_overrides() {
        let cfg = RunConfig {
            n_train: AutoUsize::Fixed(70),
            ..RunConfig::default()
        };
        let err = split_spec_for(&cfg, "x", 100).unwrap_err();
        assert!(err.is::<UsageError>());
    }

    #[test]
    fn single_dataset_enforces_arity() {
        let none: Vec<String> = vec![];
        assert!(single_dataset(&none, "train").is_err());
        let two = vec!["a".to_string(), "b".to_string()];
        assert!(single_dataset(&two, "train").is_err());
        let one = vec!["a".to_string()];
        assert_eq!(single_dataset(&one, "train").unwrap(), "a");
    }

    #[test]
    fn worker_count_defaults_to_one() {
        // The variable is unset in test runs unless a caller exports it.
        if std::env::var("SDMIXER_THREADS").is_err() {
            assert_eq!(worker_count(), 1);
        }
    }

    #[test]
    fn epoch_lines_are_tab_separated() {
        let line = epoch_line(&EpochStats {
            epoch: 3,
            train_mse: 0.5,
            val_mse: 0.25,
            seconds: 1.23456,
        });
        assert_eq!(line, "3\t0.5\t0.25\t1.235");
    }
}

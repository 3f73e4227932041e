//! Acceptance criteria, one test per criterion, each printing a single
//! summary line (visible with `--nocapture`).
//!
//! Criteria 6 to 8 need the public benchmark CSV files, which are not
//! bundled. Those tests are `#[ignore]` with the file to supply named in
//! the ignore reason; run them with `--include-ignored` once the files are
//! in `data/` at the workspace root or under `$SDMIXER_DATA`. If invoked
//! without the files they print a SKIP line naming what is missing.
//!
//! Oracles here are deliberately naive reimplementations: a quadratic DFT,
//! a scan-based top-k selection, and byte comparisons of rerun outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use sdmixer_cli::csvio;
use sdmixer_cli::report::{pearson, reference_scatter};
use sdmixer_core::data::{self, WindowDataset};
use sdmixer_core::decompose::{decompose, DecomposeConfig};
use sdmixer_core::gradcheck::{check_model, GradCheckConfig};
use sdmixer_core::model::{
    cross_mixer_with_attention, forward, temporal_flow, CrossParams, ModelDims, ModelParams,
    TemporalParams, Variant,
};
use sdmixer_core::rng::Rng;
use sdmixer_core::train::{evaluate, persistence_baseline, train, TrainConfig, WallClock};
use sdmixer_core::{fft, ops, Tensor};

fn random_vec(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(lo, hi)).collect()
}

fn random_tensor(rng: &mut Rng, shape: Vec<usize>) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, random_vec(rng, n, -1.0, 1.0)).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Quadratic-time DFT, bins 0..=L/2. Independent of the fft module.
fn naive_dft(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let l = x.len();
    let bins = l / 2 + 1;
    let mut re = vec![0.0; bins];
    let mut im = vec![0.0; bins];
    for k in 0..bins {
        for (n, &v) in x.iter().enumerate() {
            let angle = -2.0 * std::f64::consts::PI * (k * n) as f64 / l as f64;
            re[k] += v * angle.cos();
            im[k] += v * angle.sin();
        }
    }
    (re, im)
}

/// Top-k by repeated scanning: largest value first, ties broken by the
/// lower index, result sorted ascending like the library promises.
/// Independent of the ops module.
fn scan_topk(values: &[f64], k: usize) -> Vec<usize> {
    let mut taken = vec![false; values.len()];
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for i in 0..values.len() {
            if taken[i] {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) if values[i] > values[b] => Some(i),
                Some(b) => Some(b),
            };
        }
        taken[best.expect("k <= len")] = true;
    }
    (0..values.len()).filter(|&i| taken[i]).collect()
}

#[test]
fn criterion_1_spectral_and_topk_oracles() {
    let started = Instant::now();
    let mut rng = Rng::from_seed(101);

    let mut worst_dft = 0.0f64;
    let mut worst_round = 0.0f64;
    for l in [8usize, 16, 64] {
        for _ in 0..20 {
            let x = random_vec(&mut rng, l, -3.0, 3.0);
            let got = fft::rfft(&x);
            let (want_re, want_im) = naive_dft(&x);
            let dre = max_abs_diff(got.re(), &want_re);
            let dim = max_abs_diff(got.im(), &want_im);
            worst_dft = worst_dft.max(dre).max(dim);
            assert!(dre < 1e-10 && dim < 1e-10, "L={l}: dft error {dre}/{dim}");

            let back = fft::irfft(&got, l).unwrap();
            let dr = max_abs_diff(back.data(), &x);
            worst_round = worst_round.max(dr);
            assert!(dr < 1e-9, "L={l}: round trip error {dr}");
        }
    }

    let mut checked = 0usize;
    for n in [1usize, 2, 5, 17, 64, 128] {
        for round in 0..10 {
            // Quantized values force ties; the coarser grid on even rounds
            // forces many of them.
            let grid = if round % 2 == 0 { 4.0 } else { 32.0 };
            let values: Vec<f64> = random_vec(&mut rng, n, -1.0, 1.0)
                .into_iter()
                .map(|v| (v * grid).round() / grid)
                .collect();
            for k in [1usize, n / 2, n] {
                if k == 0 {
                    continue;
                }
                let got = ops::topk_indices(&values, k).unwrap();
                let want = scan_topk(&values, k);
                assert_eq!(got, want, "n={n} k={k} values={values:?}");
                checked += 1;
            }
        }
    }

    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 10.0, "criterion 1 took {secs:.1}s, limit 10s");
    println!(
        "criterion 1: PASS - rfft within {worst_dft:.2e} of a naive DFT, round trips within \
         {worst_round:.2e}, {checked} top-k selections match a scan oracle ({secs:.2}s)"
    );
}

#[test]
fn criterion_2_gradients_match_finite_differences() {
    let started = Instant::now();
    let cfg = GradCheckConfig::default();
    let mut lines = Vec::new();
    for variant in Variant::ALL {
        let report = check_model(variant, &cfg).unwrap();
        let worst = report
            .entries
            .iter()
            .map(|e| e.max_rel_err)
            .fold(0.0, f64::max);
        for entry in &report.entries {
            assert!(
                entry.passed,
                "{variant} {}: rel err {} above {}",
                entry.name, entry.max_rel_err, cfg.tolerance
            );
        }
        lines.push(format!("{variant} {worst:.2e}"));
    }
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 120.0, "criterion 2 took {secs:.1}s, limit 120s");
    println!(
        "criterion 2: PASS - worst relative gradient errors {} (tolerance {:.0e}, {secs:.2}s)",
        lines.join(", "),
        cfg.tolerance
    );
}

#[test]
fn criterion_3_decomposition_properties() {
    let mut rng = Rng::from_seed(303);
    let mut cases = 0usize;
    while cases < 100 {
        let b = 1 + (rng.next_u64() % 3) as usize;
        let l = [8usize, 12, 16, 24, 32][(rng.next_u64() % 5) as usize];
        let c = 1 + (rng.next_u64() % 3) as usize;
        let k = 1 + (rng.next_u64() as usize) % fft::bin_count(l);
        let cfg = DecomposeConfig { k };
        let x = random_tensor(&mut rng, vec![b, l, c]);

        let done = decompose(&x, &cfg).unwrap();
        let mut recon = done.season.clone();
        for (r, t) in recon.data_mut().iter_mut().zip(done.trend.data()) {
            *r += t;
        }
        let dr = max_abs_diff(recon.data(), x.data());
        assert!(dr < 1e-12, "reconstruction error {dr} (B={b} L={l} C={c} k={k})");

        let again = decompose(&done.season, &cfg).unwrap();
        for bi in 0..b {
            for ci in 0..c {
                assert_eq!(
                    done.selected(bi, ci),
                    again.selected(bi, ci),
                    "support changed under idempotence (B={b} L={l} C={c} k={k})"
                );
            }
        }
        let di = max_abs_diff(again.season.data(), done.season.data());
        assert!(di < 1e-9, "idempotence error {di} (B={b} L={l} C={c} k={k})");

        for scale in [2.5f64, -1.75] {
            let scaled = Tensor::new(
                x.shape().to_vec(),
                x.data().iter().map(|v| v * scale).collect(),
            )
            .unwrap();
            let done_s = decompose(&scaled, &cfg).unwrap();
            for bi in 0..b {
                for ci in 0..c {
                    assert_eq!(
                        done.selected(bi, ci),
                        done_s.selected(bi, ci),
                        "support changed under scaling (B={b} L={l} C={c} k={k})"
                    );
                }
            }
            let want: Vec<f64> = done.season.data().iter().map(|v| v * scale).collect();
            let ds = max_abs_diff(done_s.season.data(), &want);
            assert!(ds < 1e-9, "scale equivariance error {ds}");
        }
        cases += 1;
    }
    println!(
        "criterion 3: PASS - {cases} random inputs reconstruct within 1e-12 with idempotent, \
         scale-equivariant season support"
    );
}

#[test]
fn criterion_4_sparsity_census() {
    let mut rng = Rng::from_seed(404);
    let mut gate_rows = 0usize;
    let mut attn_rows = 0usize;
    for _ in 0..100 {
        let b = 1 + (rng.next_u64() % 2) as usize;
        let l = 4 + (rng.next_u64() % 13) as usize;
        let c = 2 + (rng.next_u64() % 5) as usize;
        let d = 2 * c;
        let alpha = rng.uniform(0.05, 1.0);

        // Zero second MLP layer makes the flow output the gated tensor
        // itself, exposing the census target directly.
        let temporal = TemporalParams {
            w_t: random_tensor(&mut rng, vec![c, c]),
            mlp_w1: random_tensor(&mut rng, vec![c, d]),
            mlp_b1: random_tensor(&mut rng, vec![d]),
            mlp_w2: Tensor::zeros(vec![d, c]),
            mlp_b2: Tensor::zeros(vec![c]),
            alpha,
        };
        let trend = random_tensor(&mut rng, vec![b, l, c]);
        let gated = temporal_flow(&trend, &temporal).unwrap();
        let keep = temporal.gate_width(c);
        for bi in 0..b {
            for t in 0..l {
                let row: Vec<f64> = (0..c).map(|ci| gated.at(&[bi, t, ci])).collect();
                let nonzero = row.iter().filter(|v| **v != 0.0).count();
                assert_eq!(
                    nonzero, keep,
                    "gate kept {nonzero} of {c} channels, want {keep} (alpha {alpha:.3})"
                );
                gate_rows += 1;
            }
        }

        let k_attn = 1 + (rng.next_u64() as usize) % l;
        let cross = CrossParams {
            w_q: random_tensor(&mut rng, vec![c, c]),
            w_k: random_tensor(&mut rng, vec![c, c]),
            w_v: random_tensor(&mut rng, vec![c, c]),
            gamma: random_tensor(&mut rng, vec![1]),
            k_attn,
        };
        let f_t = random_tensor(&mut rng, vec![b, l, c]);
        let f_f = random_tensor(&mut rng, vec![b, l, c]);
        let (_, attn) = cross_mixer_with_attention(&f_t, &f_f, &cross).unwrap();
        for bi in 0..b {
            for qi in 0..l {
                let row: Vec<f64> = (0..l).map(|ki| attn.at(&[bi, qi, ki])).collect();
                let nonzero = row.iter().filter(|v| **v != 0.0).count();
                assert!(
                    nonzero <= k_attn && nonzero >= 1,
                    "attention row keeps {nonzero} entries, cap {k_attn}"
                );
                let sum: f64 = row.iter().sum();
                assert!(sum <= 1.0 + 1e-12, "row mass {sum} exceeds 1 after masking");
                attn_rows += 1;
            }
        }
    }
    println!(
        "criterion 4: PASS - {gate_rows} gate rows kept exactly ceil(alpha*C) channels, \
         {attn_rows} attention rows within their top-k budget and unit mass"
    );
}

#[test]
fn criterion_5_identity_initialization() {
    let mut rng = Rng::from_seed(505);
    let dims = ModelDims {
        lookback: 24,
        horizon: 24,
        channels: 3,
        d_hidden: 6,
    };
    let k_freq = 4;
    let x = random_tensor(&mut rng, vec![2, 24, 3]);
    let done = decompose(&x, &DecomposeConfig { k: k_freq }).unwrap();

    // Both flows pass their input through and the gate suppresses the
    // cross term, so the unfused variant returns season + trend = x and
    // the gated variants return the trend plane alone.
    let mut worst_x = 0.0f64;
    let mut worst_trend = 0.0f64;
    for variant in Variant::ALL {
        let params = ModelParams::identity_init(dims, variant, k_freq).unwrap();
        let y = forward(&x, &params).unwrap();
        let (want, worst): (&[f64], &mut f64) = if variant == Variant::NoCross {
            (x.data(), &mut worst_x)
        } else {
            (done.trend.data(), &mut worst_trend)
        };
        let d = max_abs_diff(y.data(), want);
        *worst = worst.max(d);
        assert!(d < 1e-6, "{variant}: identity drift {d}");
    }
    println!(
        "criterion 5: PASS - identity-initialized no-cross reproduces its input within \
         {worst_x:.2e}; gated variants reproduce the trend within {worst_trend:.2e}"
    );
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .expect("workspace root exists")
}

/// Finds a benchmark CSV under `$SDMIXER_DATA` or `<workspace>/data`.
fn find_dataset(stem: &str) -> Option<PathBuf> {
    if let Ok(root) = std::env::var("SDMIXER_DATA") {
        let p = Path::new(&root).join(format!("{stem}.csv"));
        if p.is_file() {
            return Some(p);
        }
    }
    let p = workspace_root().join("data").join(format!("{stem}.csv"));
    p.is_file().then_some(p)
}

fn skip_line(criterion: usize, stems: &[&str]) -> bool {
    let missing: Vec<&str> = stems
        .iter()
        .copied()
        .filter(|s| find_dataset(s).is_none())
        .collect();
    if missing.is_empty() {
        return false;
    }
    let names: Vec<String> = missing.iter().map(|s| format!("{s}.csv")).collect();
    println!(
        "criterion {criterion}: SKIP - supply {} in {} or $SDMIXER_DATA",
        names.join(", "),
        workspace_root().join("data").display()
    );
    true
}

/// Benchmark pipeline: published splits, lookback-96 windows, training-split
/// normalization.
fn benchmark_windows(
    stem: &str,
    horizon: usize,
) -> (WindowDataset, WindowDataset, WindowDataset) {
    let path = find_dataset(stem).expect("checked by the caller");
    let series = csvio::read_series(&path).unwrap();
    let spec = sdmixer_cli::datasets::benchmark_split(stem).expect("known benchmark stem");
    let lookback = 96;
    let ranges = data::split(series.rows(), &spec, lookback).unwrap();
    let stats = data::fit_normalizer(&data::slice_rows(&series.values, ranges.train.clone()).unwrap()).unwrap();
    let normalized = stats.apply(&series.values).unwrap();
    let cut = |r: core::ops::Range<usize>| {
        WindowDataset::new(data::slice_rows(&normalized, r).unwrap(), lookback, horizon).unwrap()
    };
    (cut(ranges.train), cut(ranges.val), cut(ranges.test))
}

fn benchmark_train_config(horizon: usize) -> TrainConfig {
    // TrainConfig::new defaults: batch 32, lr 1e-3, 10 epochs, patience 3,
    // grad clip 5, k_freq 8, alpha 0.5, k_attn 24, seed 42.
    TrainConfig::new(96, horizon)
}

#[test]
#[ignore = "needs data/ETTh1.csv at the workspace root or under $SDMIXER_DATA"]
fn criterion_6_etth1_horizon_96_benchmark() {
    if skip_line(6, &["ETTh1"]) {
        return;
    }
    let started = Instant::now();
    let (train_set, val_set, test_set) = benchmark_windows("ETTh1", 96);
    let cfg = benchmark_train_config(96);
    let mut clock = WallClock::new();
    let (params, report) = train(&train_set, &val_set, &cfg, &mut clock, &mut |_| {}).unwrap();
    let metrics = evaluate(&params, &test_set, cfg.batch_size).unwrap();
    let baseline = persistence_baseline(&test_set).unwrap();
    let secs = started.elapsed().as_secs_f64();

    assert!(secs < 1800.0, "criterion 6 took {secs:.0}s, limit 1800s");
    assert!(
        metrics.mse <= 0.43,
        "ETTh1-96 test MSE {:.4} above the 0.43 ceiling",
        metrics.mse
    );
    assert!(
        metrics.mse < baseline.mse,
        "model MSE {:.4} does not beat persistence {:.4}",
        metrics.mse,
        baseline.mse
    );
    println!(
        "criterion 6: PASS - ETTh1-96 test MSE {:.4} (ceiling 0.43, persistence {:.4}, best \
         epoch {}, {secs:.0}s)",
        metrics.mse, baseline.mse, report.best_epoch
    );
}

#[test]
#[ignore = "needs data/ETTh2.csv and data/ETTm2.csv at the workspace root or under $SDMIXER_DATA"]
fn criterion_7_ablation_ordering() {
    if skip_line(7, &["ETTh2", "ETTm2"]) {
        return;
    }
    let out_dir = workspace_root().join("target/acceptance");
    std::fs::create_dir_all(&out_dir).unwrap();
    let mut csv = String::from("dataset,horizon,variant,mse,mae\n");
    let mut summaries = Vec::new();
    for stem in ["ETTh2", "ETTm2"] {
        let (train_set, val_set, test_set) = benchmark_windows(stem, 96);
        let cfg = benchmark_train_config(96);
        let mut clock = WallClock::new();
        let rows = sdmixer_core::train::run_ablation_suite(
            &train_set,
            &val_set,
            &test_set,
            &cfg,
            &mut clock,
            &mut |_, _| {},
        )
        .unwrap();
        let full = rows
            .iter()
            .find(|r| r.variant == Variant::Full)
            .unwrap()
            .mse;
        for row in &rows {
            csv.push_str(&format!(
                "{stem},96,{},{:.6},{:.6}\n",
                row.variant, row.mse, row.mae
            ));
            assert!(
                full <= row.mse + 0.01,
                "{stem}: full MSE {full:.4} trails {} {:.4} by more than 0.01",
                row.variant,
                row.mse
            );
        }
        summaries.push(format!("{stem} full {full:.4}"));
    }
    let csv_path = out_dir.join("ablation.csv");
    std::fs::write(&csv_path, csv).unwrap();
    println!(
        "criterion 7: PASS - full variant within 0.01 of every ablation ({}); table at {}",
        summaries.join("; "),
        csv_path.display()
    );
}

#[test]
fn criterion_8_diagnostics_and_scatter_signs() {
    // The reference half is dataset-free: the published constants must
    // reproduce the expected correlation signs.
    let rows = reference_scatter();
    let cov: Vec<f64> = rows.iter().map(|r| r.cov_ratio).collect();
    let dnt: Vec<f64> = rows.iter().map(|r| r.delta_mse_no_time).collect();
    let dnf: Vec<f64> = rows.iter().map(|r| r.delta_mse_no_freq).collect();
    let c_nt = pearson(&cov, &dnt);
    let c_nf = pearson(&cov, &dnf);
    assert!(c_nt < 0.0, "reference corr(cov, no-time delta) {c_nt} not negative");
    assert!(c_nf > 0.0, "reference corr(cov, no-freq delta) {c_nf} not positive");

    let stems = ["ETTh1", "electricity", "exchange_rate"];
    let missing: Vec<&str> = stems
        .iter()
        .copied()
        .filter(|s| find_dataset(s).is_none())
        .collect();
    if !missing.is_empty() {
        let names: Vec<String> = missing.iter().map(|s| format!("{s}.csv")).collect();
        println!(
            "criterion 8: SKIP (measured diagnostics) - reference sign check PASS \
             (corr {c_nt:.3}/{c_nf:.3}); supply {} in {} or $SDMIXER_DATA for the rest",
            names.join(", "),
            workspace_root().join("data").display()
        );
        return;
    }

    let diagnose = |stem: &str| {
        let series = csvio::read_series(&find_dataset(stem).unwrap()).unwrap();
        data::diagnose(&series.values, 25).unwrap()
    };
    let etth1 = diagnose("ETTh1");
    let ecl = diagnose("electricity");
    let exchange = diagnose("exchange_rate");
    assert!(
        (etth1.forecastability - 0.38).abs() <= 0.10,
        "ETTh1 forecastability {:.3} outside 0.38 +/- 0.10",
        etth1.forecastability
    );
    assert!(
        (ecl.forecastability - 0.77).abs() <= 0.10,
        "electricity forecastability {:.3} outside 0.77 +/- 0.10",
        ecl.forecastability
    );
    assert!(ecl.cov_ratio > 1.0, "electricity cov ratio {:.3} not above 1", ecl.cov_ratio);
    assert!(
        exchange.cov_ratio < 0.01,
        "exchange cov ratio {:.5} not below 0.01",
        exchange.cov_ratio
    );
    println!(
        "criterion 8: PASS - forecastability ETTh1 {:.3}, electricity {:.3}; cov ratios \
         electricity {:.2}, exchange {:.5}; reference corr {c_nt:.3}/{c_nf:.3}",
        etth1.forecastability, ecl.forecastability, ecl.cov_ratio, exchange.cov_ratio
    );
}

fn mask_seconds(log: &str) -> String {
    log.lines()
        .map(|line| {
            let mut fields: Vec<&str> = line.split('\t').collect();
            assert_eq!(fields.len(), 4, "log line has four fields: {line}");
            fields[3] = "-";
            fields.join("\t")
        })
        .collect::<Vec<String>>()
        .join("\n")
}

#[test]
fn criterion_9_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let tau = std::f64::consts::TAU;
    let mut csv = String::from("a,b\n");
    for t in 0..260 {
        let t = t as f64;
        csv.push_str(&format!(
            "{},{}\n",
            (tau * t / 12.0).sin() + 0.02 * t,
            (tau * t / 30.0).cos() - 0.01 * t
        ));
    }
    let data = dir.path().join("series.csv");
    std::fs::write(&data, csv).unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(
        &conf,
        "lookback = 24\nhorizon = 6\nepochs = 3\nbatch_size = 16\nk_freq = 4\nk_attn = 3\n",
    )
    .unwrap();

    for out in ["one", "two"] {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_sdmixer"))
            .current_dir(dir.path())
            .args([
                "train",
                "--dataset",
                data.to_str().unwrap(),
                "--config",
                conf.to_str().unwrap(),
                "--out",
                out,
            ])
            .status()
            .unwrap();
        assert!(status.success());
    }

    for file in ["checkpoint.sdmx", "metrics.csv", "config.txt"] {
        let a = std::fs::read(dir.path().join("one").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("two").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    let a = std::fs::read_to_string(dir.path().join("one/train.log")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("two/train.log")).unwrap();
    assert_eq!(a.lines().count(), 3);
    assert_eq!(
        mask_seconds(&a),
        mask_seconds(&b),
        "train.log differs beyond the wall-clock column"
    );
    println!(
        "criterion 9: PASS - repeated training runs agree byte for byte on checkpoint, metrics, \
         and config; logs agree outside the wall-clock column"
    );
}

#[test]
fn criteria_6_and_7_announce_missing_datasets() {
    // The gated criteria must tell the operator exactly what to supply.
    // This check exercises the skip path so it cannot rot, and in default
    // runs it prints the actionable line the ignored tests would print.
    for (criterion, stems) in [(6usize, &["ETTh1"][..]), (7, &["ETTh2", "ETTm2"][..])] {
        let missing = stems.iter().any(|s| find_dataset(s).is_none());
        assert_eq!(skip_line(criterion, stems), missing);
    }
}

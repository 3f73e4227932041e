//! Report rendering: reference benchmark tables, merged measured results,
//! and the season/trend-contribution scatter data.
//!
//! The reference constants below are the published benchmark numbers this
//! engine is evaluated against. Measured rows from a results directory are
//! rendered alongside them; they never overwrite the references in the
//! tables, but measured diagnostics and ablation deltas do take precedence
//! over reference values in the emitted scatter rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sdmixer_core::model::Variant;

/// One benchmark dataset's published description.
pub struct RefDataset {
    /// File stem used on disk and in emitted CSVs.
    pub key: &'static str,
    /// Display name in the diagnostics table.
    pub label: &'static str,
    /// Short name in the ablation table.
    pub short: &'static str,
    pub dim: usize,
    pub split: (usize, usize, usize),
    pub forecastability: f64,
    pub cov_ratio: f64,
}

pub const REF_DATASETS: [RefDataset; 7] = [
    RefDataset { key: "ETTm1", label: "ETTm1", short: "ETTm1", dim: 7, split: (34465, 11521, 11521), forecastability: 0.46, cov_ratio: 0.073992 },
    RefDataset { key: "ETTm2", label: "ETTm2", short: "ETTm2", dim: 7, split: (34465, 11521, 11521), forecastability: 0.55, cov_ratio: 0.039469 },
    RefDataset { key: "ETTh1", label: "ETTh1", short: "ETTh1", dim: 7, split: (8545, 2881, 2881), forecastability: 0.38, cov_ratio: 0.490909 },
    RefDataset { key: "ETTh2", label: "ETTh2", short: "ETTh2", dim: 7, split: (8545, 2881, 2881), forecastability: 0.45, cov_ratio: 0.136543 },
    RefDataset { key: "electricity", label: "Electricity", short: "ECL", dim: 321, split: (18317, 2633, 5261), forecastability: 0.77, cov_ratio: 11.836820 },
    RefDataset { key: "exchange_rate", label: "Exchange", short: "Exchange", dim: 8, split: (5312, 760, 1516), forecastability: 0.42, cov_ratio: 0.001885 },
    RefDataset { key: "weather", label: "Weather", short: "Weather", dim: 21, split: (36792, 5271, 10540), forecastability: 0.75, cov_ratio: 0.005176 },
];

pub fn ref_dataset(key: &str) -> Option<&'static RefDataset> {
    REF_DATASETS.iter().find(|d| d.key == key)
}

/// Models in the per-horizon benchmark table, (MSE, MAE) cell order.
pub const BENCH_MODELS: [&str; 5] = [
    "SDMixer",
    "WPMixer",
    "TimeMixer",
    "iTransformer",
    "PatchTST",
];

pub struct RefBenchRow {
    pub key: &'static str,
    /// "96" | "192" | "336" | "720" | "avg"
    pub horizon: &'static str,
    pub cells: [(f64, f64); 5],
}

// A few transcribed errors happen to sit near well-known constants
// (0.318 is close to 1/pi); they are measurements, not approximations.
#[allow(clippy::approx_constant)]
pub const REF_BENCH: [RefBenchRow; 35] = [
    RefBenchRow { key: "weather", horizon: "96", cells: [(0.168, 0.221), (0.163, 0.205), (0.163, 0.209), (0.174, 0.214), (0.186, 0.227)] },
    RefBenchRow { key: "weather", horizon: "192", cells: [(0.210, 0.256), (0.208, 0.245), (0.208, 0.250), (0.221, 0.254), (0.234, 0.265)] },
    RefBenchRow { key: "weather", horizon: "336", cells: [(0.256, 0.291), (0.263, 0.287), (0.259, 0.287), (0.278, 0.296), (0.284, 0.301)] },
    RefBenchRow { key: "weather", horizon: "720", cells: [(0.319, 0.336), (0.339, 0.339), (0.339, 0.341), (0.358, 0.347), (0.356, 0.349)] },
    RefBenchRow { key: "weather", horizon: "avg", cells: [(0.238, 0.276), (0.243, 0.269), (0.240, 0.271), (0.258, 0.278), (0.265, 0.285)] },
    RefBenchRow { key: "electricity", horizon: "96", cells: [(0.137, 0.234), (0.150, 0.241), (0.153, 0.247), (0.148, 0.240), (0.190, 0.296)] },
    RefBenchRow { key: "electricity", horizon: "192", cells: [(0.152, 0.249), (0.163, 0.253), (0.166, 0.256), (0.162, 0.253), (0.199, 0.304)] },
    RefBenchRow { key: "electricity", horizon: "336", cells: [(0.169, 0.266), (0.180, 0.270), (0.185, 0.277), (0.178, 0.269), (0.217, 0.319)] },
    RefBenchRow { key: "electricity", horizon: "720", cells: [(0.209, 0.300), (0.219, 0.305), (0.225, 0.310), (0.225, 0.317), (0.258, 0.352)] },
    RefBenchRow { key: "electricity", horizon: "avg", cells: [(0.167, 0.262), (0.178, 0.267), (0.182, 0.272), (0.178, 0.270), (0.216, 0.318)] },
    RefBenchRow { key: "exchange_rate", horizon: "96", cells: [(0.082, 0.200), (0.093, 0.219), (0.090, 0.235), (0.086, 0.206), (0.088, 0.205)] },
    RefBenchRow { key: "exchange_rate", horizon: "192", cells: [(0.174, 0.296), (0.199, 0.317), (0.187, 0.343), (0.177, 0.299), (0.176, 0.299)] },
    RefBenchRow { key: "exchange_rate", horizon: "336", cells: [(0.322, 0.410), (0.378, 0.440), (0.353, 0.473), (0.331, 0.417), (0.301, 0.397)] },
    RefBenchRow { key: "exchange_rate", horizon: "720", cells: [(0.840, 0.691), (2.030, 0.978), (0.934, 0.761), (0.847, 0.691), (0.901, 0.714)] },
    RefBenchRow { key: "exchange_rate", horizon: "avg", cells: [(0.355, 0.399), (0.675, 0.489), (0.391, 0.453), (0.360, 0.403), (0.367, 0.404)] },
    RefBenchRow { key: "ETTh1", horizon: "96", cells: [(0.371, 0.398), (0.371, 0.393), (0.375, 0.400), (0.386, 0.405), (0.460, 0.447)] },
    RefBenchRow { key: "ETTh1", horizon: "192", cells: [(0.413, 0.426), (0.425, 0.417), (0.429, 0.421), (0.441, 0.512), (0.477, 0.429)] },
    RefBenchRow { key: "ETTh1", horizon: "336", cells: [(0.443, 0.444), (0.465, 0.434), (0.484, 0.458), (0.487, 0.458), (0.546, 0.496)] },
    RefBenchRow { key: "ETTh1", horizon: "720", cells: [(0.448, 0.485), (0.453, 0.448), (0.498, 0.482), (0.503, 0.491), (0.544, 0.517)] },
    RefBenchRow { key: "ETTh1", horizon: "avg", cells: [(0.416, 0.438), (0.428, 0.423), (0.447, 0.440), (0.454, 0.447), (0.516, 0.484)] },
    RefBenchRow { key: "ETTh2", horizon: "96", cells: [(0.269, 0.335), (0.285, 0.337), (0.289, 0.341), (0.297, 0.349), (0.308, 0.355)] },
    RefBenchRow { key: "ETTh2", horizon: "192", cells: [(0.333, 0.379), (0.364, 0.392), (0.372, 0.392), (0.380, 0.400), (0.393, 0.405)] },
    RefBenchRow { key: "ETTh2", horizon: "336", cells: [(0.360, 0.406), (0.378, 0.407), (0.386, 0.414), (0.428, 0.432), (0.427, 0.436)] },
    RefBenchRow { key: "ETTh2", horizon: "720", cells: [(0.412, 0.445), (0.418, 0.436), (0.412, 0.434), (0.427, 0.445), (0.436, 0.450)] },
    RefBenchRow { key: "ETTh2", horizon: "avg", cells: [(0.343, 0.391), (0.361, 0.393), (0.364, 0.395), (0.383, 0.407), (0.391, 0.411)] },
    RefBenchRow { key: "ETTm1", horizon: "96", cells: [(0.317, 0.359), (0.316, 0.351), (0.320, 0.357), (0.334, 0.368), (0.352, 0.374)] },
    RefBenchRow { key: "ETTm1", horizon: "192", cells: [(0.335, 0.366), (0.358, 0.376), (0.361, 0.381), (0.390, 0.393), (0.374, 0.387)] },
    RefBenchRow { key: "ETTm1", horizon: "336", cells: [(0.365, 0.384), (0.387, 0.397), (0.390, 0.404), (0.426, 0.420), (0.421, 0.414)] },
    RefBenchRow { key: "ETTm1", horizon: "720", cells: [(0.413, 0.410), (0.445, 0.430), (0.454, 0.441), (0.491, 0.459), (0.462, 0.449)] },
    RefBenchRow { key: "ETTm1", horizon: "avg", cells: [(0.357, 0.379), (0.377, 0.389), (0.381, 0.395), (0.407, 0.410), (0.406, 0.407)] },
    RefBenchRow { key: "ETTm2", horizon: "96", cells: [(0.161, 0.252), (0.171, 0.252), (0.175, 0.258), (0.180, 0.264), (0.183, 0.270)] },
    RefBenchRow { key: "ETTm2", horizon: "192", cells: [(0.216, 0.291), (0.234, 0.295), (0.237, 0.299), (0.250, 0.309), (0.255, 0.314)] },
    RefBenchRow { key: "ETTm2", horizon: "336", cells: [(0.268, 0.327), (0.290, 0.333), (0.298, 0.340), (0.311, 0.348), (0.309, 0.347)] },
    RefBenchRow { key: "ETTm2", horizon: "720", cells: [(0.351, 0.384), (0.387, 0.390), (0.391, 0.396), (0.412, 0.407), (0.412, 0.404)] },
    RefBenchRow { key: "ETTm2", horizon: "avg", cells: [(0.249, 0.313), (0.270, 0.317), (0.275, 0.323), (0.288, 0.332), (0.290, 0.334)] },
];

/// Models in the averaged wide-baseline table, (MSE, MAE) cell order.
pub const AVG_MODELS: [&str; 6] = [
    "SDMixer",
    "TimesNet",
    "DLinear",
    "SCINet",
    "FEDformer",
    "Autoformer",
];

pub struct RefAvgRow {
    pub key: &'static str,
    pub cells: [(f64, f64); 6],
}

pub const REF_AVG: [RefAvgRow; 7] = [
    RefAvgRow { key: "weather", cells: [(0.238, 0.276), (0.259, 0.287), (0.265, 0.315), (0.292, 0.363), (0.309, 0.360), (0.338, 0.382)] },
    RefAvgRow { key: "electricity", cells: [(0.167, 0.262), (0.192, 0.304), (0.225, 0.319), (0.268, 0.365), (0.214, 0.327), (0.227, 0.338)] },
    RefAvgRow { key: "exchange_rate", cells: [(0.355, 0.399), (0.416, 0.443), (0.354, 0.414), (0.750, 0.626), (0.519, 0.429), (0.613, 0.539)] },
    RefAvgRow { key: "ETTh1", cells: [(0.426, 0.438), (0.458, 0.450), (0.461, 0.457), (0.747, 0.647), (0.498, 0.484), (0.496, 0.487)] },
    RefAvgRow { key: "ETTh2", cells: [(0.343, 0.391), (0.414, 0.427), (0.563, 0.519), (0.954, 0.723), (0.437, 0.449), (0.450, 0.459)] },
    RefAvgRow { key: "ETTm1", cells: [(0.357, 0.379), (0.400, 0.406), (0.404, 0.408), (0.485, 0.481), (0.448, 0.452), (0.588, 0.517)] },
    RefAvgRow { key: "ETTm2", cells: [(0.249, 0.313), (0.291, 0.333), (0.354, 0.402), (0.954, 0.723), (0.305, 0.349), (0.327, 0.371)] },
];

/// Reference ablation errors, averaged over the four published horizons.
pub struct RefAblationRow {
    pub key: &'static str,
    pub full: (f64, f64),
    pub no_cross: (f64, f64),
    pub no_time: (f64, f64),
    pub no_freq: (f64, f64),
}

impl RefAblationRow {
    pub fn cell(&self, variant: Variant) -> (f64, f64) {
        match variant {
            Variant::Full => self.full,
            Variant::NoCross => self.no_cross,
            Variant::NoTime => self.no_time,
            Variant::NoFreq => self.no_freq,
        }
    }
}

pub const REF_ABLATION: [RefAblationRow; 7] = [
    RefAblationRow { key: "electricity", full: (0.167, 0.262), no_cross: (0.170, 0.271), no_time: (0.178, 0.279), no_freq: (0.193, 0.301) },
    RefAblationRow { key: "ETTh1", full: (0.426, 0.438), no_cross: (0.436, 0.448), no_time: (0.424, 0.440), no_freq: (0.469, 0.473) },
    RefAblationRow { key: "ETTh2", full: (0.343, 0.391), no_cross: (0.364, 0.421), no_time: (0.344, 0.395), no_freq: (0.367, 0.410) },
    RefAblationRow { key: "ETTm1", full: (0.357, 0.379), no_cross: (0.381, 0.384), no_time: (0.356, 0.383), no_freq: (0.374, 0.395) },
    RefAblationRow { key: "ETTm2", full: (0.249, 0.313), no_cross: (0.278, 0.359), no_time: (0.268, 0.329), no_freq: (0.258, 0.320) },
    RefAblationRow { key: "exchange_rate", full: (0.355, 0.399), no_cross: (0.375, 0.429), no_time: (0.408, 0.439), no_freq: (0.355, 0.400) },
    RefAblationRow { key: "weather", full: (0.238, 0.276), no_cross: (0.279, 0.338), no_time: (0.249, 0.287), no_freq: (0.239, 0.278) },
];

/// Published averages over the seven datasets, used as a transcription check.
#[allow(clippy::approx_constant)] // 0.318 is a transcribed error, not 1/pi
pub const REF_ABLATION_AVG: RefAblationRow = RefAblationRow {
    key: "AVG",
    full: (0.305, 0.351),
    no_cross: (0.326, 0.379),
    no_time: (0.318, 0.365),
    no_freq: (0.322, 0.368),
};

/// Pearson correlation coefficient; NaN when either side is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    cov / (vx.sqrt() * vy.sqrt())
}

/// One row of the contribution-vs-error scatter data.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterRow {
    pub dataset: String,
    pub cov_ratio: f64,
    pub delta_mse_no_time: f64,
    pub delta_mse_no_freq: f64,
}

/// Scatter rows derived purely from the reference tables.
pub fn reference_scatter() -> Vec<ScatterRow> {
    REF_ABLATION
        .iter()
        .map(|row| {
            let d = ref_dataset(row.key).expect("ablation keys are reference datasets");
            ScatterRow {
                dataset: row.key.to_string(),
                cov_ratio: d.cov_ratio,
                delta_mse_no_time: row.no_time.0 - row.full.0,
                delta_mse_no_freq: row.no_freq.0 - row.full.0,
            }
        })
        .collect()
}

/// A measured diagnostics row from `stats.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub dataset: String,
    pub rows: usize,
    pub dim: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub forecastability: f64,
    pub cov_ratio: f64,
}

/// A measured result row from `metrics.csv` or `ablation.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub dataset: String,
    pub horizon: usize,
    pub variant: Variant,
    pub mse: f64,
    pub mae: f64,
}

/// Everything a report render can draw on.
#[derive(Debug, Clone, Default)]
pub struct ReportInputs {
    pub stats: Vec<StatsRow>,
    pub metrics: Vec<MetricsRow>,
    pub ablation: Vec<MetricsRow>,
}

fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

/// Measured mean ablation (MSE, MAE) per dataset per variant, averaged over
/// whatever horizons were run.
fn measured_ablation_cells(
    ablation: &[MetricsRow],
) -> BTreeMap<String, BTreeMap<&'static str, (f64, f64)>> {
    let mut acc: BTreeMap<String, BTreeMap<&'static str, (f64, f64, usize)>> = BTreeMap::new();
    for row in ablation {
        let cell = acc
            .entry(row.dataset.clone())
            .or_default()
            .entry(row.variant.as_str())
            .or_insert((0.0, 0.0, 0));
        cell.0 += row.mse;
        cell.1 += row.mae;
        cell.2 += 1;
    }
    acc.into_iter()
        .map(|(ds, cells)| {
            let cells = cells
                .into_iter()
                .map(|(v, (mse, mae, n))| (v, (mse / n as f64, mae / n as f64)))
                .collect();
            (ds, cells)
        })
        .collect()
}

/// Scatter rows for the report: reference values, overridden per dataset by
/// measured diagnostics (cov ratio) and measured ablation deltas when the
/// results directory provides them. Non-reference datasets appear only if
/// both sides are measured.
pub fn scatter_rows(inputs: &ReportInputs) -> Vec<ScatterRow> {
    let measured = measured_ablation_cells(&inputs.ablation);
    let cov_of = |key: &str| -> Option<f64> {
        inputs
            .stats
            .iter()
            .find(|s| s.dataset == key)
            .map(|s| s.cov_ratio)
    };
    let deltas_of = |key: &str| -> Option<(f64, f64)> {
        let cells = measured.get(key)?;
        let full = cells.get(Variant::Full.as_str())?;
        let no_time = cells.get(Variant::NoTime.as_str())?;
        let no_freq = cells.get(Variant::NoFreq.as_str())?;
        Some((no_time.0 - full.0, no_freq.0 - full.0))
    };

    let mut rows = Vec::new();
    for reference in reference_scatter() {
        let key = reference.dataset.as_str();
        let cov = cov_of(key).unwrap_or(reference.cov_ratio);
        let (dnt, dnf) =
            deltas_of(key).unwrap_or((reference.delta_mse_no_time, reference.delta_mse_no_freq));
        rows.push(ScatterRow {
            dataset: reference.dataset,
            cov_ratio: cov,
            delta_mse_no_time: dnt,
            delta_mse_no_freq: dnf,
        });
    }
    for key in measured.keys() {
        if ref_dataset(key).is_some() {
            continue;
        }
        if let (Some(cov), Some((dnt, dnf))) = (cov_of(key), deltas_of(key)) {
            rows.push(ScatterRow {
                dataset: key.clone(),
                cov_ratio: cov,
                delta_mse_no_time: dnt,
                delta_mse_no_freq: dnf,
            });
        }
    }
    rows
}

/// Renders the markdown report.
pub fn render_markdown(inputs: &ReportInputs) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# SDMixer results\n");
    let _ = writeln!(
        md,
        "Reference numbers are the published benchmarks; `run` columns and"
    );
    let _ = writeln!(
        md,
        "tables come from the results directory this report was built from.\n"
    );

    // Dataset diagnostics, reference vs measured.
    let _ = writeln!(md, "## Dataset diagnostics\n");
    let _ = writeln!(
        md,
        "| Dataset | Dim | Split (train, val, test) | Forecastability | cov(Season)/cov(Trend) | Forecastability (run) | cov ratio (run) |"
    );
    let _ = writeln!(md, "|---|---|---|---|---|---|---|");
    let stat_of = |key: &str| inputs.stats.iter().find(|s| s.dataset == key);
    for d in &REF_DATASETS {
        let (fc_run, cov_run) = match stat_of(d.key) {
            Some(s) => (fmt3(s.forecastability), fmt6(s.cov_ratio)),
            None => ("-".to_string(), "-".to_string()),
        };
        let _ = writeln!(
            md,
            "| {} | {} | ({}, {}, {}) | {} | {} | {} | {} |",
            d.label,
            d.dim,
            d.split.0,
            d.split.1,
            d.split.2,
            fmt3(d.forecastability),
            fmt6(d.cov_ratio),
            fc_run,
            cov_run
        );
    }
    for s in &inputs.stats {
        if ref_dataset(&s.dataset).is_some() {
            continue;
        }
        let _ = writeln!(
            md,
            "| {} | {} | ({}, {}, {}) | - | - | {} | {} |",
            s.dataset,
            s.dim,
            s.n_train,
            s.n_val,
            s.n_test,
            fmt3(s.forecastability),
            fmt6(s.cov_ratio)
        );
    }
    let _ = writeln!(md);

    // Reference per-horizon benchmark table.
    let _ = writeln!(md, "## Benchmark errors (lookback 96, published)\n");
    let mut header = String::from("| Dataset | Horizon |");
    let mut rule = String::from("|---|---|");
    for m in BENCH_MODELS {
        let _ = write!(header, " {m} MSE | {m} MAE |");
        rule.push_str("---|---|");
    }
    let _ = writeln!(md, "{header}");
    let _ = writeln!(md, "{rule}");
    for row in &REF_BENCH {
        let label = ref_dataset(row.key).map(|d| d.label).unwrap_or(row.key);
        let mut line = format!("| {} | {} |", label, row.horizon);
        for (mse, mae) in row.cells {
            let _ = write!(line, " {} | {} |", fmt3(mse), fmt3(mae));
        }
        let _ = writeln!(md, "{line}");
    }
    let _ = writeln!(md);

    // Measured runs.
    let _ = writeln!(md, "## Measured runs\n");
    if inputs.metrics.is_empty() {
        let _ = writeln!(md, "No `metrics.csv` rows in the results directory.\n");
    } else {
        let _ = writeln!(
            md,
            "| Dataset | Horizon | Variant | MSE | MAE | Published MSE | Published MAE |"
        );
        let _ = writeln!(md, "|---|---|---|---|---|---|---|");
        for row in &inputs.metrics {
            let reference = REF_BENCH.iter().find(|r| {
                r.key == row.dataset && r.horizon == row.horizon.to_string()
            });
            let (rm, ra) = match (row.variant, reference) {
                (Variant::Full, Some(r)) => (fmt3(r.cells[0].0), fmt3(r.cells[0].1)),
                _ => ("-".to_string(), "-".to_string()),
            };
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} | {} |",
                row.dataset,
                row.horizon,
                row.variant,
                fmt3(row.mse),
                fmt3(row.mae),
                rm,
                ra
            );
        }
        let _ = writeln!(md);
    }

    // Averaged wide-baseline table.
    let _ = writeln!(md, "## Average errors across horizons (published)\n");
    let mut header = String::from("| Dataset |");
    let mut rule = String::from("|---|");
    for m in AVG_MODELS {
        let _ = write!(header, " {m} MSE | {m} MAE |");
        rule.push_str("---|---|");
    }
    let _ = writeln!(md, "{header}");
    let _ = writeln!(md, "{rule}");
    for row in &REF_AVG {
        let label = ref_dataset(row.key).map(|d| d.label).unwrap_or(row.key);
        let mut line = format!("| {label} |");
        for (mse, mae) in row.cells {
            let _ = write!(line, " {} | {} |", fmt3(mse), fmt3(mae));
        }
        let _ = writeln!(md, "{line}");
    }
    let _ = writeln!(md);

    // Ablations, published then measured.
    let _ = writeln!(md, "## Ablations (published, averaged over horizons)\n");
    let _ = writeln!(
        md,
        "| Variant | Metric | {} | AVG |",
        REF_ABLATION
            .iter()
            .map(|r| ref_dataset(r.key).map(|d| d.short).unwrap_or(r.key))
            .collect::<Vec<_>>()
            .join(" | ")
    );
    let _ = writeln!(md, "|---|---|{}---|", "---|".repeat(REF_ABLATION.len()));
    for variant in [
        Variant::NoCross,
        Variant::NoTime,
        Variant::NoFreq,
        Variant::Full,
    ] {
        for (mi, metric) in ["MSE", "MAE"].iter().enumerate() {
            let mut line = format!("| {variant} | {metric} |");
            for row in &REF_ABLATION {
                let cell = row.cell(variant);
                let _ = write!(line, " {} |", fmt3(if mi == 0 { cell.0 } else { cell.1 }));
            }
            let avg = REF_ABLATION_AVG.cell(variant);
            let _ = write!(line, " {} |", fmt3(if mi == 0 { avg.0 } else { avg.1 }));
            let _ = writeln!(md, "{line}");
        }
    }
    let _ = writeln!(md);

    let measured = measured_ablation_cells(&inputs.ablation);
    let _ = writeln!(md, "## Measured ablations\n");
    if measured.is_empty() {
        let _ = writeln!(md, "No `ablation.csv` rows in the results directory.\n");
    } else {
        let _ = writeln!(md, "| Dataset | Variant | MSE | MAE |");
        let _ = writeln!(md, "|---|---|---|---|");
        for (ds, cells) in &measured {
            for variant in Variant::ALL {
                if let Some((mse, mae)) = cells.get(variant.as_str()) {
                    let _ = writeln!(
                        md,
                        "| {} | {} | {} | {} |",
                        ds,
                        variant,
                        fmt3(*mse),
                        fmt3(*mae)
                    );
                }
            }
        }
        let _ = writeln!(md);
        for (ds, cells) in &measured {
            if let Some(full) = cells.get(Variant::Full.as_str()) {
                let worst = [Variant::NoCross, Variant::NoTime, Variant::NoFreq]
                    .iter()
                    .filter_map(|v| cells.get(v.as_str()))
                    .map(|c| c.0)
                    .fold(f64::NEG_INFINITY, f64::max);
                if worst.is_finite() {
                    let ok = full.0 <= worst + 0.01;
                    let _ = writeln!(
                        md,
                        "- {}: full MSE {} vs worst ablated {} ({})",
                        ds,
                        fmt3(full.0),
                        fmt3(worst),
                        if ok {
                            "full is best or within 0.01"
                        } else {
                            "full trails an ablation by more than 0.01"
                        }
                    );
                }
            }
        }
        let _ = writeln!(md);
    }

    // Scatter data and its correlations.
    let rows = scatter_rows(inputs);
    let _ = writeln!(md, "## Season/trend contribution vs ablation error\n");
    let _ = writeln!(
        md,
        "`scatter.csv` columns: dataset, cov_ratio, delta_mse_no_time, delta_mse_no_freq"
    );
    let _ = writeln!(
        md,
        "(delta = ablated MSE minus full MSE; measured values override published ones).\n"
    );
    let _ = writeln!(
        md,
        "| Dataset | cov ratio | delta MSE (no-time) | delta MSE (no-freq) |"
    );
    let _ = writeln!(md, "|---|---|---|---|");
    for row in &rows {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} |",
            row.dataset,
            fmt6(row.cov_ratio),
            fmt3(row.delta_mse_no_time),
            fmt3(row.delta_mse_no_freq)
        );
    }
    let _ = writeln!(md);
    let cov: Vec<f64> = rows.iter().map(|r| r.cov_ratio).collect();
    let dnt: Vec<f64> = rows.iter().map(|r| r.delta_mse_no_time).collect();
    let dnf: Vec<f64> = rows.iter().map(|r| r.delta_mse_no_freq).collect();
    let c_nt = pearson(&cov, &dnt);
    let c_nf = pearson(&cov, &dnf);
    let _ = writeln!(
        md,
        "Pearson(cov ratio, delta no-time) = {:.3} (expected negative: {})",
        c_nt,
        if c_nt < 0.0 { "yes" } else { "NO" }
    );
    let _ = writeln!(
        md,
        "Pearson(cov ratio, delta no-freq) = {:.3} (expected positive: {})",
        c_nf,
        if c_nf > 0.0 { "yes" } else { "NO" }
    );
    md
}

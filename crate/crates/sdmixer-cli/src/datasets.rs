//! Dataset location and benchmark split bookkeeping.
//!
//! A dataset argument is either a path to a CSV file or a bare stem such as
//! `ETTh1`, searched as `$SDMIXER_DATA/<stem>.csv` then `data/<stem>.csv`.
//! Known benchmark stems carry the published split row counts; anything
//! else splits 7:1:2 by rows.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use sdmixer_core::data::SplitSpec;

pub const DATA_ENV: &str = "SDMIXER_DATA";

#[derive(Debug, Clone)]
pub struct ResolvedDataset {
    /// File stem; the dataset's name in every emitted table.
    pub name: String,
    pub path: PathBuf,
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string())
}

/// Resolves a dataset argument to a file on disk.
pub fn resolve(spec: &str) -> Result<ResolvedDataset> {
    let direct = Path::new(spec);
    if direct.extension().is_some() || spec.contains(std::path::MAIN_SEPARATOR) {
        if direct.is_file() {
            return Ok(ResolvedDataset {
                name: stem_of(direct),
                path: direct.to_path_buf(),
            });
        }
        bail!("dataset file not found: {spec}");
    }
    let mut tried = Vec::new();
    if let Ok(root) = std::env::var(DATA_ENV) {
        let candidate = Path::new(&root).join(format!("{spec}.csv"));
        if candidate.is_file() {
            return Ok(ResolvedDataset {
                name: spec.to_string(),
                path: candidate,
            });
        }
        tried.push(candidate);
    }
    let candidate = Path::new("data").join(format!("{spec}.csv"));
    if candidate.is_file() {
        return Ok(ResolvedDataset {
            name: spec.to_string(),
            path: candidate,
        });
    }
    tried.push(candidate);
    bail!(
        "dataset {spec:?} not found; tried {}",
        tried
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );
}

/// Published benchmark split row counts by dataset stem.
pub fn benchmark_split(stem: &str) -> Option<SplitSpec> {
    let (n_train, n_val, n_test) = match stem {
        "ETTm1" | "ETTm2" => (34465, 11521, 11521),
        "ETTh1" | "ETTh2" => (8545, 2881, 2881),
        "electricity" => (18317, 2633, 5261),
        "exchange_rate" => (5312, 760, 1516),
        "weather" => (36792, 5271, 10540),
        _ => return None,
    };
    Some(SplitSpec {
        n_train,
        n_val,
        n_test,
    })
}

/// Split used when nothing else is specified: the published counts for
/// known stems, otherwise 7:1:2 of the available rows.
pub fn auto_split(stem: &str, total_rows: usize) -> SplitSpec {
    benchmark_split(stem).unwrap_or_else(|| {
        let n_train = total_rows * 7 / 10;
        let n_test = total_rows * 2 / 10;
        SplitSpec {
            n_train,
            n_val: total_rows - n_train - n_test,
            n_test,
        }
    })
}

//! CSV ingestion and deterministic CSV emission.
//!
//! Input files follow the common benchmark layout: a header row, an
//! optional leading date column (skipped), and numeric columns thereafter.
//! Parse failures point at the file, row and column. Output files are
//! written with plain `writeln!` so float formatting (shortest round-trip
//! form) is bit-stable across runs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use sdmixer_core::Tensor;

/// A loaded series: `[rows, channels]` values plus channel names.
#[derive(Debug, Clone)]
pub struct LoadedSeries {
    pub values: Tensor,
    pub columns: Vec<String>,
}

impl LoadedSeries {
    pub fn rows(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.values.shape()[1]
    }
}

/// Reads a series CSV. The first column is treated as a timestamp and
/// skipped when its header is `date` (any case) or its first value does not
/// parse as a number.
pub fn read_series(path: &Path) -> Result<LoadedSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let headers = reader
        .headers()
        .with_context(|| format!("{}: cannot read header row", path.display()))?
        .clone();
    if headers.is_empty() {
        bail!("{}: no columns", path.display());
    }

    let mut records = reader.records();
    let first = match records.next() {
        Some(r) => r.with_context(|| format!("{}: row 2 unreadable", path.display()))?,
        None => bail!("{}: no data rows", path.display()),
    };
    let date_column = headers
        .get(0)
        .map(|h| h.eq_ignore_ascii_case("date"))
        .unwrap_or(false)
        || first
            .get(0)
            .map(|v| v.parse::<f64>().is_err())
            .unwrap_or(true);
    let start = usize::from(date_column);
    let channels = headers.len() - start;
    if channels == 0 {
        bail!("{}: only a date column, no numeric channels", path.display());
    }
    let columns: Vec<String> = headers.iter().skip(start).map(str::to_string).collect();

    let mut data = Vec::new();
    let mut parse_row = |record: &csv::StringRecord, rowno: usize| -> Result<()> {
        if record.len() != headers.len() {
            bail!(
                "{} row {rowno}: {} fields, expected {}",
                path.display(),
                record.len(),
                headers.len()
            );
        }
        for (ci, field) in record.iter().skip(start).enumerate() {
            let value: f64 = field.parse().with_context(|| {
                format!(
                    "{} row {rowno} column {:?}: not a number: {field:?}",
                    path.display(),
                    columns[ci]
                )
            })?;
            data.push(value);
        }
        Ok(())
    };
    // Header is row 1, so the first data record is row 2.
    parse_row(&first, 2)?;
    for (i, record) in records.enumerate() {
        let rowno = i + 3;
        let record =
            record.with_context(|| format!("{} row {rowno}: unreadable", path.display()))?;
        parse_row(&record, rowno)?;
    }
    let rows = data.len() / channels;
    let values = Tensor::new(vec![rows, channels], data)?;
    Ok(LoadedSeries { values, columns })
}

/// Creates a file and hands a buffered writer to the fill closure.
pub fn write_file(
    path: &Path,
    fill: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("cannot create {}", parent.display()))?;
        }
    }
    let file =
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut writer = BufWriter::new(file);
    fill(&mut writer)?;
    writer
        .flush()
        .with_context(|| format!("cannot finish writing {}", path.display()))?;
    Ok(())
}

/// Writes a `[rows, channels]` tensor as a headered CSV.
pub fn write_matrix(path: &Path, columns: &[String], values: &Tensor) -> Result<()> {
    let &[rows, channels] = values.shape() else {
        bail!("matrix writer expects [rows, channels]");
    };
    assert_eq!(columns.len(), channels);
    write_file(path, |w| {
        writeln!(w, "{}", columns.join(","))?;
        for r in 0..rows {
            for c in 0..channels {
                if c > 0 {
                    write!(w, ",")?;
                }
                write!(w, "{}", values.at(&[r, c]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}

//! CSV ingestion and export for labeled/unlabeled samples.
//!
//! Layout: a header row, covariate columns `x1..xp`, `y` (labeled files
//! only), and an optional prediction column (`f` by default). Other columns
//! are ignored. Rows with a non-finite entry in a used column are dropped
//! and counted. Floats are written in shortest round-trip form, so an
//! export re-reads bit-exactly.

use std::io::{Read, Write};
use std::path::Path;

use crate::data::{LabeledDataset, UnlabeledDataset};
use crate::error::{FppiError, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone)]
pub struct LoadedLabeled {
    pub data: LabeledDataset,
    pub predictions: Option<Vec<f64>>,
    pub dropped_rows: usize,
}

#[derive(Debug, Clone)]
pub struct LoadedUnlabeled {
    pub data: UnlabeledDataset,
    pub predictions: Option<Vec<f64>>,
    pub dropped_rows: usize,
}

struct Layout {
    covariates: Vec<usize>,
    y: Option<usize>,
    f: Option<usize>,
}

fn layout(headers: &csv::StringRecord, pred_col: &str, need_y: bool) -> Result<Layout> {
    let mut xs: Vec<(usize, usize)> = Vec::new();
    let (mut y, mut f) = (None, None);
    for (col, name) in headers.iter().enumerate() {
        let name = name.trim();
        if name == pred_col {
            f = Some(col);
        } else if name == "y" {
            y = Some(col);
        } else if let Some(k) = name.strip_prefix('x').and_then(|k| k.parse::<usize>().ok()) {
            xs.push((k, col));
        }
    }
    xs.sort_unstable();
    if xs.is_empty() {
        return Err(FppiError::invalid("no covariate columns (expected x1..xp)"));
    }
    for (expect, &(k, _)) in (1..).zip(&xs) {
        if k != expect {
            return Err(FppiError::invalid(format!(
                "covariate columns must be x1..xp without gaps or duplicates; found x{k} where x{expect} was expected"
            )));
        }
    }
    if need_y && y.is_none() {
        return Err(FppiError::invalid("labeled file has no `y` column"));
    }
    Ok(Layout {
        covariates: xs.into_iter().map(|(_, c)| c).collect(),
        y: if need_y { y } else { None },
        f,
    })
}

struct Parsed {
    x: Vec<f64>,
    p: usize,
    rows: usize,
    y: Vec<f64>,
    f: Option<Vec<f64>>,
    dropped: usize,
}

fn parse<R: Read>(reader: R, pred_col: &str, need_y: bool) -> Result<Parsed> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let lay = layout(rdr.headers()?, pred_col, need_y)?;
    let p = lay.covariates.len();
    let mut out = Parsed {
        x: Vec::new(),
        p,
        rows: 0,
        y: Vec::new(),
        f: lay.f.map(|_| Vec::new()),
        dropped: 0,
    };
    let mut buf = Vec::with_capacity(p + 2);
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |col: usize| -> Result<f64> {
            let s = record.get(col).unwrap_or("");
            s.parse::<f64>().map_err(|_| {
                FppiError::invalid(format!("data row {}: cannot parse `{s}` as a number", line + 1))
            })
        };
        buf.clear();
        for &c in &lay.covariates {
            buf.push(field(c)?);
        }
        let y = lay.y.map(field).transpose()?;
        let f = lay.f.map(field).transpose()?;
        if buf.iter().chain(&y).chain(&f).any(|v| !v.is_finite()) {
            out.dropped += 1;
            continue;
        }
        out.x.extend_from_slice(&buf);
        out.y.extend(y);
        if let (Some(fs), Some(v)) = (out.f.as_mut(), f) {
            fs.push(v);
        }
        out.rows += 1;
    }
    Ok(out)
}

pub fn read_labeled<R: Read>(reader: R, pred_col: &str) -> Result<LoadedLabeled> {
    let p = parse(reader, pred_col, true)?;
    if p.rows == 0 {
        return Err(FppiError::Empty("labeled file has no usable rows"));
    }
    Ok(LoadedLabeled {
        data: LabeledDataset::new(Matrix::from_vec(p.rows, p.p, p.x)?, p.y)?,
        predictions: p.f,
        dropped_rows: p.dropped,
    })
}

pub fn read_unlabeled<R: Read>(reader: R, pred_col: &str) -> Result<LoadedUnlabeled> {
    let p = parse(reader, pred_col, false)?;
    if p.rows == 0 {
        return Err(FppiError::Empty("unlabeled file has no usable rows"));
    }
    Ok(LoadedUnlabeled {
        data: UnlabeledDataset::new(Matrix::from_vec(p.rows, p.p, p.x)?)?,
        predictions: p.f,
        dropped_rows: p.dropped,
    })
}

pub fn load_labeled(path: &Path, pred_col: &str) -> Result<LoadedLabeled> {
    read_labeled(std::fs::File::open(path)?, pred_col)
}

pub fn load_unlabeled(path: &Path, pred_col: &str) -> Result<LoadedUnlabeled> {
    read_unlabeled(std::fs::File::open(path)?, pred_col)
}

fn write_rows<W: Write>(out: W, x: &Matrix, y: Option<&[f64]>, f: Option<&[f64]>) -> Result<()> {
    for (what, v) in [("responses", y), ("predictions", f)] {
        if let Some(v) = v {
            if v.len() != x.rows() {
                return Err(FppiError::DimensionMismatch {
                    context: what,
                    expected: x.rows(),
                    found: v.len(),
                });
            }
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=x.cols()).map(|k| format!("x{k}")).collect();
    if y.is_some() {
        header.push("y".into());
    }
    if f.is_some() {
        header.push("f".into());
    }
    w.write_record(&header)?;
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for (i, row) in x.row_iter().enumerate() {
        rec.clear();
        rec.extend(row.iter().map(f64::to_string));
        rec.extend(y.map(|y| y[i].to_string()));
        rec.extend(f.map(|f| f[i].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_labeled<W: Write>(out: W, data: &LabeledDataset, predictions: Option<&[f64]>) -> Result<()> {
    write_rows(out, data.x(), Some(data.y()), predictions)
}

pub fn write_unlabeled<W: Write>(out: W, data: &UnlabeledDataset, predictions: Option<&[f64]>) -> Result<()> {
    write_rows(out, data.x(), None, predictions)
}

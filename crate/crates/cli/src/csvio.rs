//! CSV input and output. Input files are UTF-8 with a header row, comma
//! delimiters, and '.' decimals. Columns: `y`, `t`, `z` (or `c`, `w` for the
//! continuous-pair mode), `x1..xm`, and an optional `weight`. Rows with a
//! missing or non-parsable cell are dropped with a count; structurally
//! invalid labels are hard errors naming the row.

use anyhow::{bail, Context, Result};
use po_forge_core::estimate::Dataset;
use po_forge_core::linalg::Mat;
use po_forge_core::model::{InstrumentMode, ModelSpec};
use std::path::Path;

pub struct LoadedData {
    pub dataset: Dataset,
    pub rows_read: usize,
    pub rows_dropped: usize,
    pub diagnostics: Vec<String>,
}

struct Header {
    y: usize,
    t: usize,
    z: Option<usize>,
    c: Option<usize>,
    w: Option<usize>,
    x: Vec<usize>,
    weight: Option<usize>,
}

fn parse_header(line: &str, continuous: bool) -> Result<Header> {
    let names: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
    let find = |name: &str| names.iter().position(|&n| n == name);
    let y = find("y").context("missing mandatory column `y`")?;
    let t = find("t").context("missing mandatory column `t`")?;
    let (z, c, w) = if continuous {
        let c = find("c").context("missing mandatory column `c`")?;
        let w = find("w").context("missing mandatory column `w`")?;
        (None, Some(c), Some(w))
    } else {
        let z = find("z").context("missing mandatory column `z`")?;
        (Some(z), None, None)
    };
    let mut x = Vec::new();
    for k in 1.. {
        match find(&format!("x{k}")) {
            Some(idx) => x.push(idx),
            None => break,
        }
    }
    Ok(Header { y, t, z, c, w, x, weight: find("weight") })
}

/// Loads a dataset against a model, dropping rows with missing or
/// non-parsable cells and erroring on unknown labels.
pub fn load_dataset(path: &Path, model: &ModelSpec) -> Result<LoadedData> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let continuous = !model.instruments.is_discrete();
    let mut lines = text.lines();
    let header_line = lines.next().context("empty file")?;
    let header = parse_header(header_line, continuous)?;

    let mut y = Vec::new();
    let mut t_labels: Vec<String> = Vec::new();
    let mut z_labels: Vec<String> = Vec::new();
    let mut c_labels: Vec<String> = Vec::new();
    let mut w_vals: Vec<f64> = Vec::new();
    let mut x_rows: Vec<Vec<f64>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut rows_read = 0usize;
    let mut rows_dropped = 0usize;
    let mut diagnostics = Vec::new();

    'rows: for (line_no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows_read += 1;
        let row_id = line_no + 2; // 1-based, after the header
        let cells: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
        let cell = |idx: usize| cells.get(idx).copied().unwrap_or("");
        let parse_f = |idx: usize| cell(idx).parse::<f64>().ok().filter(|v| v.is_finite());

        let Some(yi) = parse_f(header.y) else {
            rows_dropped += 1;
            diagnostics.push(format!("row {row_id}: dropped (bad y cell)"));
            continue;
        };
        let t_cell = cell(header.t);
        if t_cell.is_empty() {
            rows_dropped += 1;
            diagnostics.push(format!("row {row_id}: dropped (empty t cell)"));
            continue;
        }
        if model.treatments.index_of(t_cell).is_none() {
            bail!("row {row_id}: unknown treatment label `{t_cell}`");
        }
        let mut xs = Vec::with_capacity(header.x.len());
        for (k, &idx) in header.x.iter().enumerate() {
            match parse_f(idx) {
                Some(v) => xs.push(v),
                None => {
                    rows_dropped += 1;
                    diagnostics.push(format!("row {row_id}: dropped (bad x{} cell)", k + 1));
                    continue 'rows;
                }
            }
        }
        let wi = match header.weight {
            None => 1.0,
            Some(idx) => match parse_f(idx) {
                Some(v) if v >= 0.0 => v,
                _ => {
                    rows_dropped += 1;
                    diagnostics.push(format!("row {row_id}: dropped (bad weight cell)"));
                    continue;
                }
            },
        };
        if continuous {
            let c_cell = cell(header.c.unwrap());
            if model.instruments.index_of(c_cell).is_none() {
                bail!("row {row_id}: unknown instrument label `{c_cell}`");
            }
            let Some(w_val) = parse_f(header.w.unwrap()) else {
                rows_dropped += 1;
                diagnostics.push(format!("row {row_id}: dropped (bad w cell)"));
                continue;
            };
            c_labels.push(c_cell.to_string());
            w_vals.push(w_val);
        } else {
            let z_cell = cell(header.z.unwrap());
            if model.instruments.index_of(z_cell).is_none() {
                bail!("row {row_id}: unknown instrument label `{z_cell}`");
            }
            z_labels.push(z_cell.to_string());
        }
        y.push(yi);
        t_labels.push(t_cell.to_string());
        x_rows.push(xs);
        weights.push(wi);
    }
    if y.is_empty() {
        bail!("no usable rows after dropping {rows_dropped} of {rows_read}");
    }
    let x = Mat::from_rows(&x_rows);
    let omega = if header.weight.is_some() { Some(weights) } else { None };
    let dataset = if continuous {
        Dataset::from_continuous_labels(model, y, &t_labels, &c_labels, w_vals, x, omega)?
    } else {
        Dataset::from_labels(model, y, &t_labels, &z_labels, x, omega)?
    };
    Ok(LoadedData { dataset, rows_read, rows_dropped, diagnostics })
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a dataset in the same schema `load_dataset` reads. Byte-stable for
/// identical inputs.
pub fn write_dataset(path: &Path, model: &ModelSpec, data: &Dataset) -> Result<()> {
    use po_forge_core::estimate::InstrumentData;
    let m = data.x.cols();
    let mut out = String::new();
    let continuous = matches!(model.instruments.mode, InstrumentMode::ContinuousPair { .. });
    out.push_str("y,t,");
    out.push_str(if continuous { "c,w" } else { "z" });
    for k in 1..=m {
        out.push_str(&format!(",x{k}"));
    }
    out.push_str(",weight\n");
    for i in 0..data.n() {
        out.push_str(&fmt(data.y[i]));
        out.push(',');
        out.push_str(&model.treatments.labels[data.t[i]]);
        out.push(',');
        match &data.z {
            InstrumentData::Discrete(z) => {
                out.push_str(&model.instruments.values[z[i]]);
            }
            InstrumentData::ContinuousPair { c, w } => {
                out.push_str(&model.instruments.values[c[i]]);
                out.push(',');
                out.push_str(&fmt(w[i]));
            }
        }
        for j in 0..m {
            out.push(',');
            out.push_str(&fmt(data.x.get(i, j)));
        }
        out.push(',');
        out.push_str(&fmt(data.omega[i]));
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Persists bootstrap draws as columnar CSV: replicate, functional, value.
pub fn write_draws_csv(
    path: &Path,
    names: &[String],
    columns: &[Vec<f64>],
) -> Result<()> {
    let mut out = String::from("replicate,functional,value\n");
    for (name, col) in names.iter().zip(columns) {
        for (rep, v) in col.iter().enumerate() {
            out.push_str(&format!("{rep},{name},{}\n", fmt(*v)));
        }
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

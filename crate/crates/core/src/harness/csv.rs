//! Metric tables. Every file has a header row and one record per line;
//! numbers are written in Rust's shortest round-trip form.

use std::fs;
use std::path::Path;

use crate::ddm::LossBreakdown;
use crate::error::{Error, Result};
use crate::rlloop::{Evaluation, TrialRecord};

pub const LOSS_HEADER: &str = "epoch,recon,pred_img,latent,total";
pub const ERROR_CURVE_HEADER: &str = "trial,kind,final_error_deg,best_so_far_deg,train_secs,control_secs";

/// A parsed numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub fn loss_csv(history: &[LossBreakdown]) -> String {
    let mut out = format!("{LOSS_HEADER}\n");
    for (epoch, l) in history.iter().enumerate() {
        out.push_str(&format!("{epoch},{}\n", join([l.recon, l.pred_img, l.latent, l.total])));
    }
    out
}

pub fn write_loss_csv(path: &Path, history: &[LossBreakdown]) -> Result<()> {
    write_text(path, &loss_csv(history))
}

pub fn control_header(n_u: usize) -> String {
    let mut h = String::from("step,angle_err_deg,plan_cost");
    for i in 0..n_u {
        h.push_str(&format!(",u{i}"));
    }
    h
}

pub fn control_csv(eval: &Evaluation, n_u: usize) -> String {
    let mut out = control_header(n_u);
    out.push('\n');
    for (t, (err, cost)) in eval.errors_deg.iter().zip(&eval.plan_costs).enumerate() {
        let u = eval.controls.get(t).cloned().unwrap_or_else(|| vec![f64::NAN; n_u]);
        out.push_str(&format!("{t},{}\n", join([*err, *cost].into_iter().chain(u))));
    }
    out
}

pub fn write_control_csv(path: &Path, eval: &Evaluation, n_u: usize) -> Result<()> {
    write_text(path, &control_csv(eval, n_u))
}

pub fn latent_map_csv(rows: &[(f64, Vec<f64>)]) -> String {
    let n_z = rows.first().map_or(0, |r| r.1.len());
    let mut out = String::from("angle_deg");
    for i in 1..=n_z {
        out.push_str(&format!(",z{i}"));
    }
    out.push('\n');
    for (deg, z) in rows {
        out.push_str(&format!("{}\n", join(std::iter::once(*deg).chain(z.iter().copied()))));
    }
    out
}

pub fn write_latent_map_csv(path: &Path, rows: &[(f64, Vec<f64>)]) -> Result<()> {
    write_text(path, &latent_map_csv(rows))
}

pub fn error_curve_csv(records: &[TrialRecord]) -> String {
    let mut out = format!("{ERROR_CURVE_HEADER}\n");
    let mut best = f64::INFINITY;
    for r in records {
        best = best.min(r.evaluation.final_error_deg);
        out.push_str(&format!(
            "{},{},{}\n",
            r.index,
            match r.kind {
                crate::rlloop::TrialKind::Random => "random",
                crate::rlloop::TrialKind::Controlled => "controlled",
            },
            join([r.evaluation.final_error_deg, best, r.train_secs, r.control_secs])
        ));
    }
    out
}

/// Parse a numeric table. Non-numeric cells are accepted only in columns
/// listed in `text_columns` and read back as `NaN`.
pub fn parse_table(text: &str, text_columns: &[&str]) -> Result<Table> {
    const WHAT: &str = "CSV";
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::parse(WHAT, "header", "empty file"))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(Error::parse(WHAT, format!("row {}", i + 1), format!("{} cells, header has {}", cells.len(), header.len())));
        }
        let row = cells
            .iter()
            .zip(&header)
            .map(|(c, h)| match c.trim().parse::<f64>() {
                Ok(v) => Ok(v),
                Err(_) if text_columns.contains(&h.as_str()) => Ok(f64::NAN),
                Err(e) => Err(Error::parse(WHAT, format!("row {} column {h}", i + 1), e.to_string())),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}

pub fn read_table(path: &Path, text_columns: &[&str]) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(&text, text_columns)
}

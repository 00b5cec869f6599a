//! Error metrics and the extractor x model results matrix.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetSplit, LabeledSample};
use crate::error::{Error, Result};
use crate::features::Extractor;
use crate::regress::{self, ModelKind, RegressorParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    /// Percent.
    pub mape: f64,
}

pub fn compute_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<Metrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::InvalidArgument(format!(
            "metric inputs differ in length: {} vs {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::InvalidArgument("metrics of an empty set".into()));
    }
    if let Some(y) = y_true.iter().find(|y| y.abs() < 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "MAPE is undefined for true value {y}"
        )));
    }
    let n = y_true.len() as f64;
    let (mut se, mut ae, mut ape) = (0.0, 0.0, 0.0);
    for (y, p) in y_true.iter().zip(y_pred) {
        let e = y - p;
        se += e * e;
        ae += e.abs();
        ape += e.abs() / y.abs();
    }
    Ok(Metrics {
        mse: se / n,
        mae: ae / n,
        mape: 100.0 * ape / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub extractor: Extractor,
    pub model: ModelKind,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    /// Adds a row, rejecting a repeated (extractor, model) pair.
    pub fn push(&mut self, row: ResultRow) -> Result<()> {
        if self.get(row.extractor, row.model).is_some() {
            return Err(Error::InvalidArgument(format!(
                "duplicate results row ({}, {})",
                row.extractor, row.model
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn get(&self, extractor: Extractor, model: ModelKind) -> Option<&Metrics> {
        self.rows
            .iter()
            .find(|r| r.extractor == extractor && r.model == model)
            .map(|r| &r.metrics)
    }

    fn sorted_rows(&self) -> Vec<&ResultRow> {
        let mut rows: Vec<&ResultRow> = self.rows.iter().collect();
        rows.sort_by_key(|r| (r.extractor, r.model));
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
    Json,
}

pub fn render_table(table: &ResultsTable, format: TableFormat) -> String {
    let rows = table.sorted_rows();
    match format {
        TableFormat::Csv => {
            let mut out = String::from("extractor,model,mse,mae,mape\n");
            for r in rows {
                let m = &r.metrics;
                let _ = writeln!(out, "{},{},{},{},{}", r.extractor, r.model, m.mse, m.mae, m.mape);
            }
            out
        }
        TableFormat::Json => {
            let sorted = ResultsTable {
                rows: rows.into_iter().cloned().collect(),
            };
            let mut s = serde_json::to_string_pretty(&sorted).expect("table serializes");
            s.push('\n');
            s
        }
        TableFormat::Text => {
            let header = ["Feature Extraction Method", "Model", "MSE", "MAE", "MAPE"];
            let body: Vec<[String; 5]> = rows
                .iter()
                .map(|r| {
                    [
                        r.extractor.display_name().to_string(),
                        r.model.display_name().to_string(),
                        format!("{:.4}", r.metrics.mse),
                        format!("{:.4}", r.metrics.mae),
                        format!("{:.1}%", r.metrics.mape),
                    ]
                })
                .collect();
            let mut widths = header.map(str::len);
            for row in &body {
                for (w, cell) in widths.iter_mut().zip(row) {
                    *w = (*w).max(cell.len());
                }
            }
            let line = |cells: [&str; 5]| {
                let mut s = String::new();
                for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
                    if i > 0 {
                        s.push_str(" | ");
                    }
                    if i < 2 {
                        let _ = write!(s, "{cell:<w$}");
                    } else {
                        let _ = write!(s, "{cell:>w$}");
                    }
                }
                s.push('\n');
                s
            };
            let mut out = line(header);
            out.push_str(&widths.map(|w| "-".repeat(w)).join("-+-"));
            out.push('\n');
            for row in &body {
                out.push_str(&line([&row[0], &row[1], &row[2], &row[3], &row[4]]));
            }
            out
        }
    }
}

/// Trains every model on every extractor's training rows and scores it on
/// the shared test rows. All sample sets must list the same crops in the
/// same order.
pub fn run_matrix(
    datasets: &BTreeMap<Extractor, Vec<LabeledSample>>,
    extractors: &[Extractor],
    split: &DatasetSplit,
    params: &RegressorParams,
) -> Result<ResultsTable> {
    let mut reference: Option<(Extractor, &[LabeledSample])> = None;
    for &e in extractors {
        let samples = datasets
            .get(&e)
            .ok_or_else(|| Error::InvalidArgument(format!("missing samples for extractor `{e}`")))?;
        match reference {
            None => reference = Some((e, samples)),
            Some((r, base)) => {
                let aligned = base.len() == samples.len()
                    && base.iter().zip(samples).all(|(a, b)| a.id == b.id && a.lai == b.lai);
                if !aligned {
                    return Err(Error::InvalidArgument(format!(
                        "samples for `{e}` do not match the crops of `{r}`"
                    )));
                }
            }
        }
    }
    let n = reference.map_or(0, |(_, s)| s.len());
    if split
        .train_indices
        .iter()
        .chain(&split.test_indices)
        .any(|&i| i >= n)
    {
        return Err(Error::InvalidArgument("split indices exceed the dataset".into()));
    }

    let cells: Vec<(Extractor, ModelKind)> = extractors
        .iter()
        .flat_map(|&e| ModelKind::ALL.into_iter().map(move |m| (e, m)))
        .collect();
    let results: Vec<Result<ResultRow>> = cells
        .par_iter()
        .map(|&(extractor, model)| {
            let (train, test) = split.select(&datasets[&extractor]);
            let fitted = regress::fit(model, &train, params)?;
            let truth: Vec<f64> = test.iter().map(|s| s.lai).collect();
            let predictions = test
                .iter()
                .map(|s| fitted.predict(&s.features))
                .collect::<Result<Vec<_>>>()?;
            Ok(ResultRow {
                extractor,
                model,
                metrics: compute_metrics(&truth, &predictions)?,
            })
        })
        .collect();

    let mut table = ResultsTable::default();
    for (result, (e, m)) in results.into_iter().zip(cells) {
        table.push(result.map_err(|err| err.context(format!("cell ({e}, {m})")))?)?;
    }
    Ok(table)
}

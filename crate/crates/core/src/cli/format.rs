//! File formats exchanged by the command-line tool.
//!
//! | file       | header                                   |
//! |------------|------------------------------------------|
//! | dataset    | `x1,...,xd,omega_a,omega_b`              |
//! | scores     | `score,omega_a,omega_b`                  |
//! | rates      | `n,theta,c,tpr,fpr,miss,auc_n`           |
//! | comparison | see [`COMPARISON_HEADER`]                |
//! | trace      | `epoch,loss_train,loss_val,auc_val`      |
//!
//! Reals are written in scientific notation with 17 significant digits,
//! which round-trips every `f64`. Moments and thresholds are JSON.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::odds::{ScoredInstance, WeightedInstance};
use crate::stats::ClassMoments;
use crate::train::TrainTrace;

pub const SCORES_HEADER: [&str; 3] = ["score", "omega_a", "omega_b"];
pub const RATES_HEADER: [&str; 7] = ["n", "theta", "c", "tpr", "fpr", "miss", "auc_n"];
pub const COMPARISON_HEADER: [&str; 11] = [
    "n",
    "theta",
    "tpr_mc",
    "tpr_se",
    "tpr_analytic",
    "fpr_mc",
    "fpr_se",
    "fpr_analytic",
    "auc_mc",
    "auc_se",
    "auc_analytic",
];
pub const TRACE_HEADER: [&str; 4] = ["epoch", "loss_train", "loss_val", "auc_val"];

/// A real with 17 significant digits.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Other(format!("csv: {e}"))
}

fn parse_real(field: &str, row: usize, column: &str) -> Result<f64, CliError> {
    field.trim().parse::<f64>().map_err(|_| {
        CliError::Other(format!(
            "row {row}, column {column}: not a number: {field:?}"
        ))
    })
}

fn write_rows<W: Write>(
    out: W,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| CliError::Other(format!("write: {e}")))
}

pub fn dataset_header(dim: usize) -> Vec<String> {
    (1..=dim)
        .map(|k| format!("x{k}"))
        .chain(["omega_a".to_string(), "omega_b".to_string()])
        .collect()
}

pub fn write_dataset<W: Write>(out: W, data: &[WeightedInstance]) -> Result<(), CliError> {
    let dim = data.first().map_or(0, |i| i.features.len());
    let header = dataset_header(dim);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(
        out,
        &header,
        data.iter().map(|inst| {
            inst.features
                .iter()
                .chain([&inst.omega_a, &inst.omega_b])
                .map(|&v| real(v))
                .collect()
        }),
    )
}

pub fn read_dataset<R: Read>(input: R) -> Result<Vec<WeightedInstance>, CliError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let dim = header.len().saturating_sub(2);
    if header.len() < 3 || header != dataset_header(dim) {
        return Err(CliError::Other(format!(
            "dataset header must be x1,...,xd,omega_a,omega_b; got {}",
            header.join(",")
        )));
    }
    let mut data = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let vals = rec
            .iter()
            .zip(&header)
            .map(|(f, h)| parse_real(f, i + 1, h))
            .collect::<Result<Vec<_>, _>>()?;
        let (features, w) = vals.split_at(dim);
        data.push(WeightedInstance::new(features.to_vec(), w[0], w[1])?);
    }
    Ok(data)
}

pub fn write_scores<W: Write>(out: W, scored: &[ScoredInstance]) -> Result<(), CliError> {
    write_rows(
        out,
        &SCORES_HEADER,
        scored
            .iter()
            .map(|s| vec![real(s.score), real(s.omega_a), real(s.omega_b)]),
    )
}

pub fn read_scores<R: Read>(input: R) -> Result<Vec<ScoredInstance>, CliError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    if header != SCORES_HEADER {
        return Err(CliError::Other(format!(
            "scores header must be score,omega_a,omega_b; got {}",
            header.join(",")
        )));
    }
    let mut scored = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let v = rec
            .iter()
            .zip(SCORES_HEADER)
            .map(|(f, h)| parse_real(f, i + 1, h))
            .collect::<Result<Vec<_>, _>>()?;
        let (score, wa, wb) = (v[0], v[1], v[2]);
        if !(0.0..=1.0).contains(&score) {
            return Err(CliError::Other(format!(
                "row {}: score {score} outside [0, 1]",
                i + 1
            )));
        }
        // validates the weights
        WeightedInstance::new(Vec::new(), wa, wb)?;
        scored.push(ScoredInstance::new(score, wa, wb));
    }
    Ok(scored)
}

/// Output of `estimate`, input of `curves`, `calibrate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentsFile {
    pub mu_a: f64,
    pub sigma_a: f64,
    pub mu_b: f64,
    pub sigma_b: f64,
    #[serde(default)]
    pub n_effective_a: f64,
    #[serde(default)]
    pub n_effective_b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc_1: Option<f64>,
}

impl MomentsFile {
    pub fn new(m: &ClassMoments, auc_1: f64) -> Self {
        Self {
            mu_a: m.mu_a,
            sigma_a: m.sigma_a,
            mu_b: m.mu_b,
            sigma_b: m.sigma_b,
            n_effective_a: m.n_effective_a,
            n_effective_b: m.n_effective_b,
            auc_1: Some(auc_1),
        }
    }

    pub fn moments(&self) -> Result<ClassMoments, CliError> {
        let m = ClassMoments {
            mu_a: self.mu_a,
            sigma_a: self.sigma_a,
            mu_b: self.mu_b,
            sigma_b: self.sigma_b,
            n_effective_a: self.n_effective_a,
            n_effective_b: self.n_effective_b,
        };
        m.validate()?;
        Ok(m)
    }
}

/// Output of `calibrate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFile {
    pub n: u64,
    pub c_opt: f64,
    pub theta_opt: f64,
    pub sigma_discrepancy: f64,
    pub c_opt_numeric: f64,
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn from_json<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Usage(format!("{what}: {e}")))
}

/// One row of the `rates` table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatesRow {
    pub n: u64,
    pub theta: f64,
    pub c: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub miss: f64,
    pub auc_n: f64,
}

pub fn write_rates<W: Write>(out: W, rows: &[RatesRow]) -> Result<(), CliError> {
    write_rows(
        out,
        &RATES_HEADER,
        rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                real(r.theta),
                real(r.c),
                real(r.tpr),
                real(r.fpr),
                real(r.miss),
                real(r.auc_n),
            ]
        }),
    )
}

fn read_table<R: Read>(input: R, header: &[&str]) -> Result<Vec<Vec<f64>>, CliError> {
    let mut r = csv::Reader::from_reader(input);
    let got: Vec<String> = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    if got != header {
        return Err(CliError::Other(format!(
            "expected header {}; got {}",
            header.join(","),
            got.join(",")
        )));
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(csv_err)?;
            rec.iter()
                .zip(header)
                .map(|(f, h)| parse_real(f, i + 1, h))
                .collect()
        })
        .collect()
}

pub fn read_rates<R: Read>(input: R) -> Result<Vec<RatesRow>, CliError> {
    Ok(read_table(input, &RATES_HEADER)?
        .into_iter()
        .map(|v| RatesRow {
            n: v[0] as u64,
            theta: v[1],
            c: v[2],
            tpr: v[3],
            fpr: v[4],
            miss: v[5],
            auc_n: v[6],
        })
        .collect())
}

/// One row of the `simulate` comparison table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub n: u64,
    pub theta: f64,
    pub tpr_mc: f64,
    pub tpr_se: f64,
    pub tpr_analytic: f64,
    pub fpr_mc: f64,
    pub fpr_se: f64,
    pub fpr_analytic: f64,
    pub auc_mc: f64,
    pub auc_se: f64,
    pub auc_analytic: f64,
}

pub fn write_comparison<W: Write>(out: W, rows: &[ComparisonRow]) -> Result<(), CliError> {
    write_rows(
        out,
        &COMPARISON_HEADER,
        rows.iter().map(|r| {
            std::iter::once(r.n.to_string())
                .chain(
                    [
                        r.theta,
                        r.tpr_mc,
                        r.tpr_se,
                        r.tpr_analytic,
                        r.fpr_mc,
                        r.fpr_se,
                        r.fpr_analytic,
                        r.auc_mc,
                        r.auc_se,
                        r.auc_analytic,
                    ]
                    .map(real),
                )
                .collect()
        }),
    )
}

pub fn read_comparison<R: Read>(input: R) -> Result<Vec<ComparisonRow>, CliError> {
    Ok(read_table(input, &COMPARISON_HEADER)?
        .into_iter()
        .map(|v| ComparisonRow {
            n: v[0] as u64,
            theta: v[1],
            tpr_mc: v[2],
            tpr_se: v[3],
            tpr_analytic: v[4],
            fpr_mc: v[5],
            fpr_se: v[6],
            fpr_analytic: v[7],
            auc_mc: v[8],
            auc_se: v[9],
            auc_analytic: v[10],
        })
        .collect())
}

pub fn write_trace<W: Write>(out: W, trace: &TrainTrace) -> Result<(), CliError> {
    write_rows(
        out,
        &TRACE_HEADER,
        trace.epochs.iter().map(|e| {
            vec![
                e.epoch.to_string(),
                real(e.loss_train),
                real(e.loss_val),
                real(e.auc_val),
            ]
        }),
    )
}

//! Per-epoch instrumentation: bin an evaluation set by a hardness variable
//! and track, per bin, the mean/std embedding norm and angular hardness,
//! accuracy, and confidence as training progresses. Includes slope-based
//! plateau metrics and a two-phase changepoint detector for the resulting
//! series.

use std::io::Write;
use std::path::Path;

use crate::error::{AvhError, Result};
use crate::geometry;
use crate::stats;
use crate::synthdata::{fmt_float, LabeledDataset};
use crate::tinynet::{self, Model};

/// Aggregates for one (epoch, bin) cell. Bins are 1-based; empty bins keep
/// `count = 0` and `None` aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub bin: usize,
    pub count: usize,
    pub mean_norm: Option<f64>,
    pub std_norm: Option<f64>,
    pub mean_avh: Option<f64>,
    pub std_avh: Option<f64>,
    pub accuracy: Option<f64>,
    pub mean_confidence: Option<f64>,
}

/// Which per-sample variable assigns samples to bins.
#[derive(Debug, Clone, Copy)]
pub enum BinVariable<'a> {
    /// The dataset's human-selection-frequency column.
    Hsf,
    /// `1 - posterior[label]` from the dataset's oracle posterior.
    OracleHardness,
    /// Any caller-supplied per-sample value (e.g. a degradation level).
    Values(&'a [f64]),
}

/// One forward pass over a held-out set, aggregated per bin. The evaluation
/// set is never trained on; AVH and confidence are taken at the true label.
pub fn record_epoch(
    model: &Model,
    eval_set: &LabeledDataset,
    bin_by: BinVariable<'_>,
    bin_edges: &[f64],
    epoch: usize,
) -> Result<Vec<EpochRecord>> {
    if epoch == 0 {
        return Err(AvhError::invalid("epoch indices start at 1"));
    }
    if eval_set.is_empty() {
        return Err(AvhError::invalid("evaluation set is empty"));
    }
    let values: Vec<f64> = match bin_by {
        BinVariable::Hsf => eval_set
            .hsf
            .clone()
            .ok_or_else(|| AvhError::invalid("binning by hsf but the dataset has none"))?,
        BinVariable::OracleHardness => eval_set.oracle_hardness().ok_or_else(|| {
            AvhError::invalid("binning by oracle hardness but the dataset has no posterior")
        })?,
        BinVariable::Values(v) => {
            if v.len() != eval_set.len() {
                return Err(AvhError::ShapeMismatch {
                    what: "bin values",
                    expected: eval_set.len(),
                    actual: v.len(),
                });
            }
            v.to_vec()
        }
    };

    let weights = model.classifier()?;
    let n = eval_set.len();
    let mut norms = Vec::with_capacity(n);
    let mut avhs = Vec::with_capacity(n);
    let mut hits = Vec::with_capacity(n);
    let mut confs = Vec::with_capacity(n);
    for (x, &y) in eval_set.features.iter().zip(&eval_set.labels) {
        let (embedding, logits) = tinynet::forward_sample(model, x)?;
        norms.push(geometry::norm(&embedding));
        // Dead-ReLU samples (zero embedding) score the ambiguous 1/C.
        avhs.push(geometry::avh_or_uniform(&embedding, &weights, y)?);
        hits.push(if tinynet::argmax(&logits) == y { 1.0 } else { 0.0 });
        let probs = geometry::softmax(&logits);
        confs.push(probs[y]);
    }

    let table = stats::bin_aggregate(
        &values,
        bin_edges,
        &[
            ("norm", &norms),
            ("avh", &avhs),
            ("acc", &hits),
            ("conf", &confs),
        ],
    )?;
    Ok(table
        .rows
        .iter()
        .map(|row| {
            let stat = |i: usize| row.stats.as_ref().map(|s| s[i].mean);
            EpochRecord {
                epoch,
                bin: row.bin,
                count: row.count,
                mean_norm: stat(0),
                std_norm: row.stats.as_ref().map(|s| s[0].std),
                mean_avh: stat(1),
                std_avh: row.stats.as_ref().map(|s| s[1].std),
                accuracy: stat(2),
                mean_confidence: stat(3),
            }
        })
        .collect())
}

/// Append-only table of epoch records: epochs contiguous from 1, each epoch
/// holding the same 1..=num_bins rows exactly once.
#[derive(Debug, Clone, Default)]
pub struct DynamicsTable {
    records: Vec<EpochRecord>,
    num_bins: usize,
    num_epochs: usize,
}

impl DynamicsTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_epoch(&mut self, rows: Vec<EpochRecord>) -> Result<()> {
        if rows.is_empty() {
            return Err(AvhError::invalid("an epoch must contribute at least one bin"));
        }
        if self.num_epochs == 0 {
            self.num_bins = rows.len();
        } else if rows.len() != self.num_bins {
            return Err(AvhError::ShapeMismatch {
                what: "bins per epoch",
                expected: self.num_bins,
                actual: rows.len(),
            });
        }
        let epoch = self.num_epochs + 1;
        for (i, row) in rows.iter().enumerate() {
            if row.epoch != epoch {
                return Err(AvhError::invalid(format!(
                    "expected epoch {epoch}, got {}",
                    row.epoch
                )));
            }
            if row.bin != i + 1 {
                return Err(AvhError::invalid(format!(
                    "expected bin {} at position {i}, got {}",
                    i + 1,
                    row.bin
                )));
            }
        }
        self.records.extend(rows);
        self.num_epochs = epoch;
        Ok(())
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    pub fn num_epochs(&self) -> usize {
        self.num_epochs
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    /// Per-epoch values of one field for a single bin.
    pub fn bin_series<F>(&self, bin: usize, field: F) -> Result<Vec<Option<f64>>>
    where
        F: Fn(&EpochRecord) -> Option<f64>,
    {
        if bin == 0 || bin > self.num_bins {
            return Err(AvhError::invalid(format!("bin {bin} out of 1..={}", self.num_bins)));
        }
        Ok(self
            .records
            .iter()
            .filter(|r| r.bin == bin)
            .map(field)
            .collect())
    }

    /// Per-epoch count-weighted mean of one field across all bins, i.e. the
    /// all-samples mean when the field is itself a per-bin mean.
    pub fn overall_series<F>(&self, field: F) -> Vec<Option<f64>>
    where
        F: Fn(&EpochRecord) -> Option<f64>,
    {
        (1..=self.num_epochs)
            .map(|e| {
                let mut total = 0.0;
                let mut weight = 0usize;
                for r in self.records.iter().filter(|r| r.epoch == e) {
                    if let Some(v) = field(r) {
                        total += v * r.count as f64;
                        weight += r.count;
                    }
                }
                if weight == 0 {
                    None
                } else {
                    Some(total / weight as f64)
                }
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(
            out,
            "epoch,bin,count,mean_norm,std_norm,mean_avh,std_avh,accuracy,mean_conf"
        )?;
        let cell = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.epoch,
                r.bin,
                r.count,
                cell(r.mean_norm),
                cell(r.std_norm),
                cell(r.mean_avh),
                cell(r.std_avh),
                cell(r.accuracy),
                cell(r.mean_confidence),
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }
}

/// Least-squares slope of `y` against equally spaced epochs.
fn ls_slope(y: &[f64]) -> f64 {
    let m = y.len() as f64;
    let x_mean = (m - 1.0) / 2.0;
    let y_mean = y.iter().sum::<f64>() / m;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - x_mean;
        num += dx * (v - y_mean);
        den += dx * dx;
    }
    num / den
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateauMetrics {
    pub early_slope: f64,
    pub late_slope: f64,
    /// `|late| / |early|`; `None` flags an early slope too close to zero to
    /// divide by.
    pub ratio: Option<f64>,
}

const FLAT_SLOPE: f64 = 1e-12;

/// Compares the least-squares slope over the first `split` fraction of the
/// series against the slope over the last `split` fraction. A small ratio
/// means the series moved early and then flattened.
pub fn plateau_metrics(series: &[f64], split: f64) -> Result<PlateauMetrics> {
    if series.len() < 4 {
        return Err(AvhError::invalid(format!(
            "plateau metrics need at least 4 epochs, got {}",
            series.len()
        )));
    }
    if !(split > 0.0 && split <= 0.5) {
        return Err(AvhError::invalid("split must lie in (0, 0.5]"));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(AvhError::invalid("series contains a non-finite value"));
    }
    let k = ((series.len() as f64 * split).floor() as usize).max(2);
    let early_slope = ls_slope(&series[..k]);
    let late_slope = ls_slope(&series[series.len() - k..]);
    let ratio = if early_slope.abs() < FLAT_SLOPE {
        None
    } else {
        Some(late_slope.abs() / early_slope.abs())
    };
    Ok(PlateauMetrics {
        early_slope,
        late_slope,
        ratio,
    })
}

const PHASE_HOLD: usize = 3;

/// First epoch after which the relative per-epoch norm growth exceeds the
/// relative per-epoch AVH decrease for three consecutive transitions;
/// `None` when that never happens. Epochs are 1-based, so a norm series
/// that outgrows AVH from the start yields `Some(1)`.
pub fn phase_split(norm_series: &[f64], avh_series: &[f64]) -> Result<Option<usize>> {
    if norm_series.len() != avh_series.len() {
        return Err(AvhError::ShapeMismatch {
            what: "series lengths",
            expected: norm_series.len(),
            actual: avh_series.len(),
        });
    }
    if norm_series.len() < 4 {
        return Err(AvhError::invalid(format!(
            "phase split needs at least 4 epochs, got {}",
            norm_series.len()
        )));
    }
    if norm_series
        .iter()
        .chain(avh_series)
        .any(|v| !v.is_finite())
    {
        return Err(AvhError::invalid("series contains a non-finite value"));
    }
    let n = norm_series.len();
    // holds[i]: the transition into epoch i+2 favors norm growth.
    let holds: Vec<bool> = (1..n)
        .map(|t| {
            let growth = (norm_series[t] - norm_series[t - 1]) / norm_series[t - 1].abs().max(FLAT_SLOPE);
            let decrease = (avh_series[t - 1] - avh_series[t]) / avh_series[t - 1].abs().max(FLAT_SLOPE);
            growth > decrease
        })
        .collect();
    for start in 0..holds.len().saturating_sub(PHASE_HOLD - 1) {
        if holds[start..start + PHASE_HOLD].iter().all(|&h| h) {
            return Ok(Some(start + 1));
        }
    }
    Ok(None)
}

//! Rank correlations, significance tests on correlation coefficients, and
//! small aggregation helpers (min-max scaling, binned means).
//!
//! Everything is implemented directly on `f64` slices. The significance
//! machinery follows the classic recipe: transform a coefficient with
//! `atanh`, treat the result as normal with variance `1/(n-3)`, and compare
//! two coefficients through the difference of their transforms. The same
//! transform is applied to every supported coefficient, including Kendall's
//! tau, so reports from different methods stay directly comparable.

use crate::error::{AvhError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrMethod {
    Spearman,
    Pearson,
    Kendall,
}

impl std::fmt::Display for CorrMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CorrMethod::Spearman => write!(f, "spearman"),
            CorrMethod::Pearson => write!(f, "pearson"),
            CorrMethod::Kendall => write!(f, "kendall"),
        }
    }
}

/// One correlation measurement plus its significance against zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub method: CorrMethod,
    pub coef: f64,
    pub abs_coef: f64,
    pub n: usize,
    pub fisher_z: f64,
    /// Two-sided p-value for "the underlying coefficient is zero", using the
    /// normal approximation `z = atanh(coef) * sqrt(n - 3)`.
    pub p_nonzero: f64,
}

/// Significance test for the difference of two coefficients measured on
/// independent samples of sizes `n1` and `n2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub z1: f64,
    pub z2: f64,
    pub z_value: f64,
    /// One-sided upper-tail p-value for "coefficient 1 exceeds coefficient 2".
    pub p_value: f64,
}

fn validate_paired(a: &[f64], b: &[f64], min_n: usize, what: &'static str) -> Result<()> {
    if a.len() != b.len() {
        return Err(AvhError::ShapeMismatch {
            what,
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < min_n {
        return Err(AvhError::invalid(format!(
            "{what} needs at least {min_n} pairs, got {}",
            a.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(AvhError::invalid(format!("{what} input contains a non-finite value")));
    }
    Ok(())
}

/// Pearson product-moment correlation. Needs at least 3 pairs and positive
/// variance in both columns.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    validate_paired(a, b, 3, "pearson")?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 {
        return Err(AvhError::ZeroVariance { arg: "a" });
    }
    if vb == 0.0 {
        return Err(AvhError::ZeroVariance { arg: "b" });
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

/// Ranks with ties replaced by the mean of the ranks they occupy
/// (1-based, so `[10, 20, 20, 30]` ranks as `[1, 2.5, 2.5, 4]`).
pub fn rank_average_ties(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Tied block occupies ranks start+1 ..= end; assign their average.
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation: Pearson applied to average-tie ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    validate_paired(a, b, 3, "spearman")?;
    pearson(&rank_average_ties(a), &rank_average_ties(b))
}

/// Kendall's tau-b by direct pair enumeration (O(n^2)), with the standard
/// tie correction in the denominator.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    validate_paired(a, b, 2, "kendall_tau")?;
    let n = a.len();
    let mut concordant: u64 = 0;
    let mut discordant: u64 = 0;
    let mut ties_a: u64 = 0;
    let mut ties_b: u64 = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            if da == 0.0 && db == 0.0 {
                ties_a += 1;
                ties_b += 1;
            } else if da == 0.0 {
                ties_a += 1;
            } else if db == 0.0 {
                ties_b += 1;
            } else if (da > 0.0) == (db > 0.0) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as u64;
    if n0 == ties_a {
        return Err(AvhError::ZeroVariance { arg: "a" });
    }
    if n0 == ties_b {
        return Err(AvhError::ZeroVariance { arg: "b" });
    }
    let num = concordant as f64 - discordant as f64;
    let den = ((n0 - ties_a) as f64 * (n0 - ties_b) as f64).sqrt();
    Ok(num / den)
}

/// `atanh` of a coefficient; defined only strictly inside (-1, 1).
pub fn fisher_z(r: f64) -> Result<f64> {
    if !r.is_finite() || r.abs() >= 1.0 {
        return Err(AvhError::invalid(format!(
            "fisher z needs a coefficient strictly inside (-1, 1), got {r}"
        )));
    }
    Ok(r.atanh())
}

/// Upper-tail probability of the standard normal, `P(Z > z)`.
///
/// Uses `erfc(z / sqrt(2)) / 2` with the classic three-region rational
/// approximation for `erfc`; absolute error is far below 1e-10 everywhere.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

fn erfc(x: f64) -> f64 {
    let y = x.abs();
    let result = if y <= 0.46875 {
        return 1.0 - erf_small(x);
    } else if y <= 4.0 {
        erfc_mid(y)
    } else {
        erfc_large(y)
    };
    if x < 0.0 {
        2.0 - result
    } else {
        result
    }
}

// Rational-approximation coefficients for erf on |x| <= 0.46875.
const ERF_A: [f64; 4] = [
    3.161_123_743_870_565_5,
    1.138_641_541_510_501_6e2,
    3.774_852_376_853_02e2,
    3.209_377_589_138_469_4e3,
];
const ERF_A4: f64 = 1.857_777_061_846_031_5e-1;
const ERF_B: [f64; 4] = [
    2.360_129_095_234_412_2e1,
    2.440_246_379_344_441_7e2,
    1.282_616_526_077_372_3e3,
    2.844_236_833_439_171e3,
];

fn erf_small(x: f64) -> f64 {
    let z = x * x;
    let mut num = ERF_A4 * z;
    let mut den = z;
    for i in 0..3 {
        num = (num + ERF_A[i]) * z;
        den = (den + ERF_B[i]) * z;
    }
    x * (num + ERF_A[3]) / (den + ERF_B[3])
}

// Coefficients for erfc on 0.46875 < x <= 4.
const ERFC_C: [f64; 8] = [
    5.641_884_969_886_701e-1,
    8.883_149_794_388_377,
    6.611_919_063_714_163e1,
    2.986_351_381_974_001e2,
    8.819_522_212_417_69e2,
    1.712_047_612_634_070_7e3,
    2.051_078_377_826_071_6e3,
    1.230_339_354_797_997_2e3,
];
const ERFC_C9: f64 = 2.153_115_354_744_038_3e-8;
const ERFC_D: [f64; 8] = [
    1.574_492_611_070_983_5e1,
    1.176_939_508_913_125e2,
    5.371_811_018_620_099e2,
    1.621_389_574_566_690_3e3,
    3.290_799_235_733_459_7e3,
    4.362_619_090_143_247e3,
    3.439_367_674_143_721_6e3,
    1.230_339_354_803_749_5e3,
];

// exp(-y^2) split into an exact-sixteenth part and a remainder keeps the
// scaling accurate for large y.
fn erfc_exp_scale(y: f64, unscaled: f64) -> f64 {
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq).exp() * (-del).exp() * unscaled
}

fn erfc_mid(y: f64) -> f64 {
    let mut num = ERFC_C9 * y;
    let mut den = y;
    for i in 0..7 {
        num = (num + ERFC_C[i]) * y;
        den = (den + ERFC_D[i]) * y;
    }
    erfc_exp_scale(y, (num + ERFC_C[7]) / (den + ERFC_D[7]))
}

// Coefficients for erfc on x > 4.
const ERFC_P: [f64; 5] = [
    3.053_266_349_612_323_6e-1,
    3.603_448_999_498_044_5e-1,
    1.257_817_261_112_292_6e-1,
    1.608_378_514_874_227_5e-2,
    6.587_491_615_298_378e-4,
];
const ERFC_P6: f64 = 1.631_538_713_730_209_7e-2;
const ERFC_Q: [f64; 5] = [
    2.568_520_192_289_822,
    1.872_952_849_923_460_4,
    5.279_051_029_514_285e-1,
    6.051_834_131_244_132e-2,
    2.335_204_976_268_691_8e-3,
];
const INV_SQRT_PI: f64 = 5.641_895_835_477_563e-1;

fn erfc_large(y: f64) -> f64 {
    let ysq = 1.0 / (y * y);
    let mut num = ERFC_P6 * ysq;
    let mut den = ysq;
    for i in 0..4 {
        num = (num + ERFC_P[i]) * ysq;
        den = (den + ERFC_Q[i]) * ysq;
    }
    let tail = ysq * (num + ERFC_P[4]) / (den + ERFC_Q[4]);
    erfc_exp_scale(y, (INV_SQRT_PI - tail) / y)
}

/// Tests whether coefficient `r1` (sample size `n1`) exceeds `r2` (sample
/// size `n2`), assuming independent samples. Both sizes must exceed 3.
pub fn compare_correlations(r1: f64, r2: f64, n1: usize, n2: usize) -> Result<ComparisonReport> {
    if n1 <= 3 || n2 <= 3 {
        return Err(AvhError::invalid(format!(
            "comparing coefficients needs sample sizes above 3, got {n1} and {n2}"
        )));
    }
    let z1 = fisher_z(r1)?;
    let z2 = fisher_z(r2)?;
    let se = (1.0 / (n1 - 3) as f64 + 1.0 / (n2 - 3) as f64).sqrt();
    let z_value = (z1 - z2) / se;
    Ok(ComparisonReport {
        z1,
        z2,
        z_value,
        p_value: normal_sf(z_value),
    })
}

/// Computes one coefficient by `method` and wraps it with its Fisher
/// transform and a two-sided significance level against zero.
pub fn correlation_report(method: CorrMethod, a: &[f64], b: &[f64]) -> Result<CorrelationReport> {
    let coef = match method {
        CorrMethod::Spearman => spearman(a, b)?,
        CorrMethod::Pearson => pearson(a, b)?,
        CorrMethod::Kendall => kendall_tau(a, b)?,
    };
    let n = a.len();
    if n < 4 {
        return Err(AvhError::invalid(format!(
            "correlation report needs at least 4 pairs, got {n}"
        )));
    }
    let z = fisher_z(coef)?;
    let stat = z.abs() * ((n - 3) as f64).sqrt();
    Ok(CorrelationReport {
        method,
        coef,
        abs_coef: coef.abs(),
        n,
        fisher_z: z,
        p_nonzero: 2.0 * normal_sf(stat),
    })
}

/// Affine rescaling of `values` onto `[0, 1]`. Errors on constant input.
pub fn minmax_scale(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(AvhError::invalid("minmax_scale needs a non-empty input"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(AvhError::invalid("minmax_scale input contains a non-finite value"));
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Err(AvhError::ZeroVariance { arg: "values" });
    }
    Ok(values.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

/// Min-max scaling applied separately inside each group, preserving order.
/// Every group must contain at least two distinct values.
pub fn minmax_scale_by_group(values: &[f64], groups: &[usize]) -> Result<Vec<f64>> {
    validate_paired(values, &groups.iter().map(|&g| g as f64).collect::<Vec<_>>(), 1, "minmax_scale_by_group")?;
    let max_group = groups.iter().copied().max().unwrap_or(0);
    let mut out = vec![0.0; values.len()];
    for g in 0..=max_group {
        let idx: Vec<usize> = (0..values.len()).filter(|&i| groups[i] == g).collect();
        if idx.is_empty() {
            continue;
        }
        let column: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        let scaled = minmax_scale(&column).map_err(|e| match e {
            AvhError::ZeroVariance { .. } => {
                AvhError::degenerate(format!("group {g} has no spread; cannot min-max scale it"))
            }
            other => other,
        })?;
        for (&i, s) in idx.iter().zip(scaled) {
            out[i] = s;
        }
    }
    Ok(out)
}

/// Per-metric summary inside one bin. `std` is the population standard
/// deviation (divisor `count`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinStats {
    pub mean: f64,
    pub std: f64,
}

/// One bin of a [`BinTable`]. `bin` is 1-based; `stats` is `None` exactly
/// when the bin is empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinRow {
    pub bin: usize,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub stats: Option<Vec<BinStats>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinTable {
    pub metric_names: Vec<String>,
    pub rows: Vec<BinRow>,
}

/// Buckets `values` into the intervals given by `edges` (half-open, the last
/// interval closed) and summarizes each metric column per bucket.
///
/// Values outside `[edges[0], edges[last]]` are rejected with a list of the
/// offending positions.
pub fn bin_aggregate(values: &[f64], edges: &[f64], metrics: &[(&str, &[f64])]) -> Result<BinTable> {
    if edges.len() < 2 {
        return Err(AvhError::invalid("bin_aggregate needs at least 2 edges"));
    }
    if edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|e| !e.is_finite()) {
        return Err(AvhError::invalid("bin edges must be finite and strictly increasing"));
    }
    for (name, column) in metrics {
        if column.len() != values.len() {
            return Err(AvhError::ShapeMismatch {
                what: "metric column",
                expected: values.len(),
                actual: column.len(),
            });
        }
        if column.iter().any(|v| !v.is_finite()) {
            return Err(AvhError::invalid(format!("metric `{name}` contains a non-finite value")));
        }
    }
    let nbins = edges.len() - 1;
    let mut assignment = Vec::with_capacity(values.len());
    let mut offenders = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() || v < edges[0] || v > edges[nbins] {
            if offenders.len() < 8 {
                offenders.push(format!("[{i}]={v}"));
            }
            continue;
        }
        let raw = edges.partition_point(|e| *e <= v);
        // partition_point lands one past the lower edge; the top edge folds
        // into the last (closed) bin.
        assignment.push((i, raw.saturating_sub(1).min(nbins - 1)));
    }
    if !offenders.is_empty() {
        return Err(AvhError::invalid(format!(
            "values outside binning range [{}, {}]: {}",
            edges[0],
            edges[nbins],
            offenders.join(", ")
        )));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); nbins];
    for (i, b) in assignment {
        members[b].push(i);
    }
    let rows = members
        .iter()
        .enumerate()
        .map(|(b, idx)| {
            let stats = if idx.is_empty() {
                None
            } else {
                Some(
                    metrics
                        .iter()
                        .map(|(_, column)| {
                            let n = idx.len() as f64;
                            let mean = idx.iter().map(|&i| column[i]).sum::<f64>() / n;
                            let var = idx.iter().map(|&i| (column[i] - mean).powi(2)).sum::<f64>() / n;
                            BinStats { mean, std: var.sqrt() }
                        })
                        .collect(),
                )
            };
            BinRow {
                bin: b + 1,
                lo: edges[b],
                hi: edges[b + 1],
                count: idx.len(),
                stats,
            }
        })
        .collect();
    Ok(BinTable {
        metric_names: metrics.iter().map(|(n, _)| n.to_string()).collect(),
        rows,
    })
}

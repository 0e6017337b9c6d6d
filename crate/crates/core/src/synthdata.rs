//! Seeded synthetic datasets with exact generative posteriors, simulated
//! annotator agreement, domain-shift pairs, feature degradations, and CSV
//! persistence.
//!
//! Because every sample is drawn from a known Gaussian (mixture), the true
//! posterior of the assigned label is available in closed form. "Oracle
//! hardness" (1 minus that posterior) and simulated selection frequency both
//! derive from it, which is what makes desk-scale hardness experiments
//! possible without human annotators.

use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{AvhError, Result};

/// A feature matrix with integer labels and optional generative metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// True per-class posterior at each sample, when the generative model is
    /// known. Rows sum to 1 within 1e-9.
    pub oracle_posterior: Option<Vec<Vec<f64>>>,
    /// Simulated human selection frequency per sample, in [0, 1].
    pub hsf: Option<Vec<f64>>,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let data = Self {
            features,
            labels,
            num_classes,
            oracle_posterior: None,
            hsf: None,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn with_posterior(mut self, posterior: Vec<Vec<f64>>) -> Result<Self> {
        self.oracle_posterior = Some(posterior);
        self.validate()?;
        Ok(self)
    }

    pub fn with_hsf(mut self, hsf: Vec<f64>) -> Result<Self> {
        self.hsf = Some(hsf);
        self.validate()?;
        Ok(self)
    }

    /// 1 minus the posterior of the assigned label, per sample.
    pub fn oracle_hardness(&self) -> Option<Vec<f64>> {
        let posterior = self.oracle_posterior.as_ref()?;
        Some(
            posterior
                .iter()
                .zip(&self.labels)
                .map(|(row, &y)| 1.0 - row[y])
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(AvhError::invalid("dataset needs at least one class"));
        }
        if self.labels.len() != self.features.len() {
            return Err(AvhError::ShapeMismatch {
                what: "labels",
                expected: self.features.len(),
                actual: self.labels.len(),
            });
        }
        let dim = self.dim();
        for (i, row) in self.features.iter().enumerate() {
            if row.len() != dim {
                return Err(AvhError::ShapeMismatch {
                    what: "feature row",
                    expected: dim,
                    actual: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(AvhError::invalid(format!("feature row {i} contains a non-finite value")));
            }
        }
        if let Some(&y) = self.labels.iter().find(|&&y| y >= self.num_classes) {
            return Err(AvhError::ClassIndex {
                index: y,
                classes: self.num_classes,
            });
        }
        if let Some(posterior) = &self.oracle_posterior {
            if posterior.len() != self.len() {
                return Err(AvhError::ShapeMismatch {
                    what: "posterior",
                    expected: self.len(),
                    actual: posterior.len(),
                });
            }
            for (i, row) in posterior.iter().enumerate() {
                if row.len() != self.num_classes {
                    return Err(AvhError::ShapeMismatch {
                        what: "posterior row",
                        expected: self.num_classes,
                        actual: row.len(),
                    });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 || row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(AvhError::invalid(format!(
                        "posterior row {i} is not a distribution (sum {sum})"
                    )));
                }
            }
        }
        if let Some(hsf) = &self.hsf {
            if hsf.len() != self.len() {
                return Err(AvhError::ShapeMismatch {
                    what: "hsf",
                    expected: self.len(),
                    actual: hsf.len(),
                });
            }
            if let Some(v) = hsf.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(AvhError::invalid(format!("hsf value {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Labeled source domain plus unlabeled target features. The target's true
/// labels ride along for evaluation only; nothing in the training path may
/// read them.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPair {
    pub source: LabeledDataset,
    pub target_features: Vec<Vec<f64>>,
    pub target_hidden_labels: Vec<usize>,
}

impl DomainPair {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        let dim = self.source.dim();
        if self.target_features.len() != self.target_hidden_labels.len() {
            return Err(AvhError::ShapeMismatch {
                what: "target labels",
                expected: self.target_features.len(),
                actual: self.target_hidden_labels.len(),
            });
        }
        for row in &self.target_features {
            if row.len() != dim {
                return Err(AvhError::ShapeMismatch {
                    what: "target feature row",
                    expected: dim,
                    actual: row.len(),
                });
            }
        }
        if let Some(&y) = self.target_hidden_labels.iter().find(|&&y| y >= self.source.num_classes) {
            return Err(AvhError::ClassIndex {
                index: y,
                classes: self.source.num_classes,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegradationKind {
    Contrast,
    Noise,
}

/// Feature-space degradation: `contrast` pulls every sample toward the
/// dataset mean by factor `level` in (0, 1]; `noise` adds i.i.d. uniform
/// noise of half-width `level` >= 0.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DegradationSpec {
    pub kind: DegradationKind,
    pub level: f64,
}

/// Parameters for an angularly separated Gaussian mixture on the unit
/// sphere. All class means are unit vectors with identical pairwise angle
/// `separation` (radians, in (0, pi/2]); clouds are isotropic with the given
/// sigma. Requires `dim >= num_classes + 1` so the means fit in an
/// orthonormal frame.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MixtureParams {
    pub num_classes: usize,
    pub dim: usize,
    pub separation: f64,
    pub sigma: f64,
    pub n: usize,
    pub seed: u64,
}

impl MixtureParams {
    fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(AvhError::invalid("mixture needs at least 2 classes"));
        }
        if self.dim < self.num_classes + 1 {
            return Err(AvhError::invalid(format!(
                "mixture with {} classes needs dim >= {}, got {}",
                self.num_classes,
                self.num_classes + 1,
                self.dim
            )));
        }
        if !(self.separation > 0.0 && self.separation <= std::f64::consts::FRAC_PI_2) {
            return Err(AvhError::invalid(format!(
                "separation must lie in (0, pi/2], got {}",
                self.separation
            )));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(AvhError::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.n < self.num_classes {
            return Err(AvhError::invalid(format!(
                "mixture needs at least one sample per class ({} total), got n={}",
                self.num_classes, self.n
            )));
        }
        Ok(())
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    rand_distr::StandardNormal.sample(rng)
}

/// Gram-Schmidt frame of `count` orthonormal vectors in `dim` dimensions.
fn orthonormal_frame(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(count);
    while frame.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
        for basis in &frame {
            let proj = crate::geometry::dot(&v, basis);
            for (x, b) in v.iter_mut().zip(basis) {
                *x -= proj * b;
            }
        }
        let n = crate::geometry::norm(&v);
        // Residual can vanish only for a degenerate draw; retry.
        if n > 1e-8 {
            for x in &mut v {
                *x /= n;
            }
            frame.push(v);
        }
    }
    frame
}

/// Class means for [`gen_mixture`]: `cos(a)*u + sin(a)*e_k` over an
/// orthonormal frame `{u, e_1..e_C}`, where `a` is chosen so every pair of
/// means subtends exactly `separation`.
pub fn mixture_means(params: &MixtureParams) -> Result<Vec<Vec<f64>>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    Ok(means_from_rng(&mut rng, params))
}

fn means_from_rng(rng: &mut ChaCha8Rng, params: &MixtureParams) -> Vec<Vec<f64>> {
    let c = params.num_classes;
    let frame = orthonormal_frame(rng, c + 1, params.dim);
    // cos(angle between means) = cos(alpha)^2, so alpha = acos(sqrt(cos sep)).
    let alpha = params.separation.cos().sqrt().acos();
    let (ca, sa) = (alpha.cos(), alpha.sin());
    (0..c)
        .map(|k| {
            frame[0]
                .iter()
                .zip(&frame[k + 1])
                .map(|(u, e)| ca * u + sa * e)
                .collect()
        })
        .collect()
}

/// Log-sum-exp posterior over isotropic Gaussian components with the given
/// log-priors, evaluated at `x`.
fn gaussian_posterior(x: &[f64], means: &[Vec<f64>], sigma: f64, log_priors: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = means
        .iter()
        .zip(log_priors)
        .map(|(m, lp)| {
            let sq: f64 = x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
            lp - sq / (2.0 * sigma * sigma)
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

fn sample_mixture(
    rng: &mut ChaCha8Rng,
    means: &[Vec<f64>],
    sigma: f64,
    n: usize,
    num_classes: usize,
) -> (Vec<Vec<f64>>, Vec<usize>, Vec<Vec<f64>>) {
    let noise = Normal::new(0.0, sigma).expect("validated sigma");
    // Round-robin assignment keeps class counts within one of each other.
    let labels: Vec<usize> = (0..n).map(|i| i % num_classes).collect();
    let mut counts = vec![0usize; num_classes];
    for &y in &labels {
        counts[y] += 1;
    }
    let log_priors: Vec<f64> = counts.iter().map(|&c| ((c as f64) / (n as f64)).ln()).collect();
    let mut features = Vec::with_capacity(n);
    let mut posterior = Vec::with_capacity(n);
    for &y in &labels {
        let x: Vec<f64> = means[y].iter().map(|m| m + noise.sample(rng)).collect();
        posterior.push(gaussian_posterior(&x, means, sigma, &log_priors));
        features.push(x);
    }
    (features, labels, posterior)
}

/// Gaussian mixture with angularly separated unit-norm class means. The
/// assigned label is the sampled component, which for overlapping clouds can
/// disagree with the posterior argmax; those are exactly the hard samples.
pub fn gen_mixture(params: &MixtureParams) -> Result<LabeledDataset> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let means = means_from_rng(&mut rng, params);
    let (features, labels, posterior) =
        sample_mixture(&mut rng, &means, params.sigma, params.n, params.num_classes);
    LabeledDataset::new(features, labels, params.num_classes)?.with_posterior(posterior)
}

/// Two isotropic Gaussian classes, `n/2` samples each, every sample
/// normalized to unit norm. The posterior is evaluated at the raw
/// (pre-normalization) point from the two component densities with equal
/// priors.
pub fn gen_two_gaussians(
    n: usize,
    dim: usize,
    mean1: &[f64],
    mean2: &[f64],
    sigma: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(AvhError::invalid(format!("n must be even and positive, got {n}")));
    }
    if mean1.len() != dim || mean2.len() != dim {
        return Err(AvhError::ShapeMismatch {
            what: "gaussian mean",
            expected: dim,
            actual: if mean1.len() != dim { mean1.len() } else { mean2.len() },
        });
    }
    if mean1 == mean2 {
        return Err(AvhError::invalid("the two class means must be distinct"));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(AvhError::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let means = [mean1.to_vec(), mean2.to_vec()];
    let log_priors = [0.5f64.ln(), 0.5f64.ln()];
    let noise = Normal::new(0.0, sigma).expect("validated sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut posterior = Vec::with_capacity(n);
    for i in 0..n {
        let y = if i < n / 2 { 0 } else { 1 };
        let raw: Vec<f64> = means[y].iter().map(|m| m + noise.sample(&mut rng)).collect();
        let norm = crate::geometry::norm(&raw);
        if norm == 0.0 {
            return Err(AvhError::ZeroNorm { arg: "sampled feature" });
        }
        posterior.push(gaussian_posterior(&raw, &means, sigma, &log_priors));
        features.push(raw.iter().map(|v| v / norm).collect());
        labels.push(y);
    }
    LabeledDataset::new(features, labels, 2)?.with_posterior(posterior)
}

/// Simulated human selection frequency: `m` annotators each draw a class
/// from the sample's posterior row; the result is the fraction who picked
/// the assigned label. Values are exact multiples of `1/m`.
pub fn simulate_hsf(
    posterior: &[Vec<f64>],
    labels: &[usize],
    m: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(AvhError::invalid("annotator count m must be at least 1"));
    }
    if posterior.len() != labels.len() {
        return Err(AvhError::ShapeMismatch {
            what: "labels",
            expected: posterior.len(),
            actual: labels.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(labels.len());
    for (row, &y) in posterior.iter().zip(labels) {
        if y >= row.len() {
            return Err(AvhError::ClassIndex {
                index: y,
                classes: row.len(),
            });
        }
        let mut hits = 0usize;
        for _ in 0..m {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = row.len() - 1;
            for (c, p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = c;
                    break;
                }
            }
            if pick == y {
                hits += 1;
            }
        }
        out.push(hits as f64 / m as f64);
    }
    Ok(out)
}

/// Source/target pair from one mixture: the target re-samples the same
/// mixture after rotating every class mean by `rotation_angle` in the fixed
/// coordinate plane (0, 1) and translating it by `mean_shift` along the last
/// axis. `seed` drives the target draw only, so the source is exactly
/// `gen_mixture(base)`.
pub fn gen_domain_shift(
    base: &MixtureParams,
    rotation_angle: f64,
    mean_shift: f64,
    seed: u64,
) -> Result<DomainPair> {
    base.validate()?;
    if !rotation_angle.is_finite() || !mean_shift.is_finite() {
        return Err(AvhError::invalid("rotation and shift must be finite"));
    }
    let mut source_rng = ChaCha8Rng::seed_from_u64(base.seed);
    let means = means_from_rng(&mut source_rng, base);
    let (features, labels, posterior) =
        sample_mixture(&mut source_rng, &means, base.sigma, base.n, base.num_classes);
    let source = LabeledDataset::new(features, labels, base.num_classes)?.with_posterior(posterior)?;

    let (sin, cos) = rotation_angle.sin_cos();
    let shifted: Vec<Vec<f64>> = means
        .iter()
        .map(|m| {
            let mut t = m.clone();
            t[0] = m[0] * cos - m[1] * sin;
            t[1] = m[0] * sin + m[1] * cos;
            let last = t.len() - 1;
            t[last] += mean_shift;
            t
        })
        .collect();
    let mut target_rng = ChaCha8Rng::seed_from_u64(seed);
    let (target_features, target_hidden_labels, _) =
        sample_mixture(&mut target_rng, &shifted, base.sigma, base.n, base.num_classes);
    let pair = DomainPair {
        source,
        target_features,
        target_hidden_labels,
    };
    pair.validate()?;
    Ok(pair)
}

/// Applies a degradation to a feature matrix. Contrast interpolates toward
/// the per-feature dataset mean (`x' = c*x + (1-c)*mean`), which keeps the
/// dataset mean itself unchanged; noise adds i.i.d. `U(-level, level)`.
pub fn degrade(features: &[Vec<f64>], spec: &DegradationSpec, seed: u64) -> Result<Vec<Vec<f64>>> {
    if features.is_empty() {
        return Ok(Vec::new());
    }
    let dim = features[0].len();
    if features.iter().any(|r| r.len() != dim) {
        return Err(AvhError::ShapeMismatch {
            what: "feature row",
            expected: dim,
            actual: features.iter().find(|r| r.len() != dim).unwrap().len(),
        });
    }
    match spec.kind {
        DegradationKind::Contrast => {
            let c = spec.level;
            if !(c > 0.0 && c <= 1.0) {
                return Err(AvhError::invalid(format!(
                    "contrast level must lie in (0, 1], got {c}"
                )));
            }
            let n = features.len() as f64;
            let mut mean = vec![0.0; dim];
            for row in features {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v / n;
                }
            }
            Ok(features
                .iter()
                .map(|row| row.iter().zip(&mean).map(|(v, m)| c * v + (1.0 - c) * m).collect())
                .collect())
        }
        DegradationKind::Noise => {
            let level = spec.level;
            if !(level >= 0.0) || !level.is_finite() {
                return Err(AvhError::invalid(format!(
                    "noise level must be non-negative, got {level}"
                )));
            }
            if level == 0.0 {
                return Ok(features.to_vec());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(features
                .iter()
                .map(|row| row.iter().map(|v| v + rng.random_range(-level..level)).collect())
                .collect())
        }
    }
}

/// Formats a float with 17 significant digits so the text round-trips to
/// the identical f64. All CSV artifacts use this form.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the dataset as CSV: a `# classes=C` metadata line, the header
/// `id,label,hsf,f0..`, then one row per sample. The hsf field is left
/// empty when absent. The posterior is not written here; see
/// [`save_posterior`].
pub fn save_dataset(data: &LabeledDataset, path: &Path) -> Result<()> {
    data.validate()?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# classes={}", data.num_classes)?;
    let header: Vec<String> = ["id", "label", "hsf"]
        .into_iter()
        .map(String::from)
        .chain((0..data.dim()).map(|j| format!("f{j}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..data.len() {
        let hsf = data.hsf.as_ref().map_or(String::new(), |h| fmt_float(h[i]));
        let feats: Vec<String> = data.features[i].iter().map(|v| fmt_float(*v)).collect();
        writeln!(out, "{},{},{},{}", i, data.labels[i], hsf, feats.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the posterior sidecar CSV `id,p0,...,p{C-1}`. Errors if the
/// dataset carries no posterior.
pub fn save_posterior(data: &LabeledDataset, path: &Path) -> Result<()> {
    let posterior = data
        .oracle_posterior
        .as_ref()
        .ok_or_else(|| AvhError::invalid("dataset has no posterior to save"))?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<String> = std::iter::once("id".to_string())
        .chain((0..data.num_classes).map(|c| format!("p{c}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (i, row) in posterior.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| fmt_float(*v)).collect();
        writeln!(out, "{},{}", i, cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> AvhError {
    AvhError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

struct CsvLines {
    /// (1-based physical line number, content) with comments stripped.
    rows: Vec<(usize, String)>,
    declared_classes: Option<usize>,
}

fn read_csv_lines(path: &Path) -> Result<CsvLines> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    let mut declared_classes = None;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(v) = comment.strip_prefix("classes=") {
                let c: usize = v
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("bad class count `{v}`")))?;
                declared_classes = Some(c);
            }
            continue;
        }
        rows.push((lineno, line.to_string()));
    }
    Ok(CsvLines {
        rows,
        declared_classes,
    })
}

/// Reads a dataset CSV written by [`save_dataset`] (or following the same
/// schema). The hsf column may be absent entirely or left empty on every
/// row. Ids must run 0..n-1 in file order so sidecar files join by
/// position. Malformed input fails with the offending line number.
pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    let csv = read_csv_lines(path)?;
    let mut rows = csv.rows.into_iter();
    let (header_line, header) = rows
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file: missing header"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "id" || cols[1] != "label" {
        return Err(parse_err(path, header_line, "header must start with `id,label`"));
    }
    let has_hsf = cols[2] == "hsf";
    let feat_start = if has_hsf { 3 } else { 2 };
    let dim = cols.len() - feat_start;
    if dim == 0 {
        return Err(parse_err(path, header_line, "header declares no feature columns"));
    }
    for (j, col) in cols[feat_start..].iter().enumerate() {
        if *col != format!("f{j}") {
            return Err(parse_err(
                path,
                header_line,
                format!("feature columns must be f0..f{}, found `{col}`", dim - 1),
            ));
        }
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut hsf: Vec<f64> = Vec::new();
    let mut hsf_empty = 0usize;
    for (lineno, line) in rows {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols.len() {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {} fields, got {}", cols.len(), cells.len()),
            ));
        }
        let id: usize = cells[0]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad id `{}`", cells[0])))?;
        if id != features.len() {
            return Err(parse_err(
                path,
                lineno,
                format!("ids must run 0..n-1 in order; expected {}, got {id}", features.len()),
            ));
        }
        let label: usize = cells[1]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad label `{}`", cells[1])))?;
        if let Some(c) = csv.declared_classes {
            if label >= c {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("label {label} out of range for declared {c} classes"),
                ));
            }
        }
        if has_hsf {
            if cells[2].is_empty() {
                hsf_empty += 1;
            } else {
                let v: f64 = cells[2]
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("bad hsf `{}`", cells[2])))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(parse_err(path, lineno, format!("hsf {v} outside [0, 1]")));
                }
                hsf.push(v);
            }
            if hsf_empty > 0 && !hsf.is_empty() {
                return Err(parse_err(path, lineno, "hsf must be empty on all rows or none"));
            }
        }
        let mut row = Vec::with_capacity(dim);
        for cell in &cells[feat_start..] {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad feature value `{cell}`")))?;
            if !v.is_finite() {
                return Err(parse_err(path, lineno, format!("non-finite feature value `{cell}`")));
            }
            row.push(v);
        }
        features.push(row);
        labels.push(label);
    }
    if features.is_empty() {
        return Err(parse_err(path, header_line, "dataset has no rows"));
    }
    let num_classes = csv
        .declared_classes
        .unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
    let data = LabeledDataset::new(features, labels, num_classes)?;
    if !hsf.is_empty() {
        data.with_hsf(hsf)
    } else {
        Ok(data)
    }
}

/// Reads a posterior sidecar CSV. Attach the result with
/// [`LabeledDataset::with_posterior`], which validates row sums.
pub fn load_posterior(path: &Path) -> Result<Vec<Vec<f64>>> {
    let csv = read_csv_lines(path)?;
    let mut rows = csv.rows.into_iter();
    let (header_line, header) = rows
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file: missing header"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[0] != "id" {
        return Err(parse_err(path, header_line, "header must be `id,p0,...`"));
    }
    for (j, col) in cols[1..].iter().enumerate() {
        if *col != format!("p{j}") {
            return Err(parse_err(
                path,
                header_line,
                format!("posterior columns must be p0..p{}, found `{col}`", cols.len() - 2),
            ));
        }
    }
    let mut out = Vec::new();
    for (lineno, line) in rows {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols.len() {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {} fields, got {}", cols.len(), cells.len()),
            ));
        }
        let id: usize = cells[0]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad id `{}`", cells[0])))?;
        if id != out.len() {
            return Err(parse_err(
                path,
                lineno,
                format!("ids must run 0..n-1 in order; expected {}, got {id}", out.len()),
            ));
        }
        let mut row = Vec::with_capacity(cols.len() - 1);
        for cell in &cells[1..] {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad probability `{cell}`")))?;
            row.push(v);
        }
        out.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_gaussians_splits_labels_evenly_and_normalizes() {
        let m1 = [1.0, 0.0, 0.0];
        let m2 = [0.0, 1.0, 0.0];
        let d = gen_two_gaussians(2000, 3, &m1, &m2, 0.5, 7).unwrap();
        assert_eq!(d.len(), 2000);
        assert_eq!(d.labels.iter().filter(|&&y| y == 0).count(), 1000);
        assert_eq!(d.labels.iter().filter(|&&y| y == 1).count(), 1000);
        for row in &d.features {
            assert!((crate::geometry::norm(row) - 1.0).abs() < 1e-12);
        }
        for row in d.oracle_posterior.as_ref().unwrap() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn two_gaussians_posterior_is_one_hot_in_the_small_sigma_limit() {
        let m1 = [1.0, 0.0];
        let m2 = [-1.0, 0.0];
        let d = gen_two_gaussians(40, 2, &m1, &m2, 1e-4, 3).unwrap();
        for (row, &y) in d.oracle_posterior.as_ref().unwrap().iter().zip(&d.labels) {
            assert!(row[y] > 1.0 - 1e-12);
        }
    }

    #[test]
    fn two_gaussians_rejects_bad_arguments() {
        let m = [1.0, 0.0];
        assert!(gen_two_gaussians(5, 2, &m, &m, 0.5, 0).is_err());
        assert!(gen_two_gaussians(4, 2, &m, &m, 0.5, 0).is_err());
        let m2 = [0.0, 1.0];
        assert!(gen_two_gaussians(4, 2, &m, &m2, 0.0, 0).is_err());
        assert!(gen_two_gaussians(4, 3, &m, &m2, 0.5, 0).is_err());
    }

    fn mix(sep: f64, sigma: f64, n: usize, seed: u64) -> MixtureParams {
        MixtureParams {
            num_classes: 4,
            dim: 6,
            separation: sep,
            sigma,
            n,
            seed,
        }
    }

    #[test]
    fn mixture_means_have_unit_norm_and_exact_separation() {
        let params = mix(0.9, 0.3, 40, 5);
        let means = mixture_means(&params).unwrap();
        assert_eq!(means.len(), 4);
        for m in &means {
            assert!((crate::geometry::norm(m) - 1.0).abs() < 1e-12);
        }
        for i in 0..means.len() {
            for j in (i + 1)..means.len() {
                let angle = crate::geometry::angular_distance(&means[i], &means[j]).unwrap();
                assert!((angle - 0.9).abs() < 1e-9, "pair ({i},{j}) angle {angle}");
            }
        }
    }

    #[test]
    fn separated_mixture_is_solved_by_nearest_mean() {
        let params = mix(std::f64::consts::FRAC_PI_2, 0.05, 400, 11);
        let d = gen_mixture(&params).unwrap();
        let means = mixture_means(&params).unwrap();
        let mut correct = 0;
        for (x, &y) in d.features.iter().zip(&d.labels) {
            let nearest = (0..means.len())
                .min_by(|&a, &b| {
                    let da: f64 = x.iter().zip(&means[a]).map(|(u, v)| (u - v).powi(2)).sum();
                    let db: f64 = x.iter().zip(&means[b]).map(|(u, v)| (u - v).powi(2)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            if nearest == y {
                correct += 1;
            }
        }
        assert!(correct as f64 / d.len() as f64 > 0.99);
    }

    #[test]
    fn mixture_hardness_grows_with_sigma() {
        let mut last = -1.0;
        for sigma in [0.3, 0.8, 1.5] {
            let d = gen_mixture(&mix(0.9, sigma, 3000, 2)).unwrap();
            let hardness = d.oracle_hardness().unwrap();
            let mean = hardness.iter().sum::<f64>() / hardness.len() as f64;
            assert!(mean > last, "sigma {sigma}: {mean} <= {last}");
            last = mean;
        }
    }

    #[test]
    fn mixture_is_deterministic_per_seed() {
        let params = mix(0.8, 0.5, 60, 123);
        assert_eq!(gen_mixture(&params).unwrap(), gen_mixture(&params).unwrap());
        let mut other = params;
        other.seed = 124;
        assert_ne!(gen_mixture(&params).unwrap(), gen_mixture(&other).unwrap());
    }

    #[test]
    fn mixture_rejects_tight_dimensions() {
        let mut params = mix(0.8, 0.5, 60, 1);
        params.dim = 4;
        assert!(gen_mixture(&params).is_err());
    }

    #[test]
    fn hsf_is_exact_multiples_of_one_over_m() {
        let d = gen_mixture(&mix(0.9, 0.8, 300, 9)).unwrap();
        let hsf = simulate_hsf(d.oracle_posterior.as_ref().unwrap(), &d.labels, 7, 21).unwrap();
        for v in &hsf {
            let scaled = v * 7.0;
            assert!((scaled - scaled.round()).abs() < 1e-9);
            assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn hsf_one_hot_row_always_selects_the_label() {
        let posterior = vec![vec![0.0, 1.0, 0.0]];
        let hsf = simulate_hsf(&posterior, &[1], 10, 4).unwrap();
        assert_eq!(hsf, vec![1.0]);
    }

    #[test]
    fn hsf_uniform_two_class_row_concentrates_at_half() {
        let m = 4000;
        let posterior = vec![vec![0.5, 0.5]];
        let hsf = simulate_hsf(&posterior, &[0], m, 17).unwrap();
        let bound = 3.0 / (2.0 * (m as f64).sqrt());
        assert!((hsf[0] - 0.5).abs() < bound, "hsf {} bound {bound}", hsf[0]);
    }

    #[test]
    fn hsf_means_are_rank_consistent_with_posteriors() {
        // Three fixed samples with label posteriors 0.9 > 0.6 > 0.3; mean
        // HSF over many seeds must preserve that order.
        let posterior = vec![
            vec![0.9, 0.1],
            vec![0.6, 0.4],
            vec![0.3, 0.7],
        ];
        let labels = [0, 0, 0];
        let mut sums = [0.0f64; 3];
        for seed in 0..250u64 {
            let hsf = simulate_hsf(&posterior, &labels, 9, seed).unwrap();
            for (s, v) in sums.iter_mut().zip(&hsf) {
                *s += v;
            }
        }
        assert!(sums[0] > sums[1] && sums[1] > sums[2], "sums {sums:?}");
    }

    #[test]
    fn domain_shift_zero_transform_keeps_source_law() {
        let base = mix(0.9, 0.4, 120, 31);
        let pair = gen_domain_shift(&base, 0.0, 0.0, 99).unwrap();
        assert_eq!(pair.source, gen_mixture(&base).unwrap());
        assert_eq!(pair.target_features.len(), 120);
        // Same mixture law: per-class target sample means stay near the
        // class means of the source.
        let means = mixture_means(&base).unwrap();
        for (k, mean) in means.iter().enumerate() {
            let members: Vec<&Vec<f64>> = pair
                .target_features
                .iter()
                .zip(&pair.target_hidden_labels)
                .filter(|(_, &y)| y == k)
                .map(|(x, _)| x)
                .collect();
            let n = members.len() as f64;
            let centroid: Vec<f64> = (0..base.dim)
                .map(|j| members.iter().map(|x| x[j]).sum::<f64>() / n)
                .collect();
            let dist: f64 = centroid
                .iter()
                .zip(mean)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(dist < 0.3, "class {k} centroid drifted {dist}");
        }
    }

    #[test]
    fn domain_shift_is_deterministic_and_validates() {
        let base = mix(0.9, 0.4, 60, 5);
        let a = gen_domain_shift(&base, 0.5, 0.2, 77).unwrap();
        let b = gen_domain_shift(&base, 0.5, 0.2, 77).unwrap();
        assert_eq!(a, b);
        assert!(a.target_hidden_labels.iter().all(|&y| y < base.num_classes));
    }

    #[test]
    fn contrast_hand_case_and_identity() {
        let x = vec![vec![0.0, 2.0], vec![2.0, 0.0]];
        let spec = DegradationSpec {
            kind: DegradationKind::Contrast,
            level: 0.5,
        };
        let got = degrade(&x, &spec, 0).unwrap();
        assert_eq!(got, vec![vec![0.5, 1.5], vec![1.5, 0.5]]);

        let identity = DegradationSpec {
            kind: DegradationKind::Contrast,
            level: 1.0,
        };
        assert_eq!(degrade(&x, &identity, 0).unwrap(), x);

        let zero = DegradationSpec {
            kind: DegradationKind::Contrast,
            level: 0.0,
        };
        assert!(degrade(&x, &zero, 0).is_err());
    }

    #[test]
    fn contrast_preserves_the_dataset_mean() {
        let x = vec![
            vec![1.0, -2.0, 3.0],
            vec![0.5, 8.0, -1.0],
            vec![-4.0, 0.25, 9.0],
        ];
        let spec = DegradationSpec {
            kind: DegradationKind::Contrast,
            level: 0.3,
        };
        let got = degrade(&x, &spec, 0).unwrap();
        for j in 0..3 {
            let before: f64 = x.iter().map(|r| r[j]).sum::<f64>() / 3.0;
            let after: f64 = got.iter().map(|r| r[j]).sum::<f64>() / 3.0;
            assert!((before - after).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_zero_is_identity_and_level_bounds_displacement() {
        let x = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let zero = DegradationSpec {
            kind: DegradationKind::Noise,
            level: 0.0,
        };
        assert_eq!(degrade(&x, &zero, 5).unwrap(), x);
        let spec = DegradationSpec {
            kind: DegradationKind::Noise,
            level: 0.25,
        };
        let got = degrade(&x, &spec, 5).unwrap();
        for (a, b) in x.iter().flatten().zip(got.iter().flatten()) {
            assert!((a - b).abs() < 0.25);
        }
        assert_eq!(got, degrade(&x, &spec, 5).unwrap());
    }

    #[test]
    fn dataset_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let d = gen_mixture(&mix(0.9, 0.6, 50, 13)).unwrap();
        let hsf = simulate_hsf(d.oracle_posterior.as_ref().unwrap(), &d.labels, 10, 3).unwrap();
        let d = d.with_hsf(hsf).unwrap();

        let data_path = dir.path().join("data.csv");
        let post_path = dir.path().join("posterior.csv");
        save_dataset(&d, &data_path).unwrap();
        save_posterior(&d, &post_path).unwrap();

        let loaded = load_dataset(&data_path).unwrap();
        assert_eq!(loaded.features, d.features);
        assert_eq!(loaded.labels, d.labels);
        assert_eq!(loaded.num_classes, d.num_classes);
        assert_eq!(loaded.hsf, d.hsf);

        let posterior = load_posterior(&post_path).unwrap();
        let attached = loaded.with_posterior(posterior).unwrap();
        assert_eq!(attached.oracle_posterior, d.oracle_posterior);
    }

    #[test]
    fn dataset_without_hsf_roundtrips_with_empty_column() {
        let dir = tempfile::tempdir().unwrap();
        let d = LabeledDataset::new(vec![vec![1.0, 2.0], vec![3.0, 4.0]], vec![0, 1], 2).unwrap();
        let path = dir.path().join("d.csv");
        save_dataset(&d, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded.hsf, None);
        assert_eq!(loaded.features, d.features);
    }

    #[test]
    fn loader_accepts_files_without_hsf_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "id,label,f0,f1\n0,0,1.0,2.0\n1,1,3.0,4.0\n").unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded.hsf, None);
        assert_eq!(loaded.num_classes, 2);
        assert_eq!(loaded.features[1], vec![3.0, 4.0]);
    }

    #[test]
    fn loader_reports_line_numbers_for_malformed_rows() {
        let dir = tempfile::tempdir().unwrap();

        let ragged = dir.path().join("ragged.csv");
        std::fs::write(&ragged, "id,label,f0,f1\n0,0,1.0,2.0\n1,1,3.0\n").unwrap();
        match load_dataset(&ragged) {
            Err(AvhError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }

        let bad_value = dir.path().join("bad.csv");
        std::fs::write(&bad_value, "id,label,f0\n0,0,oops\n").unwrap();
        match load_dataset(&bad_value) {
            Err(AvhError::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("oops"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }

        let bad_label = dir.path().join("label.csv");
        std::fs::write(&bad_label, "# classes=2\nid,label,f0\n0,0,1.0\n1,2,1.0\n").unwrap();
        match load_dataset(&bad_label) {
            Err(AvhError::Parse { line, msg, .. }) => {
                assert_eq!(line, 4);
                assert!(msg.contains("label 2"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }

        let bad_header = dir.path().join("header.csv");
        std::fs::write(&bad_header, "id,label,x0\n0,0,1.0\n").unwrap();
        assert!(matches!(load_dataset(&bad_header), Err(AvhError::Parse { line: 1, .. })));
    }

    #[test]
    fn validate_rejects_inconsistent_metadata() {
        let base = LabeledDataset::new(vec![vec![1.0], vec![2.0]], vec![0, 1], 2).unwrap();
        assert!(base.clone().with_posterior(vec![vec![0.7, 0.3]]).is_err());
        assert!(base
            .clone()
            .with_posterior(vec![vec![0.7, 0.2], vec![0.5, 0.5]])
            .is_err());
        assert!(base.clone().with_hsf(vec![0.5, 1.5]).is_err());
        assert!(LabeledDataset::new(vec![vec![1.0]], vec![3], 2).is_err());
    }
}

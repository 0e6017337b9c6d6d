//! Class-balanced self-training across a domain shift. Each round ranks
//! the model's target-set scores per predicted class, cuts thresholds at a
//! growing portion, pseudo-labels the confident samples, and retrains on
//! source plus selection. Two selection gates are provided: the softmax
//! probability itself, and the angular-confidence variant that re-gates
//! the same argmax by AVC.
//!
//! Hidden target labels exist only for evaluation: the labeling path never
//! sees them.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{AvhError, Result};
use crate::geometry::{self, ClassifierWeights, HardnessReport};
use crate::synthdata::{fmt_float, DomainPair};
use crate::tinynet::{self, Model, ModelSpec, TrainConfig};

/// Per-class selection thresholds for one round. `beta` is empty in
/// softmax mode and holds the AVC cuts in AVH mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionThresholds {
    pub portion: f64,
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
}

/// One assignment per target sample: a class index, or not selected this
/// round. Feasible by construction (one-hot or nothing).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoLabels {
    pub assignments: Vec<Option<usize>>,
}

impl PseudoLabels {
    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn selected_count(&self) -> usize {
        self.assignments.iter().filter(|a| a.is_some()).count()
    }

    /// Indices of selected samples, in sample order.
    pub fn selected_indices(&self) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.map(|_| i))
            .collect()
    }
}

fn validate_score_matrix(scores: &[Vec<f64>], what: &'static str) -> Result<usize> {
    if scores.is_empty() {
        return Err(AvhError::invalid(format!("{what} matrix is empty")));
    }
    let c = scores[0].len();
    if c < 2 {
        return Err(AvhError::invalid(format!("{what} rows need at least 2 classes")));
    }
    for row in scores {
        if row.len() != c {
            return Err(AvhError::ShapeMismatch {
                what,
                expected: c,
                actual: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(AvhError::invalid(format!("{what} contains a non-finite value")));
        }
    }
    Ok(c)
}

fn check_portion(portion: f64) -> Result<()> {
    if !(portion > 0.0 && portion <= 1.0) {
        return Err(AvhError::invalid(format!("portion must lie in (0, 1], got {portion}")));
    }
    Ok(())
}

/// Threshold at a 1-indexed rank: sort the class's scores descending and
/// take position `ceil(p * n_k)`; an empty class gets 1.0, which the strict
/// selection gate can never pass.
fn ranked_threshold(mut class_scores: Vec<f64>, portion: f64) -> f64 {
    if class_scores.is_empty() {
        return 1.0;
    }
    class_scores.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
    let pos = (portion * class_scores.len() as f64).ceil() as usize;
    class_scores[pos.clamp(1, class_scores.len()) - 1]
}

/// Per-class probability cuts: for each class `k`, rank the max softmax
/// probabilities of the samples whose argmax is `k` (descending) and read
/// off the value at the portion point.
pub fn compute_lambda(probs: &[Vec<f64>], portion: f64) -> Result<Vec<f64>> {
    check_portion(portion)?;
    let c = validate_score_matrix(probs, "probability")?;
    let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); c];
    for row in probs {
        let k = tinynet::argmax(row);
        per_class[k].push(row[k]);
    }
    Ok(per_class
        .into_iter()
        .map(|scores| ranked_threshold(scores, portion))
        .collect())
}

/// Per-class AVC cuts: the same ranking scheme applied to `avc[k]` of the
/// samples predicted to class `k`.
pub fn compute_beta(
    avc_scores: &[Vec<f64>],
    predicted: &[usize],
    portion: f64,
) -> Result<Vec<f64>> {
    check_portion(portion)?;
    let c = validate_score_matrix(avc_scores, "avc")?;
    if predicted.len() != avc_scores.len() {
        return Err(AvhError::ShapeMismatch {
            what: "predicted classes",
            expected: avc_scores.len(),
            actual: predicted.len(),
        });
    }
    let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); c];
    for (row, &k) in avc_scores.iter().zip(predicted) {
        if k >= c {
            return Err(AvhError::ClassIndex { index: k, classes: c });
        }
        per_class[k].push(row[k]);
    }
    Ok(per_class
        .into_iter()
        .map(|scores| ranked_threshold(scores, portion))
        .collect())
}

fn check_thresholds(values: &[f64], c: usize, what: &'static str, allow_zero: bool) -> Result<()> {
    if values.len() != c {
        return Err(AvhError::ShapeMismatch {
            what,
            expected: c,
            actual: values.len(),
        });
    }
    for &v in values {
        let positive_ok = if allow_zero { v >= 0.0 } else { v > 0.0 };
        if !positive_ok || !v.is_finite() {
            return Err(AvhError::invalid(format!("{what} entries must be positive, got {v}")));
        }
    }
    Ok(())
}

fn argmax_ratio(row: &[f64], lambda: &[f64]) -> usize {
    let mut best = 0;
    let mut best_ratio = row[0] / lambda[0];
    for (c, (&p, &l)) in row.iter().zip(lambda).enumerate().skip(1) {
        let ratio = p / l;
        if ratio > best_ratio {
            best = c;
            best_ratio = ratio;
        }
    }
    best
}

/// Softmax-gated solver: assign `k = argmax_c p_c / lambda_c` (lowest index
/// wins ties) and keep the assignment only when `p_k > lambda_k` strictly.
pub fn pseudo_label_softmax(probs: &[Vec<f64>], lambda: &[f64]) -> Result<PseudoLabels> {
    let c = validate_score_matrix(probs, "probability")?;
    check_thresholds(lambda, c, "lambda", false)?;
    let assignments = probs
        .iter()
        .map(|row| {
            let k = argmax_ratio(row, lambda);
            (row[k] > lambda[k]).then_some(k)
        })
        .collect();
    Ok(PseudoLabels { assignments })
}

/// AVC-gated solver: the class assignment is the same `argmax p_c /
/// lambda_c`, but a sample is kept only when `avc[k] > beta_k` strictly.
/// `beta = 0` everywhere disables the gate entirely.
pub fn pseudo_label_avh(
    probs: &[Vec<f64>],
    avc_scores: &[Vec<f64>],
    lambda: &[f64],
    beta: &[f64],
) -> Result<PseudoLabels> {
    let c = validate_score_matrix(probs, "probability")?;
    if avc_scores.len() != probs.len() {
        return Err(AvhError::ShapeMismatch {
            what: "avc rows",
            expected: probs.len(),
            actual: avc_scores.len(),
        });
    }
    validate_score_matrix(avc_scores, "avc")?;
    check_thresholds(lambda, c, "lambda", false)?;
    check_thresholds(beta, c, "beta", true)?;
    let assignments = probs
        .iter()
        .zip(avc_scores)
        .map(|(row, avc)| {
            let k = argmax_ratio(row, lambda);
            (avc[k] > beta[k]).then_some(k)
        })
        .collect();
    Ok(PseudoLabels { assignments })
}

/// Aggregates over one round's selected samples, either for a single class
/// or for the whole selection. Empty selections keep `None` means.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRoundStats {
    pub selected: usize,
    pub tp_rate: Option<f64>,
    pub mean_avh: Option<f64>,
    pub mean_confidence: Option<f64>,
    pub mean_norm: Option<f64>,
}

impl ClassRoundStats {
    fn empty() -> Self {
        Self {
            selected: 0,
            tp_rate: None,
            mean_avh: None,
            mean_confidence: None,
            mean_norm: None,
        }
    }
}

/// One self-training round: the portion used, per-class selection stats
/// (index = class), the pooled `all` row, and the retrained model's target
/// accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundStats {
    pub round: usize,
    pub portion: f64,
    pub per_class: Vec<ClassRoundStats>,
    pub all: ClassRoundStats,
    pub target_accuracy: f64,
}

struct StatAccumulator {
    selected: usize,
    correct: usize,
    avh: f64,
    confidence: f64,
    norm: f64,
}

impl StatAccumulator {
    fn new() -> Self {
        Self {
            selected: 0,
            correct: 0,
            avh: 0.0,
            confidence: 0.0,
            norm: 0.0,
        }
    }

    fn add(&mut self, correct: bool, report: &HardnessReport) {
        self.selected += 1;
        self.correct += correct as usize;
        self.avh += report.avh;
        self.confidence += report.model_confidence;
        self.norm += report.norm;
    }

    fn finish(self) -> ClassRoundStats {
        if self.selected == 0 {
            return ClassRoundStats::empty();
        }
        let n = self.selected as f64;
        ClassRoundStats {
            selected: self.selected,
            tp_rate: Some(self.correct as f64 / n),
            mean_avh: Some(self.avh / n),
            mean_confidence: Some(self.confidence / n),
            mean_norm: Some(self.norm / n),
        }
    }
}

/// Table-5-style statistics: true-positive rate of the pseudo-labels
/// against the hidden labels, and means of AVH, confidence, and norm over
/// the selected set. `reports[i]` must be present exactly when sample `i`
/// was selected, scored at its pseudo-label.
pub fn selection_stats(
    pseudo: &PseudoLabels,
    hidden_labels: &[usize],
    reports: &[Option<HardnessReport>],
    num_classes: usize,
) -> Result<(Vec<ClassRoundStats>, ClassRoundStats)> {
    if hidden_labels.len() != pseudo.len() || reports.len() != pseudo.len() {
        return Err(AvhError::ShapeMismatch {
            what: "selection stats inputs",
            expected: pseudo.len(),
            actual: hidden_labels.len().min(reports.len()),
        });
    }
    let mut per_class: Vec<StatAccumulator> = (0..num_classes).map(|_| StatAccumulator::new()).collect();
    let mut all = StatAccumulator::new();
    for ((assignment, &hidden), report) in
        pseudo.assignments.iter().zip(hidden_labels).zip(reports)
    {
        match (assignment, report) {
            (Some(k), Some(report)) => {
                if *k >= num_classes {
                    return Err(AvhError::ClassIndex {
                        index: *k,
                        classes: num_classes,
                    });
                }
                per_class[*k].add(*k == hidden, report);
                all.add(*k == hidden, report);
            }
            (None, None) => {}
            _ => {
                return Err(AvhError::invalid(
                    "reports must be present exactly for the selected samples",
                ));
            }
        }
    }
    Ok((
        per_class.into_iter().map(StatAccumulator::finish).collect(),
        all.finish(),
    ))
}

/// Which score gates the selection each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelfTrainMode {
    Softmax,
    Avh,
}

/// Portion schedule: round `r` (1-based) uses
/// `min(p0 + (r - 1) * dp, p_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PortionSchedule {
    pub p0: f64,
    pub dp: f64,
    pub p_max: f64,
}

impl Default for PortionSchedule {
    fn default() -> Self {
        Self {
            p0: 0.2,
            dp: 0.05,
            p_max: 0.5,
        }
    }
}

impl PortionSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.p0 > 0.0 && self.p0 <= 1.0) {
            return Err(AvhError::invalid("p0 must lie in (0, 1]"));
        }
        if !(self.dp >= 0.0) || !self.dp.is_finite() {
            return Err(AvhError::invalid("dp must be non-negative"));
        }
        if !(self.p_max >= self.p0 && self.p_max <= 1.0) {
            return Err(AvhError::invalid("p_max must lie in [p0, 1]"));
        }
        Ok(())
    }

    pub fn portion_for_round(&self, round: usize) -> f64 {
        (self.p0 + (round.saturating_sub(1)) as f64 * self.dp).min(self.p_max)
    }
}

#[derive(Debug, Clone)]
pub struct SelfTrainOutcome {
    pub model: Model,
    pub rounds: Vec<RoundStats>,
}

/// Softmax probabilities, AVC rows, and per-sample embeddings for a target
/// set under a fixed model. Dead-ReLU samples (zero embedding) get uniform
/// AVC, which the strict beta gate treats as unselectable at any cut above
/// 1/C.
#[allow(clippy::type_complexity)]
fn score_target(
    model: &Model,
    weights: &ClassifierWeights,
    features: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut probs = Vec::with_capacity(features.len());
    let mut avcs = Vec::with_capacity(features.len());
    let mut embeddings = Vec::with_capacity(features.len());
    let c = weights.num_classes();
    for x in features {
        let (embedding, logits) = tinynet::forward_sample(model, x)?;
        probs.push(geometry::softmax(&logits));
        if geometry::embedding_norm(&embedding) == 0.0 {
            avcs.push(vec![1.0 / c as f64; c]);
        } else {
            avcs.push(geometry::avc(&embedding, weights)?);
        }
        embeddings.push(embedding);
    }
    Ok((probs, avcs, embeddings))
}

/// Runs `rounds` alternations of pseudo-labeling and retraining, starting
/// from `source_model` (already trained on the source set). Round `r`
/// retrains with `config` reseeded to `config.seed + r` and warm-starts
/// from the previous round's weights. Hidden target labels feed only the
/// reported statistics.
pub fn self_train_from(
    source_model: &Model,
    pair: &DomainPair,
    mode: SelfTrainMode,
    rounds: usize,
    schedule: &PortionSchedule,
    config: &TrainConfig,
) -> Result<SelfTrainOutcome> {
    pair.validate()?;
    schedule.validate()?;
    config.validate()?;
    if rounds == 0 {
        return Err(AvhError::invalid("self-training needs at least one round"));
    }
    if pair.target_features.is_empty() {
        return Err(AvhError::invalid("target set is empty"));
    }
    let c = source_model.num_classes();
    if pair.source.num_classes != c {
        return Err(AvhError::ShapeMismatch {
            what: "source classes",
            expected: c,
            actual: pair.source.num_classes,
        });
    }

    let mut model = source_model.clone();
    let mut stats = Vec::with_capacity(rounds);
    for round in 1..=rounds {
        let portion = schedule.portion_for_round(round);
        let weights = model.classifier()?;
        let (probs, avcs, embeddings) = score_target(&model, &weights, &pair.target_features)?;
        let lambda = compute_lambda(&probs, portion)?;
        let pseudo = match mode {
            SelfTrainMode::Softmax => pseudo_label_softmax(&probs, &lambda)?,
            SelfTrainMode::Avh => {
                let predicted: Vec<usize> = probs.iter().map(|row| tinynet::argmax(row)).collect();
                let beta = compute_beta(&avcs, &predicted, portion)?;
                pseudo_label_avh(&probs, &avcs, &lambda, &beta)?
            }
        };

        // Stats are taken at the pre-retraining model, scored against the
        // pseudo-label each sample was assigned.
        let reports: Vec<Option<HardnessReport>> = pseudo
            .assignments
            .iter()
            .enumerate()
            .map(|(i, assignment)| {
                assignment
                    .map(|k| {
                        Ok(HardnessReport {
                            avh: geometry::avh_or_uniform(&embeddings[i], &weights, k)?,
                            avc: avcs[i].clone(),
                            model_confidence: probs[i][k],
                            norm: geometry::embedding_norm(&embeddings[i]),
                        })
                    })
                    .transpose()
            })
            .collect::<Result<_>>()?;
        let (per_class, all) =
            selection_stats(&pseudo, &pair.target_hidden_labels, &reports, c)?;

        let mut selected_features = Vec::with_capacity(pseudo.selected_count());
        let mut selected_labels = Vec::with_capacity(pseudo.selected_count());
        for (i, assignment) in pseudo.assignments.iter().enumerate() {
            if let Some(k) = assignment {
                selected_features.push(pair.target_features[i].clone());
                selected_labels.push(*k);
            }
        }
        let round_config = TrainConfig {
            seed: config.seed.wrapping_add(round as u64),
            ..*config
        };
        let outcome = tinynet::train_weighted(
            &model,
            &pair.source,
            &selected_features,
            &selected_labels,
            &lambda,
            &round_config,
        )?;
        model = outcome.model;

        let target_accuracy =
            tinynet::accuracy(&model, &pair.target_features, &pair.target_hidden_labels)?;
        stats.push(RoundStats {
            round,
            portion,
            per_class,
            all,
            target_accuracy,
        });
    }
    Ok(SelfTrainOutcome { model, rounds: stats })
}

/// Initializes from `model_spec`, trains on the source set, then hands off
/// to [`self_train_from`].
pub fn self_train(
    model_spec: &ModelSpec,
    pair: &DomainPair,
    mode: SelfTrainMode,
    rounds: usize,
    schedule: &PortionSchedule,
    config: &TrainConfig,
) -> Result<SelfTrainOutcome> {
    pair.validate()?;
    let model = tinynet::init_model(model_spec)?;
    let source_model = tinynet::train(&model, &pair.source, config, |_, _| {})?;
    self_train_from(&source_model, pair, mode, rounds, schedule, config)
}

/// Writes round logs as CSV: one row per (round, class) plus an `all` row
/// per round. Empty-selection cells stay blank.
pub fn write_round_log<W: Write>(rounds: &[RoundStats], out: &mut W) -> Result<()> {
    writeln!(
        out,
        "round,portion,class,selected,tp_rate,mean_avh,mean_conf,mean_norm,target_acc"
    )?;
    let cell = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
    for round in rounds {
        let mut write_row = |class: &str, s: &ClassRoundStats| -> Result<()> {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                round.round,
                fmt_float(round.portion),
                class,
                s.selected,
                cell(s.tp_rate),
                cell(s.mean_avh),
                cell(s.mean_confidence),
                cell(s.mean_norm),
                fmt_float(round.target_accuracy),
            )?;
            Ok(())
        };
        for (k, s) in round.per_class.iter().enumerate() {
            write_row(&k.to_string(), s)?;
        }
        write_row("all", &round.all)?;
    }
    Ok(())
}

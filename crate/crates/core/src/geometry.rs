//! Angular scoring of embeddings against a bias-free classifier layer.
//!
//! The central quantity is the normalized angular hardness score: the angle
//! between an embedding and its target class row, divided by the sum of the
//! angles to every class row. Because angles ignore vector length, the score
//! is invariant to positive rescaling of the embedding, while softmax
//! confidence on the same logits is not. Everything in this module is
//! deterministic and allocation-light.

use crate::error::{AvhError, Result};

/// Bias-free final-layer weights, one row per class.
///
/// Invariants enforced at construction: at least two classes, all rows share
/// one positive dimension, and every row has positive Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierWeights {
    rows: Vec<Vec<f64>>,
}

impl ClassifierWeights {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(AvhError::invalid(format!(
                "classifier needs at least 2 classes, got {}",
                rows.len()
            )));
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(AvhError::invalid("classifier rows must be non-empty"));
        }
        for (k, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(AvhError::ShapeMismatch {
                    what: "classifier row",
                    expected: dim,
                    actual: row.len(),
                });
            }
            if norm(row) == 0.0 {
                return Err(AvhError::ZeroNorm { arg: "weight row" });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(AvhError::invalid(format!(
                    "classifier row {k} contains a non-finite value"
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn num_classes(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Bias-free logits `w_k . x` for every class.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(AvhError::ShapeMismatch {
                what: "embedding",
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(self.rows.iter().map(|r| dot(r, x)).collect())
    }

    /// Angle between `x` and every class row.
    pub fn angles(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_embedding(x, self.dim())?;
        self.rows.iter().map(|r| angular_distance(x, r)).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Euclidean norm of an embedding.
pub fn embedding_norm(x: &[f64]) -> f64 {
    norm(x)
}

fn check_embedding(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(AvhError::ShapeMismatch {
            what: "embedding",
            expected: dim,
            actual: x.len(),
        });
    }
    if norm(x) == 0.0 {
        return Err(AvhError::ZeroNorm { arg: "x" });
    }
    Ok(())
}

/// Angle in radians between two non-zero vectors, in `[0, pi]`.
///
/// The normalized dot product is clamped into `[-1, 1]` before `acos`, so
/// identical vectors return exactly 0 and antipodal vectors exactly pi even
/// when rounding pushes the ratio slightly out of range.
pub fn angular_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(AvhError::ShapeMismatch {
            what: "angular_distance operands",
            expected: u.len(),
            actual: v.len(),
        });
    }
    let nu = norm(u);
    if nu == 0.0 {
        return Err(AvhError::ZeroNorm { arg: "u" });
    }
    let nv = norm(v);
    if nv == 0.0 {
        return Err(AvhError::ZeroNorm { arg: "v" });
    }
    let c = (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0);
    Ok(c.acos())
}

/// Normalized angular hardness of `x` for target class `y`:
/// `A(x, w_y) / sum_k A(x, w_k)`.
///
/// Lies in `[0, 1)`; values toward `1/C` and above mean the target row is no
/// closer than the competing rows. Errors if every row is collinear with `x`
/// (the angle sum vanishes).
pub fn avh(x: &[f64], weights: &ClassifierWeights, y: usize) -> Result<f64> {
    if y >= weights.num_classes() {
        return Err(AvhError::ClassIndex {
            index: y,
            classes: weights.num_classes(),
        });
    }
    let angles = weights.angles(x)?;
    let denom: f64 = angles.iter().sum();
    if denom <= 0.0 {
        return Err(AvhError::degenerate(
            "every class row is collinear with the embedding; angle sum is zero",
        ));
    }
    Ok(angles[y] / denom)
}

/// [`avh`], except that a zero embedding scores the uniform `1/C` instead
/// of erroring. ReLU stacks can zero out a sample's entire embedding (every
/// hidden unit inactive); such a sample has no direction, so the angular
/// score is maximally ambiguous rather than undefined. Class-index errors
/// still surface.
pub fn avh_or_uniform(x: &[f64], weights: &ClassifierWeights, y: usize) -> Result<f64> {
    if y >= weights.num_classes() {
        return Err(AvhError::ClassIndex {
            index: y,
            classes: weights.num_classes(),
        });
    }
    if norm(x) == 0.0 {
        return Ok(1.0 / weights.num_classes() as f64);
    }
    avh(x, weights, y)
}

/// Angular confidence distribution over classes:
/// `(pi - A(x, w_c)) / sum_k (pi - A(x, w_k))`.
///
/// Components are non-negative and sum to 1. Errors if the embedding is
/// antipodal to every class row (the mass sum vanishes).
pub fn avc(x: &[f64], weights: &ClassifierWeights) -> Result<Vec<f64>> {
    let angles = weights.angles(x)?;
    let mass: Vec<f64> = angles.iter().map(|a| std::f64::consts::PI - a).collect();
    let denom: f64 = mass.iter().sum();
    if denom <= 0.0 {
        return Err(AvhError::degenerate(
            "embedding is antipodal to every class row; angular mass is zero",
        ));
    }
    Ok(mass.iter().map(|m| m / denom).collect())
}

/// Numerically stable softmax (max-logit subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Softmax probability of class `y` under the given logits.
pub fn model_confidence(logits: &[f64], y: usize) -> Result<f64> {
    if logits.is_empty() {
        return Err(AvhError::invalid("model_confidence needs non-empty logits"));
    }
    if y >= logits.len() {
        return Err(AvhError::ClassIndex {
            index: y,
            classes: logits.len(),
        });
    }
    Ok(softmax(logits)[y])
}

/// One point of a norm sweep: the embedding scaled by `alpha`, scored both
/// ways.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub confidence: f64,
    pub avh: f64,
}

/// Evaluates softmax confidence and the angular hardness score of
/// `alpha * x` for each scale factor. Every `alpha` must be positive and
/// finite.
pub fn norm_sweep(
    x: &[f64],
    weights: &ClassifierWeights,
    y: usize,
    alphas: &[f64],
) -> Result<Vec<SweepPoint>> {
    check_embedding(x, weights.dim())?;
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(AvhError::invalid(format!(
                "norm sweep scale must be positive and finite, got {alpha}"
            )));
        }
        let scaled: Vec<f64> = x.iter().map(|v| v * alpha).collect();
        let logits = weights.logits(&scaled)?;
        out.push(SweepPoint {
            alpha,
            confidence: model_confidence(&logits, y)?,
            avh: avh(&scaled, weights, y)?,
        });
    }
    Ok(out)
}

/// All per-sample hardness signals in one place.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct HardnessReport {
    pub avh: f64,
    pub avc: Vec<f64>,
    pub model_confidence: f64,
    pub norm: f64,
}

/// Scores one embedding against the classifier for target class `y`.
pub fn hardness_report(x: &[f64], weights: &ClassifierWeights, y: usize) -> Result<HardnessReport> {
    let logits = weights.logits(x)?;
    Ok(HardnessReport {
        avh: avh(x, weights, y)?,
        avc: avc(x, weights)?,
        model_confidence: model_confidence(&logits, y)?,
        norm: norm(x),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn w2(rows: Vec<Vec<f64>>) -> ClassifierWeights {
        ClassifierWeights::new(rows).unwrap()
    }

    #[test]
    fn angular_distance_axis_cases() {
        let e1 = [1.0, 0.0];
        let e2 = [0.0, 1.0];
        let neg_e1 = [-1.0, 0.0];
        assert_eq!(angular_distance(&e1, &e1).unwrap(), 0.0);
        assert_eq!(angular_distance(&e1, &neg_e1).unwrap(), PI);
        assert_eq!(angular_distance(&e1, &e2).unwrap(), FRAC_PI_2);
        let diag = [1.0, 1.0];
        assert!((angular_distance(&e1, &diag).unwrap() - FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn angular_distance_rejects_zero_vectors() {
        let z = [0.0, 0.0];
        let e1 = [1.0, 0.0];
        assert!(matches!(
            angular_distance(&z, &e1),
            Err(AvhError::ZeroNorm { arg: "u" })
        ));
        assert!(matches!(
            angular_distance(&e1, &z),
            Err(AvhError::ZeroNorm { arg: "v" })
        ));
    }

    #[test]
    fn angular_distance_clamps_rounding_overshoot() {
        // Nearly-parallel vectors whose normalized dot product rounds above 1.
        let u = [0.1 + 0.2, 0.3];
        let v = [0.3, 0.3];
        let a = angular_distance(&u, &v).unwrap();
        assert!(a >= 0.0 && a.is_finite());
    }

    #[test]
    fn avh_two_class_hand_value() {
        // Target row at pi/4 from x, competitor antipodal: (pi/4)/(pi/4 + pi).
        let s = 0.5f64.sqrt();
        let w = w2(vec![vec![s, s], vec![-1.0, 0.0]]);
        let x = [1.0, 0.0];
        let got = avh(&x, &w, 0).unwrap();
        assert!((got - 0.2).abs() < 1e-12);
        let other = avh(&x, &w, 1).unwrap();
        assert!((other - 0.8).abs() < 1e-12);
    }

    #[test]
    fn avc_antipodal_row_gets_zero_mass() {
        let s = 0.5f64.sqrt();
        let w = w2(vec![vec![s, s], vec![-1.0, 0.0]]);
        let x = [1.0, 0.0];
        let scores = avc(&x, &w).unwrap();
        assert!((scores[0] - 1.0).abs() < 1e-12);
        assert!(scores[1].abs() < 1e-12);
    }

    #[test]
    fn avh_degenerate_when_all_rows_collinear() {
        let w = w2(vec![vec![2.0, 0.0], vec![3.0, 0.0]]);
        let x = [1.0, 0.0];
        assert!(matches!(avh(&x, &w, 0), Err(AvhError::Degenerate { .. })));
    }

    #[test]
    fn avc_degenerate_when_all_rows_antipodal() {
        let w = w2(vec![vec![-2.0, 0.0], vec![-3.0, 0.0]]);
        let x = [1.0, 0.0];
        assert!(matches!(avc(&x, &w), Err(AvhError::Degenerate { .. })));
    }

    #[test]
    fn avh_rejects_out_of_range_class() {
        let w = w2(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let x = [1.0, 1.0];
        assert!(matches!(
            avh(&x, &w, 2),
            Err(AvhError::ClassIndex { index: 2, classes: 2 })
        ));
    }

    #[test]
    fn uniform_logits_give_uniform_confidence() {
        let logits = [0.3; 4];
        assert!((model_confidence(&logits, 2).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn softmax_handles_large_logits() {
        let p = softmax(&[1000.0, 1000.0, 999.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > p[2]);
    }

    #[test]
    fn classifier_rejects_bad_shapes() {
        assert!(ClassifierWeights::new(vec![vec![1.0, 0.0]]).is_err());
        assert!(ClassifierWeights::new(vec![vec![1.0, 0.0], vec![1.0]]).is_err());
        assert!(ClassifierWeights::new(vec![vec![1.0, 0.0], vec![0.0, 0.0]]).is_err());
    }

    #[test]
    fn norm_sweep_constant_avh_and_rising_confidence() {
        // Target row slightly closer than the competitor; equal row norms.
        let t1 = FRAC_PI_4 - 0.05;
        let t2 = FRAC_PI_4 + 0.05;
        let w = w2(vec![
            vec![t1.cos(), t1.sin()],
            vec![t2.cos(), -t2.sin()],
        ]);
        let x = [1.0, 0.0];
        let alphas: Vec<f64> = (0..40).map(|i| 0.1 * 1.2f64.powi(i)).collect();
        let points = norm_sweep(&x, &w, 0, &alphas).unwrap();
        let expect = t1 / (t1 + t2);
        assert!((expect - 0.46817).abs() < 1e-5);
        for p in &points {
            assert!((p.avh - expect).abs() < 1e-12);
        }
        for pair in points.windows(2) {
            assert!(pair[1].confidence > pair[0].confidence);
        }
    }

    #[test]
    fn norm_sweep_rejects_nonpositive_alpha() {
        let w = w2(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let x = [1.0, 1.0];
        assert!(norm_sweep(&x, &w, 0, &[1.0, 0.0]).is_err());
        assert!(norm_sweep(&x, &w, 0, &[-2.0]).is_err());
    }

    #[test]
    fn hardness_report_is_consistent_with_parts() {
        let w = w2(vec![vec![1.0, 0.2, 0.0], vec![-0.3, 1.0, 0.1]]);
        let x = [0.4, -0.7, 2.0];
        let r = hardness_report(&x, &w, 1).unwrap();
        assert_eq!(r.avh, avh(&x, &w, 1).unwrap());
        assert_eq!(r.avc, avc(&x, &w).unwrap());
        assert_eq!(r.norm, embedding_norm(&x));
        let logits = w.logits(&x).unwrap();
        assert_eq!(r.model_confidence, model_confidence(&logits, 1).unwrap());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn vec_and_weights() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, usize)> {
            (2usize..6, 2usize..5).prop_flat_map(|(dim, classes)| {
                let x = proptest::collection::vec(-10.0f64..10.0, dim);
                let rows =
                    proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, dim), classes);
                (x, rows, 0..classes)
            })
        }

        fn usable(x: &[f64], rows: &[Vec<f64>]) -> bool {
            norm(x) > 1e-6 && rows.iter().all(|r| norm(r) > 1e-6)
        }

        proptest! {
            #[test]
            fn avh_ignores_positive_scaling((x, rows, y) in vec_and_weights(), alpha in 1e-3f64..1e3) {
                prop_assume!(usable(&x, &rows));
                let w = ClassifierWeights::new(rows).unwrap();
                // acos amplifies last-ulp cosine differences without bound
                // near 0 and pi, so keep the property to generic positions.
                let angles = w.angles(&x);
                prop_assume!(angles.is_ok());
                prop_assume!(angles
                    .unwrap()
                    .iter()
                    .all(|a| *a > 1e-3 && *a < std::f64::consts::PI - 1e-3));
                let base = avh(&x, &w, y).unwrap();
                let scaled: Vec<f64> = x.iter().map(|v| v * alpha).collect();
                let scaled_score = avh(&scaled, &w, y).unwrap();
                prop_assert!((scaled_score - base).abs() <= 1e-12);
            }

            #[test]
            fn avc_is_a_distribution((x, rows, _y) in vec_and_weights()) {
                prop_assume!(usable(&x, &rows));
                let w = ClassifierWeights::new(rows).unwrap();
                let scores = avc(&x, &w);
                prop_assume!(scores.is_ok());
                let scores = scores.unwrap();
                prop_assert!(scores.iter().all(|s| *s >= 0.0));
                prop_assert!((scores.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }

            #[test]
            fn angular_distance_is_symmetric(
                u in proptest::collection::vec(-5.0f64..5.0, 3),
                v in proptest::collection::vec(-5.0f64..5.0, 3),
            ) {
                prop_assume!(norm(&u) > 1e-6 && norm(&v) > 1e-6);
                let a = angular_distance(&u, &v).unwrap();
                let b = angular_distance(&v, &u).unwrap();
                prop_assert!((a - b).abs() <= 1e-12);
                prop_assert!((0.0..=std::f64::consts::PI).contains(&a));
            }
        }
    }
}

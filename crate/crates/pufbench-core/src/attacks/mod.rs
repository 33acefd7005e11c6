//! Modeling attacks: logistic-regression with resilient backpropagation,
//! a multilayer perceptron, a reliability-based evolution strategy, and a
//! hybrid of the first and third.

mod cmaes;
mod hybrid;
mod lr;
mod mlp;
mod model;

pub use cmaes::{CmaesConfig, EsCandidate, cmaes_reliability_attack};
pub use hybrid::{HybridConfig, hybrid_attack, hybrid_loss_grad};
pub use lr::{LrConfig, lr_attack};
pub use mlp::{MlpConfig, MlpModel, mlp_attack, mlp_loss_grad};
pub use model::{SoftOaxModel, lr_loss_grad, soft_response_probability};

use crate::crp::CrpDataset;
use crate::error::{Error, Result};

/// Anything that maps a feature vector to P(response = 1).
pub trait ResponseModel {
    fn response_probability(&self, phi: &crate::challenge::FeatureVector) -> Result<f64>;
}

/// Outcome of one attack invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    /// Test accuracy of the best trial.
    pub accuracy: f64,
    /// True iff accuracy > 0.9 or < 0.1 (a sign-flipped model still counts).
    pub converged: bool,
    pub wall_time: f64,
    /// For divide-and-conquer runs: index of the member the learned model
    /// matched (order: OR block, AND block, XOR block).
    pub attributed_member: Option<usize>,
    pub trial_accuracies: Vec<f64>,
}

impl AttackReport {
    pub(crate) fn from_accuracy(
        accuracy: f64,
        wall_time: f64,
        attributed_member: Option<usize>,
        trial_accuracies: Vec<f64>,
    ) -> Self {
        Self {
            accuracy,
            converged: convergence_rule(accuracy),
            wall_time,
            attributed_member,
            trial_accuracies,
        }
    }
}

/// A model counts as converged when it agrees with (or perfectly disagrees
/// with) the target: accuracy above 90% or below 10%.
pub fn convergence_rule(accuracy: f64) -> bool {
    accuracy > 0.9 || accuracy < 0.1
}

/// Sample Pearson correlation, computed in a single streaming pass. The
/// two-pass formula lives in [`crate::oracle::reference_pearson`] so the two
/// can check each other.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::InvalidParameter(
            "correlation needs at least 2 observations".into(),
        ));
    }
    let n = a.len() as f64;
    // pivot on the first observation to keep the one-pass sums from
    // cancelling catastrophically
    let (pa, pb) = (a[0], b[0]);
    let (mut sa, mut sb, mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x - pa, y - pb);
        sa += x;
        sb += y;
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    let var_a = saa - sa * sa / n;
    let var_b = sbb - sb * sb / n;
    if var_a <= 0.0 || var_b <= 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok(((sab - sa * sb / n) / (var_a * var_b).sqrt()).clamp(-1.0, 1.0))
}

/// Fraction of test responses matched by thresholding the model's
/// probability at 0.5.
pub fn evaluate_accuracy(model: &impl ResponseModel, test: &CrpDataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut hits = 0usize;
    for (c, &r) in test.challenges.iter().zip(&test.responses) {
        let p = model.response_probability(&crate::challenge::transform_challenge(c))?;
        if u8::from(p >= 0.5) == r {
            hits += 1;
        }
    }
    Ok(hits as f64 / test.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSeed;
    use rand::Rng;

    #[test]
    fn pearson_self_and_negated() {
        let v = [0.3, -1.2, 4.0, 2.2, 0.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((pearson(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_hand_value() {
        let rho = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((rho - 0.8).abs() < 1e-12);
    }

    #[test]
    fn pearson_rejects_constant() {
        assert!(matches!(
            pearson(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation)
        ));
    }

    #[test]
    fn pearson_rejects_short_input() {
        assert!(pearson(&[1.0], &[2.0]).is_err());
    }

    #[test]
    fn pearson_agrees_with_reference_implementation() {
        let mut rng = RngSeed::new(300).rng();
        for _ in 0..1000 {
            let len = rng.random_range(2..40);
            let a: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
            let b: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
            let lhs = pearson(&a, &b);
            let rhs = crate::oracle::reference_pearson(&a, &b);
            match (lhs, rhs) {
                (Ok(x), Ok(y)) => assert!((x - y).abs() < 1e-12, "{x} vs {y}"),
                (Err(_), Err(_)) => {}
                (x, y) => panic!("disagreement: {x:?} vs {y:?}"),
            }
        }
    }

    #[test]
    fn convergence_rule_thresholds() {
        assert!(convergence_rule(0.95));
        assert!(convergence_rule(0.08));
        assert!(!convergence_rule(0.9));
        assert!(!convergence_rule(0.5));
        assert!(!convergence_rule(0.1));
    }
}

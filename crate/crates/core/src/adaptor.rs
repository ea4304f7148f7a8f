//! Trainable payload attached to each codebook entry.
//!
//! The payload is a vector regressed onto a per-edit target with plain
//! gradient descent on `½‖v − target‖²`, using the same loop shape as the
//! per-edit value training: a step budget, a loss threshold, and a patience
//! counter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vector;

/// Opaque name of the fact an entry stores.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntryLabel(pub String);

impl EntryLabel {
    pub fn new(s: impl Into<String>) -> Self {
        EntryLabel(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for EntryLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EntryLabel {
    fn from(s: &str) -> Self {
        EntryLabel(s.to_owned())
    }
}

impl From<String> for EntryLabel {
    fn from(s: String) -> Self {
        EntryLabel(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptorConfig {
    pub learning_rate: f64,
    /// Step budget `U`.
    pub max_steps: usize,
    pub loss_threshold: f64,
    /// Consecutive non-improving steps tolerated before giving up.
    pub patience: usize,
}

impl Default for AdaptorConfig {
    fn default() -> Self {
        AdaptorConfig {
            learning_rate: 0.1,
            max_steps: 50,
            loss_threshold: 1e-2,
            patience: 3,
        }
    }
}

impl AdaptorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite())
            || self.max_steps == 0
            || !(self.loss_threshold > 0.0)
            || self.patience == 0
        {
            return Err(Error::InvalidParams(format!(
                "adaptor settings must all be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// What an edit asks the payload to become.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EditTarget {
    pub label: EntryLabel,
    pub target_vector: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Payload {
    pub value: Vector,
    /// True when the final loss is within the configured threshold.
    pub trained: bool,
    pub final_loss: f64,
    pub steps_used: usize,
}

impl Payload {
    /// Cold start: the zero vector.
    pub fn zeros(dim: usize) -> Self {
        Payload {
            value: Vector::zeros(dim),
            trained: false,
            final_loss: f64::INFINITY,
            steps_used: 0,
        }
    }
}

fn half_sq_dist(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

/// Gradient descent on `½‖v − target‖²` starting from `init.value`.
///
/// Each step applies `v ← v − lr·(v − target)` and then checks the loss;
/// training stops once the loss is at or below the threshold, after
/// `patience` consecutive steps without a new best loss, or after `U` steps.
pub fn train_payload(init: &Payload, target: &EditTarget, cfg: &AdaptorConfig) -> Result<Payload> {
    cfg.validate()?;
    let goal = target.target_vector.as_slice();
    if init.value.dim() != goal.len() {
        return Err(Error::DimensionMismatch {
            expected: init.value.dim(),
            found: goal.len(),
        });
    }
    let mut v = init.value.clone();
    let mut best = half_sq_dist(v.as_slice(), goal);
    let mut stale = 0;
    let mut loss = best;
    let mut steps = 0;
    for step in 1..=cfg.max_steps {
        steps = step;
        for (x, g) in v.as_mut_slice().iter_mut().zip(goal) {
            *x -= cfg.learning_rate * (*x - g);
        }
        loss = half_sq_dist(v.as_slice(), goal);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        if loss <= cfg.loss_threshold {
            break;
        }
        if loss < best {
            best = loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(Payload {
        value: v,
        trained: loss <= cfg.loss_threshold,
        final_loss: loss,
        steps_used: steps,
    })
}

/// `½‖payload − target‖²`.
pub fn evaluate_payload(p: &Payload, target: &EditTarget) -> f64 {
    half_sq_dist(p.value.as_slice(), target.target_vector.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn target(v: Vec<f64>) -> EditTarget {
        EditTarget {
            label: "y".into(),
            target_vector: Vector::new(v).unwrap(),
        }
    }

    /// Steps until ½·(1−lr)^{2s}·‖t‖² first drops to the threshold, by
    /// walking the recursion directly.
    fn closed_form_steps(lr: f64, start_loss: f64, threshold: f64) -> usize {
        let mut loss = start_loss;
        let mut s = 0;
        while loss > threshold {
            loss *= (1.0 - lr) * (1.0 - lr);
            s += 1;
        }
        s
    }

    #[test]
    fn already_optimal() {
        let t = target(vec![0.3, -0.4]);
        let init = Payload { value: t.target_vector.clone(), ..Payload::zeros(2) };
        let p = train_payload(&init, &t, &AdaptorConfig::default()).unwrap();
        assert_eq!(p.final_loss, 0.0);
        assert!(p.steps_used <= 1);
        assert!(p.trained);
    }

    #[test]
    fn geometric_decay_step_count() {
        let t = target(vec![1.0, 0.0, 0.0]);
        let p = train_payload(&Payload::zeros(3), &t, &AdaptorConfig::default()).unwrap();
        assert_eq!(closed_form_steps(0.1, 0.5, 1e-2), 19);
        assert_eq!(p.steps_used, 19);
        assert!((p.final_loss - 0.5 * 0.9f64.powi(38)).abs() < 1e-15);
        assert!(p.trained);
    }

    #[test]
    fn overshooting_rate_is_flagged() {
        let t = target(vec![1.0, 0.0]);
        let cfg = AdaptorConfig { learning_rate: 2.5, ..Default::default() };
        match train_payload(&Payload::zeros(2), &t, &cfg) {
            Ok(p) => {
                assert!(!p.trained);
                assert_eq!(p.steps_used, 3);
            }
            Err(e) => assert!(matches!(e, Error::NonFiniteLoss { .. })),
        }
    }

    #[test]
    fn huge_rate_reports_non_finite_loss() {
        let t = target(vec![1.0, 0.0]);
        let cfg = AdaptorConfig { learning_rate: 1e200, patience: 1000, max_steps: 50, ..Default::default() };
        assert!(matches!(
            train_payload(&Payload::zeros(2), &t, &cfg),
            Err(Error::NonFiniteLoss { .. })
        ));
    }

    #[test]
    fn evaluate_examples() {
        let t = target(vec![1.0, 0.0]);
        assert_eq!(evaluate_payload(&Payload { value: t.target_vector.clone(), ..Payload::zeros(2) }, &t), 0.0);
        assert_eq!(evaluate_payload(&Payload::zeros(2), &t), 0.5);
        let near = Payload { value: Vector::new(vec![1.1, 0.0]).unwrap(), ..Payload::zeros(2) };
        assert!((evaluate_payload(&near, &t) - 0.005).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let t = target(vec![1.0, 0.0]);
        assert!(matches!(
            train_payload(&Payload::zeros(3), &t, &AdaptorConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn contraction_matches_closed_form(
            goal in proptest::collection::vec(-2.0f64..2.0, 1..10),
            lr in 0.01f64..1.99,
        ) {
            let t = target(goal.clone());
            let cfg = AdaptorConfig { learning_rate: lr, max_steps: 1, loss_threshold: 1e-300, patience: 1 };
            let p = train_payload(&Payload::zeros(goal.len()), &t, &cfg).unwrap();
            let start = goal.iter().map(|x| x * x).sum::<f64>().sqrt();
            let after = (2.0 * p.final_loss).sqrt();
            prop_assert!((after - (1.0 - lr).abs() * start).abs() <= 1e-12);
        }

        #[test]
        fn resuming_never_worsens(goal in proptest::collection::vec(-2.0f64..2.0, 1..10), steps in 1usize..30) {
            let t = target(goal.clone());
            let cfg = AdaptorConfig { max_steps: steps, ..Default::default() };
            let first = train_payload(&Payload::zeros(goal.len()), &t, &cfg).unwrap();
            let second = train_payload(&first, &t, &cfg).unwrap();
            prop_assert!(second.final_loss <= first.final_loss);
        }
    }
}

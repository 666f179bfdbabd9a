use serde::{Deserialize, Serialize};

use crate::autodiff::sigmoid;
use crate::rank::ranks_descending;

/// `σ(δ₁·(0.5 − rank/D)) − 0.5` with rank 1 for the largest reward.
/// A single-element batch falls back to reward minus mean, i.e. zero.
pub fn rescale_rewards(raw: &[f64], delta1: f64) -> Vec<f64> {
    let d = raw.len();
    if d == 1 {
        return vec![0.0];
    }
    ranks_descending(raw)
        .into_iter()
        .map(|r| sigmoid(delta1 * (0.5 - r as f64 / d as f64)) - 0.5)
        .collect()
}

/// `σ(δ₂·(0.5 − rank(t)/T)) − 0.5 + R̄` with rank 1 for the largest value.
pub fn rescale_values(values: &[f64], rescaled_reward: f64, delta2: f64) -> Vec<f64> {
    let t = values.len();
    ranks_descending(values)
        .into_iter()
        .map(|r| sigmoid(delta2 * (0.5 - r as f64 / t as f64)) - 0.5 + rescaled_reward)
        .collect()
}

/// Exponential moving average of past mean rewards: `b₁ = 0`,
/// `b_m = λ·Q̄_{m−1} + (1 − λ)·b_{m−1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineTracker {
    pub lambda: f64,
    pub value: f64,
    /// Index of the iteration the current value applies to.
    pub iteration: usize,
}

impl BaselineTracker {
    pub fn new(lambda: f64) -> Self {
        BaselineTracker { lambda, value: 0.0, iteration: 1 }
    }

    /// Fold in the mean reward of the iteration just finished.
    pub fn update(&mut self, mean_reward: f64) -> f64 {
        self.value = self.lambda * mean_reward + (1.0 - self.lambda) * self.value;
        self.iteration += 1;
        self.value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reward_rescaling_examples() {
        let two = rescale_rewards(&[0.9, 0.2], 12.0);
        assert!(two[0].abs() < 1e-15);
        assert!((two[1] - (-0.49753)).abs() < 1e-5);
        let four = rescale_rewards(&[0.1, 0.7, 0.3, 0.2], 12.0);
        assert!((four[1] - 0.45257).abs() < 1e-5);
        assert_eq!(rescale_rewards(&[0.4], 12.0), vec![0.0]);
    }

    #[test]
    fn value_rescaling_examples() {
        let q = rescale_values(&[0.3, 0.8], 0.2, 1.0);
        assert!((q[1] - 0.2).abs() < 1e-15);
        assert!((q[0] - (0.2 - 0.12246)).abs() < 1e-5);
        let tied = rescale_values(&[0.5, 0.5, 0.5], -0.1, 1.0);
        assert!(tied.iter().all(|&v| v == tied[0]));
    }

    #[test]
    fn baseline_recurrence() {
        let mut b = BaselineTracker::new(0.1);
        assert_eq!(b.value, 0.0);
        assert!((b.update(1.0) - 0.1).abs() < 1e-15);
        for _ in 0..500 {
            b.update(0.7);
        }
        assert!((b.value - 0.7).abs() < 1e-9);
    }

    fn untied() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::hash_set(0u32..10_000, 2..40)
            .prop_map(|s| s.into_iter().map(|v| v as f64 / 10_000.0).collect())
    }

    proptest! {
        #[test]
        fn positive_scaling_leaves_rewards_unchanged(raw in untied(), c in 0.01f64..100.0) {
            let scaled: Vec<f64> = raw.iter().map(|r| r * c).collect();
            prop_assert_eq!(rescale_rewards(&raw, 12.0), rescale_rewards(&scaled, 12.0));
        }

        #[test]
        fn rescaled_rewards_are_bounded_and_ordered(raw in untied(), delta in 0.1f64..20.0) {
            let out = rescale_rewards(&raw, delta);
            for i in 0..raw.len() {
                prop_assert!(out[i] > -0.5 && out[i] < 0.5);
                for j in 0..raw.len() {
                    if raw[i] > raw[j] {
                        prop_assert!(out[i] > out[j]);
                    }
                }
            }
        }

        #[test]
        fn value_rescaling_preserves_order(q in prop::collection::vec(0.0f64..1.0, 1..20), rb in -0.49f64..0.49) {
            let out = rescale_values(&q, rb, 1.0);
            for i in 0..q.len() {
                prop_assert!(out[i] >= rb - 0.5 && out[i] <= rb + 0.5);
                for j in 0..q.len() {
                    if q[i] > q[j] {
                        prop_assert!(out[i] > out[j]);
                    }
                    if q[i] == q[j] {
                        prop_assert_eq!(out[i], out[j]);
                    }
                }
            }
        }
    }
}

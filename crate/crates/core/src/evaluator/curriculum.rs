use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::sigmoid;
use crate::error::{Error, Result};
use crate::rank::ranks_ascending;

/// Inclusion decision for one example of an evaluator batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumWeight {
    pub index: usize,
    /// 1 = smallest edit distance in the batch.
    pub rank: usize,
    pub probability: f64,
    pub weight: f64,
}

/// `σ(δ₃·(0.5 − rank/K))`.
pub fn curriculum_probability(rank: usize, k: usize, delta3: f64) -> f64 {
    sigmoid(delta3 * (0.5 - rank as f64 / k as f64))
}

pub fn curriculum_probabilities(distances: &[usize], delta3: f64) -> Vec<f64> {
    let k = distances.len();
    ranks_ascending(distances)
        .into_iter()
        .map(|r| curriculum_probability(r, k, delta3))
        .collect()
}

/// Rank the batch by reference edit distance and draw a Bernoulli weight per example.
pub fn curriculum_weights<R: Rng + ?Sized>(distances: &[usize], delta3: f64, rng: &mut R) -> Result<Vec<CurriculumWeight>> {
    if distances.is_empty() {
        return Err(Error::EmptyInput("curriculum batch"));
    }
    let k = distances.len();
    Ok(ranks_ascending(distances)
        .into_iter()
        .enumerate()
        .map(|(index, rank)| {
            let probability = curriculum_probability(rank, k, delta3);
            let weight = if rng.gen::<f64>() < probability { 1.0 } else { 0.0 };
            CurriculumWeight { index, rank, probability, weight }
        })
        .collect())
}

/// Linear interpolation from `start` to `end` over a run of iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSchedule {
    pub start: f64,
    pub end: f64,
}

impl LinearSchedule {
    pub fn new(start: f64, end: f64) -> Self {
        LinearSchedule { start, end }
    }

    pub fn constant(v: f64) -> Self {
        LinearSchedule { start: v, end: v }
    }

    /// Value at iteration `i` of `n`; the last iteration gets `end`.
    pub fn at(&self, i: usize, n: usize) -> f64 {
        if n <= 1 {
            return self.start;
        }
        let frac = (i.min(n - 1)) as f64 / (n - 1) as f64;
        self.start + (self.end - self.start) * frac
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn midpoint_rank_gives_half() {
        assert_eq!(curriculum_probability(5, 10, 15.0), 0.5);
    }

    #[test]
    fn easiest_in_large_batch() {
        let p = curriculum_probability(1, 1_000_000, 15.0);
        assert!((p - 0.999_447).abs() < 1e-5);
    }

    #[test]
    fn decreasing_in_difficulty() {
        let p = curriculum_probabilities(&[1, 2, 3, 4, 5, 6], 15.0);
        assert!(p.windows(2).all(|w| w[0] > w[1]));
        let tied = curriculum_probabilities(&[2, 2, 7], 8.0);
        assert_eq!(tied[0], tied[1]);
    }

    #[test]
    fn weights_are_seeded() {
        let d = [3, 1, 4, 1, 5, 9, 2, 6];
        let a = curriculum_weights(&d, 12.0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = curriculum_weights(&d, 12.0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|w| w.weight == 0.0 || w.weight == 1.0));
    }

    #[test]
    fn linear_schedule_endpoints() {
        let s = LinearSchedule::new(15.0, 8.0);
        assert_eq!(s.at(0, 50), 15.0);
        assert_eq!(s.at(49, 50), 8.0);
        assert!((s.at(7, 15) - 11.5).abs() < 1e-12);
    }
}

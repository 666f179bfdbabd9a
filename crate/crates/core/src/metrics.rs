//! Single-reference lexical overlap: ROUGE-1/2, ROUGE-L and bigram BLEU.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Recall weight of the ROUGE-L F-measure.
pub const ROUGE_L_BETA: f64 = 1.2;

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut out = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

/// Matches clipped by the reference multiplicity, and the candidate n-gram total.
fn clipped_matches<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let matches = cand
        .iter()
        .map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0)))
        .sum();
    (matches, candidate.len().saturating_sub(n - 1))
}

fn require_reference<T>(reference: &[T]) -> Result<()> {
    if reference.is_empty() {
        Err(Error::EmptyInput("metric reference"))
    } else {
        Ok(())
    }
}

/// Clipped n-gram recall. Zero when either side has no n-grams.
pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> Result<f64> {
    require_reference(reference)?;
    if n == 0 {
        return Err(Error::OutOfRange("rouge n must be at least 1".into()));
    }
    if reference.len() < n {
        return Ok(0.0);
    }
    let (matches, _) = clipped_matches(candidate, reference, n);
    Ok(matches as f64 / (reference.len() - n + 1) as f64)
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure with β = [`ROUGE_L_BETA`].
pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> Result<f64> {
    require_reference(reference)?;
    let lcs = lcs_len(candidate, reference);
    if lcs == 0 {
        return Ok(0.0);
    }
    let r = lcs as f64 / reference.len() as f64;
    let p = lcs as f64 / candidate.len() as f64;
    let b2 = ROUGE_L_BETA * ROUGE_L_BETA;
    Ok((1.0 + b2) * r * p / (r + b2 * p))
}

/// Geometric mean of clipped unigram and bigram precision times the brevity
/// penalty. An order with no matches scores `1 / (count + 1)`.
pub fn bleu2<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> Result<f64> {
    require_reference(reference)?;
    let c = candidate.len();
    if c == 0 {
        return Ok(0.0);
    }
    let mut log_p = 0.0;
    for n in 1..=2 {
        let (m, total) = clipped_matches(candidate, reference, n);
        let p = if m == 0 {
            1.0 / (total as f64 + 1.0)
        } else {
            m as f64 / total as f64
        };
        log_p += 0.5 * p.ln();
    }
    let r = reference.len();
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    Ok(bp * log_p.exp())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub bleu: f64,
}

impl MetricReport {
    pub fn sentence<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> Result<Self> {
        Ok(MetricReport {
            rouge1: rouge_n(candidate, reference, 1)?,
            rouge2: rouge_n(candidate, reference, 2)?,
            rouge_l: rouge_l(candidate, reference)?,
            bleu: bleu2(candidate, reference)?,
        })
    }

    /// Mean of the sentence-level scores.
    pub fn corpus<T, C, R>(pairs: impl IntoIterator<Item = (C, R)>) -> Result<Self>
    where
        T: Eq + Hash,
        C: AsRef<[T]>,
        R: AsRef<[T]>,
    {
        let mut sum = MetricReport::default();
        let mut n = 0usize;
        for (c, r) in pairs {
            let m = Self::sentence(c.as_ref(), r.as_ref())?;
            sum.rouge1 += m.rouge1;
            sum.rouge2 += m.rouge2;
            sum.rouge_l += m.rouge_l;
            sum.bleu += m.bleu;
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptyInput("metric corpus"));
        }
        let k = n as f64;
        Ok(MetricReport {
            rouge1: sum.rouge1 / k,
            rouge2: sum.rouge2 / k,
            rouge_l: sum.rouge_l / k,
            bleu: sum.bleu / k,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn earth_sun_rouge1() {
        let c = t("how far is earth from sun");
        let r = t("what is the distance between sun and earth");
        assert!((rouge_n(&c, &r, 1).unwrap() - 0.375).abs() < 1e-12);
    }

    #[test]
    fn rouge_l_hand_dp() {
        let v = rouge_l(&t("a b c"), &t("a x c")).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-9);
        assert_eq!(rouge_l(&t(""), &t("a")).unwrap(), 0.0);
    }

    #[test]
    fn identity_and_disjoint() {
        let a = t("what is the capital of peru");
        assert_eq!(MetricReport::sentence(&a, &a).unwrap(), MetricReport { rouge1: 1.0, rouge2: 1.0, rouge_l: 1.0, bleu: 1.0 });
        let b = t("x y z w v u");
        assert_eq!(rouge_n(&b, &a, 1).unwrap(), 0.0);
        let bl = bleu2(&b, &a).unwrap();
        assert!(bl > 0.0 && bl < 0.2);
    }

    #[test]
    fn empty_reference_is_an_error() {
        let e: Vec<&str> = Vec::new();
        assert!(rouge_n(&t("a"), &e, 1).is_err());
        assert!(rouge_l(&t("a"), &e).is_err());
        assert!(bleu2(&t("a"), &e).is_err());
    }

    #[test]
    fn roles_are_asymmetric() {
        let (a, b) = (t("a b"), t("a b c d"));
        assert_ne!(rouge_n(&a, &b, 1).unwrap(), rouge_n(&b, &a, 1).unwrap());
        assert_ne!(bleu2(&a, &b).unwrap(), bleu2(&b, &a).unwrap());
    }

    #[test]
    fn short_candidate_has_no_bigrams() {
        assert_eq!(rouge_n(&t("a"), &t("a b"), 2).unwrap(), 0.0);
        let v = bleu2(&t("a"), &t("a b c d")).unwrap();
        assert!((v - (1.0f64 - 4.0).exp()).abs() < 1e-12);
    }

    fn seq() -> impl Strategy<Value = Vec<u8>> {
        prop::collection::vec(0u8..6, 1..12)
    }

    proptest! {
        #[test]
        fn scores_lie_in_unit_interval(c in prop::collection::vec(0u8..6, 0..12), r in seq()) {
            let m = MetricReport::sentence(&c, &r).unwrap();
            for v in [m.rouge1, m.rouge2, m.rouge_l, m.bleu] {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
        }

        #[test]
        fn rouge_l_identity(a in seq()) {
            prop_assert!((rouge_l(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn extending_a_prefix_never_hurts(r in seq(), cut in 0usize..12) {
            let k = cut.min(r.len() - 1);
            let (short, long) = (&r[..k], &r[..k + 1]);
            prop_assert!(rouge_n(long, &r, 1).unwrap() >= rouge_n(short, &r, 1).unwrap());
            prop_assert!(rouge_n(long, &r, 2).unwrap() >= rouge_n(short, &r, 2).unwrap());
            prop_assert!(rouge_l(long, &r).unwrap() >= rouge_l(short, &r).unwrap());
            prop_assert!(bleu2(long, &r).unwrap() >= bleu2(short, &r).unwrap());
        }
    }
}

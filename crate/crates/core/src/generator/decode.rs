use rand::Rng;

use super::{DecoderState, EncoderOutput, Generator, Source};
use crate::error::{Error, Result};
use crate::text::{EOS, SOS};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Sample,
}

/// A decoded sequence over the extended vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    /// Emitted ids, ending in `EOS` when the model stopped on its own.
    pub ids: Vec<usize>,
    /// Log-probability of each emitted id.
    pub logprobs: Vec<f64>,
    /// `states[k]` is the decoder state before emitting `ids[k]`.
    pub states: Vec<DecoderState>,
    pub surface: Vec<String>,
}

impl Generation {
    pub fn finished(&self) -> bool {
        self.ids.last() == Some(&EOS)
    }

    pub fn logprob_sum(&self) -> f64 {
        self.logprobs.iter().sum()
    }

    /// Number of emitted tokens, excluding `EOS`.
    pub fn len(&self) -> usize {
        self.ids.len() - usize::from(self.finished())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen::<f64>() * p.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, &v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    // rounding left `u` past the total: take the last id with mass
    p.iter().rposition(|&v| v > 0.0).unwrap_or(0)
}

impl Generator {
    pub fn greedy(&self, src: &Source) -> Result<Generation> {
        let enc = self.encode(src)?;
        self.extend(src, &enc, Vec::new(), Vec::new(), vec![enc.final_state.clone()], DecodeMode::Greedy, &mut rand::rngs::mock::StepRng::new(0, 0))
    }

    pub fn sample<R: Rng + ?Sized>(&self, src: &Source, rng: &mut R) -> Result<Generation> {
        let enc = self.encode(src)?;
        self.extend(src, &enc, Vec::new(), Vec::new(), vec![enc.final_state.clone()], DecodeMode::Sample, rng)
    }

    pub fn decode<R: Rng + ?Sized>(&self, src: &Source, mode: DecodeMode, rng: &mut R) -> Result<Generation> {
        match mode {
            DecodeMode::Greedy => self.greedy(src),
            DecodeMode::Sample => self.sample(src, rng),
        }
    }

    /// Continue decoding until `EOS` or `max_len` non-`EOS` tokens.
    #[allow(clippy::too_many_arguments)]
    fn extend<R: Rng + ?Sized>(
        &self,
        src: &Source,
        enc: &EncoderOutput,
        mut ids: Vec<usize>,
        mut logprobs: Vec<f64>,
        mut states: Vec<DecoderState>,
        mode: DecodeMode,
        rng: &mut R,
    ) -> Result<Generation> {
        debug_assert_eq!(states.len(), ids.len() + 1);
        while ids.last() != Some(&EOS) && ids.len() < self.config.max_len {
            let y_prev = ids.last().copied().unwrap_or(SOS);
            let d = self.step(src, enc, states.last().unwrap(), y_prev)?;
            let y = match mode {
                DecodeMode::Greedy => argmax(&d.probs),
                DecodeMode::Sample => sample_index(&d.probs, rng),
            };
            logprobs.push(d.probs[y].max(super::PROB_FLOOR).ln());
            ids.push(y);
            states.push(d.state);
        }
        let surface = self.surface(src, &ids);
        Ok(Generation { ids, logprobs, states, surface })
    }

    /// `n` sampled completions of `gen` after its first `t` tokens.
    pub fn rollouts_from<R: Rng + ?Sized>(
        &self,
        src: &Source,
        enc: &EncoderOutput,
        gen: &Generation,
        t: usize,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<Generation>> {
        if t > gen.ids.len() {
            return Err(Error::OutOfRange(format!("rollout prefix {t} longer than sequence {}", gen.ids.len())));
        }
        (0..n)
            .map(|_| {
                self.extend(
                    src,
                    enc,
                    gen.ids[..t].to_vec(),
                    gen.logprobs[..t].to_vec(),
                    gen.states[..=t].to_vec(),
                    DecodeMode::Sample,
                    rng,
                )
            })
            .collect()
    }

    /// `n` sampled completions of a fixed prefix of extended ids.
    pub fn rollout_continuations<R: Rng + ?Sized>(
        &self,
        src: &Source,
        prefix: &[usize],
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<Generation>> {
        if n == 0 {
            return Err(Error::OutOfRange("rollout count must be at least 1".into()));
        }
        let enc = self.encode(src)?;
        let mut states = vec![enc.final_state.clone()];
        let mut logprobs = Vec::with_capacity(prefix.len());
        let mut y_prev = SOS;
        for &y in prefix {
            let d = self.step(src, &enc, states.last().unwrap(), y_prev)?;
            let p = d.probs.get(y).copied().ok_or_else(|| Error::OutOfRange(format!("prefix id {y}")))?;
            logprobs.push(p.max(super::PROB_FLOOR).ln());
            states.push(d.state);
            y_prev = y;
        }
        let gen = Generation {
            surface: self.surface(src, prefix),
            ids: prefix.to_vec(),
            logprobs,
            states,
        };
        self.rollouts_from(src, &enc, &gen, prefix.len(), n, rng)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::super::tests::tiny;
    use super::*;

    #[test]
    fn same_seed_same_sample() {
        let g = tiny(false);
        let src = g.source("how far is earth from sun").unwrap();
        let a = g.sample(&src, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = g.sample(&src, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.len() <= 20);
    }

    #[test]
    fn logprobs_agree_with_teacher_forcing() {
        let g = tiny(false);
        let src = g.source("how far is ducking earth from sun").unwrap();
        let gen = g.sample(&src, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let tf = g.sequence_logprobs(&src, &gen.ids).unwrap();
        for (a, b) in gen.logprobs.iter().zip(&tf) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn finished_prefix_is_absorbing() {
        let g = tiny(false);
        let src = g.source("how far is earth").unwrap();
        let prefix = vec![g.vocab().id("is"), EOS];
        let outs = g.rollout_continuations(&src, &prefix, 4, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(outs.len(), 4);
        assert!(outs.iter().all(|o| o.ids == prefix));
    }

    #[test]
    fn rollouts_keep_prefix() {
        let g = tiny(false);
        let src = g.source("how far is earth").unwrap();
        let prefix = vec![g.vocab().id("what"), g.vocab().id("is")];
        for o in g.rollout_continuations(&src, &prefix, 4, &mut ChaCha8Rng::seed_from_u64(2)).unwrap() {
            assert_eq!(&o.ids[..2], &prefix[..]);
            assert!(o.len() <= 20);
        }
    }
}

//! Policy-gradient fine-tuning of the generator against a learned reward.
//!
//! A batch step samples `Ŷ` per input, estimates per-position values `Q_t` by
//! Monte-Carlo rollouts, rank-rescales them across and within sequences, and
//! takes one REINFORCE ascent step.

mod rescale;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{accumulate_parallel, Algorithm, Axis, Gradients, Optimizer, StepReport, Tape, Var};
use crate::error::{Error, Result};
use crate::evaluator::LinearSchedule;
use crate::generator::{EncoderOutput, Generation, Generator, Source};

pub use rescale::{rescale_rewards, rescale_values, BaselineTracker};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlConfig {
    /// Across-batch reward temperature (supervised evaluator).
    pub delta1: f64,
    /// Within-sequence value temperature.
    pub delta2: f64,
    /// Curriculum temperature, annealed across alternations.
    pub delta3: LinearSchedule,
    /// Across-batch reward temperature for the ranking evaluator, annealed.
    pub delta1_irl: LinearSchedule,
    pub mc_samples: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Weight given to every position of the reference sequence; 0 disables it.
    pub ground_truth_reward: f64,
    pub ema_lambda: f64,
    /// Generator updates (supervised-evaluator mode, and per alternation otherwise).
    pub steps: usize,
    /// Share of RL inputs drawn from the non-parallel pool.
    pub nonparallel_fraction: f64,
    /// Number of evaluator/generator alternations.
    pub alternations: usize,
    /// Evaluator hinge steps per alternation.
    pub inner_steps: usize,
    pub evaluator_batch_size: usize,
    pub evaluator_lr: f64,
    /// Optimizer for the ranking evaluator.
    pub evaluator_algorithm: Algorithm,
    /// Held-out evaluation every this many generator steps (alternations in
    /// ranking mode); 0 evaluates only at the end.
    pub eval_every: usize,
    /// Stop after this many held-out evaluations without a new best reward.
    pub patience: Option<usize>,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            delta1: 12.0,
            delta2: 1.0,
            delta3: LinearSchedule::new(15.0, 8.0),
            delta1_irl: LinearSchedule::new(12.0, 3.0),
            mc_samples: 4,
            batch_size: 80,
            lr: 1e-5,
            ground_truth_reward: 0.1,
            ema_lambda: 0.1,
            steps: 50,
            nonparallel_fraction: 0.5,
            alternations: 10,
            inner_steps: 50,
            evaluator_batch_size: 80,
            evaluator_lr: 1e-2,
            evaluator_algorithm: Algorithm::Adagrad,
            eval_every: 0,
            patience: None,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let temps = [
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("delta3.start", self.delta3.start),
            ("delta3.end", self.delta3.end),
            ("delta1_irl.start", self.delta1_irl.start),
            ("delta1_irl.end", self.delta1_irl.end),
        ];
        for (name, v) in temps {
            if !(v > 0.0) {
                errs.push(format!("rl.{name} must be > 0 (got {v})"));
            }
        }
        if self.mc_samples == 0 {
            errs.push("rl.mc_samples must be ≥ 1".into());
        }
        if self.batch_size == 0 || self.evaluator_batch_size == 0 {
            errs.push("rl batch sizes must be ≥ 1".into());
        }
        if !(self.ema_lambda > 0.0 && self.ema_lambda < 1.0) {
            errs.push(format!("rl.ema_lambda must lie in (0, 1) (got {})", self.ema_lambda));
        }
        if !(0.0..=1.0).contains(&self.nonparallel_fraction) {
            errs.push("rl.nonparallel_fraction must lie in [0, 1]".into());
        }
        if !(self.ground_truth_reward >= 0.0) {
            errs.push("rl.ground_truth_reward must be ≥ 0".into());
        }
        if !(self.lr >= 0.0) || !(self.evaluator_lr >= 0.0) {
            errs.push("rl learning rates must be ≥ 0".into());
        }
        if self.patience == Some(0) {
            errs.push("rl.patience must be ≥ 1 when set".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }
}

/// One sequence contributing to a policy-gradient step.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutRecord {
    pub src: Source,
    /// Emitted extended ids, including a final `EOS` when present.
    pub ids: Vec<usize>,
    /// Per-token log-probabilities at sampling time.
    pub logprobs: Vec<f64>,
    /// `Q_1..Q_T`; empty for reference sequences.
    pub values: Vec<f64>,
    /// Terminal reward `R = Q_T`.
    pub reward: f64,
    pub rescaled_reward: f64,
    /// Per-position weights applied to `∇ log p`.
    pub weights: Vec<f64>,
    /// Parameter version the sequence was sampled under.
    pub version: u64,
    pub ground_truth: bool,
}

/// Monte-Carlo value of every prefix of `gen`: the mean reward of `n` sampled
/// completions for `t < T`, and the reward of `gen` itself at `t = T`.
pub fn mc_values<R, F>(
    generator: &Generator,
    src: &Source,
    enc: &EncoderOutput,
    gen: &Generation,
    n: usize,
    rng: &mut R,
    reward: F,
) -> Result<Vec<f64>>
where
    R: Rng + ?Sized,
    F: Fn(&[String]) -> Result<f64>,
{
    let t_len = gen.ids.len();
    let mut q = Vec::with_capacity(t_len);
    for t in 1..t_len {
        let rolls = generator.rollouts_from(src, enc, gen, t, n, rng)?;
        let mut sum = 0.0;
        for r in &rolls {
            sum += reward(&r.surface)?;
        }
        q.push(sum / n as f64);
    }
    q.push(reward(&gen.surface)?);
    Ok(q)
}

/// `−Σ_t w_t · log p_t`; descending it ascends the weighted log-likelihood.
pub fn reinforce_loss_on(tape: &mut Tape, logprobs: &[Var], weights: &[f64]) -> Result<Var> {
    if logprobs.len() != weights.len() || logprobs.is_empty() {
        return Err(Error::shape("reinforce_loss", &[logprobs.len()], &[weights.len()]));
    }
    let lp = tape.concat(logprobs, Axis::Cols)?;
    let w = tape.constant(crate::autodiff::Tensor::row(weights.iter().map(|w| -w).collect()));
    let prod = tape.mul(lp, w)?;
    Ok(tape.sum(prod))
}

/// Gradient of the mean REINFORCE loss over `records`, without updating.
pub fn policy_gradient(generator: &Generator, records: &[RolloutRecord]) -> Result<Gradients> {
    if records.is_empty() {
        return Err(Error::EmptyInput("policy-gradient batch"));
    }
    let current = generator.params().version();
    if let Some(r) = records.iter().find(|r| r.version != current) {
        return Err(Error::StaleSnapshot { recorded: r.version, current });
    }
    let (_, mut grads) = accumulate_parallel(generator.params(), records, |r| {
        if r.weights.iter().all(|&w| w == 0.0) {
            return Ok((0.0, Gradients::zeros_like(generator.params())));
        }
        let mut tape = Tape::new(generator.params());
        let lps = generator.sequence_logprobs_on(&mut tape, &r.src, &r.ids)?;
        let loss = reinforce_loss_on(&mut tape, &lps, &r.weights)?;
        Ok((tape.scalar(loss), tape.backward(loss)?))
    })?;
    grads.scale(1.0 / records.len() as f64);
    Ok(grads)
}

/// One ascent step on `Σ_t Q̄_t log p(ŷ_t)`, averaged over the batch.
pub fn policy_gradient_step(generator: &mut Generator, optimizer: &mut Optimizer, records: &[RolloutRecord]) -> Result<StepReport> {
    let grads = policy_gradient(generator, records)?;
    optimizer.step(generator.params_mut(), &grads)
}

/// Input for one rollout: the source plus an optional reference for the
/// ground-truth anchor and reference-based rewards.
#[derive(Clone, Debug)]
pub struct RlInput {
    pub src: Source,
    pub reference: Option<Vec<String>>,
}

/// How raw rewards turn into per-position weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shaping {
    /// Rank rescaling across the batch (`δ₁`) and within each sequence (`δ₂`).
    Rescale { delta1: f64, delta2: f64 },
    /// `Q_t − b` against an exponential moving average baseline.
    Baseline { baseline: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchRollouts {
    pub records: Vec<RolloutRecord>,
    pub mean_raw_reward: f64,
    pub mean_weight: f64,
    pub references_used: usize,
}

/// Sample, score and shape one batch. Each input gets its own RNG seeded from
/// `rng` in order, so results do not depend on the worker count.
pub fn collect_rollouts<R, F>(
    generator: &Generator,
    inputs: &[RlInput],
    cfg: &RlConfig,
    shaping: Shaping,
    rng: &mut R,
    reward: F,
) -> Result<BatchRollouts>
where
    R: Rng + ?Sized,
    F: Fn(&RlInput, &[String]) -> Result<f64> + Sync,
{
    if inputs.is_empty() {
        return Err(Error::EmptyInput("RL batch"));
    }
    let version = generator.params().version();
    let seeds: Vec<u64> = inputs.iter().map(|_| rng.gen()).collect();
    let sampled: Vec<(Generation, Vec<f64>)> = inputs
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(inp, &seed)| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let enc = generator.encode(&inp.src)?;
            let gen = generator.sample(&inp.src, &mut r)?;
            let q = mc_values(generator, &inp.src, &enc, &gen, cfg.mc_samples, &mut r, |s| reward(inp, s))?;
            Ok((gen, q))
        })
        .collect::<Result<_>>()?;

    let raw: Vec<f64> = sampled.iter().map(|(_, q)| *q.last().unwrap()).collect();
    let rescaled: Vec<f64> = match shaping {
        Shaping::Rescale { delta1, .. } => rescale_rewards(&raw, delta1),
        Shaping::Baseline { baseline } => raw.iter().map(|r| r - baseline).collect(),
    };
    let mut records = Vec::with_capacity(inputs.len() * 2);
    let mut references_used = 0;
    for ((inp, (gen, q)), (&r, &rb)) in inputs.iter().zip(sampled).zip(raw.iter().zip(&rescaled)) {
        let weights = match shaping {
            Shaping::Rescale { delta2, .. } => rescale_values(&q, rb, delta2),
            Shaping::Baseline { baseline } => q.iter().map(|v| v - baseline).collect(),
        };
        records.push(RolloutRecord {
            src: inp.src.clone(),
            ids: gen.ids,
            logprobs: gen.logprobs,
            values: q,
            reward: r,
            rescaled_reward: rb,
            weights,
            version,
            ground_truth: false,
        });
        let w = cfg.ground_truth_reward;
        if let Some(y) = inp.reference.as_ref().filter(|_| w > 0.0) {
            references_used += 1;
            let ids = inp.src.target(generator.vocab(), y);
            records.push(RolloutRecord {
                src: inp.src.clone(),
                weights: vec![w; ids.len()],
                logprobs: Vec::new(),
                ids,
                values: Vec::new(),
                reward: w,
                rescaled_reward: w,
                version,
                ground_truth: true,
            });
        }
    }
    let sampled_records: Vec<&RolloutRecord> = records.iter().filter(|r| !r.ground_truth).collect();
    let n_w: usize = sampled_records.iter().map(|r| r.weights.len()).sum();
    let mean_weight = sampled_records.iter().flat_map(|r| r.weights.iter()).sum::<f64>() / n_w.max(1) as f64;
    Ok(BatchRollouts {
        mean_raw_reward: raw.iter().sum::<f64>() / raw.len() as f64,
        mean_weight,
        records,
        references_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{OptimizerConfig, Tensor};
    use crate::generator::GeneratorConfig;
    use crate::text::Vocab;

    fn tiny() -> Generator {
        let vocab = Vocab::build(["how far is earth from sun", "what is the distance between sun and earth"], 100).unwrap();
        let cfg = GeneratorConfig {
            embed_dim: 4,
            hidden: 6,
            attention_dim: 3,
            output_hidden: 5,
            init_scale: 0.3,
            ..Default::default()
        };
        Generator::new(cfg, vocab, 11).unwrap()
    }

    fn record(g: &Generator, ids: Vec<usize>, w: f64) -> RolloutRecord {
        RolloutRecord {
            src: g.source("how far is earth from sun").unwrap(),
            weights: vec![w; ids.len()],
            logprobs: Vec::new(),
            ids,
            values: Vec::new(),
            reward: 0.0,
            rescaled_reward: 0.0,
            version: g.params().version(),
            ground_truth: false,
        }
    }

    #[test]
    fn terminal_value_is_the_reward() {
        let g = tiny();
        let src = g.source("how far is earth").unwrap();
        let enc = g.encode(&src).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gen = g.sample(&src, &mut rng).unwrap();
        let reward = |s: &[String]| Ok(s.len() as f64 * 0.1);
        let q = mc_values(&g, &src, &enc, &gen, 4, &mut rng, reward).unwrap();
        assert_eq!(q.len(), gen.ids.len());
        assert_eq!(q.last().unwrap().to_bits(), reward(&gen.surface).unwrap().to_bits());
    }

    #[test]
    fn zero_weights_leave_parameters_unchanged() {
        let mut g = tiny();
        let before = g.params().clone();
        let mut opt = Optimizer::new(OptimizerConfig::adam(1e-3), g.params());
        let ids = vec![g.vocab().id("what"), crate::text::EOS];
        let recs = vec![record(&g, ids, 0.0)];
        assert!(policy_gradient(&g, &recs).unwrap().is_zero());
        policy_gradient_step(&mut g, &mut opt, &recs).unwrap();
        for ((_, _, a), (_, _, b)) in g.params().iter().zip(before.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn positive_reward_raises_sequence_likelihood() {
        let mut g = tiny();
        let src = g.source("how far is earth from sun").unwrap();
        let gen = g.sample(&src, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let before: f64 = g.sequence_logprobs(&src, &gen.ids).unwrap().iter().sum();
        let mut opt = Optimizer::new(OptimizerConfig::adam(1e-4), g.params());
        let recs = vec![record(&g, gen.ids.clone(), 1.0)];
        policy_gradient_step(&mut g, &mut opt, &recs).unwrap();
        let after: f64 = g.sequence_logprobs(&src, &gen.ids).unwrap().iter().sum();
        assert!(after > before, "{before} -> {after}");
    }

    #[test]
    fn stale_records_are_rejected() {
        let mut g = tiny();
        let recs = vec![record(&g, vec![crate::text::EOS], 1.0)];
        let id = g.params().id("q.b").unwrap();
        g.params_mut().get_mut(id).data_mut()[0] += 0.1;
        assert!(matches!(policy_gradient(&g, &recs), Err(Error::StaleSnapshot { .. })));
    }

    #[test]
    fn reinforce_loss_weights_logprobs() {
        let store = crate::autodiff::ParamStore::new();
        let mut tape = Tape::new(&store);
        let a = tape.constant(Tensor::scalar(-1.0));
        let b = tape.constant(Tensor::scalar(-2.0));
        let l = reinforce_loss_on(&mut tape, &[a, b], &[0.5, 0.25]).unwrap();
        assert!((tape.scalar(l) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ground_truth_records_bypass_rescaling() {
        let g = tiny();
        let inputs: Vec<RlInput> = ["how far is earth", "what is the distance"]
            .iter()
            .map(|t| RlInput {
                src: g.source(t).unwrap(),
                reference: Some(vec!["sun".into(), "and".into(), "earth".into()]),
            })
            .collect();
        let cfg = RlConfig { mc_samples: 2, ..Default::default() };
        let shaping = Shaping::Rescale { delta1: 12.0, delta2: 1.0 };
        let reward = |_: &RlInput, s: &[String]| Ok(s.len() as f64);
        let out = collect_rollouts(&g, &inputs, &cfg, shaping, &mut ChaCha8Rng::seed_from_u64(3), reward).unwrap();
        assert_eq!(out.records.len(), 4);
        assert_eq!(out.references_used, 2);
        for r in out.records.iter().filter(|r| r.ground_truth) {
            assert_eq!(r.ids.len(), 4);
            assert!(r.weights.iter().all(|&w| w == 0.1));
        }
        let again = collect_rollouts(&g, &inputs, &cfg, shaping, &mut ChaCha8Rng::seed_from_u64(3), reward).unwrap();
        assert_eq!(out, again);
    }
}

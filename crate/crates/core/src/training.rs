//! Training phases: generator pretraining, supervised evaluator training,
//! RL with a frozen evaluator, alternating ranking-evaluator/generator
//! training, and the ROUGE-reward baseline.

use std::fs::File;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{accumulate_parallel, Algorithm, Optimizer, OptimizerConfig};
use crate::error::{Error, Result};
use crate::evaluator::{curriculum_weights, Evaluator, HingeItem};
use crate::generator::Generator;
use crate::metrics::{rouge_l, rouge_n, MetricReport};
use crate::rl::{collect_rollouts, policy_gradient_step, BaselineTracker, RlConfig, RlInput, Shaping};
use crate::text::{edit_distance, Label, Sentence};

/// Version of the metrics CSV column layout.
pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// A tokenized `(x, y)` pair.
pub type TokenPair = (Vec<String>, Vec<String>);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub algorithm: Algorithm,
    pub lr: f64,
    pub max_grad_norm: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 5,
            batch_size: 32,
            algorithm: Algorithm::Adagrad,
            lr: 0.1,
            max_grad_norm: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluatorSlConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub algorithm: Algorithm,
    pub lr: f64,
    pub max_grad_norm: f64,
}

impl Default for EvaluatorSlConfig {
    fn default() -> Self {
        EvaluatorSlConfig {
            epochs: 10,
            batch_size: 32,
            algorithm: Algorithm::Adagrad,
            lr: 0.05,
            max_grad_norm: 2.0,
        }
    }
}

fn optimizer_config(algorithm: Algorithm, lr: f64, max_grad_norm: f64) -> OptimizerConfig {
    let base = match algorithm {
        Algorithm::Adagrad => OptimizerConfig::adagrad(lr),
        Algorithm::Adam => OptimizerConfig::adam(lr),
    };
    OptimizerConfig { max_grad_norm, ..base }
}

fn check_batch(what: &str, batch: usize) -> Result<()> {
    if batch == 0 {
        return Err(Error::Config(format!("{what}.batch_size must be at least 1")));
    }
    Ok(())
}

/// One line of the metrics CSV. Fields that do not apply to a phase are empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub schema_version: u32,
    pub phase: String,
    pub epoch: usize,
    pub step: u64,
    pub mle_loss: Option<f64>,
    pub eval_loss: Option<f64>,
    pub eval_accuracy: Option<f64>,
    pub mean_raw_reward: Option<f64>,
    pub mean_rescaled_reward: Option<f64>,
    pub hinge_loss: Option<f64>,
    pub margin_satisfaction_rate: Option<f64>,
    pub delta1: Option<f64>,
    pub delta3: Option<f64>,
    pub references_used: Option<usize>,
    pub heldout_rouge1: Option<f64>,
    pub heldout_rouge2: Option<f64>,
    pub heldout_rouge_l: Option<f64>,
    pub heldout_bleu: Option<f64>,
    pub heldout_reward: Option<f64>,
}

impl MetricsRow {
    pub fn new(phase: &str, epoch: usize, step: u64) -> Self {
        MetricsRow {
            schema_version: METRICS_SCHEMA_VERSION,
            phase: phase.to_string(),
            epoch,
            step,
            ..Default::default()
        }
    }

    fn with_heldout(mut self, h: &HeldoutReport) -> Self {
        self.heldout_rouge1 = Some(h.metrics.rouge1);
        self.heldout_rouge2 = Some(h.metrics.rouge2);
        self.heldout_rouge_l = Some(h.metrics.rouge_l);
        self.heldout_bleu = Some(h.metrics.bleu);
        self.heldout_reward = h.reward;
        self
    }
}

/// Metrics sink: always kept in memory, optionally mirrored to a CSV file.
#[derive(Debug, Default)]
pub struct MetricsLog {
    rows: Vec<MetricsRow>,
    writer: Option<csv::Writer<File>>,
}

impl MetricsLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn to_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(MetricsLog {
            rows: Vec::new(),
            writer: Some(csv::Writer::from_path(path)?),
        })
    }

    pub fn push(&mut self, row: MetricsRow) -> Result<()> {
        log::info!(
            "[{}] epoch {} step {}: mle {:?} eval_acc {:?} reward {:?} hinge {:?} rouge1 {:?}",
            row.phase,
            row.epoch,
            row.step,
            row.mle_loss,
            row.eval_accuracy,
            row.mean_raw_reward,
            row.hinge_loss,
            row.heldout_rouge1
        );
        if let Some(w) = self.writer.as_mut() {
            w.serialize(&row)?;
            w.flush()?;
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[MetricsRow] {
        &self.rows
    }
}

/// Where and how often to write generator checkpoints during RL.
#[derive(Clone, Debug, Default)]
pub struct Checkpointing {
    pub dir: Option<PathBuf>,
    pub every: usize,
}

impl Checkpointing {
    fn maybe_save(&self, step: u64, name: &str, generator: &Generator) -> Result<()> {
        if let Some(dir) = &self.dir {
            if self.every > 0 && step % self.every as u64 == 0 {
                generator.save(dir.join(format!("{name}-step{step:06}.ckpt")))?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeldoutReport {
    pub metrics: MetricReport,
    /// Mean evaluator score of the greedy outputs, when an evaluator is given.
    pub reward: Option<f64>,
}

/// Greedy outputs for every held-out input.
pub fn greedy_outputs(generator: &Generator, inputs: &[Vec<String>]) -> Result<Vec<Vec<String>>> {
    inputs
        .par_iter()
        .map(|x| Ok(generator.greedy(&generator.source_from_tokens(x)?)?.surface))
        .collect()
}

/// Mean evaluator score of `(x, ŷ)` pairs.
pub fn mean_reward(evaluator: &Evaluator, inputs: &[Vec<String>], outputs: &[Vec<String>]) -> Result<f64> {
    let pairs: Vec<(Sentence, Sentence)> = inputs
        .iter()
        .zip(outputs)
        .map(|(x, y)| (evaluator.sentence(x), evaluator.sentence(y)))
        .collect();
    let scores = evaluator.score_batch(&pairs)?;
    Ok(scores.iter().sum::<f64>() / scores.len().max(1) as f64)
}

/// Greedy-decode the held-out inputs and score them against references.
pub fn heldout_report(generator: &Generator, heldout: &[TokenPair], evaluator: Option<&Evaluator>) -> Result<HeldoutReport> {
    let inputs: Vec<Vec<String>> = heldout.iter().map(|(x, _)| x.clone()).collect();
    let outputs = greedy_outputs(generator, &inputs)?;
    let metrics = MetricReport::corpus(outputs.iter().zip(heldout.iter().map(|(_, y)| y)))?;
    let reward = evaluator.map(|e| mean_reward(e, &inputs, &outputs)).transpose()?;
    Ok(HeldoutReport { metrics, reward })
}

/// Teacher-forced MLE on `(x, y)` pairs. Returns the mean per-sequence loss of each epoch.
pub fn pretrain_generator(
    generator: &mut Generator,
    pairs: &[TokenPair],
    cfg: &PretrainConfig,
    heldout: &[TokenPair],
    rng: &mut ChaCha8Rng,
    log: &mut MetricsLog,
) -> Result<Vec<f64>> {
    check_batch("pretrain", cfg.batch_size)?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput("pretraining pairs"));
    }
    let mut opt = Optimizer::new(optimizer_config(cfg.algorithm, cfg.lr, cfg.max_grad_norm), generator.params());
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TokenPair> = chunk.iter().map(|&i| &pairs[i]).collect();
            let g: &Generator = generator;
            let (loss, mut grads) = accumulate_parallel(g.params(), &batch, |(x, y)| {
                let (out, grads) = g.mle_grads(x, y)?;
                Ok((out.loss, grads))
            })?;
            grads.scale(1.0 / batch.len() as f64);
            total += loss;
            opt.step(generator.params_mut(), &grads)?;
        }
        let mean = total / pairs.len() as f64;
        losses.push(mean);
        let mut row = MetricsRow::new("pretrain", epoch, opt.steps());
        row.mle_loss = Some(mean);
        if !heldout.is_empty() {
            row = row.with_heldout(&heldout_report(generator, heldout, None)?);
        }
        log.push(row)?;
    }
    Ok(losses)
}

/// Labeled pairs mapped through the evaluator vocabulary.
pub fn labeled_sentences(evaluator: &Evaluator, pairs: &[(Vec<String>, Vec<String>, Label)]) -> Vec<(Sentence, Sentence, Label)> {
    pairs
        .iter()
        .map(|(x, y, l)| (evaluator.sentence(x), evaluator.sentence(y), *l))
        .collect()
}

/// Share of pairs whose score falls on the labeled side of 0.5.
pub fn evaluator_accuracy(evaluator: &Evaluator, pairs: &[(Sentence, Sentence, Label)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("accuracy pairs"));
    }
    let xy: Vec<(Sentence, Sentence)> = pairs.iter().map(|(x, y, _)| (x.clone(), y.clone())).collect();
    let scores = evaluator.score_batch(&xy)?;
    let correct = scores
        .iter()
        .zip(pairs)
        .filter(|(s, (_, _, l))| (**s > 0.5) == (*l == Label::Positive))
        .count();
    Ok(correct as f64 / pairs.len() as f64)
}

/// Cross-entropy training on positive and negative pairs. Returns held-out accuracy per epoch.
pub fn train_evaluator_sl(
    evaluator: &mut Evaluator,
    train: &[(Sentence, Sentence, Label)],
    heldout: &[(Sentence, Sentence, Label)],
    cfg: &EvaluatorSlConfig,
    rng: &mut ChaCha8Rng,
    log: &mut MetricsLog,
) -> Result<Vec<f64>> {
    check_batch("evaluator_sl", cfg.batch_size)?;
    if !train.iter().any(|p| p.2 == Label::Negative) {
        return Err(Error::Missing("supervised evaluator training needs negative pairs".into()));
    }
    let mut opt = Optimizer::new(optimizer_config(cfg.algorithm, cfg.lr, cfg.max_grad_norm), evaluator.params());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut accs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(Sentence, Sentence, Label)> = chunk.iter().map(|&i| train[i].clone()).collect();
            let (loss, mut grads) = evaluator.sl_batch(&batch)?;
            grads.scale(1.0 / batch.len() as f64);
            total += loss;
            opt.step(evaluator.params_mut(), &grads)?;
        }
        let mut row = MetricsRow::new("train-eval-sl", epoch, opt.steps());
        row.eval_loss = Some(total / train.len() as f64);
        if !heldout.is_empty() {
            let acc = evaluator_accuracy(evaluator, heldout)?;
            accs.push(acc);
            row.eval_accuracy = Some(acc);
        }
        log.push(row)?;
    }
    Ok(accs)
}

/// RL inputs: paraphrase inputs carry their reference, pool sentences do not.
fn draw_inputs(
    generator: &Generator,
    pairs: &[TokenPair],
    pool: &[Vec<String>],
    n: usize,
    nonparallel_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<RlInput>> {
    if pairs.is_empty() && pool.is_empty() {
        return Err(Error::EmptyInput("RL inputs"));
    }
    (0..n)
        .map(|_| {
            let from_pool = !pool.is_empty() && (pairs.is_empty() || rng.gen_bool(nonparallel_fraction));
            if from_pool {
                let x = pool.choose(rng).unwrap();
                Ok(RlInput { src: generator.source_from_tokens(x)?, reference: None })
            } else {
                let (x, y) = pairs.choose(rng).unwrap();
                Ok(RlInput {
                    src: generator.source_from_tokens(x)?,
                    reference: Some(y.clone()),
                })
            }
        })
        .collect()
}

fn evaluator_reward(evaluator: &Evaluator) -> impl Fn(&RlInput, &[String]) -> Result<f64> + Sync + '_ {
    move |inp: &RlInput, y: &[String]| {
        let x = evaluator.sentence(inp.src.tokens());
        evaluator.score(&x, &evaluator.sentence(y))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RlReport {
    pub steps: u64,
    pub references_used: usize,
    /// Per generator step.
    pub mean_raw_reward: Vec<f64>,
    pub mean_weight: Vec<f64>,
    /// Held-out evaluations in order.
    pub heldout: Vec<HeldoutReport>,
    pub stopped_early: bool,
}

impl RlReport {
    fn mean_since(v: &[f64], from: usize) -> Option<f64> {
        let tail = v.get(from..).filter(|t| !t.is_empty())?;
        Some(tail.iter().sum::<f64>() / tail.len() as f64)
    }
}

/// Tracks the best held-out value and signals a plateau.
#[derive(Clone, Copy, Debug)]
struct Plateau {
    best: f64,
    since: usize,
    patience: Option<usize>,
}

impl Plateau {
    fn new(patience: Option<usize>) -> Self {
        Plateau { best: f64::NEG_INFINITY, since: 0, patience }
    }

    fn observe(&mut self, v: f64) -> bool {
        if v > self.best {
            self.best = v;
            self.since = 0;
        } else {
            self.since += 1;
        }
        self.patience.is_some_and(|p| self.since >= p)
    }
}

/// Optimizer state and bookkeeping shared by every generator RL mode.
struct PolicyTrainer<'a> {
    opt: Optimizer,
    report: RlReport,
    baseline: Option<BaselineTracker>,
    ckpt: &'a Checkpointing,
    name: &'static str,
}

impl<'a> PolicyTrainer<'a> {
    fn new(generator: &Generator, cfg: &RlConfig, baseline: bool, ckpt: &'a Checkpointing, name: &'static str) -> Self {
        PolicyTrainer {
            opt: Optimizer::new(OptimizerConfig::adam(cfg.lr), generator.params()),
            report: RlReport::default(),
            baseline: baseline.then(|| BaselineTracker::new(cfg.ema_lambda)),
            ckpt,
            name,
        }
    }

    fn step<F>(
        &mut self,
        generator: &mut Generator,
        inputs: &[RlInput],
        cfg: &RlConfig,
        shaping: Shaping,
        rng: &mut ChaCha8Rng,
        reward: F,
    ) -> Result<()>
    where
        F: Fn(&RlInput, &[String]) -> Result<f64> + Sync,
    {
        let shaping = match &self.baseline {
            Some(b) => Shaping::Baseline { baseline: b.value },
            None => shaping,
        };
        let batch = collect_rollouts(generator, inputs, cfg, shaping, rng, reward)?;
        policy_gradient_step(generator, &mut self.opt, &batch.records)?;
        if let Some(b) = self.baseline.as_mut() {
            b.update(batch.mean_raw_reward);
        }
        let r = &mut self.report;
        r.steps += 1;
        r.references_used += batch.references_used;
        r.mean_raw_reward.push(batch.mean_raw_reward);
        r.mean_weight.push(batch.mean_weight);
        log::debug!("{} step {}: reward {:.4} weight {:.4}", self.name, r.steps, batch.mean_raw_reward, batch.mean_weight);
        self.ckpt.maybe_save(r.steps, self.name, generator)
    }

    fn row(&self, epoch: usize, from_step: usize) -> MetricsRow {
        let mut row = MetricsRow::new(self.name, epoch, self.report.steps);
        row.mean_raw_reward = RlReport::mean_since(&self.report.mean_raw_reward, from_step);
        row.mean_rescaled_reward = RlReport::mean_since(&self.report.mean_weight, from_step);
        row.references_used = Some(self.report.references_used);
        row
    }
}

/// Step counts per evaluation round.
fn rounds(steps: usize, eval_every: usize) -> Vec<usize> {
    if eval_every == 0 || eval_every >= steps {
        return vec![steps];
    }
    let mut v = vec![eval_every; steps / eval_every];
    if steps % eval_every > 0 {
        v.push(steps % eval_every);
    }
    v
}

/// RL against a frozen evaluator, with rank-rescaled Monte-Carlo values.
#[allow(clippy::too_many_arguments)]
pub fn train_rbm_sl(
    generator: &mut Generator,
    evaluator: &Evaluator,
    pairs: &[TokenPair],
    pool: &[Vec<String>],
    cfg: &RlConfig,
    heldout: &[TokenPair],
    rng: &mut ChaCha8Rng,
    log: &mut MetricsLog,
    ckpt: &Checkpointing,
) -> Result<RlReport> {
    cfg.validate()?;
    let mut trainer = PolicyTrainer::new(generator, cfg, false, ckpt, "train-rbm-sl");
    let shaping = Shaping::Rescale { delta1: cfg.delta1, delta2: cfg.delta2 };
    let mut plateau = Plateau::new(cfg.patience);
    for (round, n) in rounds(cfg.steps, cfg.eval_every).into_iter().enumerate() {
        let from = trainer.report.steps as usize;
        for _ in 0..n {
            let inputs = draw_inputs(generator, pairs, pool, cfg.batch_size, cfg.nonparallel_fraction, rng)?;
            trainer.step(generator, &inputs, cfg, shaping, rng, evaluator_reward(evaluator))?;
        }
        let mut row = trainer.row(round + 1, from);
        let mut stop = false;
        if !heldout.is_empty() {
            let h = heldout_report(generator, heldout, Some(evaluator))?;
            stop = plateau.observe(h.reward.unwrap_or(0.0));
            trainer.report.heldout.push(h);
            row = row.with_heldout(&h);
        }
        log.push(row)?;
        if stop {
            trainer.report.stopped_early = true;
            break;
        }
    }
    Ok(trainer.report)
}

/// `(x, y_ref, ŷ)` triples for margin audits and probe batches.
pub fn hinge_items(
    evaluator: &Evaluator,
    triples: &[(Vec<String>, Vec<String>, Vec<String>)],
) -> Result<Vec<HingeItem>> {
    triples
        .iter()
        .map(|(x, y, g)| {
            Ok(HingeItem {
                x: evaluator.sentence(x),
                y_ref: evaluator.sentence(y),
                y_gen: evaluator.sentence(g),
                zeta: rouge_l(g, y)?,
                weight: 1.0,
            })
        })
        .collect()
}

/// `(M(x, y) − M(x, ŷ), ζ)` per triple.
pub fn margin_gaps(evaluator: &Evaluator, items: &[HingeItem]) -> Result<Vec<(f64, f64)>> {
    items
        .par_iter()
        .map(|it| Ok((evaluator.score(&it.x, &it.y_ref)? - evaluator.score(&it.x, &it.y_gen)?, it.zeta)))
        .collect()
}

/// Share of triples with `M(x, y) − M(x, ŷ) ≥ 1 − ζ`, i.e. an inactive hinge.
pub fn margin_satisfaction(evaluator: &Evaluator, items: &[HingeItem]) -> Result<f64> {
    let gaps = margin_gaps(evaluator, items)?;
    Ok(gaps.iter().filter(|(gap, zeta)| *gap >= 1.0 - zeta).count() as f64 / gaps.len().max(1) as f64)
}

/// Mean unweighted hinge over `items`.
pub fn mean_hinge(evaluator: &Evaluator, items: &[HingeItem]) -> Result<f64> {
    let gaps = margin_gaps(evaluator, items)?;
    Ok(gaps.iter().map(|(gap, zeta)| (1.0 - zeta - gap).max(0.0)).sum::<f64>() / gaps.len().max(1) as f64)
}

/// Sample `ŷ` for each pair, deterministic in `rng`.
pub fn sample_triples(
    generator: &Generator,
    pairs: &[TokenPair],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(Vec<String>, Vec<String>, Vec<String>)>> {
    let seeds: Vec<u64> = pairs.iter().map(|_| rng.gen()).collect();
    pairs
        .par_iter()
        .zip(seeds.par_iter())
        .map(|((x, y), &s)| {
            let src = generator.source_from_tokens(x)?;
            let g = generator.sample(&src, &mut ChaCha8Rng::seed_from_u64(s))?;
            Ok((x.clone(), y.clone(), g.surface))
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IrlReport {
    pub rl: RlReport,
    /// Mean hinge on the probe batch before training and after each inner loop.
    pub probe_hinge: Vec<f64>,
    /// Margin satisfaction on the probe before training and after each alternation.
    pub probe_margin: Vec<f64>,
    pub delta1_trace: Vec<f64>,
    pub delta3_trace: Vec<f64>,
}

/// Alternate curriculum-weighted hinge steps on the evaluator with RL steps on
/// the generator.
#[allow(clippy::too_many_arguments)]
pub fn train_rbm_irl(
    generator: &mut Generator,
    evaluator: &mut Evaluator,
    pairs: &[TokenPair],
    pool: &[Vec<String>],
    cfg: &RlConfig,
    heldout: &[TokenPair],
    probe: &[HingeItem],
    rng: &mut ChaCha8Rng,
    log: &mut MetricsLog,
    ckpt: &Checkpointing,
) -> Result<IrlReport> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput("paraphrase pairs for ranking-evaluator training"));
    }
    let mut trainer = PolicyTrainer::new(generator, cfg, false, ckpt, "train-rbm-irl");
    let ev_cfg = match cfg.evaluator_algorithm {
        Algorithm::Adagrad => OptimizerConfig::adagrad(cfg.evaluator_lr),
        Algorithm::Adam => OptimizerConfig::adam(cfg.evaluator_lr),
    };
    let mut ev_opt = Optimizer::new(ev_cfg, evaluator.params());
    let mut report = IrlReport::default();
    if !probe.is_empty() {
        report.probe_hinge.push(mean_hinge(evaluator, probe)?);
        report.probe_margin.push(margin_satisfaction(evaluator, probe)?);
    }
    let mut plateau = Plateau::new(cfg.patience);
    let n_alt = cfg.alternations;
    for a in 0..n_alt {
        let delta3 = cfg.delta3.at(a, n_alt);
        let delta1 = cfg.delta1_irl.at(a, n_alt);
        report.delta3_trace.push(delta3);
        report.delta1_trace.push(delta1);

        let mut hinge_total = 0.0;
        let mut hinge_count = 0usize;
        for _ in 0..cfg.inner_steps {
            let batch: Vec<TokenPair> = (0..cfg.evaluator_batch_size)
                .map(|_| pairs.choose(rng).unwrap().clone())
                .collect();
            let triples = sample_triples(generator, &batch, rng)?;
            let mut items = hinge_items(evaluator, &triples)?;
            let dists: Vec<usize> = batch.iter().map(|(x, y)| edit_distance(x, y)).collect();
            for (it, w) in items.iter_mut().zip(curriculum_weights(&dists, delta3, rng)?) {
                it.weight = w.weight;
            }
            let (loss, mut grads) = evaluator.hinge_batch(&items)?;
            grads.scale(1.0 / items.len() as f64);
            ev_opt.step(evaluator.params_mut(), &grads)?;
            hinge_total += loss;
            hinge_count += items.len();
        }
        if !probe.is_empty() {
            report.probe_hinge.push(mean_hinge(evaluator, probe)?);
        }

        let from = trainer.report.steps as usize;
        let shaping = Shaping::Rescale { delta1, delta2: cfg.delta2 };
        for _ in 0..cfg.steps {
            let inputs = draw_inputs(generator, pairs, pool, cfg.batch_size, cfg.nonparallel_fraction, rng)?;
            trainer.step(generator, &inputs, cfg, shaping, rng, evaluator_reward(evaluator))?;
        }

        let mut row = trainer.row(a + 1, from);
        row.hinge_loss = Some(hinge_total / hinge_count.max(1) as f64);
        row.delta1 = Some(delta1);
        row.delta3 = Some(delta3);
        if !probe.is_empty() {
            let m = margin_satisfaction(evaluator, probe)?;
            report.probe_margin.push(m);
            row.margin_satisfaction_rate = Some(m);
        }
        let evaluate = cfg.eval_every == 0 && a + 1 == n_alt || cfg.eval_every > 0 && (a + 1) % cfg.eval_every == 0;
        let mut stop = false;
        if evaluate && !heldout.is_empty() {
            let h = heldout_report(generator, heldout, Some(evaluator))?;
            stop = plateau.observe(h.reward.unwrap_or(0.0));
            trainer.report.heldout.push(h);
            row = row.with_heldout(&h);
        }
        log.push(row)?;
        if stop {
            trainer.report.stopped_early = true;
            break;
        }
    }
    report.rl = trainer.report;
    Ok(report)
}

/// RL with ROUGE-2 against the reference as reward and an EMA baseline.
pub fn train_rl_rouge(
    generator: &mut Generator,
    pairs: &[TokenPair],
    cfg: &RlConfig,
    heldout: &[TokenPair],
    rng: &mut ChaCha8Rng,
    log: &mut MetricsLog,
    ckpt: &Checkpointing,
) -> Result<RlReport> {
    cfg.validate()?;
    let mut trainer = PolicyTrainer::new(generator, cfg, true, ckpt, "train-rl-rouge");
    let reward = |inp: &RlInput, y: &[String]| {
        let reference = inp.reference.as_ref().ok_or(Error::Missing("ROUGE reward needs a reference".into()))?;
        rouge_n(y, reference, 2)
    };
    let mut plateau = Plateau::new(cfg.patience);
    for (round, n) in rounds(cfg.steps, cfg.eval_every).into_iter().enumerate() {
        let from = trainer.report.steps as usize;
        for _ in 0..n {
            let inputs = draw_inputs(generator, pairs, &[], cfg.batch_size, 0.0, rng)?;
            trainer.step(generator, &inputs, cfg, Shaping::Baseline { baseline: 0.0 }, rng, reward)?;
        }
        let mut row = trainer.row(round + 1, from);
        let mut stop = false;
        if !heldout.is_empty() {
            let h = heldout_report(generator, heldout, None)?;
            stop = plateau.observe(h.metrics.rouge2);
            trainer.report.heldout.push(h);
            row = row.with_heldout(&h);
        }
        log.push(row)?;
        if stop {
            trainer.report.stopped_early = true;
            break;
        }
    }
    Ok(trainer.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::EvaluatorConfig;
    use crate::generator::GeneratorConfig;
    use crate::text::Vocab;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn tiny_setup() -> (Generator, Evaluator, Vec<TokenPair>) {
        let pairs: Vec<TokenPair> = [
            ("how far is mars from earth", "what is the distance between mars and earth"),
            ("how can i learn rust", "what is the best way to learn rust"),
            ("why is gold so expensive", "what makes gold so expensive"),
        ]
        .iter()
        .map(|(a, b)| (toks(a), toks(b)))
        .collect();
        let vocab = Vocab::build(pairs.iter().flat_map(|(a, b)| [a.join(" "), b.join(" ")]), 100).unwrap();
        let gcfg = GeneratorConfig { embed_dim: 6, hidden: 8, attention_dim: 6, output_hidden: 6, max_len: 8, ..Default::default() };
        let ecfg = EvaluatorConfig { embed_dim: 6, attend_hidden: 6, compare_hidden: 6, aggregate_hidden: 6, ..Default::default() };
        (
            Generator::new(gcfg, vocab.clone(), 1).unwrap(),
            Evaluator::new(ecfg, vocab, 2).unwrap(),
            pairs,
        )
    }

    #[test]
    fn rounds_cover_all_steps() {
        assert_eq!(rounds(10, 0), vec![10]);
        assert_eq!(rounds(10, 4), vec![4, 4, 2]);
        assert_eq!(rounds(3, 5), vec![3]);
    }

    #[test]
    fn plateau_stops_after_patience() {
        let mut p = Plateau::new(Some(2));
        assert!(!p.observe(0.5));
        assert!(!p.observe(0.4));
        assert!(p.observe(0.5));
        let mut never = Plateau::new(None);
        assert!((0..10).all(|_| !never.observe(0.0)));
    }

    #[test]
    fn pretraining_lowers_loss() {
        let (mut g, _, pairs) = tiny_setup();
        let cfg = PretrainConfig { epochs: 30, batch_size: 3, ..Default::default() };
        let mut log = MetricsLog::in_memory();
        let losses = pretrain_generator(&mut g, &pairs, &cfg, &[], &mut ChaCha8Rng::seed_from_u64(0), &mut log).unwrap();
        assert!(losses.last().unwrap() < &(0.75 * losses[0]), "{losses:?}");
        assert_eq!(log.rows().len(), 30);
        assert_eq!(log.rows()[29].step, 30);
    }

    #[test]
    fn frozen_evaluator_stays_frozen() {
        let (mut g, ev, pairs) = tiny_setup();
        let before = ev.params().clone();
        let cfg = RlConfig { steps: 3, batch_size: 2, mc_samples: 1, lr: 1e-3, eval_every: 1, ..Default::default() };
        let mut log = MetricsLog::in_memory();
        let r = train_rbm_sl(&mut g, &ev, &pairs, &[toks("how can i learn go")], &cfg, &pairs, &mut ChaCha8Rng::seed_from_u64(1), &mut log, &Checkpointing::default()).unwrap();
        assert_eq!(r.steps, 3);
        assert_eq!(r.heldout.len(), 3);
        assert_eq!(ev.params(), &before);
        assert!(log.rows().iter().all(|row| row.heldout_reward.is_some()));
    }

    #[test]
    fn irl_anneals_and_traces_probe() {
        let (mut g, mut ev, pairs) = tiny_setup();
        let cfg = RlConfig {
            steps: 1,
            batch_size: 2,
            mc_samples: 1,
            alternations: 3,
            inner_steps: 2,
            evaluator_batch_size: 3,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let triples = sample_triples(&g, &pairs, &mut rng).unwrap();
        let probe = hinge_items(&ev, &triples).unwrap();
        let mut log = MetricsLog::in_memory();
        let r = train_rbm_irl(&mut g, &mut ev, &pairs, &[], &cfg, &[], &probe, &mut rng, &mut log, &Checkpointing::default()).unwrap();
        assert_eq!(r.delta3_trace, vec![15.0, 11.5, 8.0]);
        assert_eq!(r.delta1_trace, vec![12.0, 7.5, 3.0]);
        assert_eq!(r.probe_hinge.len(), 4);
        assert_eq!(r.probe_margin.len(), 4);
        assert_eq!(r.rl.steps, 3);
    }

    #[test]
    fn metrics_csv_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let run = |name: &str| {
            let (mut g, _, pairs) = tiny_setup();
            let path = dir.path().join(name);
            let mut log = MetricsLog::to_file(&path).unwrap();
            let cfg = RlConfig { steps: 2, batch_size: 2, mc_samples: 1, lr: 1e-3, ..Default::default() };
            let ckpt = Checkpointing { dir: Some(dir.path().to_path_buf()), every: 1 };
            train_rl_rouge(&mut g, &pairs, &cfg, &pairs, &mut ChaCha8Rng::seed_from_u64(5), &mut log, &ckpt).unwrap();
            std::fs::read(path).unwrap()
        };
        assert_eq!(run("a.csv"), run("b.csv"));
        assert!(dir.path().join("train-rl-rouge-step000002.ckpt").exists());
    }
}

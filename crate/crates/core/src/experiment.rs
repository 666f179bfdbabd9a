//! Mode dispatch for the command-line runner. Every mode reads only its
//! declared inputs and writes only under its output directory.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::evaluator::Evaluator;
use crate::generator::Generator;
use crate::metrics::MetricReport;
use crate::report;
use crate::text::{load_pairs, load_sentences, write_pairs_tsv, write_sentences, PairFormat};
use crate::text::synth::synth_corpus;
use crate::text::{tokenize, Label, TextPair, Vocab, MAX_SENTENCE_LEN};
use crate::training::{
    heldout_report, hinge_items, labeled_sentences, pretrain_generator, sample_triples, train_evaluator_sl,
    train_rbm_irl, train_rbm_sl, train_rl_rouge, Checkpointing, MetricsLog, TokenPair,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SynthData,
    Pretrain,
    TrainEvalSl,
    TrainRbmSl,
    TrainRbmIrl,
    TrainRlRouge,
    Generate,
    Score,
    Evaluate,
    Report,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::SynthData => "synth-data",
            Mode::Pretrain => "pretrain",
            Mode::TrainEvalSl => "train-eval-sl",
            Mode::TrainRbmSl => "train-rbm-sl",
            Mode::TrainRbmIrl => "train-rbm-irl",
            Mode::TrainRlRouge => "train-rl-rouge",
            Mode::Generate => "generate",
            Mode::Score => "score",
            Mode::Evaluate => "evaluate",
            Mode::Report => "report",
        }
    }
}

/// Input paths. Which ones a mode needs is checked before any work starts.
#[derive(Clone, Debug, Default)]
pub struct Inputs {
    /// Paraphrase pairs (TSV or JSONL).
    pub pairs: Option<PathBuf>,
    /// Non-paraphrase pairs.
    pub negatives: Option<PathBuf>,
    /// One sentence per line, no references.
    pub nonparallel: Option<PathBuf>,
    pub generator: Option<PathBuf>,
    pub evaluator: Option<PathBuf>,
    /// Sentences to paraphrase in `generate`.
    pub input: Option<PathBuf>,
    /// Sample instead of greedy decoding in `generate`.
    pub sample: bool,
    /// CSV files for `report`.
    pub metrics: Vec<PathBuf>,
}

/// Why a run stopped. Invalid setups map to exit code 2, failures during a
/// phase to exit code 1.
#[derive(Debug)]
pub enum RunFailure {
    Invalid(Error),
    Phase { phase: &'static str, error: Error },
}

impl RunFailure {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunFailure::Invalid(_) => 2,
            RunFailure::Phase { .. } => 1,
        }
    }
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunFailure::Invalid(e) => write!(f, "invalid run: {e}"),
            RunFailure::Phase { phase, error } => write!(f, "phase `{phase}` failed: {error}"),
        }
    }
}

impl std::error::Error for RunFailure {}

trait InPhase<T> {
    fn phase(self, phase: &'static str) -> std::result::Result<T, RunFailure>;
}

impl<T> InPhase<T> for Result<T> {
    fn phase(self, phase: &'static str) -> std::result::Result<T, RunFailure> {
        self.map_err(|error| RunFailure::Phase { phase, error })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSummary {
    /// `key: value` lines, also written to `summary.txt`.
    pub lines: Vec<(String, String)>,
    pub artifacts: Vec<PathBuf>,
}

impl RunSummary {
    fn add(&mut self, key: &str, value: impl fmt::Display) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn require(mode: Mode, what: &Option<PathBuf>, flag: &str, meaning: &str) -> Result<()> {
    match what {
        None => Err(Error::Missing(format!("{} needs --{flag} ({meaning})", mode.name()))),
        Some(p) if !p.exists() => Err(Error::Missing(format!("--{flag} {} does not exist", p.display()))),
        Some(_) => Ok(()),
    }
}

fn check_optional(what: &Option<PathBuf>, flag: &str) -> Result<()> {
    match what {
        Some(p) if !p.exists() => Err(Error::Missing(format!("--{flag} {} does not exist", p.display()))),
        _ => Ok(()),
    }
}

/// Precondition checks: config validity and the inputs each mode needs.
pub fn validate(mode: Mode, cfg: &ExperimentConfig, inputs: &Inputs) -> Result<()> {
    cfg.validate()?;
    for (p, flag) in [
        (&inputs.pairs, "pairs"),
        (&inputs.negatives, "negatives"),
        (&inputs.nonparallel, "nonparallel"),
        (&inputs.generator, "generator"),
        (&inputs.evaluator, "evaluator"),
        (&inputs.input, "input"),
    ] {
        check_optional(p, flag)?;
    }
    let pairs = "paraphrase pairs, TSV or JSONL";
    match mode {
        Mode::SynthData => Ok(()),
        Mode::Pretrain | Mode::TrainRlRouge => require(mode, &inputs.pairs, "pairs", pairs),
        Mode::TrainEvalSl => {
            require(mode, &inputs.pairs, "pairs", pairs)?;
            require(mode, &inputs.negatives, "negatives", "non-paraphrase pairs for the classifier")
        }
        Mode::TrainRbmSl => {
            require(mode, &inputs.pairs, "pairs", pairs)?;
            if inputs.evaluator.is_none() {
                require(
                    mode,
                    &inputs.negatives,
                    "negatives",
                    "non-paraphrase pairs to train the evaluator; or pass --evaluator",
                )?;
            }
            Ok(())
        }
        Mode::TrainRbmIrl => require(mode, &inputs.pairs, "pairs", pairs),
        Mode::Generate => {
            require(mode, &inputs.generator, "generator", "generator checkpoint")?;
            require(mode, &inputs.input, "input", "sentences to paraphrase, one per line")
        }
        Mode::Score => {
            require(mode, &inputs.evaluator, "evaluator", "evaluator checkpoint")?;
            require(mode, &inputs.pairs, "pairs", "sentence pairs to score")
        }
        Mode::Evaluate => {
            require(mode, &inputs.generator, "generator", "generator checkpoint")?;
            require(mode, &inputs.pairs, "pairs", "input/reference pairs")
        }
        Mode::Report => {
            if inputs.metrics.is_empty() {
                return Err(Error::Missing("report needs at least one CSV".into()));
            }
            inputs.metrics.iter().try_for_each(|p| check_optional(&Some(p.clone()), "metrics"))
        }
    }
}

/// Validate, then run one mode, writing artifacts under `out_dir`.
pub fn run(mode: Mode, cfg: &ExperimentConfig, inputs: &Inputs, out_dir: &Path) -> std::result::Result<RunSummary, RunFailure> {
    validate(mode, cfg, inputs).map_err(RunFailure::Invalid)?;
    fs::create_dir_all(out_dir).map_err(|e| RunFailure::Invalid(e.into()))?;
    let cfg = cfg.effective();
    let mut run = Run {
        cfg: &cfg,
        inputs,
        out: out_dir,
        summary: RunSummary::default(),
    };
    let path = run.path("effective_config.toml");
    cfg.to_toml().and_then(|t| Ok(fs::write(&path, t)?)).phase("write-config")?;
    run.summary.artifacts.push(path);
    run.summary.add("mode", mode.name());
    run.summary.add("seed", cfg.seed);
    match mode {
        Mode::SynthData => run.synth_data(),
        Mode::Pretrain => run.pretrain(),
        Mode::TrainEvalSl => run.train_eval_sl(),
        Mode::TrainRbmSl => run.train_rbm_sl(),
        Mode::TrainRbmIrl => run.train_rbm_irl(),
        Mode::TrainRlRouge => run.train_rl_rouge(),
        Mode::Generate => run.generate(),
        Mode::Score => run.score(),
        Mode::Evaluate => run.evaluate(),
        Mode::Report => run.report(),
    }?;
    let path = run.path("summary.txt");
    let text: String = run.summary.lines.iter().map(|(k, v)| format!("{k}: {v}\n")).collect();
    fs::write(&path, text).map_err(Error::from).phase("write-summary")?;
    run.summary.artifacts.push(path);
    Ok(run.summary)
}

/// Positive pairs split into train and held-out parts, plus negatives and pool.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub train: Vec<TokenPair>,
    pub heldout: Vec<TokenPair>,
    pub negatives: Vec<TokenPair>,
    pub pool: Vec<Vec<String>>,
}

fn token_pair(p: &TextPair) -> TokenPair {
    let mut x = tokenize(&p.s1);
    let mut y = tokenize(&p.s2);
    x.truncate(MAX_SENTENCE_LEN);
    y.truncate(MAX_SENTENCE_LEN);
    (x, y)
}

fn read_pairs(path: &Path) -> Result<Vec<TextPair>> {
    let format = PairFormat::from_path(path).unwrap_or(PairFormat::Tsv);
    Ok(load_pairs(path, format)?.pairs)
}

impl Dataset {
    /// Load and split. The split depends only on the pairs file and `seed`.
    pub fn load(inputs: &Inputs, heldout_fraction: f64, max_heldout: usize, seed: u64) -> Result<Self> {
        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        if let Some(p) = &inputs.pairs {
            for pair in read_pairs(p)? {
                match pair.label {
                    Label::Positive => positives.push(token_pair(&pair)),
                    Label::Negative => negatives.push(token_pair(&pair)),
                }
            }
        }
        if let Some(p) = &inputs.negatives {
            let before = negatives.len();
            negatives.extend(read_pairs(p)?.iter().filter(|p| p.label == Label::Negative).map(token_pair));
            if negatives.len() == before {
                return Err(Error::Data {
                    path: p.clone(),
                    reason: "no pairs labeled 0".into(),
                });
            }
        }
        let pool = match &inputs.nonparallel {
            Some(p) => load_sentences(p)?
                .iter()
                .map(|s| tokenize(s).into_iter().take(MAX_SENTENCE_LEN).collect::<Vec<_>>())
                .filter(|t| !t.is_empty())
                .collect(),
            None => Vec::new(),
        };
        positives.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_held = ((positives.len() as f64 * heldout_fraction).round() as usize).min(max_heldout);
        let train = positives.split_off(n_held);
        Ok(Dataset {
            train,
            heldout: positives,
            negatives,
            pool,
        })
    }

    /// Frequency vocabulary over every sentence the run may see in training.
    pub fn vocab(&self, max_size: usize) -> Result<Vocab> {
        let texts = self
            .train
            .iter()
            .chain(&self.negatives)
            .flat_map(|(x, y)| [x.join(" "), y.join(" ")])
            .chain(self.pool.iter().map(|s| s.join(" ")));
        Vocab::build(texts, max_size)
    }

    pub fn labeled(&self) -> Vec<(Vec<String>, Vec<String>, Label)> {
        self.train
            .iter()
            .map(|(x, y)| (x.clone(), y.clone(), Label::Positive))
            .chain(self.negatives.iter().map(|(x, y)| (x.clone(), y.clone(), Label::Negative)))
            .collect()
    }
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    inputs: &'a Inputs,
    out: &'a Path,
    summary: RunSummary,
}

type Outcome = std::result::Result<(), RunFailure>;

#[derive(Serialize)]
struct Generated<'a> {
    input: &'a str,
    output: &'a str,
    logprob_sum: f64,
}

impl Run<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn seeds(&self) -> crate::config::PhaseSeeds {
        self.cfg.phase_seeds()
    }

    fn dataset(&self) -> std::result::Result<Dataset, RunFailure> {
        let d = &self.cfg.data;
        let data = Dataset::load(self.inputs, d.heldout_fraction, d.max_heldout, self.seeds().split).phase("load-data")?;
        if data.train.is_empty() && self.inputs.pairs.is_some() {
            return Err(RunFailure::Phase {
                phase: "load-data",
                error: Error::EmptyInput("training pairs after the held-out split"),
            });
        }
        Ok(data)
    }

    fn metrics_log(&mut self) -> std::result::Result<MetricsLog, RunFailure> {
        let path = self.path("metrics.csv");
        let log = MetricsLog::to_file(&path).phase("open-metrics")?;
        self.summary.artifacts.push(path);
        Ok(log)
    }

    fn checkpointing(&mut self) -> std::result::Result<Checkpointing, RunFailure> {
        if self.cfg.run.checkpoint_every == 0 {
            return Ok(Checkpointing::default());
        }
        let dir = self.path("checkpoints");
        fs::create_dir_all(&dir).map_err(Error::from).phase("checkpoint")?;
        Ok(Checkpointing {
            dir: Some(dir),
            every: self.cfg.run.checkpoint_every,
        })
    }

    fn save_generator(&mut self, g: &Generator) -> Outcome {
        let path = self.path("generator.ckpt");
        g.save(&path).phase("save-generator")?;
        self.summary.artifacts.push(path);
        Ok(())
    }

    fn save_evaluator(&mut self, e: &Evaluator) -> Outcome {
        let path = self.path("evaluator.ckpt");
        e.save(&path).phase("save-evaluator")?;
        self.summary.artifacts.push(path);
        Ok(())
    }

    fn report_heldout(&mut self, prefix: &str, g: &Generator, heldout: &[TokenPair], e: Option<&Evaluator>) -> Outcome {
        if heldout.is_empty() {
            return Ok(());
        }
        let h = heldout_report(g, heldout, e).phase("heldout-eval")?;
        self.summary.add(&format!("{prefix}_rouge1"), format!("{:.6}", h.metrics.rouge1));
        self.summary.add(&format!("{prefix}_rouge2"), format!("{:.6}", h.metrics.rouge2));
        self.summary.add(&format!("{prefix}_rougeL"), format!("{:.6}", h.metrics.rouge_l));
        self.summary.add(&format!("{prefix}_bleu"), format!("{:.6}", h.metrics.bleu));
        if let Some(r) = h.reward {
            self.summary.add(&format!("{prefix}_reward"), format!("{:.6}", r));
        }
        Ok(())
    }

    /// Load the given generator or pretrain a fresh one on `data`.
    fn generator(&mut self, data: &Dataset, log: &mut MetricsLog) -> std::result::Result<Generator, RunFailure> {
        if let Some(p) = &self.inputs.generator {
            return Generator::load(p).phase("load-generator");
        }
        let seeds = self.seeds();
        let vocab = data.vocab(self.cfg.data.vocab_max).phase("vocab")?;
        let mut g = Generator::new(self.cfg.generator.clone(), vocab, seeds.generator_init).phase("pretrain")?;
        let mut rng = ChaCha8Rng::seed_from_u64(seeds.pretrain);
        let losses =
            pretrain_generator(&mut g, &data.train, &self.cfg.pretrain, &data.heldout, &mut rng, log).phase("pretrain")?;
        if let Some(l) = losses.last() {
            self.summary.add("final_mle_loss", format!("{l:.6}"));
        }
        Ok(g)
    }

    fn sl_evaluator(&mut self, data: &Dataset, log: &mut MetricsLog) -> std::result::Result<Evaluator, RunFailure> {
        if let Some(p) = &self.inputs.evaluator {
            return Evaluator::load(p).phase("load-evaluator");
        }
        let seeds = self.seeds();
        let vocab = data.vocab(self.cfg.data.vocab_max).phase("vocab")?;
        let mut e = Evaluator::new(self.cfg.evaluator.clone(), vocab, seeds.evaluator_init).phase("train-eval-sl")?;
        let mut rng = ChaCha8Rng::seed_from_u64(seeds.evaluator_sl);
        let mut labeled = labeled_sentences(&e, &data.labeled());
        labeled.shuffle(&mut rng);
        let n_held = ((labeled.len() as f64 * self.cfg.data.heldout_fraction).round() as usize)
            .min(2 * self.cfg.data.max_heldout);
        let train = labeled.split_off(n_held);
        let accs = train_evaluator_sl(&mut e, &train, &labeled, &self.cfg.evaluator_sl, &mut rng, log).phase("train-eval-sl")?;
        if let Some(a) = accs.last() {
            self.summary.add("evaluator_heldout_accuracy", format!("{a:.6}"));
        }
        Ok(e)
    }

    fn synth_data(&mut self) -> Outcome {
        let corpus = synth_corpus(self.seeds().data, &self.cfg.synth).phase("synth-data")?;
        let write = |run: &mut Self, name: &str, f: &dyn Fn(&Path) -> Result<()>| -> Outcome {
            let path = run.path(name);
            f(&path).phase("synth-data")?;
            run.summary.artifacts.push(path);
            Ok(())
        };
        write(self, "pairs.tsv", &|p| write_pairs_tsv(p, &corpus.positive_pairs()))?;
        write(self, "negatives.tsv", &|p| write_pairs_tsv(p, &corpus.negative_pairs()))?;
        write(self, "nonparallel.txt", &|p| write_sentences(p, &corpus.pool_sentences()))?;
        write(self, "traces.jsonl", &|p| {
            let mut w = BufWriter::new(fs::File::create(p)?);
            for pos in &corpus.positives {
                writeln!(w, "{}", serde_json::to_string(pos)?)?;
            }
            Ok(w.flush()?)
        })?;
        let stats = corpus.stats();
        self.summary.add("positives", stats.positives);
        self.summary.add("negatives", stats.negatives);
        self.summary.add("hard_negatives", stats.hard_negatives);
        self.summary.add("nonparallel", stats.pool);
        Ok(())
    }

    fn pretrain(&mut self) -> Outcome {
        let data = self.dataset()?;
        let mut log = self.metrics_log()?;
        let g = self.generator(&data, &mut log)?;
        self.report_heldout("heldout", &g, &data.heldout, None)?;
        self.save_generator(&g)
    }

    fn train_eval_sl(&mut self) -> Outcome {
        let data = self.dataset()?;
        let mut log = self.metrics_log()?;
        let e = self.sl_evaluator(&data, &mut log)?;
        self.save_evaluator(&e)
    }

    fn train_rbm_sl(&mut self) -> Outcome {
        let data = self.dataset()?;
        let mut log = self.metrics_log()?;
        let mut g = self.generator(&data, &mut log)?;
        let e = self.sl_evaluator(&data, &mut log)?;
        self.report_heldout("mle", &g, &data.heldout, Some(&e))?;
        let ckpt = self.checkpointing()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seeds().rl);
        let r = train_rbm_sl(&mut g, &e, &data.train, &data.pool, &self.cfg.rl, &data.heldout, &mut rng, &mut log, &ckpt)
            .phase("train-rbm-sl")?;
        self.summary.add("rl_steps", r.steps);
        self.summary.add("stopped_early", r.stopped_early);
        self.report_heldout("heldout", &g, &data.heldout, Some(&e))?;
        self.save_generator(&g)?;
        self.save_evaluator(&e)
    }

    fn train_rbm_irl(&mut self) -> Outcome {
        let data = self.dataset()?;
        let mut log = self.metrics_log()?;
        let mut g = self.generator(&data, &mut log)?;
        let seeds = self.seeds();
        let mut e = match &self.inputs.evaluator {
            Some(p) => Evaluator::load(p).phase("load-evaluator")?,
            None => {
                let vocab = data.vocab(self.cfg.data.vocab_max).phase("vocab")?;
                Evaluator::new(self.cfg.evaluator.clone(), vocab, seeds.evaluator_init).phase("train-rbm-irl")?
            }
        };
        let probe_pairs: Vec<TokenPair> = data.heldout.iter().take(self.cfg.run.probe_size).cloned().collect();
        let triples = sample_triples(&g, &probe_pairs, &mut ChaCha8Rng::seed_from_u64(seeds.probe)).phase("probe")?;
        let probe = hinge_items(&e, &triples).phase("probe")?;
        let ckpt = self.checkpointing()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seeds.rl);
        let r = train_rbm_irl(&mut g, &mut e, &data.train, &data.pool, &self.cfg.rl, &data.heldout, &probe, &mut rng, &mut log, &ckpt)
            .phase("train-rbm-irl")?;
        let path = self.path("probe.csv");
        let mut w = csv::Writer::from_path(&path).map_err(Error::from).phase("probe")?;
        (|| -> Result<()> {
            w.write_record(["point", "probe_hinge", "margin_satisfaction_rate"])?;
            for (i, (h, m)) in r.probe_hinge.iter().zip(&r.probe_margin).enumerate() {
                w.write_record([i.to_string(), h.to_string(), m.to_string()])?;
            }
            Ok(w.flush()?)
        })()
        .phase("probe")?;
        self.summary.artifacts.push(path);
        if let (Some(a), Some(b)) = (r.probe_margin.first(), r.probe_margin.last()) {
            self.summary.add("probe_margin_before", format!("{a:.6}"));
            self.summary.add("probe_margin_after", format!("{b:.6}"));
        }
        self.summary.add("rl_steps", r.rl.steps);
        self.report_heldout("heldout", &g, &data.heldout, Some(&e))?;
        self.save_generator(&g)?;
        self.save_evaluator(&e)
    }

    fn train_rl_rouge(&mut self) -> Outcome {
        let data = self.dataset()?;
        let mut log = self.metrics_log()?;
        let mut g = self.generator(&data, &mut log)?;
        self.report_heldout("mle", &g, &data.heldout, None)?;
        let ckpt = self.checkpointing()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seeds().rl);
        let r = train_rl_rouge(&mut g, &data.train, &self.cfg.rl, &data.heldout, &mut rng, &mut log, &ckpt)
            .phase("train-rl-rouge")?;
        self.summary.add("rl_steps", r.steps);
        self.report_heldout("heldout", &g, &data.heldout, None)?;
        self.save_generator(&g)
    }

    fn decode_all(&self, g: &Generator, inputs: &[Vec<String>]) -> Result<Vec<(Vec<String>, f64)>> {
        let sample = self.inputs.sample;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seeds().decode);
        let seeds: Vec<u64> = inputs.iter().map(|_| rand::Rng::gen(&mut rng)).collect();
        inputs
            .par_iter()
            .zip(seeds.par_iter())
            .map(|(x, &s)| {
                let src = g.source_from_tokens(x)?;
                let out = if sample {
                    g.sample(&src, &mut ChaCha8Rng::seed_from_u64(s))?
                } else {
                    g.greedy(&src)?
                };
                Ok((out.surface.clone(), out.logprob_sum()))
            })
            .collect()
    }

    fn write_generations(&mut self, inputs: &[Vec<String>], outputs: &[(Vec<String>, f64)]) -> Outcome {
        let path = self.path("generations.jsonl");
        (|| -> Result<()> {
            let mut w = BufWriter::new(fs::File::create(&path)?);
            for (x, (y, lp)) in inputs.iter().zip(outputs) {
                let rec = Generated {
                    input: &x.join(" "),
                    output: &y.join(" "),
                    logprob_sum: *lp,
                };
                writeln!(w, "{}", serde_json::to_string(&rec)?)?;
            }
            Ok(w.flush()?)
        })()
        .phase("write-generations")?;
        self.summary.artifacts.push(path);
        Ok(())
    }

    fn generate(&mut self) -> Outcome {
        let g = Generator::load(self.inputs.generator.as_ref().unwrap()).phase("load-generator")?;
        let inputs: Vec<Vec<String>> = load_sentences(self.inputs.input.as_ref().unwrap())
            .phase("load-data")?
            .iter()
            .map(|s| tokenize(s))
            .filter(|t| !t.is_empty())
            .collect();
        let outputs = self.decode_all(&g, &inputs).phase("generate")?;
        self.summary.add("generated", outputs.len());
        self.write_generations(&inputs, &outputs)
    }

    fn score(&mut self) -> Outcome {
        let e = Evaluator::load(self.inputs.evaluator.as_ref().unwrap()).phase("load-evaluator")?;
        let pairs = read_pairs(self.inputs.pairs.as_ref().unwrap()).phase("load-data")?;
        let sentences: Vec<_> = pairs
            .iter()
            .map(|p| {
                let (x, y) = token_pair(p);
                (e.sentence(&x), e.sentence(&y))
            })
            .collect();
        let scores = e.score_batch(&sentences).phase("score")?;
        let path = self.path("scores.tsv");
        (|| -> Result<()> {
            let mut w = BufWriter::new(fs::File::create(&path)?);
            for (p, s) in pairs.iter().zip(&scores) {
                writeln!(w, "{}\t{}\t{s}", p.s1, p.s2)?;
            }
            Ok(w.flush()?)
        })()
        .phase("score")?;
        self.summary.artifacts.push(path);
        self.summary.add("scored", scores.len());
        Ok(())
    }

    fn evaluate(&mut self) -> Outcome {
        let g = Generator::load(self.inputs.generator.as_ref().unwrap()).phase("load-generator")?;
        let e = match &self.inputs.evaluator {
            Some(p) => Some(Evaluator::load(p).phase("load-evaluator")?),
            None => None,
        };
        let pairs: Vec<TokenPair> = read_pairs(self.inputs.pairs.as_ref().unwrap())
            .phase("load-data")?
            .iter()
            .filter(|p| p.label == Label::Positive)
            .map(token_pair)
            .collect();
        if pairs.is_empty() {
            return Err(RunFailure::Phase {
                phase: "load-data",
                error: Error::EmptyInput("paraphrase pairs to evaluate"),
            });
        }
        let inputs: Vec<Vec<String>> = pairs.iter().map(|(x, _)| x.clone()).collect();
        let outputs = self.decode_all(&g, &inputs).phase("evaluate")?;
        let rewards: Option<Vec<f64>> = e
            .as_ref()
            .map(|e| {
                let xy: Vec<_> = pairs.iter().zip(&outputs).map(|((x, _), (o, _))| (e.sentence(x), e.sentence(o))).collect();
                e.score_batch(&xy)
            })
            .transpose()
            .phase("evaluate")?;
        let mut rows = Vec::with_capacity(pairs.len());
        for (i, ((x, y), (o, _))) in pairs.iter().zip(&outputs).enumerate() {
            let m = MetricReport::sentence(o, y).phase("evaluate")?;
            rows.push(report::EvalRow {
                input: x.join(" "),
                reference: y.join(" "),
                output: o.join(" "),
                rouge1: m.rouge1,
                rouge2: m.rouge2,
                rouge_l: m.rouge_l,
                bleu: m.bleu,
                reward: rewards.as_ref().map(|r| r[i]),
            });
        }
        let mean = report::mean_row(&rows);
        let path = self.path("evaluation.csv");
        report::write_evaluation(&path, &rows, &mean).phase("evaluate")?;
        self.summary.artifacts.push(path);
        self.summary.add("pairs", rows.len());
        self.summary.add("rouge1", format!("{:.6}", mean.rouge1));
        self.summary.add("rouge2", format!("{:.6}", mean.rouge2));
        self.summary.add("rougeL", format!("{:.6}", mean.rouge_l));
        self.summary.add("bleu", format!("{:.6}", mean.bleu));
        if let Some(r) = mean.reward {
            self.summary.add("reward", format!("{r:.6}"));
        }
        self.write_generations(&inputs, &outputs)
    }

    fn report(&mut self) -> Outcome {
        let rep = report::build(&self.inputs.metrics).phase("report")?;
        let table = self.path("report.csv");
        let series = self.path("reward_series.csv");
        rep.write(&table, &series).phase("report")?;
        self.summary.artifacts.push(table);
        self.summary.artifacts.push(series);
        for row in &rep.table {
            self.summary.add(
                &row.model,
                format!("rouge1 {:.4} rouge2 {:.4} bleu {:.4}", row.rouge1, row.rouge2, row.bleu),
            );
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_negatives_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let pairs = dir.path().join("pairs.tsv");
        fs::write(&pairs, "a b\tb a\t1\n").unwrap();
        let inputs = Inputs { pairs: Some(pairs), ..Default::default() };
        let err = run(Mode::TrainRbmSl, &ExperimentConfig::default(), &inputs, &dir.path().join("out")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("--negatives"), "{err}");
        assert!(!dir.path().join("out").exists());
    }

    #[test]
    fn split_is_seeded_and_capped() {
        let dir = tempfile::tempdir().unwrap();
        let pairs = dir.path().join("pairs.tsv");
        let lines: String = (0..50).map(|i| format!("w{i} x\tx w{i}\t1\n")).collect();
        fs::write(&pairs, lines).unwrap();
        let inputs = Inputs { pairs: Some(pairs), ..Default::default() };
        let a = Dataset::load(&inputs, 0.2, 6, 3).unwrap();
        let b = Dataset::load(&inputs, 0.2, 6, 3).unwrap();
        assert_eq!(a.heldout.len(), 6);
        assert_eq!(a.train.len(), 44);
        assert_eq!(a.heldout, b.heldout);
        assert!(a.heldout.iter().all(|h| !a.train.contains(h)));
    }

    #[test]
    fn synth_data_writes_declared_files_only() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("synth");
        let mut cfg = ExperimentConfig::default();
        cfg.synth = crate::text::synth::SynthConfig::with_pairs(40);
        let s = run(Mode::SynthData, &cfg, &Inputs::default(), &out).unwrap();
        let mut names: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        names.sort();
        assert_eq!(
            names,
            ["effective_config.toml", "negatives.tsv", "nonparallel.txt", "pairs.tsv", "summary.txt", "traces.jsonl"]
        );
        assert_eq!(s.get("positives"), Some("40"));
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}

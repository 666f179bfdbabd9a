use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rbm::config::ExperimentConfig;
use rbm::experiment::{run, Inputs, Mode};

#[derive(Parser)]
#[command(name = "rbm", version, about = "Paraphrase generation trained against a learned evaluator")]
struct Cli {
    /// TOML experiment config; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; every phase seed derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (default: runs/<mode>).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Config override as dotted key=value, e.g. rl.lr=0.001. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    mode: Command,
}

#[derive(Args, Default)]
struct Paths {
    /// Paraphrase pairs, TSV (s1, s2, label) or JSONL.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Non-paraphrase pairs.
    #[arg(long)]
    negatives: Option<PathBuf>,
    /// Sentences without references, one per line.
    #[arg(long)]
    nonparallel: Option<PathBuf>,
    /// Generator checkpoint; pretrained from --pairs when absent.
    #[arg(long)]
    generator: Option<PathBuf>,
    /// Evaluator checkpoint.
    #[arg(long)]
    evaluator: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic paraphrase corpus.
    SynthData {
        /// Number of paraphrase pairs.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Maximum-likelihood pretraining of the generator.
    Pretrain(Paths),
    /// Supervised training of the evaluator on positive and negative pairs.
    TrainEvalSl(Paths),
    /// Policy-gradient fine-tuning against a frozen supervised evaluator.
    TrainRbmSl(Paths),
    /// Alternating ranking-evaluator and generator training.
    TrainRbmIrl(Paths),
    /// Policy-gradient fine-tuning with ROUGE-2 reward.
    TrainRlRouge(Paths),
    /// Paraphrase sentences with a trained generator.
    Generate {
        #[command(flatten)]
        paths: Paths,
        /// Sentences to paraphrase, one per line.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Sample instead of decoding greedily.
        #[arg(long)]
        sample: bool,
    },
    /// Score sentence pairs with a trained evaluator.
    Score(Paths),
    /// Per-pair ROUGE/BLEU of generations against references.
    Evaluate(Paths),
    /// Comparison table and reward series from evaluation or metrics CSVs.
    Report {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
}

fn inputs(p: Paths) -> Inputs {
    Inputs {
        pairs: p.pairs,
        negatives: p.negatives,
        nonparallel: p.nonparallel,
        generator: p.generator,
        evaluator: p.evaluator,
        ..Default::default()
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RBM_LOG", "info")).init();
    let cli = Cli::parse();

    let mut cfg = match &cli.config {
        Some(p) => match ExperimentConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => ExperimentConfig::default(),
    };
    for o in &cli.overrides {
        if let Err(e) = cfg.apply_override(o) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: worker pool: {e}");
            return ExitCode::from(1);
        }
    }

    let (mode, inputs) = match cli.mode {
        Command::SynthData { n } => {
            if let Some(n) = n {
                cfg.synth.n_pairs = n;
                cfg.synth.pool_size = n / 2;
            }
            (Mode::SynthData, Inputs::default())
        }
        Command::Pretrain(p) => (Mode::Pretrain, inputs(p)),
        Command::TrainEvalSl(p) => (Mode::TrainEvalSl, inputs(p)),
        Command::TrainRbmSl(p) => (Mode::TrainRbmSl, inputs(p)),
        Command::TrainRbmIrl(p) => (Mode::TrainRbmIrl, inputs(p)),
        Command::TrainRlRouge(p) => (Mode::TrainRlRouge, inputs(p)),
        Command::Generate { paths, input, sample } => (Mode::Generate, Inputs { input, sample, ..inputs(paths) }),
        Command::Score(p) => (Mode::Score, inputs(p)),
        Command::Evaluate(p) => (Mode::Evaluate, inputs(p)),
        Command::Report { csv } => (Mode::Report, Inputs { metrics: csv, ..Default::default() }),
    };
    let out_dir = cli.out_dir.unwrap_or_else(|| PathBuf::from("runs").join(mode.name()));

    match run(mode, &cfg, &inputs, &out_dir) {
        Ok(summary) => {
            for (k, v) in &summary.lines {
                println!("{k}: {v}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

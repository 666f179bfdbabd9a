//! The whole experiment flow through the same entry point as the CLI.
//!
//! `cargo run --example pipeline [OUT_DIR]`

use std::path::PathBuf;

use rbm::config::ExperimentConfig;
use rbm::experiment::{run, Inputs, Mode, RunFailure};

fn main() -> Result<(), RunFailure> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("rbm-pipeline"));
    let cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example.toml"))
        .map_err(RunFailure::Invalid)?;

    run(Mode::SynthData, &cfg, &Inputs::default(), &out.join("data"))?;
    let data = Inputs {
        pairs: Some(out.join("data/pairs.tsv")),
        negatives: Some(out.join("data/negatives.tsv")),
        nonparallel: Some(out.join("data/nonparallel.txt")),
        ..Default::default()
    };
    run(Mode::Pretrain, &cfg, &data, &out.join("pretrain"))?;
    let with_generator = Inputs { generator: Some(out.join("pretrain/generator.ckpt")), ..data.clone() };
    run(Mode::TrainEvalSl, &cfg, &data, &out.join("evaluator"))?;
    let full = Inputs { evaluator: Some(out.join("evaluator/evaluator.ckpt")), ..with_generator };

    let mut metric_files = Vec::new();
    for (mode, dir) in [
        (Mode::TrainRbmSl, "rbm-sl"),
        (Mode::TrainRbmIrl, "rbm-irl"),
        (Mode::TrainRlRouge, "rl-rouge"),
    ] {
        let s = run(mode, &cfg, &full, &out.join(dir))?;
        println!("{dir}: held-out ROUGE-1 {}", s.get("heldout_rouge1").unwrap_or("-"));
        let eval = Inputs { generator: Some(out.join(dir).join("generator.ckpt")), ..full.clone() };
        run(Mode::Evaluate, &cfg, &eval, &out.join(format!("{dir}-heldout")))?;
        metric_files.push(out.join(format!("{dir}-heldout/evaluation.csv")));
        metric_files.push(out.join(dir).join("metrics.csv"));
    }

    let report = run(Mode::Report, &cfg, &Inputs { metrics: metric_files, ..Default::default() }, &out.join("report"))?;
    for (k, v) in &report.lines {
        println!("{k}: {v}");
    }
    println!("artifacts under {}", out.display());
    Ok(())
}

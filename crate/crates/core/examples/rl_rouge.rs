//! The RL baseline: ROUGE-2 against the reference as reward, EMA baseline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbm::config::ExperimentConfig;
use rbm::generator::Generator;
use rbm::rl::RlConfig;
use rbm::text::synth::synth_corpus;
use rbm::text::Vocab;
use rbm::training::*;

fn main() -> rbm::Result<()> {
    let cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example.toml"))?;
    let corpus = synth_corpus(13, &cfg.synth)?;
    let pairs: Vec<TokenPair> = corpus.positives.iter().map(|p| (p.x.clone(), p.y.clone())).collect();
    let (train, heldout) = pairs.split_at(pairs.len() - 150);
    let vocab = Vocab::build(pairs.iter().flat_map(|(x, y)| [x.join(" "), y.join(" ")]), 5000)?;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut log = MetricsLog::in_memory();

    let mut g = Generator::new(cfg.generator.clone(), vocab, 5)?;
    pretrain_generator(&mut g, train, &cfg.pretrain, &[], &mut rng, &mut log)?;
    let before = heldout_report(&g, heldout, None)?;
    let rl = RlConfig { eval_every: 10, ..cfg.rl.clone() };
    let r = train_rl_rouge(&mut g, train, &rl, heldout, &mut rng, &mut log, &Checkpointing::default())?;

    println!("MLE held-out ROUGE-2 {:.4}", before.metrics.rouge2);
    for (i, h) in r.heldout.iter().enumerate() {
        println!("after {:>2} steps: ROUGE-2 {:.4}", 10 * (i + 1), h.metrics.rouge2);
    }
    Ok(())
}

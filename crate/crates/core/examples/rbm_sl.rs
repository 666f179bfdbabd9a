//! Fine-tune a pretrained generator against a frozen supervised evaluator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbm::config::ExperimentConfig;
use rbm::evaluator::Evaluator;
use rbm::generator::Generator;
use rbm::text::synth::synth_corpus;
use rbm::text::{Label, Vocab};
use rbm::training::*;

fn main() -> rbm::Result<()> {
    let cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example.toml"))?;
    let corpus = synth_corpus(11, &cfg.synth)?;
    let pairs: Vec<TokenPair> = corpus.positives.iter().map(|p| (p.x.clone(), p.y.clone())).collect();
    let (train, heldout) = pairs.split_at(pairs.len() - 150);
    let vocab = Vocab::build(pairs.iter().flat_map(|(x, y)| [x.join(" "), y.join(" ")]), 5000)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut log = MetricsLog::in_memory();

    let mut ev = Evaluator::new(cfg.evaluator.clone(), vocab.clone(), 1)?;
    let labeled: Vec<_> = corpus
        .positives
        .iter()
        .map(|p| (p.x.clone(), p.y.clone(), Label::Positive))
        .chain(corpus.negatives.iter().map(|n| (n.x.clone(), n.y.clone(), Label::Negative)))
        .collect();
    let sentences = labeled_sentences(&ev, &labeled);
    train_evaluator_sl(&mut ev, &sentences, &[], &cfg.evaluator_sl, &mut rng, &mut log)?;

    let mut g = Generator::new(cfg.generator.clone(), vocab, 2)?;
    pretrain_generator(&mut g, train, &cfg.pretrain, &[], &mut rng, &mut log)?;
    let before = heldout_report(&g, heldout, Some(&ev))?;

    let report = train_rbm_sl(&mut g, &ev, train, &corpus.pool, &cfg.rl, heldout, &mut rng, &mut log, &Checkpointing::default())?;
    let after = heldout_report(&g, heldout, Some(&ev))?;

    println!("mean batch reward by step: {:.3?}", report.mean_raw_reward);
    println!("ground-truth records used: {}", report.references_used);
    for (name, h) in [("MLE", before), ("RbM-SL", after)] {
        println!(
            "{name:>7}: reward {:.4}  ROUGE-1 {:.4}  ROUGE-2 {:.4}  BLEU {:.4}",
            h.reward.unwrap_or(f64::NAN),
            h.metrics.rouge1,
            h.metrics.rouge2,
            h.metrics.bleu
        );
    }
    Ok(())
}

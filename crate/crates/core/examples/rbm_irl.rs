//! Alternate max-margin evaluator updates with generator updates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbm::config::ExperimentConfig;
use rbm::evaluator::Evaluator;
use rbm::generator::Generator;
use rbm::text::synth::synth_corpus;
use rbm::text::Vocab;
use rbm::training::*;

fn main() -> rbm::Result<()> {
    let cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example.toml"))?;
    let corpus = synth_corpus(12, &cfg.synth)?;
    let pairs: Vec<TokenPair> = corpus.positives.iter().map(|p| (p.x.clone(), p.y.clone())).collect();
    let (train, heldout) = pairs.split_at(pairs.len() - 150);
    let vocab = Vocab::build(pairs.iter().flat_map(|(x, y)| [x.join(" "), y.join(" ")]), 5000)?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut log = MetricsLog::in_memory();

    let mut g = Generator::new(cfg.generator.clone(), vocab.clone(), 3)?;
    pretrain_generator(&mut g, train, &cfg.pretrain, &[], &mut rng, &mut log)?;
    let mut ev = Evaluator::new(cfg.evaluator.clone(), vocab, 4)?;

    // a frozen probe of held-out triples tracks the evaluator between alternations
    let triples = sample_triples(&g, heldout, &mut ChaCha8Rng::seed_from_u64(99))?;
    let probe = hinge_items(&ev, &triples)?;
    let r = train_rbm_irl(&mut g, &mut ev, train, &corpus.pool, &cfg.rl, heldout, &probe, &mut rng, &mut log, &Checkpointing::default())?;

    println!("δ₃ per alternation: {:.2?}", r.delta3_trace);
    println!("δ₁ per alternation: {:.2?}", r.delta1_trace);
    println!("probe hinge:        {:.4?}", r.probe_hinge);
    println!("probe margin rate:  {:.3?}", r.probe_margin);
    for row in log.rows().iter().filter(|r| r.phase == "train-rbm-irl") {
        println!("alternation {}: hinge {:.4}", row.epoch, row.hinge_loss.unwrap_or(f64::NAN));
    }
    Ok(())
}

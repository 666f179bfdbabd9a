//! Pretrain a small pointer-generator and watch it copy a word it has never seen.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbm::generator::{Generator, GeneratorConfig};
use rbm::text::synth::{synth_corpus, SynthConfig};
use rbm::text::{Vocab, SOS};
use rbm::training::{pretrain_generator, MetricsLog, PretrainConfig, TokenPair};

fn main() -> rbm::Result<()> {
    let corpus = synth_corpus(5, &SynthConfig::with_pairs(3000))?;
    let pairs: Vec<TokenPair> = corpus.positives.iter().map(|p| (p.x.clone(), p.y.clone())).collect();
    // keep the vocabulary small so rare names fall outside it
    let vocab = Vocab::build(pairs.iter().flat_map(|(x, y)| [x.join(" "), y.join(" ")]), 80)?;
    let cfg = GeneratorConfig {
        embed_dim: 16,
        hidden: 32,
        attention_dim: 32,
        output_hidden: 32,
        ..Default::default()
    };
    let mut g = Generator::new(cfg, vocab, 5)?;
    let pre = PretrainConfig { epochs: 6, ..Default::default() };
    let losses = pretrain_generator(&mut g, &pairs, &pre, &[], &mut ChaCha8Rng::seed_from_u64(5), &mut MetricsLog::in_memory())?;
    println!("loss per epoch: {losses:.3?}");

    for (x, _) in pairs.iter().filter(|(x, _)| x.iter().any(|t| !g.vocab().contains(t))).take(5) {
        let src = g.source_from_tokens(x)?;
        let out = g.greedy(&src)?;
        let enc = g.encode(&src)?;
        println!("\n{}\n  -> {}", x.join(" "), out.surface.join(" "));
        for (k, &id) in out.ids.iter().enumerate().filter(|(_, &id)| id >= g.vocab().len()) {
            let prev = if k == 0 { SOS } else { out.ids[k - 1] };
            let d = g.step(&src, &enc, &out.states[k], prev)?;
            println!("  step {k}: copied {:?} with p {:.3}, switch q {:.3}", out.surface[k], d.probs[id], d.q);
        }
    }
    Ok(())
}

//! Generate the synthetic paraphrase corpus and replay a few rewrite traces.

use rbm::text::synth::{replay, synth_corpus, SynthConfig};

fn main() -> rbm::Result<()> {
    let corpus = synth_corpus(42, &SynthConfig::with_pairs(200))?;
    let stats = corpus.stats();
    println!(
        "{} positives, {} negatives ({} hard), {} pool sentences",
        stats.positives, stats.negatives, stats.hard_negatives, stats.pool
    );

    for p in corpus.positives.iter().take(4) {
        println!("\n{}\n  -> {}", p.x.join(" "), p.y.join(" "));
        for step in &p.trace {
            println!("  {:?} at {}: {:?} => {:?}", step.rule, step.at, step.remove, step.insert);
        }
        assert_eq!(replay(&p.x, &p.trace)?, p.y);
    }
    for n in corpus.negatives.iter().take(3) {
        println!("\n[{:?}] {} / {}", n.kind, n.x.join(" "), n.y.join(" "));
    }
    Ok(())
}

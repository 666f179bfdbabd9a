//! Train the matching evaluator as a paraphrase classifier.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbm::evaluator::{Evaluator, EvaluatorConfig};
use rbm::text::synth::{synth_corpus, SynthConfig};
use rbm::text::{Label, Vocab};
use rbm::training::{labeled_sentences, train_evaluator_sl, EvaluatorSlConfig, MetricsLog};

fn main() -> rbm::Result<()> {
    let corpus = synth_corpus(3, &SynthConfig::with_pairs(5000))?;
    let labeled: Vec<_> = corpus
        .positives
        .iter()
        .map(|p| (p.x.clone(), p.y.clone(), Label::Positive))
        .chain(corpus.negatives.iter().map(|n| (n.x.clone(), n.y.clone(), Label::Negative)))
        .collect();
    let vocab = Vocab::build(labeled.iter().flat_map(|(x, y, _)| [x.join(" "), y.join(" ")]), 5000)?;
    let mut ev = Evaluator::new(EvaluatorConfig::default(), vocab, 3)?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut data = labeled_sentences(&ev, &labeled);
    data.shuffle(&mut rng);
    let train = data.split_off(data.len() / 10);
    let cfg = EvaluatorSlConfig { epochs: 10, ..Default::default() };
    let acc = train_evaluator_sl(&mut ev, &train, &data, &cfg, &mut rng, &mut MetricsLog::in_memory())?;
    for (epoch, a) in acc.iter().enumerate() {
        println!("epoch {}: held-out accuracy {:.1}%", epoch + 1, 100.0 * a);
    }

    for label in [Label::Positive, Label::Negative] {
        for (x, y, _) in data.iter().filter(|(_, _, l)| *l == label).take(2) {
            println!("{label:?}: M({}, {}) = {:.3}", x.text(), y.text(), ev.score(x, y)?);
        }
    }
    Ok(())
}

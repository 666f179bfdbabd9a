use std::collections::HashSet;
use std::fs;

use proptest::prelude::*;

use rbm::config::ExperimentConfig;
use rbm::text::synth::{replay, synth_corpus, SynthConfig};
use rbm::text::MAX_SENTENCE_LEN;

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let back = ExperimentConfig::from_toml(&cfg.effective().to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg.effective());
        seen += 1;
    }
    assert!(seen >= 3);
}

#[test]
fn corpus_counts_follow_the_config() {
    let cfg = SynthConfig {
        n_pairs: 400,
        negatives_per_positive: 1.5,
        hard_negative_fraction: 0.4,
        pool_size: 150,
        ..Default::default()
    };
    let c = synth_corpus(1, &cfg).unwrap();
    let s = c.stats();
    assert_eq!(s.positives, 400);
    assert_eq!(s.negatives, cfg.negative_count());
    assert_eq!(s.hard_negatives, cfg.hard_negative_count());
    assert_eq!(s.pool, 150);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn traces_replay_and_lengths_are_bounded(seed in any::<u64>(), n in 20usize..120) {
        let c = synth_corpus(seed, &SynthConfig::with_pairs(n)).unwrap();
        prop_assert_eq!(c.positives.len(), n);
        for p in &c.positives {
            prop_assert_eq!(&replay(&p.x, &p.trace).unwrap(), &p.y);
            prop_assert!(p.x.len() <= MAX_SENTENCE_LEN && p.y.len() <= MAX_SENTENCE_LEN);
            prop_assert!(!p.x.is_empty() && p.x != p.y);
        }
        let positives: HashSet<_> = c.positives.iter().map(|p| (&p.x, &p.y)).collect();
        for neg in &c.negatives {
            prop_assert!(!positives.contains(&(&neg.x, &neg.y)));
        }
        prop_assert_eq!(c, synth_corpus(seed, &SynthConfig::with_pairs(n)).unwrap());
    }
}

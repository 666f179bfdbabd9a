//! Experiment configuration: one TOML file, unknown keys rejected.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::EvaluatorConfig;
use crate::generator::GeneratorConfig;
use crate::rl::RlConfig;
use crate::text::synth::SynthConfig;
use crate::training::{EvaluatorSlConfig, PretrainConfig};

/// Seeds for each phase, all drawn from the root seed. Kept below 2⁶³ so
/// they fit TOML integers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSeeds {
    pub data: u64,
    pub split: u64,
    pub generator_init: u64,
    pub evaluator_init: u64,
    pub pretrain: u64,
    pub evaluator_sl: u64,
    pub rl: u64,
    pub probe: u64,
    pub decode: u64,
}

impl PhaseSeeds {
    pub fn derive(root: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(root);
        let mut next = || rng.gen::<u64>() >> 1;
        PhaseSeeds {
            data: next(),
            split: next(),
            generator_init: next(),
            evaluator_init: next(),
            pretrain: next(),
            evaluator_sl: next(),
            rl: next(),
            probe: next(),
            decode: next(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Share of paraphrase pairs held out for evaluation.
    pub heldout_fraction: f64,
    /// Cap on the held-out set size.
    pub max_heldout: usize,
    /// Vocabulary size including reserved tokens.
    pub vocab_max: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            heldout_fraction: 0.1,
            max_heldout: 500,
            vocab_max: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Write a generator checkpoint every this many RL steps; 0 writes only the final one.
    pub checkpoint_every: usize,
    /// Held-out triples in the frozen probe batch of ranking-evaluator training.
    pub probe_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            checkpoint_every: 0,
            probe_size: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Filled from `seed` when absent; always present in the effective config.
    pub seeds: Option<PhaseSeeds>,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub generator: GeneratorConfig,
    pub evaluator: EvaluatorConfig,
    pub pretrain: PretrainConfig,
    pub evaluator_sl: EvaluatorSlConfig,
    pub rl: RlConfig,
    pub run: RunConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 7,
            seeds: None,
            data: DataConfig::default(),
            synth: SynthConfig::default(),
            generator: GeneratorConfig::default(),
            evaluator: EvaluatorConfig::default(),
            pretrain: PretrainConfig::default(),
            evaluator_sl: EvaluatorSlConfig::default(),
            rl: RlConfig::default(),
            run: RunConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Data {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Set one dotted key, e.g. `rl.lr=0.001`. The value is read as a TOML
    /// literal, falling back to a bare string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let key = key.trim();
        let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
        let mut root = toml::Value::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for part in &parts[..parts.len() - 1] {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not a section")))?;
            node = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        }
        node.as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}` does not name a field")))?
            .insert(parts[parts.len() - 1].to_string(), value);
        let updated: ExperimentConfig = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("override `{key}`: {}", e.message())))?;
        let reseed = key == "seed";
        *self = updated;
        if reseed {
            self.seeds = None;
        }
        Ok(())
    }

    /// Replace the root seed; phase seeds are re-derived.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.seeds = None;
    }

    pub fn phase_seeds(&self) -> PhaseSeeds {
        self.seeds.unwrap_or_else(|| PhaseSeeds::derive(self.seed))
    }

    /// The config with phase seeds filled in, as written next to every run.
    pub fn effective(&self) -> Self {
        ExperimentConfig {
            seeds: Some(self.phase_seeds()),
            ..self.clone()
        }
    }

    /// Every field-level problem, joined into one message.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut check = |r: Result<()>| {
            if let Err(e) = r {
                errs.push(match e {
                    Error::Config(m) => m,
                    other => other.to_string(),
                });
            }
        };
        check(self.generator.validate());
        check(self.evaluator.validate());
        check(self.synth.validate());
        check(self.rl.validate());
        if !(0.0..1.0).contains(&self.data.heldout_fraction) {
            errs.push(format!("data.heldout_fraction must lie in [0, 1) (got {})", self.data.heldout_fraction));
        }
        if self.data.vocab_max < 5 {
            errs.push("data.vocab_max must be at least 5".into());
        }
        for (name, batch, lr) in [
            ("pretrain", self.pretrain.batch_size, self.pretrain.lr),
            ("evaluator_sl", self.evaluator_sl.batch_size, self.evaluator_sl.lr),
        ] {
            if batch == 0 {
                errs.push(format!("{name}.batch_size must be at least 1"));
            }
            if !(lr >= 0.0) {
                errs.push(format!("{name}.lr must be ≥ 0"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_config_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.rl.patience = Some(3);
        cfg.rl.ground_truth_reward = 0.0;
        cfg.generator.bidirectional = true;
        let eff = cfg.effective();
        let back = ExperimentConfig::from_toml(&eff.to_toml().unwrap()).unwrap();
        assert_eq!(back, eff);
        assert_eq!(back.phase_seeds(), cfg.phase_seeds());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml("seed = 1\n[rl]\nbatch_sise = 3\n").unwrap_err();
        assert!(err.to_string().contains("batch_sise"), "{err}");
        assert!(ExperimentConfig::from_toml("sede = 1").is_err());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg = ExperimentConfig::from_toml("[rl]\nlr = 0.001\n[rl.delta3]\nstart = 4.0\nend = 2.0\n").unwrap();
        assert_eq!(cfg.rl.lr, 0.001);
        assert_eq!(cfg.rl.batch_size, 80);
        assert_eq!(cfg.rl.delta3.end, 2.0);
        assert_eq!(cfg.pretrain, PretrainConfig::default());
    }

    #[test]
    fn overrides_win_and_are_checked() {
        let mut cfg = ExperimentConfig::default().effective();
        cfg.apply_override("rl.lr=0.001").unwrap();
        cfg.apply_override("rl.patience = 4").unwrap();
        cfg.apply_override("generator.bidirectional=true").unwrap();
        assert_eq!(cfg.rl.lr, 0.001);
        assert_eq!(cfg.rl.patience, Some(4));
        assert!(cfg.generator.bidirectional);
        assert!(cfg.apply_override("rl.lrr=1").unwrap_err().to_string().contains("lrr"));
        assert!(cfg.apply_override("rl.lr=fast").is_err());
        cfg.apply_override("seed=99").unwrap();
        assert_eq!(cfg.phase_seeds(), PhaseSeeds::derive(99));
    }

    #[test]
    fn seeds_follow_root() {
        let mut cfg = ExperimentConfig::default();
        let a = cfg.phase_seeds();
        cfg.set_seed(8);
        assert_ne!(cfg.phase_seeds(), a);
        assert_eq!(PhaseSeeds::derive(7), a);
    }

    #[test]
    fn validation_lists_each_field() {
        let mut cfg = ExperimentConfig::default();
        cfg.rl.mc_samples = 0;
        cfg.data.heldout_fraction = 1.5;
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("rl.mc_samples"), "{msg}");
        assert!(msg.contains("data.heldout_fraction"), "{msg}");
    }
}

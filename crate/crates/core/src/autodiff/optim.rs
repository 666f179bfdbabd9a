use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Adagrad,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub lr: f64,
    pub max_grad_norm: f64,
    /// Adagrad only.
    pub initial_accumulator: f64,
    /// Adam only.
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerConfig {
    pub fn adagrad(lr: f64) -> Self {
        OptimizerConfig {
            algorithm: Algorithm::Adagrad,
            lr,
            max_grad_norm: 2.0,
            initial_accumulator: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerConfig {
            algorithm: Algorithm::Adam,
            ..Self::adagrad(lr)
        }
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.max_grad_norm > 0.0
            && self.initial_accumulator > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("{what}: invalid optimizer settings {self:?}")))
        }
    }
}

#[derive(Clone, Debug)]
enum Slots {
    Adagrad { acc: Vec<Tensor> },
    Adam { m: Vec<Tensor>, v: Vec<Tensor> },
}

/// Adagrad or Adam with global gradient-norm clipping applied before each update.
#[derive(Clone, Debug)]
pub struct Optimizer {
    config: OptimizerConfig,
    slots: Slots,
    steps: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub grad_norm: f64,
    pub clipped_norm: f64,
}

/// Rescale `grads` in place so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, store: &ParamStore) -> Self {
        let like = |fill: f64| -> Vec<Tensor> {
            store.iter().map(|(_, _, t)| Tensor::filled(t.shape(), fill)).collect()
        };
        let slots = match config.algorithm {
            Algorithm::Adagrad => Slots::Adagrad {
                acc: like(config.initial_accumulator),
            },
            Algorithm::Adam => Slots::Adam {
                m: like(0.0),
                v: like(0.0),
            },
        };
        Optimizer {
            config,
            slots,
            steps: 0,
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Adagrad accumulators, if this is an Adagrad optimizer.
    pub fn accumulators(&self) -> Option<&[Tensor]> {
        match &self.slots {
            Slots::Adagrad { acc } => Some(acc),
            Slots::Adam { .. } => None,
        }
    }

    /// Clip, then apply one descent step. A non-finite gradient aborts the step
    /// before any parameter or slot is touched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<StepReport> {
        for (id, g) in grads.iter() {
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(store.name(id).to_string()));
            }
        }
        let mut grads = grads.clone();
        let grad_norm = clip_global_norm(&mut grads, self.config.max_grad_norm);
        let clipped_norm = grads.global_norm();
        self.steps += 1;
        let lr = self.config.lr;

        let params = store.values_mut();
        match &mut self.slots {
            Slots::Adagrad { acc } => {
                for ((p, a), g) in params.iter_mut().zip(acc.iter_mut()).zip(grads.tensors_mut()) {
                    for ((pv, av), &gv) in p.data_mut().iter_mut().zip(a.data_mut()).zip(g.data()) {
                        *av += gv * gv;
                        *pv -= lr * gv / av.sqrt();
                    }
                }
            }
            Slots::Adam { m, v } => {
                let OptimizerConfig { beta1, beta2, eps, .. } = self.config;
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, mt), vt), g) in params
                    .iter_mut()
                    .zip(m.iter_mut())
                    .zip(v.iter_mut())
                    .zip(grads.tensors_mut())
                {
                    for (((pv, mv), vv), &gv) in p
                        .data_mut()
                        .iter_mut()
                        .zip(mt.data_mut())
                        .zip(vt.data_mut())
                        .zip(g.data())
                    {
                        *mv = beta1 * *mv + (1.0 - beta1) * gv;
                        *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                        let mhat = *mv / c1;
                        let vhat = *vv / c2;
                        *pv -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        store.bump_version();
        Ok(StepReport {
            grad_norm,
            clipped_norm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ParamId;

    fn one_param(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::scalar(v));
        s
    }

    fn adagrad(lr: f64) -> OptimizerConfig {
        OptimizerConfig::adagrad(lr)
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        for cfg in [OptimizerConfig::adagrad(0.1), OptimizerConfig::adam(0.1)] {
            let mut s = one_param(0.7);
            let mut opt = Optimizer::new(cfg, &s);
            let g = Gradients::zeros_like(&s);
            opt.step(&mut s, &g).unwrap();
            assert_eq!(s.get(ParamId(0)).item(), 0.7);
        }
    }

    #[test]
    fn adagrad_single_step_matches_hand_value() {
        let mut s = one_param(0.0);
        let mut opt = Optimizer::new(adagrad(0.1), &s);
        let mut g = Gradients::zeros_like(&s);
        g.get_mut(ParamId(0)).data_mut()[0] = 1.0;
        opt.step(&mut s, &g).unwrap();
        let expected = -0.1 / 1.1f64.sqrt();
        assert!((s.get(ParamId(0)).item() - expected).abs() < 1e-15);
        assert!(opt.accumulators().unwrap()[0].item() > 0.0);
    }

    #[test]
    fn clipping_halves_norm_four_gradient() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::row(vec![0.0; 4]));
        let mut g = Gradients::zeros_like(&s);
        g.get_mut(ParamId(0)).data_mut().copy_from_slice(&[2.0, 2.0, 2.0, 2.0]);
        let before = clip_global_norm(&mut g, 2.0);
        assert_eq!(before, 4.0);
        assert_eq!(g.get(ParamId(0)).data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn non_finite_gradient_aborts_and_names_parameter() {
        let mut s = one_param(1.0);
        let mut opt = Optimizer::new(adagrad(0.1), &s);
        let mut g = Gradients::zeros_like(&s);
        g.get_mut(ParamId(0)).data_mut()[0] = f64::NAN;
        let err = opt.step(&mut s, &g).unwrap_err();
        assert!(err.to_string().contains("`w`"));
        assert_eq!(s.get(ParamId(0)).item(), 1.0);
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // with bias correction the first Adam step is lr·sign(g) up to eps
        let mut s = one_param(0.0);
        let cfg = OptimizerConfig::adam(0.01);
        let mut opt = Optimizer::new(cfg, &s);
        let mut g = Gradients::zeros_like(&s);
        g.get_mut(ParamId(0)).data_mut()[0] = 0.5;
        opt.step(&mut s, &g).unwrap();
        assert!((s.get(ParamId(0)).item() + 0.01).abs() < 1e-9);
    }

    #[test]
    fn steps_are_deterministic() {
        let run = || {
            let mut s = ParamStore::new();
            s.add("w", Tensor::row(vec![0.3, -0.2, 0.9]));
            let cfg = OptimizerConfig::adam(0.05);
            let mut opt = Optimizer::new(cfg, &s);
            let mut g = Gradients::zeros_like(&s);
            g.get_mut(ParamId(0)).data_mut().copy_from_slice(&[3.0, -1.0, 0.25]);
            for _ in 0..5 {
                opt.step(&mut s, &g).unwrap();
            }
            s.get(ParamId(0)).clone()
        };
        assert_eq!(run(), run());
    }
}

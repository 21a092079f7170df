use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Hyper-parameters for [`AdamW`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub base_lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Length of the cosine schedule in optimizer steps.
    pub total_steps: u64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            base_lr: 1e-3,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            total_steps: 1,
        }
    }
}

/// Cosine annealing from `base_lr` at step 0 down to 0 at `total_steps`.
pub fn cosine_lr(base_lr: f64, step: u64, total_steps: u64) -> f64 {
    if total_steps == 0 {
        return base_lr;
    }
    let frac = (step.min(total_steps) as f64) / total_steps as f64;
    0.5 * base_lr * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub config: AdamWConfig,
    /// Number of updates applied so far.
    pub step: u64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
    /// Parameters skipped because no gradient was populated.
    pub skipped: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &ParamSet) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        AdamW {
            config,
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
            skipped: 0,
        }
    }

    pub fn current_lr(&self) -> f64 {
        cosine_lr(self.config.base_lr, self.step, self.config.total_steps)
    }

    /// Moment buffers must line up with the parameter set.
    pub fn check_compatible(&self, params: &ParamSet) -> Result<()> {
        if self.first_moment.len() != params.len() {
            return Err(Error::Contract(format!(
                "optimizer tracks {} tensors, parameter set has {}",
                self.first_moment.len(),
                params.len()
            )));
        }
        for (m, p) in self.first_moment.iter().zip(params.iter()) {
            if m.shape() != p.value.shape() {
                return Err(Error::Contract(format!(
                    "moment buffer {:?} does not match parameter {} {:?}",
                    m.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
        }
        Ok(())
    }

    /// Apply one update using the gradients stored on `params`.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        self.check_compatible(params)?;
        let lr = self.current_lr();
        let t = (self.step + 1) as i32;
        let c = &self.config;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        for ((p, m), v) in params
            .iter_mut()
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            let Some(grad) = p.grad.as_ref() else {
                self.skipped += 1;
                log::warn!("parameter {} has no gradient; skipped", p.name);
                continue;
            };
            let decay = 1.0 - lr * c.weight_decay;
            for (((w, g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *w *= decay;
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let mhat = *m / bias1;
                let vhat = *v / bias2;
                *w -= lr * mhat / (vhat.sqrt() + c.eps);
            }
        }
        self.step += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0.1, 0, 100), 0.1);
        assert!(cosine_lr(0.1, 100, 100) <= 1e-3 * 0.1);
        assert!((cosine_lr(0.1, 50, 100) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn zero_grad_zero_decay_leaves_params() {
        let mut ps = ParamSet::new();
        let id = ps.add("w", Tensor::from_rows(&[vec![1.5, -2.0]]));
        ps.get_mut(id).grad = Some(Tensor::zeros(&[1, 2]));
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            total_steps: 10,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &ps);
        for _ in 0..5 {
            opt.step(&mut ps).unwrap();
        }
        assert_eq!(ps.get(id).value.data(), &[1.5, -2.0]);
    }

    #[test]
    fn missing_grad_is_counted() {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::scalar(1.0));
        let mut opt = AdamW::new(AdamWConfig::default(), &ps);
        opt.step(&mut ps).unwrap();
        assert_eq!(opt.skipped, 1);
        assert_eq!(opt.step, 1);
    }

    /// Scalar reference written independently of the tensor loop.
    fn reference(steps: usize, base_lr: f64, wd: f64) -> Vec<f64> {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
        let (mut w, mut m, mut v) = (0.7f64, 0.0f64, 0.0f64);
        let mut out = Vec::new();
        for k in 0..steps {
            let lr = base_lr * 0.5 * (1.0 + (std::f64::consts::PI * k as f64 / steps as f64).cos());
            let g = 1.0;
            w -= lr * wd * w;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(k as i32 + 1));
            let vh = v / (1.0 - b2.powi(k as i32 + 1));
            w -= lr * mh / (vh.sqrt() + eps);
            out.push(w);
        }
        out
    }

    #[test]
    fn matches_scalar_reference() {
        let mut ps = ParamSet::new();
        let id = ps.add("w", Tensor::scalar(0.7));
        let cfg = AdamWConfig {
            base_lr: 0.05,
            weight_decay: 0.01,
            total_steps: 10,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &ps);
        let expected = reference(10, 0.05, 0.01);
        for e in expected {
            ps.get_mut(id).grad = Some(Tensor::scalar(1.0));
            opt.step(&mut ps).unwrap();
            assert!((ps.get(id).value.data()[0] - e).abs() < 1e-12);
        }
    }
}

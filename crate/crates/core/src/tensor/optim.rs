use super::params::ParamSet;
use super::{Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment estimates, one pair of buffers per registered parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    names: Vec<String>,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros = || params.iter().map(|(_, t)| Tensor::zeros(t.shape().to_vec())).collect();
        AdamState {
            config,
            step: 0,
            names: params.iter().map(|(n, _)| n.to_string()).collect(),
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. `grads` is aligned with `params`;
    /// the caller clears its gradient buffers afterwards.
    pub fn update(&mut self, params: &mut ParamSet, grads: &[Option<Tensor>], lr: f64) -> Result<(), TensorError> {
        if params.len() != self.names.len() {
            return Err(TensorError::invalid(
                "adam_step",
                format!("state tracks {} parameters, got {}", self.names.len(), params.len()),
            ));
        }
        for (i, (name, p)) in params.iter().enumerate() {
            if name != self.names[i] {
                return Err(TensorError::invalid(
                    "adam_step",
                    format!("parameter {i} is `{name}`, state expects `{}`", self.names[i]),
                ));
            }
            match grads.get(i).and_then(Option::as_ref) {
                None => return Err(TensorError::MissingGrad(name.to_string())),
                Some(g) if g.shape() != p.shape() => {
                    return Err(TensorError::shape("adam_step", p.shape(), g.shape()));
                }
                Some(_) => {}
            }
        }

        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (i, p) in params.tensors_mut().enumerate() {
            let g = grads[i].as_ref().expect("checked above");
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (((w, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Linear warm-up followed by stepwise exponential decay with a floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub warmup_steps: u64,
    pub base_lr: f64,
    pub decay_rate: f64,
    pub decay_interval: u64,
    pub min_lr: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            warmup_steps: 2000,
            base_lr: 0.002,
            decay_rate: 0.98,
            decay_interval: 100,
            min_lr: 0.0002,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<(), TensorError> {
        if !(self.min_lr > 0.0 && self.min_lr <= self.base_lr) || self.decay_interval == 0 {
            return Err(TensorError::invalid(
                "lr_schedule",
                format!("need 0 < min_lr <= base_lr and decay_interval >= 1, got {self:?}"),
            ));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.base_lr * step as f64 / self.warmup_steps as f64;
        }
        let periods = (step - self.warmup_steps) / self.decay_interval;
        // powi saturates to 0 for huge exponents, the floor takes over.
        let exp = i32::try_from(periods).unwrap_or(i32::MAX);
        (self.base_lr * self.decay_rate.powi(exp)).max(self.min_lr)
    }
}

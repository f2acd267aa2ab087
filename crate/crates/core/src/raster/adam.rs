use super::{ParamStore, Real};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are laid out like the parameter store.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T = f32> {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        Adam {
            config,
            step: 0,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn update(&mut self, params: &mut ParamStore<T>, grads: &[Vec<T>]) -> Result<()> {
        if grads.len() != params.len() || self.first_moment.len() != params.len() {
            return Err(Error::config(format!(
                "adam: {} parameters, {} gradients, {} moment arrays",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.data.len() != g.len() || self.first_moment[i].len() != g.len() {
                return Err(Error::config(format!(
                    "adam: shape mismatch for parameter {}",
                    p.name
                )));
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let b1 = T::of(c.beta1);
        let b2 = T::of(c.beta2);
        let one_b1 = T::of(1.0 - c.beta1);
        let one_b2 = T::of(1.0 - c.beta2);
        // Bias corrections folded into the step size and epsilon.
        let corr1 = 1.0 - c.beta1.powi(t);
        let corr2 = (1.0 - c.beta2.powi(t)).sqrt();
        let step_size = T::of(c.lr / corr1);
        let inv_corr2 = T::of(1.0 / corr2);
        let eps = T::of(c.epsilon);
        for (i, p) in params.iter_mut().enumerate() {
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            let g = &grads[i];
            for j in 0..p.data.len() {
                let gj = g[j];
                let mj = b1 * m[j] + one_b1 * gj;
                let vj = b2 * v[j] + one_b2 * gj * gj;
                m[j] = mj;
                v[j] = vj;
                p.data[j] = p.data[j] - step_size * mj / (vj.sqrt() * inv_corr2 + eps);
            }
        }
        Ok(())
    }
}

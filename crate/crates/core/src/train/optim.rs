//! RMSprop: `v ← ρ·v + (1-ρ)·g²`, `θ ← θ - lr · g / (√v + ε)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Gradients, ParamId, ParameterStore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            decay: 0.99,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RmsProp {
    pub config: RmsPropConfig,
    /// Running mean of squared gradients, per parameter.
    square_avg: Vec<Vec<f64>>,
}

impl RmsPropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && (0.0..1.0).contains(&self.decay) && self.eps > 0.0) {
            return Err(Error::InvalidInput(format!(
                "invalid RMSprop settings {self:?}"
            )));
        }
        Ok(())
    }
}

impl RmsProp {
    pub fn new(config: RmsPropConfig, store: &ParameterStore) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            square_avg: store.iter().map(|(_, p)| vec![0.0; p.data.len()]).collect(),
        })
    }

    /// Updates the parameters in `ids` from `grads`; other parameters and
    /// their optimizer state are untouched.
    pub fn step(
        &mut self,
        store: &mut ParameterStore,
        grads: &Gradients,
        ids: &[ParamId],
    ) -> Result<()> {
        let RmsPropConfig { lr, decay, eps } = self.config;
        for &id in ids {
            let g = grads.get(id);
            let v = &mut self.square_avg[id.index()];
            let mut data = store.get(id).data.clone();
            for ((x, &gi), vi) in data.iter_mut().zip(g).zip(v.iter_mut()) {
                *vi = decay * *vi + (1.0 - decay) * gi * gi;
                *x -= lr * gi / (vi.sqrt() + eps);
            }
            store.set(id, &data)?;
        }
        Ok(())
    }
}

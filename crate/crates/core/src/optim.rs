//! RMSprop over the trainable parameters of a [`Model`].
//!
//! Per element, with `g` the gradient:
//!
//! ```text
//! E <- beta * E + (1 - beta) * g^2
//! w <- w - lr / sqrt(E + epsilon) * g
//! ```
//!
//! `epsilon` sits inside the square root and `E` starts at zero.

use crate::error::{Error, Result};
use crate::model::{Gradients, Model};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmspropConfig {
    pub lr: f64,
    pub beta: f64,
    pub epsilon: f64,
}

impl Default for RmspropConfig {
    fn default() -> Self {
        RmspropConfig {
            lr: 2e-5,
            beta: 0.9,
            epsilon: 1e-8,
        }
    }
}

impl RmspropConfig {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is allowed so that a run can exercise the loop without moving weights
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be >= 0", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta {} must be in [0, 1)", self.beta)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon {} must be > 0", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmspropState<T: Real = f32> {
    pub config: RmspropConfig,
    /// Moving average of squared gradients, one per trainable parameter.
    pub avg_sq_grad: Vec<(String, Tensor<T>)>,
    pub step_count: u64,
}

/// One RMSprop update on flat slices.
pub fn rmsprop_update<T: Real>(weights: &mut [T], grads: &[T], avg_sq: &mut [T], config: &RmspropConfig) {
    let beta = T::from_f64_lossy(config.beta);
    let keep = T::from_f64_lossy(1.0 - config.beta);
    let lr = T::from_f64_lossy(config.lr);
    let eps = T::from_f64_lossy(config.epsilon);
    for ((w, &g), e) in weights.iter_mut().zip(grads).zip(avg_sq.iter_mut()) {
        *e = beta * *e + keep * g * g;
        *w = *w - lr / (*e + eps).sqrt() * g;
    }
}

impl<T: Real> RmspropState<T> {
    pub fn new(model: &Model<T>, config: RmspropConfig) -> Result<Self> {
        config.validate()?;
        let avg_sq_grad = model
            .parameters()
            .filter(|p| p.2)
            .map(|(name, t, _)| Ok((name, Tensor::zeros(t.dims())?)))
            .collect::<Result<_>>()?;
        Ok(RmspropState {
            config,
            avg_sq_grad,
            step_count: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.avg_sq_grad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.avg_sq_grad.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.avg_sq_grad.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Apply one update to every trainable parameter that has a gradient.
    /// Frozen layers are never written.
    pub fn step(&mut self, model: &mut Model<T>, grads: &Gradients<T>) -> Result<()> {
        if grads.layers.len() != model.layers().len() {
            return Err(Error::shape("gradients do not belong to this model"));
        }
        let mut slot = 0;
        let config = self.config;
        for (layer, grad) in model.layers_mut().iter_mut().zip(&grads.layers) {
            if !layer.trainable {
                continue;
            }
            let Some((w, b)) = layer.kind.params_mut() else {
                continue;
            };
            for (suffix, param, g) in [
                ("kernel", w, grad.as_ref().map(|g| &g.weights)),
                ("bias", b, grad.as_ref().map(|g| &g.bias)),
            ] {
                let Some((name, avg)) = self.avg_sq_grad.get_mut(slot) else {
                    return Err(Error::shape(format!(
                        "optimizer state has no entry for `{}/{suffix}`",
                        layer.name
                    )));
                };
                if *name != format!("{}/{suffix}", layer.name) {
                    return Err(Error::shape(format!(
                        "optimizer state entry `{name}` does not match `{}/{suffix}`",
                        layer.name
                    )));
                }
                slot += 1;
                let Some(g) = g else { continue };
                if g.shape() != param.shape() || avg.shape() != param.shape() {
                    return Err(Error::shape(format!(
                        "`{name}`: gradient {} / state {} vs parameter {}",
                        g.shape(),
                        avg.shape(),
                        param.shape()
                    )));
                }
                rmsprop_update(param.data_mut(), g.data(), avg.data_mut(), &config);
            }
        }
        self.step_count += 1;
        Ok(())
    }
}

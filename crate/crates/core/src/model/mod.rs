//! Sequential model container: named layers, trainability flags, the forward
//! pass, backpropagation and prediction.

mod vgg;
mod weights;

pub use vgg::{build, build_vgg16, build_vgg_mini, Architecture, ModelSpec};
pub use weights::{LoadReport, WeightEntry, WeightFile, WEIGHT_MAGIC};

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, BackwardContext, LayerKind};
use crate::tensor::{Real, Tensor};

/// Sentinel accepted by [`Model::set_trainable_boundary`] that freezes every
/// layer.
pub const ALL_FROZEN: &str = "ALL_FROZEN";

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T: Real = f32> {
    pub name: String,
    /// Parameter-free layers carry the flag without effect.
    pub trainable: bool,
    pub kind: LayerKind<T>,
}

impl<T: Real> Layer<T> {
    pub fn new(name: impl Into<String>, kind: LayerKind<T>) -> Self {
        Layer {
            name: name.into(),
            trainable: true,
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T: Real = f32> {
    layers: Vec<Layer<T>>,
    input_dims: [usize; 3],
    class_count: usize,
}

/// Contexts recorded by a forward pass, one per layer.
#[derive(Debug)]
pub struct ForwardTrace<T: Real> {
    contexts: Vec<BackwardContext<T>>,
}

/// Gradient of one parameterized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad<T: Real> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Parameter gradients indexed by layer; `None` for frozen or
/// parameter-free layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T: Real> {
    pub layers: Vec<Option<ParamGrad<T>>>,
    /// Gradient with respect to the model input, when requested.
    pub input: Option<Tensor<T>>,
}

impl<T: Real> Model<T> {
    /// Validates names and the shape chain. The first layer must be an input
    /// layer and the last a softmax dense layer.
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        let Some(Layer {
            kind: LayerKind::Input { dims: input_dims },
            ..
        }) = layers.first()
        else {
            return Err(Error::shape("a model must start with an input layer"));
        };
        let input_dims = *input_dims;
        let mut seen = std::collections::HashSet::new();
        for l in &layers {
            if !seen.insert(l.name.as_str()) {
                return Err(Error::shape(format!("duplicate layer name `{}`", l.name)));
            }
        }
        let mut dims = input_dims.to_vec();
        for l in &layers {
            dims = l.kind.output_dims(&dims).map_err(|e| {
                Error::shape(format!("layer `{}` does not fit its input: {e}", l.name))
            })?;
        }
        let class_count = match layers.last().map(|l| &l.kind) {
            Some(LayerKind::Dense(d)) if d.activation == Activation::Softmax => d.out_features(),
            _ => return Err(Error::shape("a model must end in a softmax dense layer")),
        };
        Ok(Model {
            layers,
            input_dims,
            class_count,
        })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layer(&self, name: &str) -> Option<&Layer<T>> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn layer_mut(&mut self, name: &str) -> Option<&mut Layer<T>> {
        self.layers.iter_mut().find(|l| l.name == name)
    }

    pub fn input_dims(&self) -> [usize; 3] {
        self.input_dims
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Per-sample output shape of every layer.
    pub fn layer_output_dims(&self) -> Vec<Vec<usize>> {
        let mut dims = self.input_dims.to_vec();
        self.layers
            .iter()
            .map(|l| {
                dims = l.kind.output_dims(&dims).expect("validated at construction");
                dims.clone()
            })
            .collect()
    }

    /// Freeze every layer before `first_trainable` and unfreeze it and
    /// everything after. [`ALL_FROZEN`] freezes the whole model.
    pub fn set_trainable_boundary(&mut self, first_trainable: &str) -> Result<()> {
        let boundary = if first_trainable == ALL_FROZEN {
            self.layers.len()
        } else {
            self.layers
                .iter()
                .position(|l| l.name == first_trainable)
                .ok_or_else(|| Error::Lookup(first_trainable.to_string()))?
        };
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.trainable = i >= boundary;
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().map(|(_, t, _)| t.len()).sum()
    }

    pub fn trainable_parameter_count(&self) -> usize {
        self.parameters().filter(|p| p.2).map(|(_, t, _)| t.len()).sum()
    }

    /// `(name, tensor, trainable)` for every parameter tensor in layer order.
    /// Names are `<layer>/kernel` and `<layer>/bias`.
    pub fn parameters(&self) -> impl Iterator<Item = (String, &Tensor<T>, bool)> {
        self.layers.iter().flat_map(|l| {
            l.kind.params().into_iter().flat_map(move |(w, b)| {
                [
                    (format!("{}/kernel", l.name), w, l.trainable),
                    (format!("{}/bias", l.name), b, l.trainable),
                ]
            })
        })
    }

    /// Inference pass; a pure function of the weights and the batch.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let mut none: [rand_chacha::ChaCha8Rng; 0] = [];
        let mut x = batch.clone();
        self.check_batch(batch)?;
        for l in &self.layers {
            x = l.kind.forward(&x, false, &mut none)?.0;
        }
        Ok(x)
    }

    /// Forward pass recording the contexts needed by [`Model::backward`].
    /// With `training` set, dropout draws from `dropout_rngs`, one stream per
    /// batch row.
    pub fn forward_with_trace<R: Rng>(
        &self,
        batch: &Tensor<T>,
        training: bool,
        dropout_rngs: &mut [R],
    ) -> Result<(Tensor<T>, ForwardTrace<T>)> {
        self.check_batch(batch)?;
        let mut x = batch.clone();
        let mut contexts = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (y, ctx) = l.kind.forward(&x, training, dropout_rngs)?;
            contexts.push(ctx);
            x = y;
        }
        Ok((x, ForwardTrace { contexts }))
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<()> {
        let d = batch.dims();
        if d.len() != 4 || d[1..] != self.input_dims {
            return Err(Error::shape(format!(
                "batch {} does not match model input {:?}",
                batch.shape(),
                self.input_dims
            )));
        }
        Ok(())
    }

    /// Backpropagate `logit_grad`, the loss gradient with respect to the
    /// final layer's pre-softmax values. Only trainable layers get parameter
    /// gradients; propagation stops below the earliest trainable layer
    /// unless `need_input_grad` is set.
    pub fn backward(
        &self,
        trace: &ForwardTrace<T>,
        logit_grad: &Tensor<T>,
        need_input_grad: bool,
    ) -> Result<Gradients<T>> {
        if trace.contexts.len() != self.layers.len() {
            return Err(Error::Contract("trace was recorded by a different model".into()));
        }
        let lowest = if need_input_grad {
            0
        } else {
            self.layers
                .iter()
                .position(|l| l.trainable && l.kind.has_params())
                .unwrap_or(self.layers.len())
        };
        let mut grads: Vec<Option<ParamGrad<T>>> = vec![None; self.layers.len()];
        let mut upstream = logit_grad.clone();
        let last = self.layers.len() - 1;
        for i in (lowest..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let want_params = layer.trainable && layer.kind.has_params();
            let want_input = i > lowest || need_input_grad;
            let g = layer.kind.backward(
                &trace.contexts[i],
                &upstream,
                i == last,
                want_input,
                want_params,
            )?;
            if let (Some(weights), Some(bias)) = (g.weights, g.bias) {
                grads[i] = Some(ParamGrad { weights, bias });
            }
            match g.input {
                Some(dx) => upstream = dx,
                None => break,
            }
        }
        Ok(Gradients {
            layers: grads,
            input: need_input_grad.then_some(upstream),
        })
    }

    /// Class index with the highest probability (lowest index on ties) and
    /// the probability row for a single `[h, w, c]` image.
    pub fn predict(&self, image: &Tensor<T>) -> Result<(usize, Vec<T>)> {
        if image.dims() != self.input_dims {
            return Err(Error::shape(format!(
                "image {} does not match model input {:?}",
                image.shape(),
                self.input_dims
            )));
        }
        let mut dims = vec![1];
        dims.extend_from_slice(image.dims());
        let probs = self.forward(&image.clone().reshape(&dims)?)?.into_vec();
        Ok((argmax(&probs), probs))
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    name: l.name.clone(),
                    trainable: l.trainable,
                    kind: l.kind.cast(),
                })
                .collect(),
            input_dims: self.input_dims,
            class_count: self.class_count,
        }
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_rules() {
        assert_eq!(argmax(&[0.05f32, 0.9, 0.05]), 1);
        assert_eq!(argmax(&[0.4f32, 0.1, 0.1, 0.4]), 0);
    }

    #[test]
    fn rejects_models_without_input_or_softmax_head() {
        let m = Model::<f32>::new(vec![Layer::new("flatten", LayerKind::Flatten)]);
        assert!(m.is_err());
        let m = Model::<f32>::new(vec![
            Layer::new("input_1", LayerKind::Input { dims: [2, 2, 1] }),
            Layer::new("flatten", LayerKind::Flatten),
        ]);
        assert!(m.is_err());
    }
}

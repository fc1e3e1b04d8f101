//! Layer forward and backward passes.

mod activation;
mod conv;
mod dense;
mod dropout;
mod pool;

pub use activation::{relu, relu_backward, softmax, softmax_backward, Activation, ReluContext};
pub use conv::{conv2d_direct, conv_output_extent, Conv2D, ConvContext, Padding};
pub use dense::{Dense, DenseContext};
pub use dropout::{dropout_apply, Dropout, DropoutContext};
pub use pool::{MaxPool2D, PoolContext};

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Gradients produced by one backward call. Fields are `None` when not
/// requested or when the layer has no such parameter.
#[derive(Debug, Clone)]
pub struct LayerGrads<T: Real> {
    pub input: Option<Tensor<T>>,
    pub weights: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Real> Default for LayerGrads<T> {
    fn default() -> Self {
        LayerGrads {
            input: None,
            weights: None,
            bias: None,
        }
    }
}

/// `[b, d1, d2, ...] -> [b, d1 * d2 * ...]` in row-major order.
pub fn flatten<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let dims = input.dims();
    if dims.len() < 2 {
        return Err(Error::shape(format!("flatten needs a batch axis, got {}", input.shape())));
    }
    let rest = dims[1..].iter().product();
    input.clone().reshape(&[dims[0], rest])
}

/// Computation performed by one entry of a sequential model.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind<T: Real = f32> {
    /// Declares the per-sample input shape; identity on data.
    Input { dims: [usize; 3] },
    Conv2D(Conv2D<T>),
    MaxPool2D(MaxPool2D),
    Flatten,
    Dense(Dense<T>),
    Dropout(Dropout),
}

/// State cached by a forward call for the matching backward call.
#[derive(Debug, Clone)]
pub enum BackwardContext<T: Real> {
    Identity,
    Conv(ConvContext<T>),
    Pool(PoolContext),
    Flatten { input_dims: Vec<usize> },
    Dense(DenseContext<T>),
    Dropout(DropoutContext<T>),
}

impl<T: Real> LayerKind<T> {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerKind::Conv2D(_) | LayerKind::Dense(_))
    }

    pub fn params(&self) -> Option<(&Tensor<T>, &Tensor<T>)> {
        match self {
            LayerKind::Conv2D(c) => Some((&c.weights, &c.bias)),
            LayerKind::Dense(d) => Some((&d.weights, &d.bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Tensor<T>, &mut Tensor<T>)> {
        match self {
            LayerKind::Conv2D(c) => Some((&mut c.weights, &mut c.bias)),
            LayerKind::Dense(d) => Some((&mut d.weights, &mut d.bias)),
            _ => None,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_dims(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            LayerKind::Input { dims } => {
                if input != dims {
                    return Err(Error::shape(format!(
                        "input layer expects {dims:?}, got {input:?}"
                    )));
                }
                Ok(input.to_vec())
            }
            LayerKind::Conv2D(c) => Ok(c.output_dims(input)?.to_vec()),
            LayerKind::MaxPool2D(p) => Ok(p.output_dims(input)?.to_vec()),
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
            LayerKind::Dense(d) => match input {
                &[f] if f == d.in_features() => Ok(vec![d.out_features()]),
                _ => Err(Error::shape(format!(
                    "dense expects [{}], got {input:?}",
                    d.in_features()
                ))),
            },
            LayerKind::Dropout(_) => Ok(input.to_vec()),
        }
    }

    /// Forward pass. `dropout_rngs` holds one stream per batch row and is
    /// only consulted in training mode.
    pub fn forward<R: Rng>(
        &self,
        input: &Tensor<T>,
        training: bool,
        dropout_rngs: &mut [R],
    ) -> Result<(Tensor<T>, BackwardContext<T>)> {
        match self {
            LayerKind::Input { dims } => {
                if &input.dims()[1..] != dims {
                    return Err(Error::shape(format!(
                        "model expects samples of {dims:?}, got batch {}",
                        input.shape()
                    )));
                }
                Ok((input.clone(), BackwardContext::Identity))
            }
            LayerKind::Conv2D(c) => c.forward(input).map(|(y, ctx)| (y, BackwardContext::Conv(ctx))),
            LayerKind::MaxPool2D(p) => p.forward(input).map(|(y, ctx)| (y, BackwardContext::Pool(ctx))),
            LayerKind::Flatten => Ok((
                flatten(input)?,
                BackwardContext::Flatten {
                    input_dims: input.dims().to_vec(),
                },
            )),
            LayerKind::Dense(d) => d.forward(input).map(|(y, ctx)| (y, BackwardContext::Dense(ctx))),
            LayerKind::Dropout(d) => {
                let (y, ctx) = if training {
                    d.forward_train(input, dropout_rngs)?
                } else {
                    d.identity(input)
                };
                Ok((y, BackwardContext::Dropout(ctx)))
            }
        }
    }

    /// Backward pass for any layer kind. For a dense layer, set
    /// `upstream_is_logit_grad` when `upstream` is already the gradient with
    /// respect to its pre-activation values.
    pub fn backward(
        &self,
        ctx: &BackwardContext<T>,
        upstream: &Tensor<T>,
        upstream_is_logit_grad: bool,
        need_input_grad: bool,
        need_param_grads: bool,
    ) -> Result<LayerGrads<T>> {
        let mismatch = || Error::Contract("backward context belongs to a different layer kind".into());
        match (self, ctx) {
            (LayerKind::Input { .. }, BackwardContext::Identity) => Ok(LayerGrads {
                input: need_input_grad.then(|| upstream.clone()),
                ..Default::default()
            }),
            (LayerKind::Conv2D(c), BackwardContext::Conv(ctx)) => {
                c.backward(ctx, upstream, need_input_grad, need_param_grads)
            }
            (LayerKind::MaxPool2D(p), BackwardContext::Pool(ctx)) => p.backward(ctx, upstream),
            (LayerKind::Flatten, BackwardContext::Flatten { input_dims }) => {
                if upstream.dims()[0] != input_dims[0] {
                    return Err(Error::Contract("flatten upstream batch size changed".into()));
                }
                Ok(LayerGrads {
                    input: Some(upstream.clone().reshape(input_dims)?),
                    ..Default::default()
                })
            }
            (LayerKind::Dense(d), BackwardContext::Dense(ctx)) => d.backward(
                ctx,
                upstream,
                upstream_is_logit_grad,
                need_input_grad,
                need_param_grads,
            ),
            (LayerKind::Dropout(d), BackwardContext::Dropout(ctx)) => d.backward(ctx, upstream),
            _ => Err(mismatch()),
        }
    }

    pub fn cast<U: Real>(&self) -> LayerKind<U> {
        match self {
            LayerKind::Input { dims } => LayerKind::Input { dims: *dims },
            LayerKind::Conv2D(c) => LayerKind::Conv2D(Conv2D {
                weights: c.weights.cast(),
                bias: c.bias.cast(),
                stride: c.stride,
                padding: c.padding,
                activation: c.activation,
            }),
            LayerKind::MaxPool2D(p) => LayerKind::MaxPool2D(*p),
            LayerKind::Flatten => LayerKind::Flatten,
            LayerKind::Dense(d) => LayerKind::Dense(Dense {
                weights: d.weights.cast(),
                bias: d.bias.cast(),
                activation: d.activation,
            }),
            LayerKind::Dropout(d) => LayerKind::Dropout(*d),
        }
    }
}

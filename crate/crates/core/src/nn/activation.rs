use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Activation fused onto the output of a convolution or dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    /// Row-wise softmax over the last axis of a rank-2 output.
    Softmax,
}

impl Activation {
    pub(crate) fn apply<T: Real>(self, z: Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Activation::Linear => Ok(z),
            Activation::Relu => Ok(relu_values(z)),
            Activation::Softmax => softmax(&z),
        }
    }

    /// Chain rule through the activation given its output `y` and the
    /// gradient with respect to `y`.
    pub(crate) fn backward<T: Real>(self, y: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
        if y.shape() != grad.shape() {
            return Err(Error::Contract(format!(
                "activation gradient {} does not match output {}",
                grad.shape(),
                y.shape()
            )));
        }
        match self {
            Activation::Linear => Ok(grad.clone()),
            Activation::Relu => Ok(relu_mask_grad(y, grad)),
            Activation::Softmax => softmax_backward(y, grad),
        }
    }
}

fn relu_values<T: Real>(mut z: Tensor<T>) -> Tensor<T> {
    for v in z.data_mut() {
        if *v <= T::zero() {
            *v = T::zero();
        }
    }
    z
}

fn relu_mask_grad<T: Real>(y: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let data = y
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&o, &g)| if o > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_parts(y.shape().clone(), data)
}

/// Cached output of a standalone ReLU.
#[derive(Debug, Clone)]
pub struct ReluContext<T: Real> {
    output: Tensor<T>,
}

/// `max(0, x)` elementwise.
pub fn relu<T: Real>(input: &Tensor<T>) -> (Tensor<T>, ReluContext<T>) {
    let out = relu_values(input.clone());
    (out.clone(), ReluContext { output: out })
}

pub fn relu_backward<T: Real>(ctx: &ReluContext<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    Activation::Relu.backward(&ctx.output, upstream)
}

/// Row-wise softmax of a `[batch, classes]` tensor, computed with the row
/// maximum subtracted.
pub fn softmax<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let k = match input.dims() {
        &[_, k] => k,
        _ => {
            return Err(Error::shape(format!(
                "softmax expects [batch, classes], got {}",
                input.shape()
            )))
        }
    };
    let mut out = input.clone();
    for row in out.data_mut().chunks_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total = total + *v;
        }
        for v in row.iter_mut() {
            *v = *v / total;
        }
    }
    Ok(out)
}

/// Vector-Jacobian product of softmax: `y * (g - sum(g * y))` per row.
pub fn softmax_backward<T: Real>(output: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    let k = match output.dims() {
        &[_, k] => k,
        _ => return Err(Error::shape("softmax backward expects rank 2")),
    };
    if output.shape() != upstream.shape() {
        return Err(Error::Contract(format!(
            "softmax upstream {} does not match output {}",
            upstream.shape(),
            output.shape()
        )));
    }
    let mut data = Vec::with_capacity(output.len());
    for (y, g) in output.data().chunks(k).zip(upstream.data().chunks(k)) {
        let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
        data.extend(y.iter().zip(g).map(|(&yi, &gi)| yi * (gi - dot)));
    }
    Ok(Tensor::from_parts(output.shape().clone(), data))
}

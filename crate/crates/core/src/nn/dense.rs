use super::activation::Activation;
use super::LayerGrads;
use crate::error::{Error, Result};
use crate::tensor::{matmul_slices, transpose_slice, Real, Shape, Tensor};

/// Fully connected layer, `out = input * weights + bias` followed by the
/// activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T: Real = f32> {
    /// `[in_features, out_features]`
    pub weights: Tensor<T>,
    /// `[out_features]`
    pub bias: Tensor<T>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseContext<T: Real> {
    input: Tensor<T>,
    output: Tensor<T>,
}

impl<T: Real> Dense<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>, activation: Activation) -> Result<Self> {
        let &[_, out_f] = weights.dims() else {
            return Err(Error::shape(format!(
                "dense weights must be [in, out], got {}",
                weights.shape()
            )));
        };
        if bias.dims() != [out_f] {
            return Err(Error::shape(format!(
                "dense bias {} does not match {out_f} outputs",
                bias.shape()
            )));
        }
        Ok(Dense {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_features(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weights.dims()[1]
    }

    /// Pre-activation values.
    pub fn logits(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let &[b, in_f] = input.dims() else {
            return Err(Error::shape(format!(
                "dense input must be [batch, features], got {}",
                input.shape()
            )));
        };
        if in_f != self.in_features() {
            return Err(Error::shape(format!(
                "dense expects {} features, got {in_f}",
                self.in_features()
            )));
        }
        let out_f = self.out_features();
        let mut z = matmul_slices(input.data(), self.weights.data(), b, in_f, out_f);
        for row in z.chunks_mut(out_f) {
            for (v, &bias) in row.iter_mut().zip(self.bias.data()) {
                *v = *v + bias;
            }
        }
        Ok(Tensor::from_parts(Shape::new(vec![b, out_f])?, z))
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, DenseContext<T>)> {
        let output = self.activation.apply(self.logits(input)?)?;
        Ok((
            output.clone(),
            DenseContext {
                input: input.clone(),
                output,
            },
        ))
    }

    /// `upstream` is the gradient with respect to the activated output, or
    /// with respect to the logits when `upstream_is_logit_grad` is set (the
    /// fused softmax + cross-entropy path).
    pub fn backward(
        &self,
        ctx: &DenseContext<T>,
        upstream: &Tensor<T>,
        upstream_is_logit_grad: bool,
        need_input_grad: bool,
        need_param_grads: bool,
    ) -> Result<LayerGrads<T>> {
        if upstream.shape() != ctx.output.shape() {
            return Err(Error::Contract(format!(
                "dense upstream {} does not match forward output {}",
                upstream.shape(),
                ctx.output.shape()
            )));
        }
        let dz = if upstream_is_logit_grad {
            upstream.clone()
        } else {
            self.activation.backward(&ctx.output, upstream)?
        };
        let (b, in_f, out_f) = (ctx.input.dims()[0], self.in_features(), self.out_features());
        let mut grads = LayerGrads::default();
        if need_param_grads {
            let x_t = transpose_slice(ctx.input.data(), b, in_f);
            let dw = matmul_slices(&x_t, dz.data(), in_f, b, out_f);
            let mut db = vec![T::zero(); out_f];
            for row in dz.data().chunks(out_f) {
                for (acc, &v) in db.iter_mut().zip(row) {
                    *acc = *acc + v;
                }
            }
            grads.weights = Some(Tensor::from_parts(self.weights.shape().clone(), dw));
            grads.bias = Some(Tensor::from_parts(self.bias.shape().clone(), db));
        }
        if need_input_grad {
            let w_t = transpose_slice(self.weights.data(), in_f, out_f);
            let dx = matmul_slices(dz.data(), &w_t, b, out_f, in_f);
            grads.input = Some(Tensor::from_parts(ctx.input.shape().clone(), dx));
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_product() {
        let d = Dense::new(
            Tensor::from_vec(&[2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap(),
            Tensor::from_vec(&[2], vec![0.0, 1.0]).unwrap(),
            Activation::Linear,
        )
        .unwrap();
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 1.0]).unwrap();
        assert_eq!(d.forward(&x).unwrap().0.data(), &[4.0, 7.0]);
    }

    #[test]
    fn zero_weights_give_bias_rows() {
        let d = Dense::new(
            Tensor::<f32>::zeros(&[3, 2]).unwrap(),
            Tensor::from_vec(&[2], vec![0.5, -1.0]).unwrap(),
            Activation::Linear,
        )
        .unwrap();
        let x = Tensor::full(&[2, 3], 8.0).unwrap();
        assert_eq!(d.forward(&x).unwrap().0.data(), &[0.5, -1.0, 0.5, -1.0]);
    }

    #[test]
    fn identity_weights() {
        let d = Dense::new(
            Tensor::from_vec(&[2, 2], vec![1.0f32, 0.0, 0.0, 1.0]).unwrap(),
            Tensor::zeros(&[2]).unwrap(),
            Activation::Linear,
        )
        .unwrap();
        let x = Tensor::from_vec(&[2, 2], vec![3.0, -4.0, 0.5, 9.0]).unwrap();
        assert_eq!(d.forward(&x).unwrap().0, x);
    }

    #[test]
    fn feature_mismatch() {
        let d = Dense::new(
            Tensor::<f32>::zeros(&[3, 2]).unwrap(),
            Tensor::zeros(&[2]).unwrap(),
            Activation::Relu,
        )
        .unwrap();
        assert!(matches!(
            d.forward(&Tensor::zeros(&[1, 4]).unwrap()),
            Err(Error::Shape(_))
        ));
        assert!(Dense::new(
            Tensor::<f32>::zeros(&[3, 2]).unwrap(),
            Tensor::zeros(&[3]).unwrap(),
            Activation::Linear
        )
        .is_err());
    }

    #[test]
    fn backward_rejects_wrong_upstream() {
        let d = Dense::new(
            Tensor::<f64>::full(&[3, 2], 0.1).unwrap(),
            Tensor::zeros(&[2]).unwrap(),
            Activation::Linear,
        )
        .unwrap();
        let (_, ctx) = d.forward(&Tensor::full(&[1, 3], 1.0).unwrap()).unwrap();
        let err = d
            .backward(&ctx, &Tensor::zeros(&[1, 3]).unwrap(), false, true, true)
            .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }
}

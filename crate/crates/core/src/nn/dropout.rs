use rand::Rng;

use super::LayerGrads;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` at training
/// time so inference is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    rate: f64,
}

#[derive(Debug, Clone)]
pub struct DropoutContext<T: Real> {
    /// `0` for dropped elements, `1 / (1 - rate)` for kept ones; `None` when
    /// the forward pass was the identity.
    mask: Option<Vec<T>>,
}

impl<T: Real> DropoutContext<T> {
    pub fn mask(&self) -> Option<&[T]> {
        self.mask.as_deref()
    }
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::input(format!("dropout rate {rate} is outside [0, 1)")));
        }
        Ok(Dropout { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn identity<T: Real>(&self, input: &Tensor<T>) -> (Tensor<T>, DropoutContext<T>) {
        (input.clone(), DropoutContext { mask: None })
    }

    /// Training-mode dropout drawing from one stream per batch row. A single
    /// stream is used for the whole tensor when `rngs.len() == 1`.
    pub fn forward_train<T: Real, R: Rng>(
        &self,
        input: &Tensor<T>,
        rngs: &mut [R],
    ) -> Result<(Tensor<T>, DropoutContext<T>)> {
        if self.rate == 0.0 {
            return Ok(self.identity(input));
        }
        let rows = input.dims()[0];
        let per_row = input.len() / rows;
        let streams = rngs.len();
        if streams != rows && streams != 1 {
            return Err(Error::input(format!(
                "dropout needs 1 or {rows} random streams, got {streams}"
            )));
        }
        let keep = T::from_f64_lossy(1.0 / (1.0 - self.rate));
        let mut mask = Vec::with_capacity(input.len());
        for r in 0..rows {
            let rng = &mut rngs[if streams == 1 { 0 } else { r }];
            mask.extend((0..per_row).map(|_| {
                if rng.random::<f64>() < self.rate {
                    T::zero()
                } else {
                    keep
                }
            }));
        }
        let data = input.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        Ok((
            Tensor::from_parts(input.shape().clone(), data),
            DropoutContext { mask: Some(mask) },
        ))
    }

    pub fn backward<T: Real>(&self, ctx: &DropoutContext<T>, upstream: &Tensor<T>) -> Result<LayerGrads<T>> {
        let input = match &ctx.mask {
            None => upstream.clone(),
            Some(mask) => {
                if mask.len() != upstream.len() {
                    return Err(Error::Contract(format!(
                        "dropout upstream has {} elements, mask has {}",
                        upstream.len(),
                        mask.len()
                    )));
                }
                let data = upstream.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
                Tensor::from_parts(upstream.shape().clone(), data)
            }
        };
        Ok(LayerGrads {
            input: Some(input),
            ..Default::default()
        })
    }
}

/// Dropout with a single random stream. Identity when `training` is false
/// or the rate is zero.
pub fn dropout_apply<T: Real, R: Rng>(
    input: &Tensor<T>,
    layer: &Dropout,
    rng: &mut R,
    training: bool,
) -> Result<(Tensor<T>, DropoutContext<T>)> {
    if !training {
        return Ok(layer.identity(input));
    }
    layer.forward_train(input, std::slice::from_mut(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parallel::{stream, StreamKind};

    fn input() -> Tensor<f32> {
        Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 4.0, -1.5]).unwrap()
    }

    #[test]
    fn rate_zero_and_inference_are_identity() {
        let mut rng = stream(1, StreamKind::Dropout, 0, 0);
        let (y, _) = dropout_apply(&input(), &Dropout::new(0.0).unwrap(), &mut rng, true).unwrap();
        assert_eq!(y, input());
        let (y, _) = dropout_apply(&input(), &Dropout::new(0.5).unwrap(), &mut rng, false).unwrap();
        assert_eq!(y, input());
    }

    #[test]
    fn survivors_are_doubled_at_half_rate() {
        let mut rng = stream(3, StreamKind::Dropout, 0, 0);
        let x = input();
        let (y, ctx) = dropout_apply(&x, &Dropout::new(0.5).unwrap(), &mut rng, true).unwrap();
        for ((&xi, &yi), &m) in x.data().iter().zip(y.data()).zip(ctx.mask().unwrap()) {
            if m == 0.0 {
                assert_eq!(yi, 0.0);
            } else {
                assert_eq!(yi, 2.0 * xi);
            }
        }
    }

    #[test]
    fn rate_one_is_rejected() {
        assert!(Dropout::new(1.0).is_err());
        assert!(Dropout::new(-0.1).is_err());
    }

    #[test]
    fn zero_fraction_and_mean_within_binomial_bounds() {
        let n = 20_000usize;
        let rate = 0.3;
        let x = Tensor::<f64>::full(&[1, n], 1.0).unwrap();
        let mut rng = stream(11, StreamKind::Dropout, 0, 0);
        let (y, _) = dropout_apply(&x, &Dropout::new(rate).unwrap(), &mut rng, true).unwrap();
        let zeros = y.data().iter().filter(|&&v| v == 0.0).count() as f64;
        let sigma = (n as f64 * rate * (1.0 - rate)).sqrt();
        assert!((zeros - n as f64 * rate).abs() <= 3.0 * sigma);
        // output mean = kept fraction / (1 - rate); same binomial bound rescaled
        let mean = y.sum() / n as f64;
        let bound = 3.0 * sigma / n as f64 / (1.0 - rate);
        assert!((mean - 1.0).abs() <= bound);
    }

    #[test]
    fn per_row_streams_are_independent_of_batch_composition() {
        let d = Dropout::new(0.5).unwrap();
        let x = Tensor::<f32>::full(&[2, 64], 1.0).unwrap();
        let mut both = [stream(5, StreamKind::Dropout, 0, 0), stream(5, StreamKind::Dropout, 0, 1)];
        let (y, _) = d.forward_train(&x, &mut both).unwrap();
        let single = Tensor::<f32>::full(&[1, 64], 1.0).unwrap();
        let mut second = [stream(5, StreamKind::Dropout, 0, 1)];
        let (y1, _) = d.forward_train(&single, &mut second).unwrap();
        assert_eq!(&y.data()[64..], y1.data());
    }
}

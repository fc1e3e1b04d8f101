//! Dense row-major tensors and the numeric primitives the layers build on.
//!
//! Storage is generic over [`Real`] so that the same layer code runs in
//! `f32` for training and in `f64` for finite-difference gradient checks.
//! Image tensors use `[height, width, channels]`, batches
//! `[batch, height, width, channels]`.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Scalar element type of a [`Tensor`].
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Sum + Send + Sync + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to every Real")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Ordered extents of a tensor. Every extent is at least one and the
/// element count fits in `usize`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() {
            return Err(Error::shape("a shape needs at least one extent"));
        }
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(Error::shape(format!("extent {pos} of {dims:?} is zero")));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Size(dims.clone()))?;
        Ok(Shape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Row-major flat offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.0.len() {
            return None;
        }
        let mut flat = 0;
        for (&i, &d) in index.iter().zip(&self.0) {
            if i >= d {
                return None;
            }
            flat = flat * d + i;
        }
        Some(flat)
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Real = f32> {
    shape: Shape,
    data: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
}

impl<T: Real> Tensor<T> {
    pub fn full(dims: &[usize], fill: T) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let data = vec![fill; shape.numel()];
        Ok(Tensor { shape, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::full(dims, T::zero())
    }

    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != data.len() {
            return Err(Error::shape(format!(
                "shape {shape} holds {} elements but {} were given",
                shape.numel(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub(crate) fn from_parts(shape: Shape, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.numel(), data.len());
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn rank(&self) -> usize {
        self.shape.rank()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, index: &[usize]) -> Option<T> {
        self.shape.offset(index).map(|i| self.data[i])
    }

    pub fn set(&mut self, index: &[usize], value: T) -> Result<()> {
        let i = self.shape.offset(index).ok_or_else(|| {
            Error::shape(format!("index {index:?} out of bounds for {}", self.shape))
        })?;
        self.data[i] = value;
        Ok(())
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(self, dims: &[usize]) -> Result<Self> {
        Self::from_vec(dims, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn elementwise(&self, other: &Self, op: ElementwiseOp) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "elementwise {op:?} needs equal shapes, got {} and {}",
                self.shape, other.shape
            )));
        }
        let f = match op {
            ElementwiseOp::Add => |a: T, b: T| a + b,
            ElementwiseOp::Sub => |a: T, b: T| a - b,
            ElementwiseOp::Mul => |a: T, b: T| a * b,
        };
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.elementwise(other, ElementwiseOp::Add)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.elementwise(other, ElementwiseOp::Sub)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.elementwise(other, ElementwiseOp::Mul)
    }

    /// Rank-2 matrix product `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (m, k) = as_matrix(self)?;
        let (k2, n) = as_matrix(other)?;
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul inner dimensions differ: {} x {}",
                self.shape, other.shape
            )));
        }
        let data = matmul_slices(&self.data, &other.data, m, k, n);
        Ok(Tensor {
            shape: Shape(vec![m, n]),
            data,
        })
    }

    /// Rank-2 transpose.
    pub fn transpose(&self) -> Result<Self> {
        let (m, n) = as_matrix(self)?;
        Ok(Tensor {
            shape: Shape(vec![n, m]),
            data: transpose_slice(&self.data, m, n),
        })
    }
}

fn as_matrix<T: Real>(t: &Tensor<T>) -> Result<(usize, usize)> {
    match t.dims() {
        &[m, n] => Ok((m, n)),
        _ => Err(Error::shape(format!("expected a rank-2 tensor, got {}", t.shape))),
    }
}

/// Rows of the output handed to one worker. Fixed, so the split does not
/// depend on the pool size.
const MATMUL_ROW_CHUNK: usize = 16;

/// `c[m, n] = a[m, k] * b[k, n]` on row-major slices.
///
/// Every output element accumulates over `p = 0..k` in increasing order, in
/// the element type, whatever the number of worker threads.
pub(crate) fn matmul_slices<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![T::zero(); m * n];
    if n == 0 || m == 0 {
        return c;
    }
    c.par_chunks_mut(MATMUL_ROW_CHUNK * n)
        .enumerate()
        .for_each(|(chunk, out)| {
            let row0 = chunk * MATMUL_ROW_CHUNK;
            for (r, crow) in out.chunks_mut(n).enumerate() {
                let arow = &a[(row0 + r) * k..(row0 + r + 1) * k];
                for (p, &av) in arow.iter().enumerate() {
                    let brow = &b[p * n..(p + 1) * n];
                    for (cv, &bv) in crow.iter_mut().zip(brow) {
                        *cv = *cv + av * bv;
                    }
                }
            }
        });
    c
}

pub(crate) fn transpose_slice<T: Real>(a: &[T], m: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a[i * k + p] * b[p * n + j];
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    #[test]
    fn create_fills_every_element() {
        let t = Tensor::<f32>::full(&[2, 2], 0.0).unwrap();
        assert_eq!(t.data(), &[0.0; 4]);
        let t = Tensor::<f32>::full(&[3], 1.5).unwrap();
        assert_eq!(t.data(), &[1.5, 1.5, 1.5]);
        let t = Tensor::<f32>::full(&[2, 3], 7.0).unwrap();
        assert_eq!(t.len(), 6);
        assert!(t.data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn overflowing_shape_is_a_size_error() {
        let err = Tensor::<f32>::zeros(&[usize::MAX, 2]).unwrap_err();
        assert!(matches!(err, Error::Size(_)));
        assert!(matches!(Shape::new(vec![2, 0]), Err(Error::Shape(_))));
    }

    #[test]
    fn row_major_offsets() {
        let s = Shape::new(vec![3, 4]).unwrap();
        assert_eq!(s.offset(&[2, 1]), Some(2 * 4 + 1));
        assert_eq!(s.offset(&[3, 0]), None);
        let data: Vec<f32> = (0..12).map(|v| v as f32).collect();
        let t = Tensor::from_vec(&[3, 4], data).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(t.get(&[i, j]), Some((i * 4 + j) as f32));
            }
        }
    }

    #[test]
    fn matmul_examples() {
        let id = Tensor::from_vec(&[2, 2], vec![1.0f32, 0.0, 0.0, 1.0]).unwrap();
        let m = Tensor::from_vec(&[2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(id.matmul(&m).unwrap(), m);

        let ones = Tensor::from_vec(&[2, 1], vec![1.0f32, 1.0]).unwrap();
        let rs = m.matmul(&ones).unwrap();
        assert_eq!(rs.dims(), &[2, 1]);
        assert_eq!(rs.data(), &[3.0, 7.0]);

        let z = Tensor::<f32>::zeros(&[1, 2]).unwrap();
        assert_eq!(z.matmul(&m).unwrap().data(), &[0.0, 0.0]);

        let bad = Tensor::<f32>::zeros(&[3, 1]).unwrap();
        assert!(matches!(m.matmul(&bad), Err(Error::Shape(_))));
    }

    #[test]
    fn elementwise_examples() {
        let a = Tensor::from_vec(&[2], vec![1.0f32, 2.0]).unwrap();
        let b = Tensor::from_vec(&[2], vec![3.0f32, 4.0]).unwrap();
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 6.0]);
        let z = Tensor::<f32>::zeros(&[2]).unwrap();
        assert_eq!(a.mul(&z).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(a.sub(&a).unwrap().data(), &[0.0, 0.0]);
        let c = Tensor::<f32>::zeros(&[1, 2]).unwrap();
        assert!(a.add(&c).is_err());
    }

    proptest! {
        #[test]
        fn matmul_matches_triple_loop(m in 1usize..40, k in 1usize..12, n in 1usize..9, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f64> = (0..m * k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..k * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            // same accumulation order as the oracle, so results are identical
            prop_assert_eq!(matmul_slices(&a, &b, m, k, n), naive(&a, &b, m, k, n));
        }

        #[test]
        fn matmul_is_associative(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut mk = |r: usize, c: usize| {
                Tensor::from_vec(&[r, c], (0..r * c).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap()
            };
            let a = mk(3, 4);
            let b = mk(4, 5);
            let c = mk(5, 2);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            for (x, y) in left.data().iter().zip(right.data()) {
                prop_assert!((x - y).abs() <= 1e-4);
            }
        }

        #[test]
        fn reshape_round_trip(rows in 1usize..6, cols in 1usize..6) {
            let data: Vec<f32> = (0..rows * cols).map(|v| v as f32).collect();
            let t = Tensor::from_vec(&[rows, cols], data.clone()).unwrap();
            let back = t.reshape(&[rows * cols]).unwrap().reshape(&[rows, cols]).unwrap();
            prop_assert_eq!(back.data(), &data[..]);
        }
    }
}

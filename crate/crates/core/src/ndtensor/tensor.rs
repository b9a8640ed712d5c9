use std::sync::atomic::{AtomicBool, Ordering};

use super::Real;
use crate::{Error, Result};

static CHECKED: AtomicBool = AtomicBool::new(false);

/// Enables or disables finiteness checks on every taped operation output.
pub fn set_checked_mode(on: bool) {
    CHECKED.store(on, Ordering::Relaxed);
}

pub fn checked_mode() -> bool {
    CHECKED.load(Ordering::Relaxed)
}

/// Dense row-major array. `data.len()` always equals the product of `shape`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F = f32> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn new(shape: &[usize], data: Vec<F>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::invalid_shape("tensor", format!("zero extent in {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::invalid_shape(
                "tensor",
                format!("shape {shape:?} needs {n} elements, got {}", data.len()),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| F::from_f64c(v)).collect())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, F::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, F::one())
    }

    pub fn full(shape: &[usize], value: F) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: F) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single element of a scalar tensor.
    pub fn item(&self) -> F {
        self.data[0]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::invalid_shape(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape),
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(F, F) -> F) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> F {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> F {
        self.sum() / F::from_usize(self.data.len()).unwrap()
    }

    pub fn sq_norm(&self) -> F {
        self.data.iter().map(|&v| v * v).sum()
    }

    /// Converts between element types.
    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| G::from_f64c(v.to_f64c())).collect(),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64c()).collect()
    }

    /// Copy of item `index` along the leading axis, keeping a leading extent of 1.
    pub fn batch_item(&self, index: usize) -> Result<Self> {
        if self.rank() < 2 || index >= self.shape[0] {
            return Err(Error::invalid_shape(
                "batch_item",
                format!("index {index} of {:?}", self.shape),
            ));
        }
        let stride = self.data.len() / self.shape[0];
        let mut shape = self.shape.clone();
        shape[0] = 1;
        Ok(Self {
            shape,
            data: self.data[index * stride..(index + 1) * stride].to_vec(),
        })
    }

    /// Stacks equally shaped tensors along a new leading axis of the
    /// first tensor's leading extent multiple (tensors are joined on axis 0).
    pub fn stack_batch(items: &[Self]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid_shape("stack_batch", "no items"))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for it in items {
            if it.shape != first.shape {
                return Err(Error::shape("stack_batch", &first.shape, &it.shape));
            }
            data.extend_from_slice(&it.data);
        }
        let mut shape = first.shape.clone();
        shape[0] *= items.len();
        Ok(Self { shape, data })
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<F>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_length() {
        assert!(Tensor::<f32>::new(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new(&[0, 3], vec![]).is_err());
    }

    #[test]
    fn reshape_keeps_data() {
        let t = Tensor::<f32>::new(&[2, 3], (0..6).map(|v| v as f32).collect()).unwrap();
        let r = t.clone().reshape(&[3, 2]).unwrap();
        assert_eq!(r.data(), t.data());
        assert!(t.reshape(&[4, 2]).is_err());
    }

    #[test]
    fn batch_item_roundtrip() {
        let t = Tensor::<f64>::new(&[3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let items: Vec<_> = (0..3).map(|i| t.batch_item(i).unwrap()).collect();
        assert_eq!(items[1].data(), &[3., 4.]);
        assert_eq!(Tensor::stack_batch(&items).unwrap(), t);
    }
}

use crate::error::{invalid, shape, Result};
use serde::{Deserialize, Serialize};

/// Dense row-major tensor of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Checked constructor for external data: lengths must agree and all
    /// entries must be finite.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&s| s == 0) {
            return invalid(format!("tensor extents must be positive, got {shape:?}"));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return crate::error::shape(format!("shape {shape:?} needs {n} values, got {}", data.len()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite entry at flat index {i}"));
        }
        Ok(Tensor { shape, data })
    }

    /// Unchecked constructor for internally produced data.
    pub(crate) fn raw(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![v; n] }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![1], data: vec![v] }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, new_shape: &[usize]) -> Result<Self> {
        if new_shape.iter().product::<usize>() != self.data.len() {
            return shape(format!("cannot reshape {:?} into {new_shape:?}", self.shape));
        }
        self.shape = new_shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// The tensor 𝐈 with all entries one.
pub fn one_tensor(extents: &[usize]) -> Tensor {
    Tensor::filled(extents, 1.0)
}

/// Flat parameter vector θ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(n: usize) -> Self {
        ParamVector { values: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_len(&self, expected: usize) -> Result<()> {
        if self.values.len() != expected {
            return shape(format!("parameter vector has length {}, architecture declares {expected}", self.values.len()));
        }
        Ok(())
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        ParamVector { values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 4]).is_ok());
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![2], vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn one_tensor_sums_to_volume() {
        let t = one_tensor(&[2, 3, 4]);
        assert_eq!(t.data().iter().sum::<f64>(), 24.0);
        assert_eq!(one_tensor(&[2, 2]).data(), &[1.0; 4]);
    }
}

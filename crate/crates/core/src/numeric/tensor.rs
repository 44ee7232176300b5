use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::rng::RngStream;

/// Dense row-major array of finite `f64` values.
///
/// Construction rejects NaN and infinities, so a stored `Tensor` is always finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor", into = "RawTensor")]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TryFrom<RawTensor> for Tensor {
    type Error = Error;

    fn try_from(raw: RawTensor) -> Result<Self> {
        Tensor::new(raw.shape, raw.data)
    }
}

impl From<Tensor> for RawTensor {
    fn from(t: Tensor) -> Self {
        RawTensor {
            shape: t.shape,
            data: t.data,
        }
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::domain(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite value {} at index {pos}",
                data[pos]
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Tensor::new(Vec::new(), vec![value])
    }

    /// A `1 × n` row.
    pub fn row(values: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![1, values.len()], values)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    /// Uniform draws in `[lo, hi)`.
    pub fn uniform(shape: Vec<usize>, lo: f64, hi: f64, rng: &mut RngStream) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform_range(lo, hi)).collect();
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
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

    /// Rows of a 2-D tensor; errors for other ranks.
    pub fn rows(&self) -> Result<usize> {
        self.dims2().map(|(r, _)| r)
    }

    pub fn cols(&self) -> Result<usize> {
        self.dims2().map(|(_, c)| c)
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::domain(format!("expected a matrix, got shape {other:?}"))),
        }
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.shape[self.shape.len() - 1];
        &self.data[r * c..(r + 1) * c]
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// Overwrites one entry, keeping the finiteness invariant.
    pub fn set(&mut self, index: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::numerical(format!("non-finite value {value}")));
        }
        self.data[index] = value;
        Ok(())
    }

    /// Applies `f` to every value; fails if any result is non-finite.
    pub fn try_map_inplace(&mut self, mut f: impl FnMut(usize, f64) -> f64) -> Result<()> {
        for (i, v) in self.data.iter_mut().enumerate() {
            let next = f(i, *v);
            if !next.is_finite() {
                return Err(Error::numerical(format!("update produced {next} at index {i}")));
            }
            *v = next;
        }
        Ok(())
    }
}

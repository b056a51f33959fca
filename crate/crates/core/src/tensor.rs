//! Dense row-major tensors and named parameter collections.

use indexmap::IndexMap;

use crate::error::{Error, Result};

/// Row-major dense tensor of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor, checking that the data length matches the shape and
    /// every entry is finite.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch {
                tensor: "tensor data".into(),
                expected: format!("{expected} entries for shape {shape:?}"),
                actual: format!("{} entries", data.len()),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("tensor entry {pos} for shape {shape:?}"),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    /// 2-D constructor from a row-of-rows layout.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("tensor rows"));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::ShapeMismatch {
                    tensor: format!("row {i}"),
                    expected: format!("{cols} columns"),
                    actual: format!("{} columns", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Tensor::new(vec![rows.len(), cols], data)
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows of a 2-D tensor (a 1-D tensor counts as a single row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            2 => self.shape[0],
            _ => panic!("rows() on tensor of rank {}", self.shape.len()),
        }
    }

    /// Columns of a 1-D or 2-D tensor.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            2 => self.shape[1],
            _ => panic!("cols() on tensor of rank {}", self.shape.len()),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }
}

/// Ordered, named collection of parameter tensors.
///
/// Order is insertion order and is part of the contract: checkpoints,
/// gradient collections, and averaging all walk entries in this order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    entries: IndexMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::invalid(
                "param name",
                format!("duplicate parameter {name:?}"),
            ));
        }
        self.entries.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    /// Same names in the same order with the same per-name shapes.
    pub fn is_compatible(&self, other: &ParamSet) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(other.entries.iter())
                .all(|((an, at), (bn, bt))| an == bn && at.shape() == bt.shape())
    }

    fn check_compatible(&self, other: &ParamSet, op: &str) -> Result<()> {
        if self.is_compatible(other) {
            Ok(())
        } else {
            Err(Error::IncompatibleParams {
                details: format!("{op}: parameter names or shapes differ"),
            })
        }
    }

    /// Zero tensors mirroring this set's names and shapes.
    pub fn zeros_like(&self) -> ParamSet {
        let entries = self
            .entries
            .iter()
            .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape().to_vec())))
            .collect();
        ParamSet { entries }
    }

    /// self += scale * other, entrywise.
    pub fn add_scaled(&mut self, other: &ParamSet, scale: f64) -> Result<()> {
        self.check_compatible(other, "add_scaled")?;
        for ((_, a), (_, b)) in self.entries.iter_mut().zip(other.entries.iter()) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data().iter()) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    /// self *= scale, entrywise.
    pub fn scale(&mut self, scale: f64) {
        for (_, t) in self.entries.iter_mut() {
            for x in t.data_mut() {
                *x *= scale;
            }
        }
    }

    /// Largest absolute entrywise difference; errors if incompatible.
    pub fn max_abs_diff(&self, other: &ParamSet) -> Result<f64> {
        self.check_compatible(other, "max_abs_diff")?;
        let mut worst = 0.0f64;
        for ((_, a), (_, b)) in self.entries.iter().zip(other.entries.iter()) {
            for (x, y) in a.data().iter().zip(b.data().iter()) {
                worst = worst.max((x - y).abs());
            }
        }
        Ok(worst)
    }

    /// True when any entry is non-finite.
    pub fn has_non_finite(&self) -> bool {
        self.entries
            .values()
            .any(|t| t.data().iter().any(|v| !v.is_finite()))
    }
}

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One named tensor inside a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub dims: Vec<usize>,
}

impl LayerShape {
    pub fn new(name: impl Into<String>, dims: Vec<usize>) -> Self {
        Self {
            name: name.into(),
            dims,
        }
    }

    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }
}

/// Flat model parameters plus the layer schema describing them.
///
/// Layers are stored back to back in schema order, each row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector {
    schema: Arc<Vec<LayerShape>>,
    values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(schema: Vec<LayerShape>, values: Vec<f64>) -> Result<Self> {
        Self::with_schema(Arc::new(schema), values)
    }

    fn with_schema(schema: Arc<Vec<LayerShape>>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = schema.iter().map(LayerShape::numel).sum();
        if expected != values.len() {
            return Err(Error::Shape(format!(
                "schema describes {expected} values but {} were given",
                values.len()
            )));
        }
        let pv = Self { schema, values };
        pv.ensure_finite()?;
        Ok(pv)
    }

    pub fn zeros(schema: Vec<LayerShape>) -> Self {
        let n = schema.iter().map(LayerShape::numel).sum();
        Self {
            schema: Arc::new(schema),
            values: vec![0.0; n],
        }
    }

    /// A zero vector with the same schema as `self`.
    pub fn zeros_like(&self) -> Self {
        Self {
            schema: Arc::clone(&self.schema),
            values: vec![0.0; self.values.len()],
        }
    }

    /// Replaces the values, keeping the schema.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::with_schema(Arc::clone(&self.schema), values)
    }

    pub fn schema(&self) -> &[LayerShape] {
        &self.schema
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Flat index range of layer `index`.
    pub fn layer_range(&self, index: usize) -> std::ops::Range<usize> {
        let start: usize = self.schema[..index].iter().map(LayerShape::numel).sum();
        start..start + self.schema[index].numel()
    }

    pub fn layer(&self, name: &str) -> Option<&[f64]> {
        let idx = self.schema.iter().position(|l| l.name == name)?;
        Some(&self.values[self.layer_range(idx)])
    }

    pub fn check_same_schema(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.schema, &other.schema) || self.schema == other.schema {
            Ok(())
        } else {
            Err(Error::SchemaMismatch(format!(
                "{:?} vs {:?}",
                names(&self.schema),
                names(&other.schema)
            )))
        }
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::NonFinite(format!(
                "parameter {i} is {}",
                self.values[i]
            ))),
        }
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &Self) -> Result<Self> {
        self.check_same_schema(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + alpha * b)
            .collect();
        self.with_values(values)
    }

    /// In-place `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
        self.check_same_schema(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        self.ensure_finite()
    }

    /// `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add_scaled(-1.0, other)
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        self.with_values(self.values.iter().map(|v| alpha * v).collect())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        self.check_same_schema(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

fn names(schema: &[LayerShape]) -> Vec<(&str, &[usize])> {
    schema
        .iter()
        .map(|l| (l.name.as_str(), l.dims.as_slice()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Vec<LayerShape> {
        vec![LayerShape::new("w", vec![2]), LayerShape::new("b", vec![1])]
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(matches!(
            ParameterVector::new(schema(), vec![1.0, 2.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            ParameterVector::new(schema(), vec![1.0, f64::NAN, 0.0]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn schema_mismatch_is_typed() {
        let a = ParameterVector::zeros(schema());
        let b = ParameterVector::zeros(vec![LayerShape::new("w", vec![3])]);
        assert!(matches!(a.sub(&b), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn layer_lookup() {
        let p = ParameterVector::new(schema(), vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(p.layer("w"), Some(&[1.0, 2.0][..]));
        assert_eq!(p.layer("b"), Some(&[3.0][..]));
        assert_eq!(p.layer_range(1), 2..3);
    }
}

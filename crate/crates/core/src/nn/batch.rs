use crate::error::{Error, Result};

/// Row-major feature matrix with integer labels.
///
/// `ids` carries the global sample index of every row so that partitions can
/// be checked for overlap after any amount of slicing.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBatch {
    feature_dim: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    ids: Vec<u64>,
}

impl LabeledBatch {
    pub fn new(
        feature_dim: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
        ids: Vec<u64>,
    ) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::InvalidArgument("feature_dim must be >= 1".into()));
        }
        if features.len() != feature_dim * labels.len() {
            return Err(Error::Shape(format!(
                "{} feature values for {} rows of width {feature_dim}",
                features.len(),
                labels.len()
            )));
        }
        if ids.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} ids for {} rows",
                ids.len(),
                labels.len()
            )));
        }
        Ok(Self {
            feature_dim,
            features,
            labels,
            ids,
        })
    }

    /// Builds a batch with ids `0..n`.
    pub fn from_rows(feature_dim: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        let ids = (0..labels.len() as u64).collect();
        Self::new(feature_dim, features, labels, ids)
    }

    pub fn empty(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            features: Vec::new(),
            labels: Vec::new(),
            ids: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.feature_dim);
        let mut labels = Vec::with_capacity(indices.len());
        let mut ids = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
            ids.push(self.ids[i]);
        }
        Self {
            feature_dim: self.feature_dim,
            features,
            labels,
            ids,
        }
    }

    /// Concatenates batches in order.
    pub fn concat<'a>(feature_dim: usize, parts: impl IntoIterator<Item = &'a Self>) -> Result<Self> {
        let mut out = Self::empty(feature_dim);
        for p in parts {
            if p.feature_dim != feature_dim {
                return Err(Error::Shape(format!(
                    "cannot concatenate width {} into width {feature_dim}",
                    p.feature_dim
                )));
            }
            out.features.extend_from_slice(&p.features);
            out.labels.extend_from_slice(&p.labels);
            out.ids.extend_from_slice(&p.ids);
        }
        Ok(out)
    }

    pub(crate) fn check_labels(&self, num_classes: usize) -> Result<()> {
        match self.labels.iter().find(|&&l| l >= num_classes) {
            None => Ok(()),
            Some(l) => Err(Error::Shape(format!(
                "label {l} out of range for {num_classes} classes"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_count_must_match() {
        assert!(LabeledBatch::from_rows(2, vec![1.0, 2.0, 3.0], vec![0, 1]).is_err());
    }

    #[test]
    fn select_and_concat() {
        let b = LabeledBatch::from_rows(1, vec![1.0, 2.0, 3.0], vec![0, 1, 0]).unwrap();
        let s = b.select(&[2, 0]);
        assert_eq!(s.features(), &[3.0, 1.0]);
        assert_eq!(s.ids(), &[2, 0]);
        let c = LabeledBatch::concat(1, [&s, &b]).unwrap();
        assert_eq!(c.len(), 5);
        assert_eq!(c.labels(), &[0, 0, 0, 1, 0]);
    }
}

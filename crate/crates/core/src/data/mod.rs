//! Datasets, federated partitions and the on-disk container.

mod container;
mod partition;
mod synth;

use std::collections::HashSet;

pub use container::{load_dataset, read_dataset, save_dataset, write_dataset, MAGIC, VERSION};
pub use partition::{
    partition_exclusive_class, partition_iid, partition_lda, select_forget_subset, ForgetSplit,
    LDA_RETRY_CAP,
};
pub use synth::generate_synthetic;

use crate::error::{Error, Result};
use crate::nn::LabeledBatch;

/// Per-client training data plus a shared held-out test split.
///
/// Client `i` in `clients` has client id `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct FederatedDataset {
    clients: Vec<LabeledBatch>,
    test: LabeledBatch,
    num_classes: usize,
}

impl FederatedDataset {
    /// Validates that every client is nonempty, no sample id is held by two
    /// clients, and all labels and widths agree.
    pub fn new(clients: Vec<LabeledBatch>, test: LabeledBatch, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::Invariant("num_classes must be >= 1".into()));
        }
        if clients.is_empty() {
            return Err(Error::Invariant("dataset has no clients".into()));
        }
        let dim = test.feature_dim();
        let mut seen = HashSet::new();
        for (i, c) in clients.iter().enumerate() {
            if c.is_empty() {
                return Err(Error::Invariant(format!("client {i} holds no samples")));
            }
            if c.feature_dim() != dim {
                return Err(Error::Invariant(format!(
                    "client {i} has feature_dim {} but test has {dim}",
                    c.feature_dim()
                )));
            }
            c.check_labels(num_classes)
                .map_err(|e| Error::Invariant(format!("client {i}: {e}")))?;
            for &id in c.ids() {
                if !seen.insert(id) {
                    return Err(Error::Invariant(format!(
                        "sample {id} appears more than once (client {i})"
                    )));
                }
            }
        }
        test.check_labels(num_classes)
            .map_err(|e| Error::Invariant(format!("test split: {e}")))?;
        Ok(Self {
            clients,
            test,
            num_classes,
        })
    }

    pub fn clients(&self) -> &[LabeledBatch] {
        &self.clients
    }

    pub fn client(&self, id: usize) -> Result<&LabeledBatch> {
        self.clients.get(id).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "client {id} does not exist ({} clients)",
                self.clients.len()
            ))
        })
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn test(&self) -> &LabeledBatch {
        &self.test
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.test.feature_dim()
    }

    pub fn num_samples(&self) -> usize {
        self.clients.iter().map(LabeledBatch::len).sum()
    }

    /// Pooled data of the given clients, in the order given.
    pub fn pooled(&self, ids: &[usize]) -> Result<LabeledBatch> {
        let parts = ids
            .iter()
            .map(|&i| self.client(i))
            .collect::<Result<Vec<_>>>()?;
        LabeledBatch::concat(self.feature_dim(), parts)
    }

    /// Copy of this dataset with client `id`'s data replaced.
    pub fn with_client_data(&self, id: usize, data: LabeledBatch) -> Result<Self> {
        self.client(id)?;
        let mut clients = self.clients.clone();
        clients[id] = data;
        Self::new(clients, self.test.clone(), self.num_classes)
    }
}

/// Per-client label histograms, normalized to proportions.
pub fn label_proportions(fd: &FederatedDataset) -> Vec<Vec<f64>> {
    fd.clients()
        .iter()
        .map(|c| {
            let mut hist = vec![0.0; fd.num_classes()];
            for &l in c.labels() {
                hist[l] += 1.0;
            }
            let n = c.len() as f64;
            hist.iter_mut().for_each(|h| *h /= n);
            hist
        })
        .collect()
}

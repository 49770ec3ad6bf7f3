use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::FederatedDataset;
use crate::error::{Error, Result};
use crate::nn::LabeledBatch;
use crate::rng::{self, Purpose};

/// Maximum number of whole-partition draws before LDA gives up.
pub const LDA_RETRY_CAP: u32 = 100;

fn check_clients(train: &LabeledBatch, num_clients: usize) -> Result<()> {
    if num_clients == 0 {
        return Err(Error::InvalidArgument("num_clients must be >= 1".into()));
    }
    if train.len() < num_clients {
        return Err(Error::Infeasible(format!(
            "{} samples cannot fill {num_clients} clients",
            train.len()
        )));
    }
    Ok(())
}

fn infer_classes(train: &LabeledBatch, test: &LabeledBatch) -> usize {
    train
        .labels()
        .iter()
        .chain(test.labels())
        .max()
        .map_or(1, |m| m + 1)
}

/// Shuffle and cut into `num_clients` shards whose sizes differ by at most one.
pub fn partition_iid(
    train: &LabeledBatch,
    test: &LabeledBatch,
    num_clients: usize,
    seed: u64,
) -> Result<FederatedDataset> {
    check_clients(train, num_clients)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng::stream(seed, Purpose::Partition, &[0]));
    let clients = shards(&order, num_clients)
        .into_iter()
        .map(|s| train.select(s))
        .collect();
    FederatedDataset::new(clients, test.clone(), infer_classes(train, test))
}

fn shards(order: &[usize], parts: usize) -> Vec<&[usize]> {
    let base = order.len() / parts;
    let extra = order.len() % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for i in 0..parts {
        let len = base + usize::from(i < extra);
        out.push(&order[start..start + len]);
        start += len;
    }
    out
}

/// Label-skew partition.
///
/// For every class a proportion vector over clients is drawn from
/// `Dirichlet(alpha, ..., alpha)` and each sample of that class is assigned to
/// a client by a categorical draw from it. If any client ends up with fewer
/// than `min_per_client` samples the whole partition is redrawn, up to
/// [`LDA_RETRY_CAP`] times.
pub fn partition_lda(
    train: &LabeledBatch,
    test: &LabeledBatch,
    num_clients: usize,
    alpha: f64,
    min_per_client: usize,
    seed: u64,
) -> Result<FederatedDataset> {
    check_clients(train, num_clients)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha must be > 0, got {alpha}")));
    }
    let min_per_client = min_per_client.max(1);
    let num_classes = infer_classes(train, test);
    let gamma = Gamma::new(alpha, 1.0)
        .map_err(|e| Error::InvalidArgument(format!("alpha={alpha}: {e}")))?;

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in train.labels().iter().enumerate() {
        by_class[l].push(i);
    }

    for attempt in 0..LDA_RETRY_CAP {
        let mut rng = rng::stream(seed, Purpose::Partition, &[1, attempt as u64]);
        let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); num_clients];
        for members in &by_class {
            if members.is_empty() {
                continue;
            }
            let mut p: Vec<f64> = (0..num_clients).map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = p.iter().sum();
            if total > 0.0 && total.is_finite() {
                p.iter_mut().for_each(|v| *v /= total);
            } else {
                // every draw underflowed; give the class to one client
                p.iter_mut().for_each(|v| *v = 0.0);
                p[rng.random_range(0..num_clients)] = 1.0;
            }
            for &idx in members {
                assigned[categorical(&p, rng.random::<f64>())].push(idx);
            }
        }
        if assigned.iter().all(|a| a.len() >= min_per_client) {
            let clients = assigned
                .into_iter()
                .map(|mut a| {
                    a.sort_unstable();
                    train.select(&a)
                })
                .collect();
            return FederatedDataset::new(clients, test.clone(), num_classes);
        }
    }
    Err(Error::Infeasible(format!(
        "no LDA draw with alpha={alpha} gave every one of {num_clients} clients at least \
         {min_per_client} samples in {LDA_RETRY_CAP} attempts"
    )))
}

fn categorical(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // rounding left `acc` slightly below 1; fall back to the last nonzero bin
    p.iter().rposition(|&pi| pi > 0.0).unwrap_or(p.len() - 1)
}

/// Client `holder` receives every sample of `class`; all other samples are
/// spread IID over the remaining clients.
///
/// This gives a target client a cluster no other client has seen.
pub fn partition_exclusive_class(
    train: &LabeledBatch,
    test: &LabeledBatch,
    num_clients: usize,
    holder: usize,
    class: usize,
    seed: u64,
) -> Result<FederatedDataset> {
    if num_clients < 2 || holder >= num_clients {
        return Err(Error::InvalidArgument(format!(
            "holder {holder} must be one of at least 2 clients (got {num_clients})"
        )));
    }
    let (own, mut rest): (Vec<usize>, Vec<usize>) =
        (0..train.len()).partition(|&i| train.labels()[i] == class);
    if own.is_empty() {
        return Err(Error::Infeasible(format!("no training samples of class {class}")));
    }
    if rest.len() < num_clients - 1 {
        return Err(Error::Infeasible(format!(
            "{} remaining samples cannot fill {} clients",
            rest.len(),
            num_clients - 1
        )));
    }
    rest.shuffle(&mut rng::stream(seed, Purpose::Partition, &[2]));
    let mut others = shards(&rest, num_clients - 1).into_iter();
    let clients = (0..num_clients)
        .map(|i| {
            if i == holder {
                train.select(&own)
            } else {
                train.select(others.next().expect("one shard per non-holder"))
            }
        })
        .collect();
    FederatedDataset::new(clients, test.clone(), infer_classes(train, test))
}

/// A client's data split into the part to forget and the part to keep.
#[derive(Clone, Debug, PartialEq)]
pub struct ForgetSplit {
    pub forget: LabeledBatch,
    pub retain: LabeledBatch,
    pub source_client: usize,
}

/// Uniformly random forget subset of size `round(fraction * |D|)`.
///
/// Both halves keep the original row order.
pub fn select_forget_subset(
    client_data: &LabeledBatch,
    source_client: usize,
    fraction: f64,
    seed: u64,
) -> Result<ForgetSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "forget fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n = client_data.len();
    let k = (fraction * n as f64).round() as usize;
    if k == 0 || k == n {
        return Err(Error::Empty(if k == 0 {
            "forget subset"
        } else {
            "retain subset"
        }));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(
        seed,
        Purpose::ForgetSplit,
        &[source_client as u64],
    ));
    let (forget, retain) = order.split_at_mut(k);
    forget.sort_unstable();
    retain.sort_unstable();
    Ok(ForgetSplit {
        forget: client_data.select(forget),
        retain: client_data.select(retain),
        source_client,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn labeled(n: usize, classes: usize) -> LabeledBatch {
        let labels = (0..n).map(|i| i % classes).collect();
        LabeledBatch::from_rows(1, (0..n).map(|i| i as f64).collect(), labels).unwrap()
    }

    fn assert_cover(fd: &FederatedDataset, n: usize) {
        let mut all = HashSet::new();
        for c in fd.clients() {
            for &id in c.ids() {
                assert!(all.insert(id), "duplicate {id}");
            }
        }
        assert_eq!(all.len(), n);
    }

    #[test]
    fn iid_equal_shards() {
        let train = labeled(100, 4);
        let fd = partition_iid(&train, &labeled(4, 4), 10, 3).unwrap();
        assert!(fd.clients().iter().all(|c| c.len() == 10));
        assert_cover(&fd, 100);
        let fd = partition_iid(&train, &labeled(4, 4), 7, 3).unwrap();
        let sizes: Vec<_> = fd.clients().iter().map(LabeledBatch::len).collect();
        assert_eq!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap(), 1);
        assert_cover(&fd, 100);
    }

    #[test]
    fn iid_too_few_samples() {
        assert!(matches!(
            partition_iid(&labeled(3, 2), &labeled(2, 2), 4, 0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn lda_covers_and_is_deterministic() {
        let train = labeled(500, 5);
        let test = labeled(5, 5);
        let a = partition_lda(&train, &test, 8, 0.5, 2, 11).unwrap();
        assert_cover(&a, 500);
        assert!(a.clients().iter().all(|c| c.len() >= 2));
        assert_eq!(a, partition_lda(&train, &test, 8, 0.5, 2, 11).unwrap());
    }

    #[test]
    fn lda_infeasible_min_is_typed() {
        let train = labeled(20, 2);
        assert!(matches!(
            partition_lda(&train, &labeled(2, 2), 10, 1.0, 5, 0),
            Err(Error::Infeasible(_))
        ));
        assert!(partition_lda(&train, &labeled(2, 2), 2, 0.0, 1, 0).is_err());
    }

    #[test]
    fn exclusive_class_holder_gets_whole_class() {
        let train = labeled(100, 5);
        let fd = partition_exclusive_class(&train, &labeled(5, 5), 5, 2, 3, 1).unwrap();
        assert!(fd.client(2).unwrap().labels().iter().all(|&l| l == 3));
        assert_eq!(fd.client(2).unwrap().len(), 20);
        for (i, c) in fd.clients().iter().enumerate() {
            if i != 2 {
                assert!(c.labels().iter().all(|&l| l != 3));
            }
        }
        assert_cover(&fd, 100);
    }

    #[test]
    fn forget_split_sizes() {
        let d = labeled(10, 2);
        let s = select_forget_subset(&d, 0, 0.5, 4).unwrap();
        assert_eq!((s.forget.len(), s.retain.len()), (5, 5));
        let f: HashSet<_> = s.forget.ids().iter().collect();
        assert!(s.retain.ids().iter().all(|id| !f.contains(id)));
        assert_eq!(s, select_forget_subset(&d, 0, 0.5, 4).unwrap());
    }

    #[test]
    fn forget_split_errors() {
        let d = labeled(3, 2);
        assert!(select_forget_subset(&d, 0, 0.1, 0).is_err());
        assert!(select_forget_subset(&d, 0, 0.9, 0).is_err());
        assert!(select_forget_subset(&d, 0, 1.0, 0).is_err());
        assert!(select_forget_subset(&d, 0, 0.0, 0).is_err());
    }
}

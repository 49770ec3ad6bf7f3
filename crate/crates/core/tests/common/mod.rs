#![allow(dead_code)]

use pufsim::data::{generate_synthetic, partition_iid, FederatedDataset};
use pufsim::engine::{LocalHyper, Participation, TrainConfig};
use pufsim::nn::{LabeledBatch, ModelArch, ParameterVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn federation(clients: usize, k: usize, d: usize, spc: usize, sep: f64, seed: u64) -> FederatedDataset {
    let (train, test) = generate_synthetic(k, d, spc, sep, seed).unwrap();
    partition_iid(&train, &test, clients, seed).unwrap()
}

/// `clients` shards of exactly `per_client` random rows each.
pub fn equal_federation(clients: usize, per_client: usize, d: usize, k: usize, seed: u64) -> FederatedDataset {
    let mut r = rng(seed);
    let mut next_id = 0u64;
    let mut batch = |n: usize, r: &mut ChaCha8Rng| {
        let features = (0..n * d).map(|_| r.random_range(-2.0..2.0)).collect();
        let labels = (0..n).map(|_| r.random_range(0..k)).collect();
        let ids = (next_id..next_id + n as u64).collect();
        next_id += n as u64;
        LabeledBatch::new(d, features, labels, ids).unwrap()
    };
    let shards = (0..clients).map(|_| batch(per_client, &mut r)).collect();
    let test = batch(per_client, &mut r);
    FederatedDataset::new(shards, test, k).unwrap()
}

pub fn random_params(arch: &ModelArch, scale: f64, r: &mut impl Rng) -> ParameterVector {
    let schema = arch.schema();
    let n: usize = schema.iter().map(|l| l.numel()).sum();
    let values = (0..n).map(|_| r.random_range(-scale..scale)).collect();
    ParameterVector::new(schema, values).unwrap()
}

pub fn logistic(d: usize, k: usize) -> ModelArch {
    ModelArch::Logistic {
        feature_dim: d,
        num_classes: k,
    }
}

pub fn train_config(rounds: u64, lr: f64) -> TrainConfig {
    TrainConfig {
        rounds,
        local: LocalHyper {
            epochs: 1,
            lr,
            batch_size: 16,
        },
        lr_decay: 0.998,
        eta_s: 1.0,
        participation: Participation::All,
    }
}

pub fn max_abs_diff(a: &ParameterVector, b: &ParameterVector) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Label proportions over all clients together.
pub fn global_proportions(fd: &FederatedDataset) -> Vec<f64> {
    let mut hist = vec![0.0; fd.num_classes()];
    for c in fd.clients() {
        for &l in c.labels() {
            hist[l] += 1.0;
        }
    }
    let n: f64 = hist.iter().sum();
    hist.iter().map(|h| h / n).collect()
}

/// Mean over clients of the total-variation distance between the client's
/// label histogram and the global one.
pub fn mean_tv_from_global(fd: &FederatedDataset) -> f64 {
    let global = global_proportions(fd);
    let per_client = pufsim::data::label_proportions(fd);
    per_client
        .iter()
        .map(|p| 0.5 * p.iter().zip(&global).map(|(a, b)| (a - b).abs()).sum::<f64>())
        .sum::<f64>()
        / per_client.len() as f64
}

/// Mean over clients of the largest single-class share.
pub fn mean_max_share(fd: &FederatedDataset) -> f64 {
    let per_client = pufsim::data::label_proportions(fd);
    per_client
        .iter()
        .map(|p| p.iter().copied().fold(0.0, f64::max))
        .sum::<f64>()
        / per_client.len() as f64
}

/// A fast two-seed experiment; `{strategy}` is substituted by callers.
pub const SMALL_EXPERIMENT: &str = r#"
seeds = [3, 4]
clients = 5
rounds = 6

[dataset]
kind = "synthetic"
num_classes = 3
feature_dim = 4
samples_per_class = 40
class_separation = 3.0

[hyper]
lr = 0.1
batch_size = 8

[unlearn]
strategy = "{strategy}"
targets = [1]

[recovery]
max_rounds = 10
"#;

pub fn small_config(strategy: &str) -> pufsim::experiment::ExperimentConfig {
    pufsim::experiment::parse_config(&SMALL_EXPERIMENT.replace("{strategy}", strategy)).unwrap()
}

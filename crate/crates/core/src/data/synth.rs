use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::LabeledBatch;
use crate::rng::{self, Purpose};

/// Gaussian class clusters with unit covariance.
///
/// Class means are random directions rescaled so the closest pair sits
/// exactly `class_separation` apart. Each class is split 80/20 into train and
/// test (at least one train row per class, and one test row when the class has
/// two or more samples). Train ids are `0..n_train`, test ids follow.
pub fn generate_synthetic(
    num_classes: usize,
    feature_dim: usize,
    samples_per_class: usize,
    class_separation: f64,
    seed: u64,
) -> Result<(LabeledBatch, LabeledBatch)> {
    if num_classes == 0 || feature_dim == 0 || samples_per_class == 0 {
        return Err(Error::InvalidArgument(
            "num_classes, feature_dim and samples_per_class must be >= 1".into(),
        ));
    }
    if !(class_separation >= 0.0 && class_separation.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "class_separation must be finite and >= 0, got {class_separation}"
        )));
    }
    let means = class_means(num_classes, feature_dim, class_separation, seed);

    let mut rng = rng::stream(seed, Purpose::Data, &[1]);
    let n_train = if samples_per_class == 1 {
        1
    } else {
        ((samples_per_class as f64 * 0.8).round() as usize).clamp(1, samples_per_class - 1)
    };
    let mut train_rows = Vec::new();
    let mut test_rows = Vec::new();
    for (class, mean) in means.iter().enumerate() {
        for s in 0..samples_per_class {
            let x: Vec<f64> = mean
                .iter()
                .map(|m| m + Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect();
            if s < n_train {
                train_rows.push((x, class));
            } else {
                test_rows.push((x, class));
            }
        }
    }
    train_rows.shuffle(&mut rng);
    test_rows.shuffle(&mut rng);

    let build = |rows: Vec<(Vec<f64>, usize)>, first_id: u64| {
        let ids = (first_id..first_id + rows.len() as u64).collect();
        let (features, labels): (Vec<Vec<f64>>, Vec<usize>) = rows.into_iter().unzip();
        LabeledBatch::new(feature_dim, features.concat(), labels, ids)
    };
    let n = train_rows.len() as u64;
    Ok((build(train_rows, 0)?, build(test_rows, n)?))
}

fn class_means(k: usize, d: usize, separation: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(seed, Purpose::Data, &[0]);
    let mut means: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    if k == 1 {
        return vec![vec![0.0; d]];
    }
    let mut min_dist = f64::INFINITY;
    for i in 0..k {
        for j in i + 1..k {
            min_dist = min_dist.min(dist(&means[i], &means[j]));
        }
    }
    let scale = separation / min_dist;
    for m in &mut means {
        m.iter_mut().for_each(|v| *v *= scale);
    }
    means
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

mod common;

use common::{random_params, rng};
use pufsim::nn::{loss_and_grad, LabeledBatch, ModelArch};
use rand::Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

/// Largest relative error between the analytic gradient and central finite
/// differences. The denominator is floored at 1e-6 so that vanishing
/// components compare in absolute terms.
fn worst_relative_error(arch: &ModelArch, seed: u64) -> f64 {
    let mut r = rng(seed);
    let w = random_params(arch, 0.8, &mut r);
    let d = arch.feature_dim();
    let n = r.random_range(1..6);
    let features = (0..n * d).map(|_| r.random_range(-1.5..1.5)).collect();
    let labels = (0..n).map(|_| r.random_range(0..arch.num_classes())).collect();
    let batch = LabeledBatch::from_rows(d, features, labels).unwrap();

    let (_, grad) = loss_and_grad(&w, &batch).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..w.len() {
        let mut plus = w.as_slice().to_vec();
        let mut minus = plus.clone();
        plus[i] += H;
        minus[i] -= H;
        let (lp, _) = loss_and_grad(&w.with_values(plus).unwrap(), &batch).unwrap();
        let (lm, _) = loss_and_grad(&w.with_values(minus).unwrap(), &batch).unwrap();
        let numeric = (lp - lm) / (2.0 * H);
        let analytic = grad.as_slice()[i];
        let denom = analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    worst
}

fn check(make: impl Fn(&mut rand_chacha::ChaCha8Rng) -> ModelArch, base_seed: u64) {
    let mut r = rng(base_seed);
    let mut worst: f64 = 0.0;
    for draw in 0..100 {
        let arch = make(&mut r);
        worst = worst.max(worst_relative_error(&arch, base_seed * 1000 + draw));
    }
    assert!(worst < TOL, "max relative error {worst:e}");
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    check(
        |r| ModelArch::Logistic {
            feature_dim: r.random_range(1..6),
            num_classes: r.random_range(2..5),
        },
        1,
    );
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    check(
        |r| ModelArch::Mlp {
            feature_dim: r.random_range(1..5),
            hidden_dim: r.random_range(1..5),
            num_classes: r.random_range(2..5),
        },
        2,
    );
}

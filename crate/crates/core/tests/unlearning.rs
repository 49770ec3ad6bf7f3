mod common;

use std::collections::BTreeSet;

use common::{equal_federation, federation, logistic, max_abs_diff, random_params, rng, train_config};
use pufsim::data::{generate_synthetic, partition_iid, FederatedDataset};
use pufsim::engine::{
    aggregate, client_opt, client_seed, execute_round, train, ClientUpdate, LocalHyper, RoundPlan, StoredUpdate,
};
use pufsim::metrics::EfficacyMetrics;
use pufsim::nn::{loss_and_grad, predict_accuracy, LabeledBatch, ParameterVector};
use pufsim::unlearn::{
    first_recovery_round, make_pga_reference, not_unlearn, pga_unlearn, puf_regular_round, puf_special_round,
    recover, retrain_baseline, scope_views, PgaParams, RecoveryPlan, RoundContext, Scope, Strategy,
    UnlearnRequest,
};
use pufsim::Error;

fn ctx(round_index: u64, seed: u64) -> RoundContext {
    RoundContext {
        round_index,
        hyper: LocalHyper {
            epochs: 2,
            lr: 0.1,
            batch_size: 3,
        },
        seed,
    }
}

/// The unmodified local updates the unlearning round should consume.
fn updates(fd: &FederatedDataset, w: &ParameterVector, ids: &[usize], c: &RoundContext) -> Vec<ClientUpdate> {
    ids.iter()
        .map(|&i| client_opt(i, fd.client(i).unwrap(), w, &c.hyper, client_seed(c.seed, c.round_index, i)).unwrap())
        .collect()
}

fn set(ids: &[usize]) -> BTreeSet<usize> {
    ids.iter().copied().collect()
}

#[test]
fn special_round_is_negated_target_aggregate() {
    let fd = equal_federation(5, 7, 3, 3, 1);
    let w = random_params(&logistic(3, 3), 0.5, &mut rng(1));
    let c = ctx(4, 9);
    for targets in [&[2usize][..], &[0, 3], &[1, 2, 4]] {
        let ups = updates(&fd, &w, targets, &c);
        let n: u64 = ups.iter().map(|u| u.weight).sum();
        let expected = w.add_scaled(-2.0, &aggregate(&ups, n).unwrap()).unwrap();
        let out = puf_special_round(&w, |i| fd.client(i), &set(targets), 2.0, &c).unwrap();
        assert_eq!(out.model, expected);
        // the shared-n combination, one target at a time
        let mut manual = w.clone();
        for u in &ups {
            manual = manual.add_scaled(-2.0 * u.weight as f64 / n as f64, &u.delta).unwrap();
        }
        assert!(max_abs_diff(&out.model, &manual) <= 1e-12);
    }
}

#[test]
fn regular_round_without_targets_is_a_standard_round() {
    let fd = equal_federation(4, 6, 2, 2, 2);
    let w = random_params(&logistic(2, 2), 0.5, &mut rng(2));
    let c = ctx(1, 3);
    let regular = puf_regular_round(&w, |i| fd.client(i), &set(&[0, 1, 2, 3]), &BTreeSet::new(), 1.0, 20.0, &c)
        .unwrap();
    let standard = execute_round(&w, |i| fd.client(i), &RoundPlan::standard(1, 0..4, 1.0), &c.hyper, 3).unwrap();
    assert_eq!(regular.model, standard.model);
}

#[test]
fn regular_round_matches_formula() {
    let fd = equal_federation(4, 6, 2, 3, 3);
    let w = random_params(&logistic(2, 3), 0.5, &mut rng(3));
    let c = ctx(0, 4);
    let plus = updates(&fd, &w, &[0, 2], &c);
    let minus = updates(&fd, &w, &[1, 3], &c);
    let n = 24;
    let expected = w
        .add_scaled(1.0, &aggregate(&plus, n).unwrap())
        .unwrap()
        .add_scaled(-20.0, &aggregate(&minus, n).unwrap())
        .unwrap();
    let out = puf_regular_round(&w, |i| fd.client(i), &set(&[0, 2]), &set(&[1, 3]), 1.0, 20.0, &c).unwrap();
    assert!(max_abs_diff(&out.model, &expected) <= 1e-12);
    assert_eq!(out.round_total, n);
}

#[test]
fn hand_computed_regular_combination() {
    // two equal clients with deltas [1,0] and [0,1], n = 2
    let schema = vec![pufsim::nn::LayerShape::new("w", vec![2])];
    let pv = |v: Vec<f64>| ParameterVector::new(schema.clone(), v).unwrap();
    let up = |id, v| ClientUpdate {
        client_id: id,
        delta: pv(v),
        weight: 1,
        train_loss: 0.0,
    };
    let plus = aggregate(&[up(0, vec![1.0, 0.0])], 2).unwrap();
    let minus = aggregate(&[up(1, vec![0.0, 1.0])], 2).unwrap();
    let w = pv(vec![0.0, 0.0]);
    let out = w.add_scaled(1.0, &plus).unwrap().add_scaled(-1.0, &minus).unwrap();
    assert_eq!(out.as_slice(), &[0.5, -0.5]);
}

#[test]
fn not_is_an_involution_and_ignores_the_target() {
    let arch = pufsim::nn::ModelArch::Mlp {
        feature_dim: 3,
        hidden_dim: 4,
        num_classes: 2,
    };
    let w = random_params(&arch, 1.0, &mut rng(4));
    for bias in [false, true] {
        let once = not_unlearn(&w, bias).unwrap();
        assert_ne!(once, w);
        assert_eq!(not_unlearn(&once, bias).unwrap(), w);
    }
    let once = not_unlearn(&w, false).unwrap();
    assert_eq!(once.layer("hidden.bias"), w.layer("hidden.bias"));
    assert_eq!(once.layer("output.weight"), w.layer("output.weight"));

    let fd = federation(4, 2, 3, 20, 3.0, 4);
    let original = train(&fd, &arch, &train_config(2, 0.1), 4).unwrap();
    let pick = |t: usize| {
        let req = UnlearnRequest {
            targets: set(&[t]),
            scope: Scope::Client,
            strategy: Strategy::Not,
        };
        let views = scope_views(&req, &fd).unwrap();
        let params = pufsim::unlearn::StrategyParams {
            eta_r: 1.0,
            eta_u: 2.0,
            not_negate_bias: false,
            pga: pga_params(1.0),
        };
        pufsim::unlearn::apply_strategy(Strategy::Not, &original, &views, &original.model, &params, &train_config(2, 0.1), 2, 1)
            .unwrap()
            .model
    };
    assert_eq!(pick(0), pick(3));
}

fn pga_params(ball_radius: f64) -> PgaParams {
    PgaParams {
        ascent_epochs: 1,
        clip_threshold: 1e9,
        ball_radius,
        early_stop_loss: None,
        batch_size: 1000,
        lr: 0.05,
    }
}

#[test]
fn pga_single_step_ascends() {
    let fd = equal_federation(1, 8, 3, 3, 5);
    let w = random_params(&logistic(3, 3), 0.5, &mut rng(5));
    let data = fd.client(0).unwrap();
    let out = pga_unlearn(&w, data, &w, &pga_params(1e9), 1).unwrap();
    let (_, g) = loss_and_grad(&w, data).unwrap();
    assert_eq!(out.steps, 1);
    assert!(max_abs_diff(&out.model, &w.add_scaled(0.05, &g).unwrap()) <= 1e-15);
}

#[test]
fn pga_projects_and_clips() {
    let fd = equal_federation(1, 8, 3, 3, 6);
    let data = fd.client(0).unwrap();
    let w = random_params(&logistic(3, 3), 0.5, &mut rng(6));
    let p = PgaParams {
        ascent_epochs: 5,
        batch_size: 2,
        lr: 10.0,
        ..pga_params(0.3)
    };
    let out = pga_unlearn(&w, data, &w, &p, 1).unwrap();
    assert!(out.model.distance(&w).unwrap() <= 0.3 + 1e-12);

    let zero = pga_unlearn(&w, data, &w, &pga_params(0.0), 1).unwrap();
    assert_eq!(zero.model, w);

    // a clip of 1e-3 bounds the step at lr * 1e-3
    let clipped = PgaParams {
        clip_threshold: 1e-3,
        ..pga_params(1e9)
    };
    let out = pga_unlearn(&w, data, &w, &clipped, 1).unwrap();
    assert!(out.model.distance(&w).unwrap() <= 0.05 * 1e-3 + 1e-15);
}

#[test]
fn pga_early_stop() {
    let fd = equal_federation(1, 8, 3, 3, 7);
    let w = random_params(&logistic(3, 3), 0.5, &mut rng(7));
    let p = PgaParams {
        ascent_epochs: 50,
        batch_size: 2,
        lr: 1.0,
        early_stop_loss: Some(1e-6),
        ..pga_params(1e9)
    };
    let out = pga_unlearn(&w, fd.client(0).unwrap(), &w, &p, 1).unwrap();
    assert!(out.stopped_early);
    assert_eq!(out.steps, 1);
}

#[test]
fn pga_reference_inverts_the_stored_update() {
    let w = random_params(&logistic(2, 2), 1.0, &mut rng(8));
    let delta = random_params(&logistic(2, 2), 1.0, &mut rng(9));
    let stored = |delta: ParameterVector, weight, round_total| StoredUpdate {
        update: ClientUpdate {
            client_id: 0,
            delta,
            weight,
            train_loss: 0.0,
        },
        round_index: 0,
        round_total,
    };
    assert_eq!(make_pga_reference(&w, &stored(w.zeros_like(), 3, 9)).unwrap(), w);
    assert_eq!(make_pga_reference(&w, &stored(delta.clone(), 9, 9)).unwrap(), w.sub(&delta).unwrap());
    let r = make_pga_reference(&w, &stored(delta.clone(), 3, 9)).unwrap();
    assert!(max_abs_diff(&r.add_scaled(3.0 / 9.0, &delta).unwrap(), &w) <= 1e-12);

    let missing = pufsim::unlearn::pga_reference_for(&w, &Default::default(), &set(&[1])).unwrap_err();
    assert!(matches!(missing, Error::MissingStoredUpdate { client: 1 }));
}

#[test]
fn scope_views_split_the_data() {
    let fd = equal_federation(3, 10, 2, 2, 10);
    let req = |scope| UnlearnRequest {
        targets: set(&[1]),
        scope,
        strategy: Strategy::PufSpecial,
    };
    let v = scope_views(&req(Scope::Sample { fraction: 0.5, seed: 3 }), &fd).unwrap();
    let unlearn = v.unlearning_client(1).unwrap();
    assert_eq!(unlearn.len(), 5);
    let mut ids: Vec<u64> = unlearn.ids().iter().chain(v.recovery.client(1).unwrap().ids()).copied().collect();
    ids.sort_unstable();
    assert_eq!(ids, fd.client(1).unwrap().ids());
    assert_eq!(v.recovery_clients, vec![0, 1, 2]);

    let v = scope_views(&req(Scope::Client), &fd).unwrap();
    assert_eq!(v.unlearning_client(1).unwrap(), fd.client(1).unwrap());
    assert_eq!(v.recovery_clients, vec![0, 2]);
    assert_eq!(&v.forget, fd.client(1).unwrap());

    let empty = UnlearnRequest {
        targets: BTreeSet::new(),
        scope: Scope::Client,
        strategy: Strategy::Retrain,
    };
    assert!(scope_views(&empty, &fd).is_err());
}

#[test]
fn retraining_without_a_redundant_client_keeps_accuracy() {
    // client 0 holds a copy of client 1's distribution, so dropping it
    // should not change test accuracy beyond noise
    let mut diffs = Vec::new();
    for seed in 0..5 {
        let (train_set, test) = generate_synthetic(3, 4, 100, 3.0, seed).unwrap();
        let fd = partition_iid(&train_set, &test, 6, seed).unwrap();
        let arch = logistic(4, 3);
        let cfg = train_config(20, 0.1);
        let original = train(&fd, &arch, &cfg, seed).unwrap();
        let req = UnlearnRequest {
            targets: set(&[0]),
            scope: Scope::Client,
            strategy: Strategy::Retrain,
        };
        let views = scope_views(&req, &fd).unwrap();
        let retrained = retrain_baseline(&views, &arch, &cfg, seed).unwrap();
        let a = predict_accuracy(&original.model, fd.test()).unwrap();
        let b = predict_accuracy(&retrained.model, fd.test()).unwrap();
        diffs.push(a - b);
        assert_eq!(retrained, retrain_baseline(&views, &arch, &cfg, seed).unwrap());
    }
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    assert!(mean.abs() <= 0.02, "mean accuracy change {mean}");
}

#[test]
fn recovery_rule_on_hand_curves() {
    assert_eq!(first_recovery_round(&[0.40, 0.55, 0.62], 0.60), Some(2));
    assert_eq!(first_recovery_round(&[0.70], 0.60), Some(0));
    assert_eq!(first_recovery_round(&[0.40, 0.50], 0.60), None);
    assert_eq!(first_recovery_round(&[0.40, 0.60], 0.60), Some(1));
}

/// Drives `recover` with a scripted evaluator so the curve is exact.
fn scripted_recovery(curve: &[f64], target: f64, cap: u64) -> pufsim::unlearn::RecoveryOutcome {
    let fd = equal_federation(2, 4, 2, 2, 11);
    let w = random_params(&logistic(2, 2), 0.5, &mut rng(11));
    let mut i = 0;
    let eval = |_: &ParameterVector| {
        let acc = curve[i.min(curve.len() - 1)];
        i += 1;
        Ok(EfficacyMetrics {
            test_acc: acc,
            forget_acc: 0.0,
            mia_song: 0.5,
            mia_yeom: 0.0,
            song_degenerate: false,
        })
    };
    let plan = RecoveryPlan {
        max_rounds: cap,
        stop_target_acc: target,
        first_round: 10,
        lr_offset: 10,
    };
    recover(pufsim::engine::FedState::new(w), &fd, &[0, 1], &train_config(1, 0.1), &plan, eval, 1).unwrap()
}

#[test]
fn recover_stops_at_first_round_reaching_target() {
    let out = scripted_recovery(&[0.40, 0.55, 0.62], 0.60, 10);
    assert_eq!((out.rounds, out.capped), (2, false));
    assert_eq!(out.curve.len(), 3);
    assert_eq!(out.state.history.records()[0].round_index, 10);

    let out = scripted_recovery(&[0.9], 0.60, 10);
    assert_eq!((out.rounds, out.capped), (0, false));

    let out = scripted_recovery(&[0.1], 0.60, 5);
    assert_eq!((out.rounds, out.capped), (5, true));
    assert_eq!(out.curve.len(), 6);
}

#[test]
fn recover_rejects_zero_cap() {
    let fd = equal_federation(2, 4, 2, 2, 12);
    let w = random_params(&logistic(2, 2), 0.5, &mut rng(12));
    let plan = RecoveryPlan {
        max_rounds: 0,
        stop_target_acc: 0.5,
        first_round: 0,
        lr_offset: 0,
    };
    let eval = |_: &ParameterVector| -> pufsim::Result<EfficacyMetrics> { unreachable!() };
    assert!(recover(pufsim::engine::FedState::new(w), &fd, &[0], &train_config(1, 0.1), &plan, eval, 1).is_err());
}

#[test]
fn special_round_pushes_forget_loss_up() {
    let fd = federation(5, 3, 4, 60, 3.0, 13);
    let arch = logistic(4, 3);
    let original = train(&fd, &arch, &train_config(10, 0.1), 13).unwrap();
    let forget: &LabeledBatch = fd.client(0).unwrap();
    let before = pufsim::metrics::mean_loss(&original.model, forget).unwrap();
    let out = puf_special_round(&original.model, |i| fd.client(i), &set(&[0]), 2.0, &ctx(10, 13)).unwrap();
    let after = pufsim::metrics::mean_loss(&out.model, forget).unwrap();
    assert!(after > before, "{before} -> {after}");
}

mod common;

use common::small_config;
use pufsim::engine::train;
use pufsim::experiment::{
    emit_reports, load_report, run_experiment, run_experiment_with_threads, run_seed, COSTS_HEADER,
    ROUNDS_HEADER,
};

#[test]
fn natural_starts_recovery_from_the_original_model() {
    let cfg = small_config("natural");
    let report = run_seed(&cfg, 3).unwrap();
    let fd = cfg.build_dataset(3).unwrap();
    let original = train(&fd, &report.resolved.arch, &cfg.train_config(), 3).unwrap();
    let at_zero = &report.recovery_curve[0];
    assert_eq!(at_zero.test_acc, pufsim::nn::predict_accuracy(&original.model, fd.test()).unwrap());
    assert_eq!(at_zero.forget_acc, report.original.forget_acc);
    assert_eq!(at_zero.mia_song, report.original.mia_song);
}

#[test]
fn retrain_has_zero_deltas() {
    let report = run_experiment(&small_config("retrain")).unwrap();
    for s in report.successful() {
        let d = s.efficacy.deltas;
        assert_eq!([d.test_acc, d.forget_acc, d.mia_song, d.mia_yeom], [0.0; 4]);
        assert_eq!(s.recovery_rounds, 0);
    }
}

#[test]
fn seeds_are_independent_blocks() {
    let cfg = small_config("puf_special");
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.seeds.len(), 2);
    assert_eq!(report.successful().count(), 2);
    let alone = run_seed(&cfg, 4).unwrap();
    assert_eq!(report.seeds[1].report().unwrap(), &alone);
    assert_eq!(report.seeds[0].seed(), 3);
    assert_eq!(alone.resolved.eta_u, 2.0);
}

#[test]
fn failing_seed_does_not_stop_others() {
    let mut cfg = small_config("pga");
    // PGA needs every target to have trained in the last round; with one
    // sampled client per round client 1 usually did not
    cfg.hyper.participation = pufsim::engine::Participation::Sample { k: 1 };
    cfg.seeds = (0..6).collect();
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.seeds.len(), 6);
    let failed: Vec<_> = report
        .seeds
        .iter()
        .filter_map(|s| match s {
            pufsim::experiment::SeedOutcome::Failed { error, .. } => Some(error.clone()),
            _ => None,
        })
        .collect();
    assert!(!failed.is_empty() && failed.len() < 6, "{failed:?}");
    assert!(failed.iter().all(|e| e.contains("stateful")));
}

#[test]
fn every_strategy_runs() {
    for s in ["puf_regular", "puf_special", "not", "pga", "natural", "retrain"] {
        let report = run_experiment(&small_config(s)).unwrap();
        assert_eq!(report.successful().count(), 2, "{s}: {:?}", report.seeds);
    }
}

#[test]
fn sample_scope_runs() {
    let mut cfg = small_config("puf_special");
    cfg.unlearn.scope = pufsim::experiment::ScopeKind::Sample;
    cfg.unlearn.forget_fraction = Some(0.25);
    cfg.validate().unwrap();
    let r = run_seed(&cfg, 3).unwrap();
    assert!(r.resolved.forget_split_seed.is_some());
    assert_eq!(r.costs.inputs.remaining_clients, 5.0);
}

#[test]
fn reports_are_byte_identical_across_threads_and_reload() {
    let cfg = small_config("puf_regular");
    let a = run_experiment_with_threads(&cfg, 1).unwrap();
    let b = run_experiment_with_threads(&cfg, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (da, db) = (dir.path().join("a"), dir.path().join("b"));
    emit_reports(&a, &da).unwrap();
    emit_reports(&b, &db).unwrap();
    for f in ["summary.json", "rounds.csv", "costs.csv"] {
        assert_eq!(std::fs::read(da.join(f)).unwrap(), std::fs::read(db.join(f)).unwrap(), "{f}");
    }
    // emitting the same report again is byte-identical too
    let before = std::fs::read(da.join("summary.json")).unwrap();
    emit_reports(&a, &da).unwrap();
    assert_eq!(before, std::fs::read(da.join("summary.json")).unwrap());

    assert_eq!(load_report(da.join("summary.json")).unwrap(), a);

    let rounds = std::fs::read_to_string(da.join("rounds.csv")).unwrap();
    assert_eq!(rounds.lines().next().unwrap(), ROUNDS_HEADER);
    let costs = std::fs::read_to_string(da.join("costs.csv")).unwrap();
    assert_eq!(costs.lines().next().unwrap(), COSTS_HEADER);
    for text in [rounds, costs] {
        let width = text.lines().next().unwrap().split(',').count();
        assert!(text.lines().all(|l| l.split(',').count() == width));
    }
}

#[test]
fn unwritable_output_names_the_path() {
    let report = run_experiment(&small_config("natural")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let err = emit_reports(&report, blocker.join("sub")).unwrap_err();
    assert!(err.to_string().contains("file"), "{err}");
}

//! Forget one client with a targets-only round and compare with retraining.

use std::collections::BTreeSet;

use pufsim::data::{generate_synthetic, partition_exclusive_class};
use pufsim::engine::{train, LocalHyper, Participation, TrainConfig};
use pufsim::metrics::Evaluator;
use pufsim::nn::ModelArch;
use pufsim::unlearn::{puf_special_round, retrain_baseline, scope_views, RoundContext, Scope, Strategy, UnlearnRequest};

fn main() -> pufsim::Result<()> {
    let seed = 3;
    let (train_set, test) = generate_synthetic(5, 10, 200, 6.0, seed)?;
    // client 0 is the only holder of class 4
    let fd = partition_exclusive_class(&train_set, &test, 10, 0, 4, seed)?;
    let arch = ModelArch::Logistic {
        feature_dim: 10,
        num_classes: 5,
    };
    let cfg = TrainConfig {
        rounds: 30,
        local: LocalHyper {
            epochs: 1,
            lr: 0.1,
            batch_size: 16,
        },
        lr_decay: 0.998,
        eta_s: 1.0,
        participation: Participation::All,
    };
    let original = train(&fd, &arch, &cfg, seed)?;
    let request = UnlearnRequest {
        targets: BTreeSet::from([0]),
        scope: Scope::Client,
        strategy: Strategy::PufSpecial,
    };
    let views = scope_views(&request, &fd)?;
    let retrained = retrain_baseline(&views, &arch, &cfg, seed)?;

    let ctx = RoundContext {
        round_index: cfg.rounds,
        hyper: cfg.hyper_at(cfg.rounds),
        seed,
    };
    let unlearned = puf_special_round(&original.model, |i| views.unlearning_client(i), &views.targets, 2.0, &ctx)?;

    let eval = Evaluator {
        test: fd.test(),
        forget: &views.forget,
        retain: &views.retain,
        seed,
    };
    let all: Vec<usize> = (0..fd.num_clients()).collect();
    for (name, w, pool) in [
        ("original", &original.model, fd.pooled(&all)?),
        ("unlearned", &unlearned.model, views.retain.clone()),
        ("retrained", &retrained.model, views.retain.clone()),
    ] {
        let m = eval.evaluate(w, &pool)?;
        println!(
            "{name:<10} test {:.3}  forget {:.3}  mia-song {:.3}  mia-yeom {:.3}",
            m.test_acc, m.forget_acc, m.mia_song, m.mia_yeom
        );
    }
    Ok(())
}

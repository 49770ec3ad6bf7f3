//! Forget a random 20% of one client's samples; the client stays in the
//! federation with the rest.

use std::collections::BTreeSet;

use pufsim::data::{generate_synthetic, partition_iid};
use pufsim::engine::{train, LocalHyper, Participation, TrainConfig};
use pufsim::metrics::{forget_accuracy, Evaluator};
use pufsim::nn::ModelArch;
use pufsim::unlearn::{
    apply_strategy, recover, retrain_baseline, scope_views, PgaParams, RecoveryPlan, Scope, Strategy,
    StrategyParams, UnlearnRequest,
};

fn main() -> pufsim::Result<()> {
    let seed = 5;
    let (train_set, test) = generate_synthetic(3, 6, 200, 3.0, seed)?;
    let fd = partition_iid(&train_set, &test, 6, seed)?;
    let arch = ModelArch::Logistic {
        feature_dim: 6,
        num_classes: 3,
    };
    let cfg = TrainConfig {
        rounds: 15,
        local: LocalHyper {
            epochs: 2,
            lr: 0.1,
            batch_size: 16,
        },
        lr_decay: 0.998,
        eta_s: 1.0,
        participation: Participation::All,
    };
    let original = train(&fd, &arch, &cfg, seed)?;
    let request = UnlearnRequest {
        targets: BTreeSet::from([1]),
        scope: Scope::Sample { fraction: 0.2, seed: 99 },
        strategy: Strategy::PufSpecial,
    };
    let views = scope_views(&request, &fd)?;
    println!(
        "client 1: {} samples to forget, {} kept",
        views.forget.len(),
        views.recovery.client(1)?.len()
    );
    let retrained = retrain_baseline(&views, &arch, &cfg, seed)?;
    let params = StrategyParams {
        eta_r: 1.0,
        eta_u: 2.0,
        not_negate_bias: false,
        pga: PgaParams {
            ascent_epochs: 5,
            clip_threshold: 5.0,
            ball_radius: 1.0,
            early_stop_loss: None,
            batch_size: 16,
            lr: 0.1,
        },
    };
    let out = apply_strategy(Strategy::PufSpecial, &original, &views, &retrained.model, &params, &cfg, cfg.rounds, seed)?;
    let eval = Evaluator {
        test: fd.test(),
        forget: &views.forget,
        retain: &views.retain,
        seed,
    };
    let target = eval.evaluate(&retrained.model, &views.retain)?.test_acc;
    let plan = RecoveryPlan {
        max_rounds: 20,
        stop_target_acc: target,
        first_round: cfg.rounds + 1,
        lr_offset: cfg.rounds + 1,
    };
    let rec = recover(
        pufsim::engine::FedState::new(out.model),
        &views.recovery,
        &views.recovery_clients,
        &cfg,
        &plan,
        |w| eval.evaluate(w, &views.retain),
        seed,
    )?;
    println!("forget accuracy: original {:.3}", forget_accuracy(&original.model, &views.forget)?);
    for (r, m) in rec.curve.iter().enumerate() {
        println!("recovery round {r}: test {:.3}  forget {:.3}", m.test_acc, m.forget_acc);
    }
    println!(
        "retrained: forget {:.3}; recovered after {} rounds",
        forget_accuracy(&retrained.model, &views.forget)?,
        rec.rounds
    );
    Ok(())
}

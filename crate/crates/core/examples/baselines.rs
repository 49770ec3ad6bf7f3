//! Every strategy on the same trained federation, scored against retraining.

use std::collections::BTreeSet;

use pufsim::data::{generate_synthetic, partition_exclusive_class};
use pufsim::engine::{train, LocalHyper, Participation, TrainConfig};
use pufsim::metrics::{delta_report, Evaluator};
use pufsim::nn::ModelArch;
use pufsim::unlearn::{apply_strategy, retrain_baseline, scope_views, PgaParams, Scope, Strategy, StrategyParams, UnlearnRequest};

fn main() -> pufsim::Result<()> {
    let seed = 2;
    let (train_set, test) = generate_synthetic(5, 10, 200, 6.0, seed)?;
    let fd = partition_exclusive_class(&train_set, &test, 10, 0, 4, seed)?;
    let arch = ModelArch::Logistic {
        feature_dim: 10,
        num_classes: 5,
    };
    let cfg = TrainConfig {
        rounds: 30,
        local: LocalHyper {
            epochs: 1,
            lr: 0.05,
            batch_size: 16,
        },
        lr_decay: 0.998,
        eta_s: 1.0,
        participation: Participation::All,
    };
    let original = train(&fd, &arch, &cfg, seed)?;
    let views = scope_views(
        &UnlearnRequest {
            targets: BTreeSet::from([0]),
            scope: Scope::Client,
            strategy: Strategy::Retrain,
        },
        &fd,
    )?;
    let retrained = retrain_baseline(&views, &arch, &cfg, seed)?;
    let eval = Evaluator {
        test: fd.test(),
        forget: &views.forget,
        retain: &views.retain,
        seed,
    };
    let reference = eval.evaluate(&retrained.model, &views.retain)?;

    println!("{:<12} {:>8} {:>8} {:>8} {:>8}", "strategy", "dTest", "dForget", "dSong", "dYeom");
    for (strategy, eta_u) in [
        (Strategy::Natural, 0.0),
        (Strategy::Not, 0.0),
        (Strategy::Pga, 0.0),
        (Strategy::PufSpecial, 2.0),
        (Strategy::PufRegular, 20.0),
        (Strategy::Retrain, 0.0),
    ] {
        let params = StrategyParams {
            eta_r: 1.0,
            eta_u,
            not_negate_bias: false,
            pga: PgaParams {
                ascent_epochs: 5,
                clip_threshold: 5.0,
                ball_radius: 1.0,
                early_stop_loss: Some(9.0 * 5f64.ln() / 100f64.ln()),
                batch_size: 16,
                lr: 0.05,
            },
        };
        let out = apply_strategy(strategy, &original, &views, &retrained.model, &params, &cfg, cfg.rounds, seed)?;
        let d = delta_report(&eval.evaluate(&out.model, &views.retain)?, &reference).deltas;
        println!(
            "{:<12} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
            strategy.name(),
            d.test_acc,
            d.forget_acc,
            d.mia_song,
            d.mia_yeom
        );
    }
    Ok(())
}

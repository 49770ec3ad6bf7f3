//! Two clients leave during a regular round; the others keep training.

use std::collections::BTreeSet;

use pufsim::data::{generate_synthetic, partition_lda};
use pufsim::engine::{train, LocalHyper, Participation, TrainConfig};
use pufsim::metrics::{forget_accuracy, mean_loss};
use pufsim::nn::{predict_accuracy, ModelArch};
use pufsim::unlearn::{puf_regular_round, scope_views, RoundContext, Scope, Strategy, UnlearnRequest};

fn main() -> pufsim::Result<()> {
    let seed = 11;
    let (train_set, test) = generate_synthetic(6, 8, 120, 4.0, seed)?;
    let fd = partition_lda(&train_set, &test, 8, 0.3, 2, seed)?;
    let arch = ModelArch::Mlp {
        feature_dim: 8,
        hidden_dim: 16,
        num_classes: 6,
    };
    let cfg = TrainConfig {
        rounds: 25,
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
        targets: BTreeSet::from([2, 5]),
        scope: Scope::Client,
        strategy: Strategy::PufRegular,
    };
    let views = scope_views(&request, &fd)?;
    let s_plus: BTreeSet<usize> = views.recovery_clients.iter().copied().collect();
    let ctx = RoundContext {
        round_index: cfg.rounds,
        hyper: cfg.hyper_at(cfg.rounds),
        seed,
    };
    for eta_u in [0.0, 5.0, 20.0] {
        let out = puf_regular_round(
            &original.model,
            |i| views.unlearning_client(i),
            &s_plus,
            &views.targets,
            1.0,
            eta_u,
            &ctx,
        )?;
        println!(
            "eta_u {eta_u:>4}: test {:.3}  forget acc {:.3}  forget loss {:.3}  (n = {})",
            predict_accuracy(&out.model, fd.test())?,
            forget_accuracy(&out.model, &views.forget)?,
            mean_loss(&out.model, &views.forget)?,
            out.round_total
        );
    }
    Ok(())
}

//! Train a logistic model with FedAvg on an IID synthetic federation.

use pufsim::data::{generate_synthetic, partition_iid};
use pufsim::engine::{train, LocalHyper, Participation, TrainConfig};
use pufsim::nn::{predict_accuracy, ModelArch};

fn main() -> pufsim::Result<()> {
    let seed = 7;
    let (train_set, test) = generate_synthetic(4, 8, 150, 4.0, seed)?;
    let fd = partition_iid(&train_set, &test, 10, seed)?;
    let arch = ModelArch::Logistic {
        feature_dim: 8,
        num_classes: 4,
    };
    let cfg = TrainConfig {
        rounds: 20,
        local: LocalHyper {
            epochs: 1,
            lr: 0.1,
            batch_size: 16,
        },
        lr_decay: 0.998,
        eta_s: 1.0,
        participation: Participation::All,
    };
    let state = train(&fd, &arch, &cfg, seed)?;
    for r in state.history.records().iter().step_by(4) {
        println!(
            "round {:>2}  train loss {:.4}  test acc {:.3}",
            r.round_index,
            r.mean_train_loss,
            r.test_acc.unwrap_or(f64::NAN)
        );
    }
    println!("final test accuracy {:.3}", predict_accuracy(&state.model, fd.test())?);
    Ok(())
}

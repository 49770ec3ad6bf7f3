//! Both membership attacks on a model that did and one that did not see the
//! attacked client.

use pufsim::data::{generate_synthetic, partition_iid};
use pufsim::engine::{train, train_with_clients, LocalHyper, Participation, TrainConfig};
use pufsim::metrics::{mean_loss, mia_song, mia_yeom};
use pufsim::nn::ModelArch;

fn main() -> pufsim::Result<()> {
    let seed = 13;
    // few samples and many features so the model can memorize
    let (train_set, test) = generate_synthetic(4, 60, 25, 2.0, seed)?;
    let fd = partition_iid(&train_set, &test, 4, seed)?;
    let arch = ModelArch::Logistic {
        feature_dim: 60,
        num_classes: 4,
    };
    let cfg = TrainConfig {
        rounds: 100,
        local: LocalHyper {
            epochs: 2,
            lr: 0.05,
            batch_size: 8,
        },
        lr_decay: 1.0,
        eta_s: 1.0,
        participation: Participation::All,
    };
    let forget = fd.client(0)?;
    let others = [1, 2, 3];
    let retain = fd.pooled(&others)?;
    let all = fd.pooled(&[0, 1, 2, 3])?;

    let with = train(&fd, &arch, &cfg, seed)?;
    let without = train_with_clients(&fd, &arch, &cfg, &others, seed)?;
    for (name, w, pool) in [("with client 0", &with.model, &all), ("without client 0", &without.model, &retain)] {
        let song = mia_song(w, &retain, fd.test(), forget, seed)?;
        let yeom = mia_yeom(w, mean_loss(w, pool)?, forget)?;
        println!(
            "{name:<17} song {:.3} (threshold {:.3}, attack acc {:.3})  yeom {:.3}",
            song.success_rate, song.fit.threshold, song.fit.balanced_accuracy, yeom
        );
    }
    Ok(())
}

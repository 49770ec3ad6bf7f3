//! Run a config file end to end and write the reports.
//!
//! cargo run --example experiment_from_config -- configs/desk.toml out/desk

use pufsim::experiment::{emit_reports, load_config, run_experiment};

fn main() -> pufsim::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/desk.toml").into());
    let cfg = load_config(&config)?;
    let out = args.next().map(Into::into).unwrap_or_else(|| cfg.output_dir.clone());

    let report = run_experiment(&cfg)?;
    if let Some(s) = &report.summary {
        println!(
            "dTest {:.4}±{:.4}  dForget {:.4}±{:.4}  dSong {:.4}±{:.4}  dYeom {:.4}±{:.4}",
            s.test_acc.mean, s.test_acc.std, s.forget_acc.mean, s.forget_acc.std,
            s.mia_song.mean, s.mia_song.std, s.mia_yeom.mean, s.mia_yeom.std
        );
    }
    for path in emit_reports(&report, &out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

//! Label skew of Dirichlet partitions at several concentrations.

use pufsim::data::{generate_synthetic, label_proportions, partition_lda};

fn main() -> pufsim::Result<()> {
    let (train, test) = generate_synthetic(10, 2, 200, 1.0, 1)?;
    for alpha in [0.1, 1.0, 100.0] {
        let fd = partition_lda(&train, &test, 5, alpha, 2, 1)?;
        println!("alpha = {alpha}");
        for (c, p) in label_proportions(&fd).iter().enumerate() {
            let bars: String = p.iter().map(|&x| [' ', '.', ':', '-', '=', '#'][(x * 5.0).round() as usize]).collect();
            println!("  client {c} ({:>4} samples) |{bars}|", fd.client(c)?.len());
        }
    }
    Ok(())
}

//! Save a partitioned dataset, read it back and inspect the header.

use pufsim::data::{generate_synthetic, load_dataset, partition_lda, save_dataset, write_dataset};

fn main() -> pufsim::Result<()> {
    let (train, test) = generate_synthetic(3, 5, 50, 2.0, 4)?;
    let fd = partition_lda(&train, &test, 4, 0.5, 2, 4)?;
    let bytes = write_dataset(&fd);
    println!("{} bytes, magic {:?}", bytes.len(), String::from_utf8_lossy(&bytes[..7]));

    let path = std::env::temp_dir().join("pufsim-example.pfd");
    save_dataset(&fd, &path)?;
    let back = load_dataset(&path)?;
    assert_eq!(back, fd);
    for (i, c) in back.clients().iter().enumerate() {
        println!("client {i}: {} rows, first ids {:?}", c.len(), &c.ids()[..3.min(c.len())]);
    }

    let truncated = &bytes[..bytes.len() - 5];
    match pufsim::data::read_dataset(truncated) {
        Err(e) => println!("truncated file: {e}"),
        Ok(_) => unreachable!(),
    }
    std::fs::remove_file(&path).map_err(|e| pufsim::Error::Io { path: path.clone(), source: e })?;
    Ok(())
}

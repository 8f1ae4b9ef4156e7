// Write a PTE embedding store, read it back and mix its layers.

use std::error::Error;

use ndarray::array;
use probekit::embedstore::{self, EmbeddingRecord, MixWeights};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let layers = [
        array![[1.0, 0.0, 0.5], [0.0, 1.0, 0.5]],
        array![[0.0, 2.0, 1.0], [2.0, 0.0, 1.0]],
    ];
    let first = EmbeddingRecord::from_layers("s0", &layers)?;
    let second = EmbeddingRecord::new("s1", 2, 1, 3, vec![0.25, -1.0, 3.0, 1.0, 1.0, 1.0])?;

    let dir = std::env::temp_dir().join(format!("probekit-store-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("toy.pte");
    embedstore::write_store(&[first, second], &path)?;
    let store = embedstore::read_store(&path)?;
    for r in store.records() {
        println!("{}: K={} L={} D={}", r.id(), r.num_layers(), r.seq_len(), r.dim());
    }

    let mut weights = MixWeights::new(2);
    weights.raw[1] = 1.0;
    weights.log_gamma = 0.5f64.ln();
    println!("mix weights {:.3}, gamma {:.2}", weights.normalized(), weights.gamma());
    println!("mixed s0:\n{:.3}", embedstore::mix(store.require("s0")?, &weights)?);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}

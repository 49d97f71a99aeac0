//! Trains the network with the clonal selection layer on a small MNIST
//! subset and compares it with plain training from the same start.
//!
//! Usage: cargo run --release --example train_cnn_ais [MNIST_DIR] [PER_CLASS]

use cnn_ais::harness::{evaluation_set, train_variant, ExperimentConfig, Variant};
use cnn_ais::mnist::{stratified_subset, Dataset, Split};

fn main() -> cnn_ais::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| "data/mnist".into());
    let per_class: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);

    let train_full = Dataset::load(dir.as_ref(), Split::Train)?;
    let test_full = Dataset::load(dir.as_ref(), Split::Test)?;
    let cfg = ExperimentConfig::default();
    let train = stratified_subset(&train_full, per_class, 1)?;
    let test = evaluation_set(&test_full, cfg.test_per_class)?;
    println!("{} training images, {} test images", train.len(), test.len());

    for variant in [Variant::Cnn, Variant::CnnAis] {
        let run = train_variant(&cfg, variant, &train, &test, per_class, 1, 10, true)?;
        let curve: Vec<String> = run.rows.iter().map(|r| format!("{:.3}", r.test_error)).collect();
        println!("{variant:>8} test error by epoch: {}", curve.join(" "));
        if let Some(layer) = run.layer {
            for pool in layer.pools().iter() {
                println!("    class {} pool holds {} antibodies", pool.class_label(), pool.len());
            }
        }
    }
    Ok(())
}

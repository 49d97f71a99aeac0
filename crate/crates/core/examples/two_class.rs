//! Two-digit recognition through count and avidity scoring, then the
//! unseen-class path. Writes its outputs to out/two_class_example.
//!
//! Usage: cargo run --release --example two_class [MNIST_DIR]

use cnn_ais::harness::{run_two_class_application, load_mnist, ExperimentConfig};

fn main() -> cnn_ais::Result<()> {
    let mut cfg = ExperimentConfig::default();
    if let Some(dir) = std::env::args().nth(1) {
        cfg.data_dir = dir.into();
    }
    let (train, test) = load_mnist(&cfg)?;
    let report = run_two_class_application(&cfg, &train, &test)?;
    print!("{}", report.to_text());
    let out = std::path::Path::new("out/two_class_example");
    report.write(out)?;
    println!("pools, decisions and report written to {}", out.display());
    Ok(())
}

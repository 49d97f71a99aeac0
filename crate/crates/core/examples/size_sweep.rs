//! A reduced training-size sweep: both variants, two sizes, one seed.
//! Writes CSV and SVG to out/size_sweep_example.
//!
//! Usage: cargo run --release --example size_sweep [MNIST_DIR]

use cnn_ais::harness::{emit_csv, emit_svg_lineplot, load_mnist, run_size_sweep, ExperimentConfig, XAxis};

fn main() -> cnn_ais::Result<()> {
    let mut cfg = ExperimentConfig {
        sizes: vec![10, 25],
        seeds: vec![1],
        ..ExperimentConfig::default()
    };
    cfg.train.epochs = 8;
    if let Some(dir) = std::env::args().nth(1) {
        cfg.data_dir = dir.into();
    }
    let (train, test) = load_mnist(&cfg)?;
    let rows = run_size_sweep(&cfg, &train, &test)?;
    for r in &rows {
        println!("{:>8} {:>4}/class  test error {:.3}", r.variant, r.per_class_size, r.test_error);
    }
    let out = std::path::Path::new("out/size_sweep_example");
    emit_csv(&rows, &out.join("size_sweep.csv"))?;
    emit_svg_lineplot(&rows, XAxis::PerClassSize, &out.join("size_sweep.svg"))?;
    println!("wrote {}", out.display());
    Ok(())
}

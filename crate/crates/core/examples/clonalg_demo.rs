//! The reference clonal selection loop learning an 8x8 bipolar glyph.

use cnn_ais::harness::{clonalg_demo_pattern, run_clonalg_demo, ExperimentConfig};
use cnn_ais::tensor::Tensor;

fn draw(v: &Tensor) {
    for r in 0..8 {
        let line: String = (0..8).map(|c| if v.data()[r * 8 + c] > 0.0 { '#' } else { '.' }).collect();
        println!("  {line}");
    }
}

fn main() -> cnn_ais::Result<()> {
    let cfg = ExperimentConfig::default();
    let out = run_clonalg_demo(&cfg, 1)?;
    println!("target");
    draw(&clonalg_demo_pattern());
    println!("initial best affinity {:.4}", out.initial_best);
    for g in [1, 10, 50, 100, out.best_history.len()] {
        println!("generation {g:>3}: {:.4}", out.best_history[g - 1]);
    }
    let best = &out.memories[0].members()[0];
    println!("best memory (sign), affinity {:.4}", best.affinity_score);
    draw(&best.feature);
    Ok(())
}

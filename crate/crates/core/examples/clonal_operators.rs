//! How affinity drives clone counts and mutation strength.

use cnn_ais::clonal::{affinity, clone_count, crossover, mutate, mutation_rate, CloneConfig};
use cnn_ais::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cnn_ais::Result<()> {
    let cfg = CloneConfig::default();
    println!("eta {} alpha {} tau {}", cfg.eta, cfg.alpha, cfg.tau);
    println!("{:>8} {:>7} {:>9}", "affinity", "clones", "rate");
    for step in 0..=10 {
        let a = step as f64 / 10.0;
        println!(
            "{a:>8.1} {:>7} {:>9.4}",
            clone_count(a, cfg.eta, cfg.tau),
            mutation_rate(a, cfg.alpha, cfg.rate_cap)
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let parent = Tensor::vector(vec![1.0, -0.5, 0.25, 0.8, -1.0, 0.0]);
    let other = Tensor::vector(vec![-1.0, 0.5, 0.0, 0.8, 1.0, 0.3]);
    println!("\naffinity(parent, other) = {:.4}", affinity(&parent, &other)?);
    for rate in [0.1, 0.5, 1.0] {
        let m = mutate(&parent, rate, 1.0, &mut rng);
        println!("mutated at rate {rate}: affinity to parent {:.4}", affinity(&m, &parent)?);
    }
    let child = crossover(&parent, &other, &mut rng)?;
    println!("crossover child {:?}", child.data());
    Ok(())
}

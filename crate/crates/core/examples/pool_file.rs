//! Memory pools outside of training: build them from feature vectors, save
//! and reload them, classify, and open a new class when nothing matches.

use cnn_ais::classifier::{classify, decisions_to_csv, ClassifierConfig};
use cnn_ais::clonal::{ClonalSelection, CloneConfig, PoolSet};
use cnn_ais::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn around(center: &[f64], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::vector(center.iter().map(|c| c + rng.random_range(-0.2..0.2)).collect())
}

fn main() -> cnn_ais::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let centers = [[1.0, 1.0, -1.0, -1.0], [-1.0, 1.0, 1.0, -1.0]];
    let mut layer = ClonalSelection::new(CloneConfig {
        memory_capacity: 12,
        ..CloneConfig::default()
    })?;
    for _ in 0..3 {
        let labels = [0, 0, 1, 1];
        let feats: Vec<Tensor> = labels.iter().map(|&l| around(&centers[l], &mut rng)).collect();
        let clones = layer.absorb(&feats, &labels)?;
        println!("batch: {} clones accepted", clones.len());
    }
    let pools = layer.into_pools();

    let path = std::env::temp_dir().join("cnn_ais_example_pools.txt");
    pools.save(&path)?;
    let pools = PoolSet::load(&path)?;
    println!("saved and reloaded {} pools from {}", pools.len(), path.display());

    let cfg = ClassifierConfig::default();
    let probes = [around(&centers[0], &mut rng), around(&centers[1], &mut rng)];
    let decisions: Vec<_> = probes.iter().map(|p| classify(p, &pools, &cfg)).collect::<Result<_, _>>()?;
    let ids = ["probe-a", "probe-b"];
    print!("{}", decisions_to_csv(ids.iter().copied().zip(&decisions)));

    // A pattern unlike either class, under a strict match threshold.
    let strict = ClassifierConfig {
        tau_match: 0.95,
        ..cfg
    };
    let stranger = Tensor::vector(vec![1.0, -1.0, 1.0, 1.0]);
    let mut pools = pools;
    let d = classify(&stranger, &pools, &strict)?;
    println!("stranger matched: {:?}", d.predicted);
    if d.is_no_match() {
        let clone_cfg = CloneConfig {
            memory_capacity: 12,
            bootstrap_rate: 0.5,
            ..CloneConfig::default()
        };
        pools.init_new_class(&stranger, 2, &clone_cfg, &mut rng)?;
        println!("after opening class 2: {:?}", classify(&stranger, &pools, &strict)?.predicted);
    }
    Ok(())
}

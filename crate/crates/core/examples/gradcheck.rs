//! Analytic gradients of the full stack, including the clone path, checked
//! against central finite differences.

use cnn_ais::harness::gradcheck::{check_instance, compact_architecture, GradPath};
use cnn_ais::nn::Architecture;

fn main() -> cnn_ais::Result<()> {
    for (seed, arch, per_tensor) in [
        (1, compact_architecture(), None),
        (2, compact_architecture(), None),
        (3, Architecture::default(), Some(32)),
    ] {
        for path in [GradPath::Backward, GradPath::Clone] {
            let r = check_instance(seed as usize, seed, arch, path, per_tensor)?;
            println!(
                "seed {seed} {:>8} {:>5} coords ({} skipped at pool ties)  max rel error {:.2e}",
                path.name(),
                r.checked,
                r.skipped_ties,
                r.max_rel_error
            );
        }
    }
    Ok(())
}

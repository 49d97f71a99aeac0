use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{
    backward, backward_from_feature, cross_entropy, forward_features, forward_output, init_params, Architecture,
    Gradients, LayerStack,
};
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;

/// Which gradient routine an instance exercised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradPath {
    Backward,
    Clone,
}

impl GradPath {
    pub fn name(self) -> &'static str {
        match self {
            GradPath::Backward => "backward",
            GradPath::Clone => "clone",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckRecord {
    pub instance: usize,
    pub seed: u64,
    pub architecture: Architecture,
    pub path: GradPath,
    pub checked: usize,
    /// Coordinates whose perturbation moved a pooling argmax.
    pub skipped_ties: usize,
    pub max_rel_error: f64,
}

/// `|a − b| / max(|a|, |b|, 1e-6)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// A small stack that keeps exhaustive checks cheap.
pub fn compact_architecture() -> Architecture {
    Architecture {
        image_rows: 12,
        image_cols: 12,
        kernel_size: 3,
        feature_maps: 3,
        feature_dim: 8,
        classes: 4,
    }
}

fn loss_and_ties(
    params: &LayerStack,
    image: &Tensor,
    offset: Option<&Tensor>,
    label: usize,
) -> Result<(f64, Vec<crate::tensor::PoolIndex>)> {
    let (mut feature, trace) = forward_features(params, image)?;
    if let Some(o) = offset {
        feature.add_assign(o)?;
    }
    let probs = forward_output(params, &feature)?;
    Ok((cross_entropy(&probs, label), trace.pool_index))
}

/// Compares analytic gradients to central differences for one random image
/// and label. With `per_tensor = None` every coordinate is checked, otherwise
/// that many random coordinates per parameter tensor. For the clone path the
/// loss is taken at `feature(θ) + offset` for a fixed random offset.
pub fn check_instance(
    instance: usize,
    seed: u64,
    arch: Architecture,
    path: GradPath,
    per_tensor: Option<usize>,
) -> Result<GradCheckRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_params(rng.random(), arch)?;
    // Nonzero biases so every bias path carries signal.
    for t in [&mut params.conv_bias, &mut params.fc1_bias, &mut params.out_bias] {
        for v in t.data_mut() {
            *v = rng.random_range(-0.1..0.1);
        }
    }
    let image = Tensor::from_fn(&[arch.image_rows, arch.image_cols], |_| rng.random_range(0.0..1.0));
    let label = rng.random_range(0..arch.classes);
    let offset = match path {
        GradPath::Backward => None,
        GradPath::Clone => Some(Tensor::from_fn(&[arch.feature_dim], |_| rng.random_range(-0.3..0.3))),
    };

    let (feature, trace) = forward_features(&params, &image)?;
    let analytic: Gradients = match &offset {
        None => backward(&params, &trace, &forward_output(&params, &feature)?, label)?,
        Some(o) => backward_from_feature(&params, &trace, &feature.add(o)?, label)?,
    };

    let mut checked = 0;
    let mut skipped_ties = 0;
    let mut max_rel_error: f64 = 0.0;
    for t in 0..6 {
        let len = params.tensors()[t].len();
        let coords: Vec<usize> = match per_tensor {
            None => (0..len).collect(),
            Some(n) => (0..n.min(len)).map(|_| rng.random_range(0..len)).collect(),
        };
        for k in coords {
            let original = params.tensors()[t].data()[k];
            params.tensors_mut()[t].data_mut()[k] = original + FD_STEP;
            let (up, ties_up) = loss_and_ties(&params, &image, offset.as_ref(), label)?;
            params.tensors_mut()[t].data_mut()[k] = original - FD_STEP;
            let (down, ties_down) = loss_and_ties(&params, &image, offset.as_ref(), label)?;
            params.tensors_mut()[t].data_mut()[k] = original;
            if ties_up != ties_down {
                skipped_ties += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic.tensors()[t].data()[k];
            max_rel_error = max_rel_error.max(relative_error(a, numeric));
            checked += 1;
        }
    }
    Ok(GradCheckRecord {
        instance,
        seed,
        architecture: arch,
        path,
        checked,
        skipped_ties,
        max_rel_error,
    })
}

/// `instances` seeded checks alternating between the full-size stack
/// (sampled coordinates) and the compact stack (every coordinate), each on
/// both gradient paths.
pub fn run_gradcheck(instances: usize, base_seed: u64) -> Result<Vec<GradCheckRecord>> {
    let mut out = Vec::with_capacity(instances * 2);
    for i in 0..instances {
        let seed = crate::derive_seed(base_seed, &[i as u64]);
        let (arch, per_tensor) = if i % 2 == 0 {
            (Architecture::default(), Some(24))
        } else {
            (compact_architecture(), None)
        };
        for path in [GradPath::Backward, GradPath::Clone] {
            out.push(check_instance(i, seed, arch, path, per_tensor)?);
        }
    }
    Ok(out)
}

pub fn gradcheck_csv(records: &[GradCheckRecord]) -> String {
    let mut s = String::from("instance,seed,architecture,path,checked,skipped_ties,max_rel_error\n");
    for r in records {
        let a = r.architecture;
        s.push_str(&format!(
            "{},{},{}x{}k{}f{}d{}c{},{},{},{},{:e}\n",
            r.instance,
            r.seed,
            a.image_rows,
            a.image_cols,
            a.kernel_size,
            a.feature_maps,
            a.feature_dim,
            a.classes,
            r.path.name(),
            r.checked,
            r.skipped_ties,
            r.max_rel_error
        ));
    }
    s
}

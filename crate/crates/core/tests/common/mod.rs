//! Shared helpers for integration tests: data location and brute-force
//! reference implementations that share no code with the library kernels.
#![allow(dead_code)]

use std::path::PathBuf;

use cnn_ais::mnist::{Dataset, Split};
use cnn_ais::nn::{Gradients, LayerStack};
use cnn_ais::tensor::Tensor;

pub const FETCH_HINT: &str = "MNIST not found. Run scripts/fetch_mnist.sh from the workspace root, \
     or point CNN_AIS_MNIST_DIR at a directory holding the four IDX files.";

/// `$CNN_AIS_MNIST_DIR`, else `<workspace>/data/mnist`.
pub fn mnist_dir() -> PathBuf {
    match std::env::var_os("CNN_AIS_MNIST_DIR") {
        Some(dir) => PathBuf::from(dir),
        None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"),
    }
}

pub fn mnist_available() -> bool {
    let dir = mnist_dir();
    [
        "train-images-idx3-ubyte",
        "train-labels-idx1-ubyte",
        "t10k-images-idx3-ubyte",
        "t10k-labels-idx1-ubyte",
    ]
    .iter()
    .all(|f| dir.join(f).is_file())
}

/// Both splits; panics with fetch instructions when the files are missing.
pub fn load_mnist() -> (Dataset, Dataset) {
    assert!(mnist_available(), "{FETCH_HINT} (looked in {})", mnist_dir().display());
    let dir = mnist_dir();
    (
        Dataset::load(&dir, Split::Train).expect("train split"),
        Dataset::load(&dir, Split::Test).expect("test split"),
    )
}

// ---- brute-force kernels on raw row-major slices ----

pub fn oracle_conv(input: &[f64], h: usize, w: usize, kernel: &[f64], kh: usize, kw: usize) -> Vec<f64> {
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut s = 0.0;
            for i in 0..kh {
                for j in 0..kw {
                    s += input[(y + i) * w + (x + j)] * kernel[i * kw + j];
                }
            }
            out[y * ow + x] = s;
        }
    }
    out
}

/// Max of each 2×2 block and the flat index it came from (first maximum in
/// row-major block order).
pub fn oracle_pool(input: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let mut vals = Vec::new();
    let mut idx = Vec::new();
    for y in (0..h).step_by(2) {
        for x in (0..w).step_by(2) {
            let cands = [y * w + x, y * w + x + 1, (y + 1) * w + x, (y + 1) * w + x + 1];
            let mut best = cands[0];
            for &c in &cands[1..] {
                if input[c] > input[best] {
                    best = c;
                }
            }
            vals.push(input[best]);
            idx.push(best);
        }
    }
    (vals, idx)
}

pub fn oracle_dense(w: &[f64], rows: usize, cols: usize, b: &[f64], x: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| {
            let mut s = 0.0;
            for c in 0..cols {
                s += w[r * cols + c] * x[c];
            }
            s + b[r]
        })
        .collect()
}

fn stanh(x: f64) -> f64 {
    1.7159 * (2.0 * x / 3.0).tanh()
}

/// Independent forward pass of the whole stack. Returns the feature vector,
/// the cross-entropy loss at `feature + offset`, and the pooling argmax
/// pattern (used to detect perturbations that cross a pooling tie).
pub fn oracle_forward(
    p: &LayerStack,
    image: &Tensor,
    offset: Option<&[f64]>,
    label: usize,
) -> (Vec<f64>, f64, Vec<usize>) {
    let arch = p.architecture();
    let (h, w, k) = (arch.image_rows, arch.image_cols, arch.kernel_size);
    let (ch, cw) = (h - k + 1, w - k + 1);
    let mut pooled = Vec::new();
    let mut pattern = Vec::new();
    for m in 0..arch.feature_maps {
        let kern = &p.conv_kernels.data()[m * k * k..(m + 1) * k * k];
        let b = p.conv_bias.data()[m];
        let act: Vec<f64> = oracle_conv(image.data(), h, w, kern, k, k)
            .into_iter()
            .map(|v| stanh(v + b))
            .collect();
        let (v, i) = oracle_pool(&act, ch, cw);
        pooled.extend(v);
        pattern.extend(i);
    }
    let d = arch.feature_dim;
    let feature: Vec<f64> = oracle_dense(p.fc1_weights.data(), d, pooled.len(), p.fc1_bias.data(), &pooled)
        .into_iter()
        .map(stanh)
        .collect();
    let shifted: Vec<f64> = match offset {
        Some(o) => feature.iter().zip(o).map(|(a, b)| a + b).collect(),
        None => feature.clone(),
    };
    let logits = oracle_dense(p.out_weights.data(), arch.classes, d, p.out_bias.data(), &shifted);
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    (feature, log_z - logits[label], pattern)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct FdOutcome {
    pub max_rel: f64,
    pub checked: usize,
    pub skipped_ties: usize,
}

/// Central differences (step 1e-5) of the oracle loss against `analytic`
/// at the listed `(tensor, index)` coordinates. Tensor order: conv kernels,
/// conv bias, fc1 weights, fc1 bias, output weights, output bias.
pub fn fd_check(
    params: &LayerStack,
    image: &Tensor,
    offset: Option<&[f64]>,
    label: usize,
    analytic: &Gradients,
    coords: &[(usize, usize)],
) -> FdOutcome {
    const H: f64 = 1e-5;
    let mut p = params.clone();
    let mut out = FdOutcome::default();
    for &(t, k) in coords {
        let orig = p.tensors()[t].data()[k];
        p.tensors_mut()[t].data_mut()[k] = orig + H;
        let (_, up, pat_up) = oracle_forward(&p, image, offset, label);
        p.tensors_mut()[t].data_mut()[k] = orig - H;
        let (_, down, pat_down) = oracle_forward(&p, image, offset, label);
        p.tensors_mut()[t].data_mut()[k] = orig;
        if pat_up != pat_down {
            out.skipped_ties += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * H);
        out.max_rel = out.max_rel.max(relative_error(analytic.tensors()[t].data()[k], numeric));
        out.checked += 1;
    }
    out
}

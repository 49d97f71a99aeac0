//! Dense row-major `f64` arrays and the handful of kernels the network needs:
//! valid 2-D cross-correlation, 2×2 max-pooling with argmax capture, and
//! dense affine maps, each with its backward pass.
//!
//! Every kernel is a pure function of its arguments.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.contains(&0) || expected != data.len() {
            return Err(Error::dim("Tensor::new", &shape, &[data.len()]));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    /// One-dimensional tensor owning `data`.
    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let len: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..len).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.shape[1] + x]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(Error::dim("reshape", &self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dim("add_assign", &self.shape, &other.shape));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::dim(op, &self.shape, &other.shape));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::dim("dot", &self.shape, &other.shape));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Index of the largest entry; the first one wins on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }
}

fn require_rank2(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    if t.shape.len() != 2 {
        return Err(Error::dim(op, &t.shape, &[0, 0]));
    }
    Ok((t.shape[0], t.shape[1]))
}

/// Valid cross-correlation: `out[y,x] = Σ_{i,j} input[y+i, x+j] · kernel[i,j]`.
pub fn conv2d_valid(input: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    let (h, w) = require_rank2("conv2d_valid", input)?;
    let (kh, kw) = require_rank2("conv2d_valid", kernel)?;
    if kh > h || kw > w {
        return Err(Error::dim("conv2d_valid", &input.shape, &kernel.shape));
    }
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for i in 0..kh {
                let row = (y + i) * w + x;
                for j in 0..kw {
                    acc += input.data[row + j] * kernel.data[i * kw + j];
                }
            }
            out[y * ow + x] = acc;
        }
    }
    Ok(Tensor {
        shape: vec![oh, ow],
        data: out,
    })
}

fn check_conv_grad(input: &Tensor, kernel: &Tensor, grad_out: &Tensor) -> Result<()> {
    let (h, w) = require_rank2("conv2d_backward", input)?;
    let (kh, kw) = require_rank2("conv2d_backward", kernel)?;
    if kh > h || kw > w {
        return Err(Error::dim("conv2d_backward", &input.shape, &kernel.shape));
    }
    let expected = [h - kh + 1, w - kw + 1];
    if grad_out.shape != expected {
        return Err(Error::dim("conv2d_backward", &grad_out.shape, &expected));
    }
    Ok(())
}

/// `grad_kernel[i,j] = Σ_{y,x} grad_out[y,x] · input[y+i, x+j]`.
pub(crate) fn conv2d_kernel_grad(input: &Tensor, kernel_shape: &[usize], grad_out: &Tensor) -> Tensor {
    let w = input.shape[1];
    let (kh, kw) = (kernel_shape[0], kernel_shape[1]);
    let (oh, ow) = (grad_out.shape[0], grad_out.shape[1]);
    let mut gk = vec![0.0; kh * kw];
    for i in 0..kh {
        for j in 0..kw {
            let mut acc = 0.0;
            for y in 0..oh {
                let row = (y + i) * w + j;
                for x in 0..ow {
                    acc += grad_out.data[y * ow + x] * input.data[row + x];
                }
            }
            gk[i * kw + j] = acc;
        }
    }
    Tensor {
        shape: vec![kh, kw],
        data: gk,
    }
}

/// Gradients of `Σ conv2d_valid(input, kernel) ⊙ grad_out` with respect to
/// the input and the kernel. The input gradient is the full correlation of
/// `grad_out` with the flipped kernel.
pub fn conv2d_backward(input: &Tensor, kernel: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor)> {
    check_conv_grad(input, kernel, grad_out)?;
    let w = input.shape[1];
    let (kh, kw) = (kernel.shape[0], kernel.shape[1]);
    let (oh, ow) = (grad_out.shape[0], grad_out.shape[1]);

    let mut gi = vec![0.0; input.len()];
    for y in 0..oh {
        for x in 0..ow {
            let g = grad_out.data[y * ow + x];
            if g == 0.0 {
                continue;
            }
            for i in 0..kh {
                let row = (y + i) * w + x;
                for j in 0..kw {
                    gi[row + j] += g * kernel.data[i * kw + j];
                }
            }
        }
    }
    let grad_input = Tensor {
        shape: input.shape.clone(),
        data: gi,
    };
    Ok((grad_input, conv2d_kernel_grad(input, &kernel.shape, grad_out)))
}

/// Winning flat input index for every output cell of a 2×2 max-pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndex {
    input_shape: [usize; 2],
    indices: Vec<usize>,
}

impl PoolIndex {
    pub fn input_shape(&self) -> [usize; 2] {
        self.input_shape
    }

    pub fn output_shape(&self) -> [usize; 2] {
        [self.input_shape[0] / 2, self.input_shape[1] / 2]
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// Max over disjoint 2×2 blocks. Ties go to the first element in row-major
/// order within the block.
pub fn maxpool2(input: &Tensor) -> Result<(Tensor, PoolIndex)> {
    let (h, w) = require_rank2("maxpool2", input)?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::dim("maxpool2", &input.shape, &[2, 2]));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(oh * ow);
    let mut indices = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        for x in 0..ow {
            let top = 2 * y * w + 2 * x;
            let mut best = top;
            for idx in [top + 1, top + w, top + w + 1] {
                if input.data[idx] > input.data[best] {
                    best = idx;
                }
            }
            out.push(input.data[best]);
            indices.push(best);
        }
    }
    Ok((
        Tensor {
            shape: vec![oh, ow],
            data: out,
        },
        PoolIndex {
            input_shape: [h, w],
            indices,
        },
    ))
}

pub fn maxpool2_backward(argmax: &PoolIndex, grad_out: &Tensor) -> Result<Tensor> {
    let out_shape = argmax.output_shape();
    if grad_out.shape != out_shape {
        return Err(Error::dim("maxpool2_backward", &grad_out.shape, &out_shape));
    }
    let [h, w] = argmax.input_shape;
    let mut gi = vec![0.0; h * w];
    for (&idx, &g) in argmax.indices.iter().zip(&grad_out.data) {
        let slot = gi.get_mut(idx).ok_or_else(|| Error::Corruption {
            op: "maxpool2_backward",
            detail: format!("argmax index {idx} outside {h}x{w} input"),
        })?;
        *slot += g;
    }
    Ok(Tensor {
        shape: vec![h, w],
        data: gi,
    })
}

fn check_dense(op: &'static str, weights: &Tensor, x: &Tensor) -> Result<(usize, usize)> {
    let (rows, cols) = require_rank2(op, weights)?;
    if x.len() != cols {
        return Err(Error::dim(op, &weights.shape, &x.shape));
    }
    Ok((rows, cols))
}

/// `y = W·x + b`.
pub fn dense(weights: &Tensor, bias: &Tensor, x: &Tensor) -> Result<Tensor> {
    let (rows, cols) = check_dense("dense", weights, x)?;
    if bias.len() != rows {
        return Err(Error::dim("dense", &weights.shape, &bias.shape));
    }
    let mut y = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &weights.data[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (wv, xv) in row.iter().zip(&x.data) {
            acc += wv * xv;
        }
        y.push(acc + bias.data[r]);
    }
    Ok(Tensor::vector(y))
}

/// Returns `(grad_w, grad_b, grad_x)` for `y = W·x + b` given `∂L/∂y`.
pub fn dense_backward(weights: &Tensor, x: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (rows, cols) = check_dense("dense_backward", weights, x)?;
    if grad_out.len() != rows {
        return Err(Error::dim("dense_backward", &weights.shape, &grad_out.shape));
    }
    let mut gw = vec![0.0; rows * cols];
    let mut gx = vec![0.0; cols];
    for r in 0..rows {
        let g = grad_out.data[r];
        let row = &weights.data[r * cols..(r + 1) * cols];
        let grow = &mut gw[r * cols..(r + 1) * cols];
        for c in 0..cols {
            grow[c] = g * x.data[c];
            gx[c] += g * row[c];
        }
    }
    Ok((
        Tensor {
            shape: vec![rows, cols],
            data: gw,
        },
        Tensor::vector(grad_out.data.clone()),
        Tensor::vector(gx),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    fn naive_conv(input: &Tensor, kernel: &Tensor) -> Vec<Vec<f64>> {
        let (h, w) = (input.rows(), input.cols());
        let (kh, kw) = (kernel.rows(), kernel.cols());
        let mut out = vec![vec![0.0; w - kw + 1]; h - kh + 1];
        for (y, row) in out.iter_mut().enumerate() {
            for (x, cell) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for i in 0..kh {
                    for j in 0..kw {
                        acc += input.at(y + i, x + j) * kernel.at(i, j);
                    }
                }
                *cell = acc;
            }
        }
        out
    }

    #[test]
    fn conv_of_ones() {
        let out = conv2d_valid(&Tensor::filled(&[3, 3], 1.0), &Tensor::filled(&[2, 2], 1.0)).unwrap();
        assert_eq!(out.shape(), &[2, 2]);
        assert!(out.data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn conv_identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = random(&[5, 5], &mut rng);
        let out = conv2d_valid(&input, &Tensor::filled(&[1, 1], 1.0)).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn conv_matches_nested_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let input = random(&[6, 6], &mut rng);
        let kernel = random(&[3, 3], &mut rng);
        let out = conv2d_valid(&input, &kernel).unwrap();
        let oracle = naive_conv(&input, &kernel);
        for (y, row) in oracle.iter().enumerate() {
            for (x, &v) in row.iter().enumerate() {
                assert_eq!(out.at(y, x).to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn conv_rejects_oversized_kernel() {
        let err = conv2d_valid(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[3, 3])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[3, 3]"), "{msg}");
    }

    #[test]
    fn conv_backward_zero_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let input = random(&[6, 5], &mut rng);
        let kernel = random(&[2, 3], &mut rng);
        let (gi, gk) = conv2d_backward(&input, &kernel, &Tensor::zeros(&[5, 3])).unwrap();
        assert!(gi.data().iter().all(|&v| v == 0.0));
        assert!(gk.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_backward_scalar_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let input = random(&[4, 4], &mut rng);
        let grad = random(&[4, 4], &mut rng);
        let (_, gk) = conv2d_backward(&input, &Tensor::filled(&[1, 1], 0.7), &grad).unwrap();
        let expected: f64 = input.data().iter().zip(grad.data()).map(|(a, b)| a * b).sum();
        assert!((gk.data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn conv_backward_rejects_bad_grad_shape() {
        let r = conv2d_backward(&Tensor::zeros(&[4, 4]), &Tensor::zeros(&[2, 2]), &Tensor::zeros(&[2, 2]));
        assert!(matches!(r, Err(Error::Dimension { .. })));
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let input = random(&[7, 6], &mut rng);
        let kernel = random(&[3, 2], &mut rng);
        let grad = random(&[5, 5], &mut rng);
        let objective = |inp: &Tensor, k: &Tensor| conv2d_valid(inp, k).unwrap().dot(&grad).unwrap();
        let (gi, gk) = conv2d_backward(&input, &kernel, &grad).unwrap();
        // The objective is linear in each argument; a wide step has no
        // truncation error and keeps cancellation noise far below 1e-6.
        let h = 1e-3;
        for idx in 0..input.len() {
            let (mut p, mut m) = (input.clone(), input.clone());
            p.data_mut()[idx] += h;
            m.data_mut()[idx] -= h;
            let fd = (objective(&p, &kernel) - objective(&m, &kernel)) / (2.0 * h);
            let rel = (fd - gi.data()[idx]).abs() / fd.abs().max(gi.data()[idx].abs()).max(1e-6);
            assert!(rel < 1e-6, "input {idx}: {fd} vs {}", gi.data()[idx]);
        }
        for idx in 0..kernel.len() {
            let (mut p, mut m) = (kernel.clone(), kernel.clone());
            p.data_mut()[idx] += h;
            m.data_mut()[idx] -= h;
            let fd = (objective(&input, &p) - objective(&input, &m)) / (2.0 * h);
            let rel = (fd - gk.data()[idx]).abs() / fd.abs().max(gk.data()[idx].abs()).max(1e-6);
            assert!(rel < 1e-6, "kernel {idx}: {fd} vs {}", gk.data()[idx]);
        }
    }

    #[test]
    fn pool_single_block() {
        let input = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, idx) = maxpool2(&input).unwrap();
        assert_eq!(out.data(), &[4.0]);
        assert_eq!(idx.indices(), &[3]);
    }

    #[test]
    fn pool_ties_pick_top_left() {
        let (out, idx) = maxpool2(&Tensor::filled(&[4, 6], 2.5)).unwrap();
        assert!(out.data().iter().all(|&v| v == 2.5));
        assert_eq!(idx.indices(), &[0, 2, 4, 12, 14, 16]);
    }

    #[test]
    fn pool_matches_block_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let input = random(&[8, 8], &mut rng);
        let (out, _) = maxpool2(&input).unwrap();
        for by in 0..4 {
            for bx in 0..4 {
                let block = [
                    input.at(2 * by, 2 * bx),
                    input.at(2 * by, 2 * bx + 1),
                    input.at(2 * by + 1, 2 * bx),
                    input.at(2 * by + 1, 2 * bx + 1),
                ];
                let m = block.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(out.at(by, bx), m);
            }
        }
    }

    #[test]
    fn pool_rejects_odd() {
        assert!(matches!(maxpool2(&Tensor::zeros(&[3, 4])), Err(Error::Dimension { .. })));
    }

    #[test]
    fn pool_backward_routes_to_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let input = random(&[6, 4], &mut rng);
        let (_, idx) = maxpool2(&input).unwrap();
        let g = maxpool2_backward(&idx, &Tensor::filled(&[3, 2], 1.0)).unwrap();
        for by in 0..3 {
            for bx in 0..2 {
                let ones = (0..2)
                    .flat_map(|i| (0..2).map(move |j| (i, j)))
                    .filter(|&(i, j)| g.at(2 * by + i, 2 * bx + j) == 1.0)
                    .count();
                assert_eq!(ones, 1);
            }
        }
        assert_eq!(g.sum(), 6.0);
        let z = maxpool2_backward(&idx, &Tensor::zeros(&[3, 2])).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pool_backward_detects_corrupt_index() {
        let idx = PoolIndex {
            input_shape: [2, 2],
            indices: vec![9],
        };
        let r = maxpool2_backward(&idx, &Tensor::zeros(&[1, 1]));
        assert!(matches!(r, Err(Error::Corruption { .. })));
    }

    #[test]
    fn pool_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let input = random(&[6, 6], &mut rng);
        let grad = random(&[3, 3], &mut rng);
        let (_, idx) = maxpool2(&input).unwrap();
        let analytic = maxpool2_backward(&idx, &grad).unwrap();
        let h = 1e-5;
        for k in 0..input.len() {
            let (mut p, mut m) = (input.clone(), input.clone());
            p.data_mut()[k] += h;
            m.data_mut()[k] -= h;
            let fp = maxpool2(&p).unwrap().0.dot(&grad).unwrap();
            let fm = maxpool2(&m).unwrap().0.dot(&grad).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - analytic.data()[k]).abs() < 1e-6, "{k}: {fd} vs {}", analytic.data()[k]);
        }
    }

    #[test]
    fn dense_identity_and_bias() {
        let eye = Tensor::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        let x = Tensor::vector(vec![0.5, -2.0, 3.0]);
        assert_eq!(dense(&eye, &Tensor::zeros(&[3]), &x).unwrap(), x);
        let b = Tensor::vector(vec![1.0, 2.0]);
        let y = dense(&Tensor::filled(&[2, 3], 0.3), &b, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(y, b);
    }

    #[test]
    fn dense_rejects_mismatch() {
        let r = dense(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2]), &Tensor::zeros(&[4]));
        assert!(matches!(r, Err(Error::Dimension { .. })));
        let r = dense_backward(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[3]), &Tensor::zeros(&[3]));
        assert!(matches!(r, Err(Error::Dimension { .. })));
    }

    #[test]
    fn dense_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let w = random(&[4, 5], &mut rng);
        let b = random(&[4], &mut rng);
        let x = random(&[5], &mut rng);
        let g = random(&[4], &mut rng);
        let f = |w: &Tensor, b: &Tensor, x: &Tensor| dense(w, b, x).unwrap().dot(&g).unwrap();
        let (gw, gb, gx) = dense_backward(&w, &x, &g).unwrap();
        let h = 1e-5;
        let check = |analytic: &Tensor, perturb: &dyn Fn(usize, f64) -> f64| {
            for k in 0..analytic.len() {
                let fd = (perturb(k, h) - perturb(k, -h)) / (2.0 * h);
                assert!((fd - analytic.data()[k]).abs() < 1e-6 * fd.abs().max(1.0));
            }
        };
        check(&gw, &|k, d| {
            let mut w2 = w.clone();
            w2.data_mut()[k] += d;
            f(&w2, &b, &x)
        });
        check(&gb, &|k, d| {
            let mut b2 = b.clone();
            b2.data_mut()[k] += d;
            f(&w, &b2, &x)
        });
        check(&gx, &|k, d| {
            let mut x2 = x.clone();
            x2.data_mut()[k] += d;
            f(&w, &b, &x2)
        });
    }

    #[test]
    fn tensor_new_validates_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn matrix(h: usize, w: usize) -> impl Strategy<Value = Tensor> {
            prop::collection::vec(-10.0f64..10.0, h * w).prop_map(move |d| Tensor::new(vec![h, w], d).unwrap())
        }

        proptest! {
            #[test]
            fn conv_is_bilinear(
                (x1, x2, k) in (3usize..8, 3usize..8, 1usize..4, 1usize..4)
                    .prop_flat_map(|(h, w, kh, kw)| (matrix(h, w), matrix(h, w), matrix(kh, kw))),
                a in -5.0f64..5.0,
            ) {
                let scaled = conv2d_valid(&x1.scale(a), &k).unwrap();
                let expected = conv2d_valid(&x1, &k).unwrap().scale(a);
                for (u, v) in scaled.data().iter().zip(expected.data()) {
                    prop_assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
                }
                let summed = conv2d_valid(&x1.add(&x2).unwrap(), &k).unwrap();
                let parts = conv2d_valid(&x1, &k).unwrap().add(&conv2d_valid(&x2, &k).unwrap()).unwrap();
                for (u, v) in summed.data().iter().zip(parts.data()) {
                    prop_assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
                }
            }

            #[test]
            fn pool_output_is_an_input_entry(x in (1usize..5, 1usize..5).prop_flat_map(|(h, w)| matrix(2 * h, 2 * w))) {
                let (out, idx) = maxpool2(&x).unwrap();
                for (&v, &i) in out.data().iter().zip(idx.indices()) {
                    prop_assert_eq!(v, x.data()[i]);
                }
                prop_assert!(out.is_finite());
            }
        }
    }
}

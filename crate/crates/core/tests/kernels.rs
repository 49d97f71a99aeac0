mod common;

use cnn_ais::tensor::{conv2d_valid, dense, maxpool2, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-2.0..2.0))
}

#[test]
fn conv_pool_dense_agree_with_brute_force_on_random_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..100 {
        let (h, w) = (rng.random_range(1..20), rng.random_range(1..20));
        let (kh, kw) = (rng.random_range(1..=h), rng.random_range(1..=w));
        let input = random(&[h, w], &mut rng);
        let kernel = random(&[kh, kw], &mut rng);
        let got = conv2d_valid(&input, &kernel).unwrap();
        assert_eq!(got.shape(), [h - kh + 1, w - kw + 1]);
        assert_eq!(got.data(), common::oracle_conv(input.data(), h, w, kernel.data(), kh, kw).as_slice());

        let (ph, pw) = (2 * rng.random_range(1..10), 2 * rng.random_range(1..10));
        let img = random(&[ph, pw], &mut rng);
        let (pooled, idx) = maxpool2(&img).unwrap();
        let (vals, oidx) = common::oracle_pool(img.data(), ph, pw);
        assert_eq!(pooled.data(), vals.as_slice());
        assert_eq!(idx.indices(), oidx.as_slice());

        let (rows, cols) = (rng.random_range(1..30), rng.random_range(1..30));
        let wts = random(&[rows, cols], &mut rng);
        let b = random(&[rows], &mut rng);
        let x = random(&[cols], &mut rng);
        let y = dense(&wts, &b, &x).unwrap();
        assert_eq!(y.data(), common::oracle_dense(wts.data(), rows, cols, b.data(), x.data()).as_slice());
    }
}

#[test]
fn pooling_takes_top_left_on_exact_ties() {
    let img = Tensor::filled(&[4, 4], 0.5);
    let (_, idx) = maxpool2(&img).unwrap();
    assert_eq!(idx.indices(), &[0, 2, 8, 10]);
}

proptest! {
    #[test]
    fn conv_output_shape_and_oracle(h in 1usize..12, w in 1usize..12, kh in 1usize..12, kw in 1usize..12, seed in any::<u64>()) {
        prop_assume!(kh <= h && kw <= w);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = random(&[h, w], &mut rng);
        let kernel = random(&[kh, kw], &mut rng);
        let got = conv2d_valid(&input, &kernel).unwrap();
        let expected = common::oracle_conv(input.data(), h, w, kernel.data(), kh, kw);
        prop_assert_eq!(got.data(), expected.as_slice());
    }

    #[test]
    fn oversized_kernel_is_rejected(h in 1usize..6, w in 1usize..6) {
        let input = Tensor::zeros(&[h, w]);
        let kernel = Tensor::zeros(&[h + 1, w]);
        prop_assert!(conv2d_valid(&input, &kernel).is_err());
    }
}

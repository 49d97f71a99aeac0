//! Convolution, pooling and a dense layer on a tiny hand-made image.

use cnn_ais::tensor::{conv2d_valid, dense, maxpool2, Tensor};

fn show(name: &str, t: &Tensor) {
    println!("{name} {:?}", t.shape());
    for r in 0..t.rows() {
        let row: Vec<String> = (0..t.cols()).map(|c| format!("{:6.2}", t.at(r, c))).collect();
        println!("  {}", row.join(" "));
    }
}

fn main() -> cnn_ais::Result<()> {
    // A vertical bar on a 6x6 canvas.
    let image = Tensor::from_fn(&[6, 6], |i| if i % 6 == 2 || i % 6 == 3 { 1.0 } else { 0.0 });
    let edge = Tensor::new(vec![3, 3], vec![-1.0, 0.0, 1.0, -1.0, 0.0, 1.0, -1.0, 0.0, 1.0])?;

    let response = conv2d_valid(&image, &edge)?;
    let (pooled, argmax) = maxpool2(&response)?;
    show("image", &image);
    show("edge response", &response);
    show("pooled", &pooled);
    println!("pool argmax (flat indices into the response): {:?}", argmax.indices());

    let flat = pooled.reshape(&[4])?;
    let weights = Tensor::new(vec![2, 4], vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0])?;
    let bias = Tensor::vector(vec![0.1, -0.1]);
    println!("dense output {:?}", dense(&weights, &bias, &flat)?.data());
    Ok(())
}

//! Reverse-mode autodiff on the tape: check a small conv + attention graph
//! against central differences, then fit a two-layer MLP with Adam.
//!
//! ```text
//! cargo run -p abdkit --example autodiff
//! ```

use abdkit::tensor::{finite_diff_check, Adam, AdamConfig, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn main() -> abdkit::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    // conv2d -> relu -> flatten to tokens -> self-attention -> sum
    let kernel = random(&mut rng, &[4, 1, 3, 3]);
    let x = random(&mut rng, &[1, 1, 6, 6]);
    let err = finite_diff_check(
        |t, x| {
            let k = t.constant(kernel.clone());
            let y = t.conv2d(x, k, [2, 2], [1, 1])?;
            let y = t.relu(y)?;
            let tokens = t.reshape(y, &[4, 9])?;
            let tokens = t.transpose(tokens)?;
            let a = t.scaled_dot_attention(tokens, tokens, tokens)?;
            t.sum(a.output)
        },
        &x,
        1e-6,
    )?;
    println!("conv + attention: max relative error {err:.2e}");

    // y = sin(3x) on [-1, 1] with a 1-16-1 MLP
    let xs: Vec<f64> = (0..64).map(|i| -1.0 + 2.0 * i as f64 / 63.0).collect();
    let input = Tensor::from_vec(vec![64, 1], xs.clone())?;
    let target = Tensor::from_vec(vec![64, 1], xs.iter().map(|x| (3.0 * x).sin()).collect())?;
    let mut params = vec![
        random(&mut rng, &[1, 16]),
        Tensor::zeros(&[16]),
        random(&mut rng, &[16, 1]),
        Tensor::zeros(&[1]),
    ];
    let mut adam = Adam::new(AdamConfig { lr: 1e-2, ..AdamConfig::default() }, &params);
    for it in 0..=2000 {
        let mut t = Tape::new();
        let p: Vec<_> = params.iter().map(|w| t.leaf(w.clone(), true)).collect();
        let x = t.constant(input.clone());
        let y = t.constant(target.clone());
        let h = t.linear(x, p[0], p[1])?;
        let h = t.relu(h)?;
        let out = t.linear(h, p[2], p[3])?;
        let diff = t.sub(out, y)?;
        let sq = t.mul(diff, diff)?;
        let loss = t.mean(sq)?;
        t.backward(loss)?;
        if it % 500 == 0 {
            println!("iter {it:4}  mse {:.5}", t.value(loss).item()?);
        }
        let grads: Vec<Tensor> = p.iter().map(|&v| t.grad(v).cloned().unwrap()).collect();
        adam.step(&mut params, &grads)?;
    }
    Ok(())
}

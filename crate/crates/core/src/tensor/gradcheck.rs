use super::{Tape, Tensor, Var};
use crate::error::Result;

/// `|bp - fd| / max(1, |fd|)`.
pub fn relative_error(backprop: f64, finite: f64) -> f64 {
    (backprop - finite).abs() / finite.abs().max(1.0)
}

fn eval<F>(f: &F, x: Tensor) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let y = f(&mut tape, xv)?;
    tape.value(y).item()
}

/// Largest relative error between the tape gradient of the scalar function
/// `f` at `x` and central differences with step `h`, over every element.
pub fn finite_diff_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let all: Vec<usize> = (0..x.numel()).collect();
    finite_diff_check_at(f, x, h, &all)
}

/// [`finite_diff_check`] restricted to the listed element indices.
pub fn finite_diff_check_at<F>(f: F, x: &Tensor, h: f64, indices: &[usize]) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone(), true);
    let y = f(&mut tape, xv)?;
    tape.backward(y)?;
    let zeros = Tensor::zeros(x.shape());
    let grad = tape.grad(xv).unwrap_or(&zeros);

    let mut worst: f64 = 0.0;
    for &i in indices {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let fd = (eval(&f, plus)? - eval(&f, minus)?) / (2.0 * h);
        worst = worst.max(relative_error(grad.data()[i], fd));
    }
    Ok(worst)
}

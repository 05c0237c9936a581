use super::conv::{self, gemm, ConvGeom};
use super::Tensor;
use crate::error::{Error, Result};

/// Floor applied to predicted probabilities inside the KL divergence.
pub const KL_EPS: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule for [`Tape::custom`]: receives the output gradient, the
/// input values and the output value; returns one gradient per input.
pub type BackwardFn = Box<dyn Fn(&Tensor, &[&Tensor], &Tensor) -> Vec<Tensor>>;

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    MatMul(Var, Var),
    Transpose(Var),
    AddRowBias(Var, Var),
    AddChannelBias(Var, Var),
    Softmax { x: Var, axis: usize },
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    TokenPool(Var),
    Conv { x: Var, k: Var, geom: ConvGeom },
    KlDiv { pred: Var, target: Tensor },
    Custom { inputs: Vec<Var>, backward: BackwardFn },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Outputs of [`Tape::scaled_dot_attention`].
#[derive(Debug, Clone, Copy)]
pub struct Attention {
    pub output: Var,
    /// Row-stochastic `n_q x n_v` attention weights.
    pub weights: Var,
}

/// Ordered record of one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    backward_done: bool,
}

fn shape_err<T>(msg: String) -> Result<T> {
    Err(Error::Shape(msg))
}

/// Splits `shape` around `axis` into (outer, axis length, inner).
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last backward pass with respect to `v`, if `v`
    /// participates in it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Clears gradients so [`Tape::backward`] may run again.
    pub fn reset_grads(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records an input. `requires_grad` leaves receive gradients.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return shape_err(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            ));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::from_vec(x.shape().to_vec(), data).expect("same shape")
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let x = self.value(a);
        Tensor::from_vec(x.shape().to_vec(), x.data().iter().map(|&p| f(p)).collect())
            .expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let v = self.zip_with(a, b, |p, q| p + q);
        let rg = self.rg(a) || self.rg(b);
        self.push("add", v, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let v = self.zip_with(a, b, |p, q| p - q);
        let rg = self.rg(a) || self.rg(b);
        self.push("sub", v, Op::Sub(a, b), rg)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let v = self.zip_with(a, b, |p, q| p * q);
        let rg = self.rg(a) || self.rg(b);
        self.push("mul", v, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.map(a, |p| p * c);
        let rg = self.rg(a);
        self.push("scale", v, Op::Scale(a, c), rg)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.map(a, |p| p.max(0.0));
        let rg = self.rg(a);
        self.push("relu", v, Op::Relu(a), rg)
    }

    /// `[n, k] x [k, m] -> [n, m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return shape_err(format!("matmul {sa:?} x {sb:?}"));
        }
        let (n, k, m) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; n * m];
        gemm(n, k, m, self.value(a).data(), false, self.value(b).data(), false, &mut out, 0.0);
        let rg = self.rg(a) || self.rg(b);
        self.push("matmul", Tensor::from_vec(vec![n, m], out)?, Op::MatMul(a, b), rg)
    }

    /// Transposes a rank-2 tensor.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return shape_err(format!("transpose of rank-{} tensor", s.len()));
        }
        let v = transpose2(self.value(a).data(), s[0], s[1]);
        let rg = self.rg(a);
        self.push("transpose", Tensor::from_vec(vec![s[1], s[0]], v)?, Op::Transpose(a), rg)
    }

    /// `x[n, m] + b[m]`, broadcasting over the leading dimension.
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(b));
        if sx.len() != 2 || sb != [sx[1]] {
            return shape_err(format!("row bias {sb:?} for {sx:?}"));
        }
        let m = sx[1];
        let bias = self.value(b).data();
        let mut v = self.value(x).clone();
        for (i, e) in v.data_mut().iter_mut().enumerate() {
            *e += bias[i % m];
        }
        let rg = self.rg(x) || self.rg(b);
        self.push("add_row_bias", v, Op::AddRowBias(x, b), rg)
    }

    /// Affine map `x W + b` for `x[n, in]`, `W[in, out]`, `b[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_row_bias(y, b)
    }

    /// Adds `b[C]` to every element of channel `c` of `x[N, C, ...]`.
    pub fn add_channel_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(b));
        if sx.len() < 2 || sb != [sx[1]] {
            return shape_err(format!("channel bias {sb:?} for {sx:?}"));
        }
        let c = sx[1];
        let inner: usize = sx[2..].iter().product();
        let bias = self.value(b).data();
        let mut v = self.value(x).clone();
        for (i, e) in v.data_mut().iter_mut().enumerate() {
            *e += bias[(i / inner) % c];
        }
        let rg = self.rg(x) || self.rg(b);
        self.push("add_channel_bias", v, Op::AddChannelBias(x, b), rg)
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() {
            return shape_err(format!("softmax axis {axis} for shape {s:?}"));
        }
        let (outer, len, inner) = axis_split(&s, axis);
        let x = self.value(a).data();
        let mut y = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * len + j) * inner + i;
                let max = (0..len).map(|j| x[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for j in 0..len {
                    let e = (x[at(j)] - max).exp();
                    y[at(j)] = e;
                    sum += e;
                }
                for j in 0..len {
                    y[at(j)] /= sum;
                }
            }
        }
        let rg = self.rg(a);
        self.push("softmax", Tensor::from_vec(s, y)?, Op::Softmax { x: a, axis }, rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).clone().reshaped(shape)?;
        let rg = self.rg(a);
        self.push("reshape", v, Op::Reshape(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push("sum", Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.numel() == 0 {
            return shape_err("mean of empty tensor".into());
        }
        let m = x.data().iter().sum::<f64>() / x.numel() as f64;
        let rg = self.rg(a);
        self.push("mean", Tensor::scalar(m), Op::Mean(a), rg)
    }

    /// Turns a single-item feature map `[1, C, T, ...]` into `T` tokens of
    /// dimension `C` by averaging over every axis after `T`.
    pub fn token_pool(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() < 3 || s[0] != 1 {
            return shape_err(format!("token_pool expects [1, C, T, ...], got {s:?}"));
        }
        let (c, t) = (s[1], s[2]);
        let rest: usize = s[3..].iter().product();
        let x = self.value(a).data();
        let mut out = vec![0.0; t * c];
        for ci in 0..c {
            for ti in 0..t {
                let base = (ci * t + ti) * rest;
                out[ti * c + ci] = x[base..base + rest].iter().sum::<f64>() / rest as f64;
            }
        }
        let rg = self.rg(a);
        self.push("token_pool", Tensor::from_vec(vec![t, c], out)?, Op::TokenPool(a), rg)
    }

    /// Cross-correlation of `x[N, C, D, H, W]` with `k[Co, C, kd, kh, kw]`.
    pub fn conv3d(&mut self, x: Var, k: Var, stride: [usize; 3], pad: [usize; 3]) -> Result<Var> {
        let (sx, sk) = (self.shape(x).to_vec(), self.shape(k).to_vec());
        if sx.len() != 5 || sk.len() != 5 || sx[1] != sk[1] {
            return shape_err(format!("conv3d input {sx:?} with kernel {sk:?}"));
        }
        let geom = ConvGeom::new(
            sx[0],
            sx[1],
            sk[0],
            [sx[2], sx[3], sx[4]],
            [sk[2], sk[3], sk[4]],
            stride,
            pad,
        )?;
        self.conv(x, k, geom, 5)
    }

    /// Cross-correlation of `x[N, C, H, W]` with `k[Co, C, kh, kw]`.
    pub fn conv2d(&mut self, x: Var, k: Var, stride: [usize; 2], pad: [usize; 2]) -> Result<Var> {
        let (sx, sk) = (self.shape(x).to_vec(), self.shape(k).to_vec());
        if sx.len() != 4 || sk.len() != 4 || sx[1] != sk[1] {
            return shape_err(format!("conv2d input {sx:?} with kernel {sk:?}"));
        }
        let geom = ConvGeom::new(
            sx[0],
            sx[1],
            sk[0],
            [1, sx[2], sx[3]],
            [1, sk[2], sk[3]],
            [1, stride[0], stride[1]],
            [0, pad[0], pad[1]],
        )?;
        self.conv(x, k, geom, 4)
    }

    fn conv(&mut self, x: Var, k: Var, geom: ConvGeom, rank: usize) -> Result<Var> {
        let out = conv::forward(self.value(x).data(), self.value(k).data(), &geom);
        let mut shape = vec![geom.batch, geom.cout];
        if rank == 5 {
            shape.extend_from_slice(&geom.output);
        } else {
            shape.extend_from_slice(&geom.output[1..]);
        }
        let rg = self.rg(x) || self.rg(k);
        self.push("conv", Tensor::from_vec(shape, out)?, Op::Conv { x, k, geom }, rg)
    }

    /// Forward KL divergence `sum target * ln(target / max(pred, eps))`,
    /// summed over all rows. `target` rows must be probability vectors.
    pub fn kl_div(&mut self, target: &Tensor, pred: Var) -> Result<Var> {
        let p = self.value(pred);
        if target.shape() != p.shape() || target.rank() == 0 {
            return shape_err(format!(
                "kl_div target {:?} vs prediction {:?}",
                target.shape(),
                p.shape()
            ));
        }
        let len = *target.shape().last().unwrap();
        for row in target.data().chunks(len) {
            check_distribution(row, "target")?;
        }
        if p.data().iter().any(|&q| q < 0.0) {
            return Err(Error::Contract("kl_div prediction has negative entries".into()));
        }
        let v = kl_value(target.data(), p.data());
        let rg = self.rg(pred);
        self.push(
            "kl_div",
            Tensor::scalar(v),
            Op::KlDiv {
                pred,
                target: target.clone(),
            },
            rg,
        )
    }

    /// `softmax(q k^T / sqrt(d_k)) v` with the softmax over the key axis.
    pub fn scaled_dot_attention(&mut self, q: Var, k: Var, v: Var) -> Result<Attention> {
        let (sq, sk, sv) = (self.shape(q), self.shape(k), self.shape(v));
        if sq.len() != 2 || sk.len() != 2 || sv.len() != 2 {
            return shape_err("attention operands must be rank 2".into());
        }
        if sq[1] != sk[1] {
            return shape_err(format!("attention d_k mismatch: {sq:?} vs {sk:?}"));
        }
        if sk[0] != sv[0] {
            return shape_err(format!("attention keys {sk:?} vs values {sv:?}"));
        }
        let dk = sq[1] as f64;
        let kt = self.transpose(k)?;
        let scores = self.matmul(q, kt)?;
        let scaled = self.scale(scores, 1.0 / dk.sqrt())?;
        let weights = self.softmax(scaled, 1)?;
        let output = self.matmul(weights, v)?;
        Ok(Attention { output, weights })
    }

    /// Records an op with a caller-supplied value and backward rule.
    pub fn custom(
        &mut self,
        name: &'static str,
        inputs: &[Var],
        value: Tensor,
        backward: BackwardFn,
    ) -> Result<Var> {
        let rg = inputs.iter().any(|&v| self.rg(v));
        self.push(
            name,
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                backward,
            },
            rg,
        )
    }

    /// Propagates gradients from the scalar `loss` to every node that
    /// requires them.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Contract(
                "backward already ran on this tape; call reset_grads first".into(),
            ));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.rg(loss) {
            self.grads = grads;
            return Ok(());
        }
        grads[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            for (input, gi) in self.input_grads(node, &g)? {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                if gi.shape() != self.shape(input) {
                    return Err(Error::Shape(format!(
                        "backward produced gradient {:?} for input {:?}",
                        gi.shape(),
                        self.shape(input)
                    )));
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&gi),
                    slot @ None => *slot = Some(gi),
                }
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn input_grads(&self, node: &Node, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let gd = g.data();
        let like = |v: Var, data: Vec<f64>| {
            Tensor::from_vec(self.shape(v).to_vec(), data).expect("gradient shape")
        };
        let out = match &node.op {
            Op::Leaf => Vec::new(),
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, like(*b, gd.iter().map(|x| -x).collect()))],
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                vec![
                    (*a, like(*a, gd.iter().zip(vb).map(|(g, y)| g * y).collect())),
                    (*b, like(*b, gd.iter().zip(va).map(|(g, x)| g * x).collect())),
                ]
            }
            Op::Scale(a, c) => vec![(*a, like(*a, gd.iter().map(|g| g * c).collect()))],
            Op::Relu(a) => {
                let x = self.value(*a).data();
                let d = gd
                    .iter()
                    .zip(x)
                    .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
                    .collect();
                vec![(*a, like(*a, d))]
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (n, k, m) = (sa[0], sa[1], sb[1]);
                let mut mut_ga = Vec::new();
                if self.rg(*a) {
                    let mut da = vec![0.0; n * k];
                    gemm(n, m, k, gd, false, self.value(*b).data(), true, &mut da, 0.0);
                    mut_ga.push((*a, like(*a, da)));
                }
                if self.rg(*b) {
                    let mut db = vec![0.0; k * m];
                    gemm(k, n, m, self.value(*a).data(), true, gd, false, &mut db, 0.0);
                    mut_ga.push((*b, like(*b, db)));
                }
                mut_ga
            }
            Op::Transpose(a) => {
                let s = self.shape(*a);
                vec![(*a, like(*a, transpose2(gd, s[1], s[0])))]
            }
            Op::AddRowBias(x, b) => {
                let m = self.shape(*b)[0];
                let mut db = vec![0.0; m];
                for (i, g) in gd.iter().enumerate() {
                    db[i % m] += g;
                }
                vec![(*x, g.clone()), (*b, like(*b, db))]
            }
            Op::AddChannelBias(x, b) => {
                let s = self.shape(*x);
                let c = s[1];
                let inner: usize = s[2..].iter().product();
                let mut db = vec![0.0; c];
                for (i, g) in gd.iter().enumerate() {
                    db[(i / inner) % c] += g;
                }
                vec![(*x, g.clone()), (*b, like(*b, db))]
            }
            Op::Softmax { x, axis } => {
                let y = node.value.data();
                let (outer, len, inner) = axis_split(node.value.shape(), *axis);
                let mut dx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| (o * len + j) * inner + i;
                        let dot: f64 = (0..len).map(|j| gd[at(j)] * y[at(j)]).sum();
                        for j in 0..len {
                            dx[at(j)] = y[at(j)] * (gd[at(j)] - dot);
                        }
                    }
                }
                vec![(*x, like(*x, dx))]
            }
            Op::Reshape(a) => vec![(*a, like(*a, gd.to_vec()))],
            Op::Sum(a) => vec![(*a, Tensor::full(self.shape(*a), gd[0]))],
            Op::Mean(a) => {
                let n = self.value(*a).numel() as f64;
                vec![(*a, Tensor::full(self.shape(*a), gd[0] / n))]
            }
            Op::TokenPool(a) => {
                let s = self.shape(*a);
                let (c, t) = (s[1], s[2]);
                let rest: usize = s[3..].iter().product();
                let mut dx = vec![0.0; c * t * rest];
                for ci in 0..c {
                    for ti in 0..t {
                        let v = gd[ti * c + ci] / rest as f64;
                        let base = (ci * t + ti) * rest;
                        dx[base..base + rest].iter_mut().for_each(|e| *e = v);
                    }
                }
                vec![(*a, like(*a, dx))]
            }
            Op::Conv { x, k, geom } => {
                let (dx, dk) = conv::backward(
                    self.value(*x).data(),
                    self.value(*k).data(),
                    gd,
                    geom,
                    self.rg(*x),
                    self.rg(*k),
                );
                let mut v = Vec::new();
                if let Some(dx) = dx {
                    v.push((*x, like(*x, dx)));
                }
                if let Some(dk) = dk {
                    v.push((*k, like(*k, dk)));
                }
                v
            }
            Op::KlDiv { pred, target } => {
                let p = self.value(*pred).data();
                let d = target
                    .data()
                    .iter()
                    .zip(p)
                    .map(|(&t, &q)| if t > 0.0 && q > KL_EPS { -gd[0] * t / q } else { 0.0 })
                    .collect();
                vec![(*pred, like(*pred, d))]
            }
            Op::Custom { inputs, backward } => {
                let values: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
                let grads = backward(g, &values, &node.value);
                if grads.len() != inputs.len() {
                    return Err(Error::Contract(format!(
                        "custom backward returned {} gradients for {} inputs",
                        grads.len(),
                        inputs.len()
                    )));
                }
                inputs.iter().copied().zip(grads).collect()
            }
        };
        Ok(out)
    }
}

fn transpose2(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}

pub(crate) fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::Contract(format!("{what} has negative or non-finite entries")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-6 {
        return Err(Error::Contract(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

fn kl_value(target: &[f64], pred: &[f64]) -> f64 {
    target
        .iter()
        .zip(pred)
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &q)| t * (t / q.max(KL_EPS)).ln())
        .sum()
}

/// KL divergence between two probability vectors of equal length, outside
/// of any tape.
pub fn kl_div(target: &[f64], pred: &[f64]) -> Result<f64> {
    if target.len() != pred.len() {
        return Err(Error::Shape(format!(
            "kl_div lengths {} and {}",
            target.len(),
            pred.len()
        )));
    }
    check_distribution(target, "target")?;
    check_distribution(pred, "prediction")?;
    Ok(kl_value(target, pred))
}

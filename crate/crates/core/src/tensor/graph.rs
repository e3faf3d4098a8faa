use std::fmt;

use super::conv::{self, ConvGeom};
use super::pool;
use super::{Real, Tensor};
use crate::error::{dim_err, Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ElementwiseOp<T> {
    Add,
    Sub,
    Mul,
    Relu,
    Sigmoid,
    Clamp { lo: T, hi: T },
}

/// Right-hand side of a binary elementwise op.
#[derive(Clone, Copy, Debug)]
pub enum Operand<T> {
    Var(Var),
    Scalar(T),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    MaxPool2,
    AvgPool2,
    NearestUpsample2,
    GlobalAvg,
}

type CustomBackward<T> = Box<dyn Fn(&[T]) -> Vec<T>>;

enum Op<T: Real> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddScalar(Var),
    SubFromScalar(Var),
    MulScalar(Var, T),
    Relu(Var),
    Sigmoid(Var),
    Clamp(Var, T, T),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Conv2d {
        input: Var,
        kernel: Var,
        geom: ConvGeom,
    },
    BiasAdd {
        input: Var,
        bias: Var,
    },
    Linear {
        input: Var,
        weight: Var,
    },
    MaxPool2 {
        input: Var,
        argmax: Vec<usize>,
    },
    AvgPool2(Var),
    Upsample2(Var),
    GlobalAvg(Var),
    ConcatChannels(Var, Var),
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    Custom {
        input: Var,
        backward: CustomBackward<T>,
    },
}

struct Node<T: Real> {
    shape: Vec<usize>,
    value: Vec<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Records primitive operations for one forward pass and replays them in
/// reverse to compute gradients.
///
/// A graph serves exactly one [`Graph::backward`] call; build a new one for
/// the next step.
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> fmt::Debug for Graph<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("nodes", &self.nodes.len())
            .field("consumed", &self.consumed)
            .finish()
    }
}

/// Gradients of a scalar loss with respect to the graph's leaves.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn add_into<T: Real>(slot: &mut Option<Vec<T>>, contrib: Vec<T>) {
    match slot {
        Some(buf) => buf.iter_mut().zip(contrib).for_each(|(b, c)| *b += c),
        None => *slot = Some(contrib),
    }
}

fn add_into_with<T: Real>(slot: &mut Option<Vec<T>>, len: usize, f: impl Fn(usize) -> T) {
    match slot {
        Some(buf) => buf.iter_mut().enumerate().for_each(|(i, b)| *b += f(i)),
        None => *slot = Some((0..len).map(f).collect()),
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, requires_grad: bool, op: Op<T>) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<T> {
        &self.nodes[v.0]
    }

    /// Records `t` as a leaf. Gradient flows to it iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), t.requires_grad(), Op::Leaf)
    }

    /// Records `t` as a leaf that always receives gradient.
    pub fn param(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), true, Op::Leaf)
    }

    /// Records `t` as a constant that never receives gradient.
    pub fn constant(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), false, Op::Leaf)
    }

    pub fn constant_owned(&mut self, t: Tensor<T>) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).requires_grad
    }

    /// Copies a recorded value out as a detached tensor.
    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.clone()).expect("recorded shape matches value")
    }

    /// The single value of a one-element node.
    pub fn scalar(&self, v: Var) -> Result<T> {
        let n = self.node(v);
        if n.value.len() != 1 {
            return dim_err(format!("expected a scalar, node has shape {:?}", n.shape));
        }
        Ok(n.value[0])
    }

    fn map_unary(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let n = self.node(a);
        let value = n.value.iter().map(|&x| f(x)).collect();
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        self.push(shape, value, rg, op)
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        let (na, nb) = (self.node(a), self.node(b));
        if na.shape != nb.shape {
            return dim_err(format!(
                "elementwise operands differ in shape: {:?} vs {:?}",
                na.shape, nb.shape
            ));
        }
        let value = na.value.iter().zip(&nb.value).map(|(&x, &y)| f(x, y)).collect();
        let shape = na.shape.clone();
        let rg = na.requires_grad || nb.requires_grad;
        Ok(self.push(shape, value, rg, op))
    }

    /// Elementwise op with tensor or scalar right operand. Unary kinds ignore `b`.
    pub fn elementwise(&mut self, kind: ElementwiseOp<T>, a: Var, b: Operand<T>) -> Result<Var> {
        match (kind, b) {
            (ElementwiseOp::Add, Operand::Var(b)) => self.binary(a, b, |x, y| x + y, Op::Add(a, b)),
            (ElementwiseOp::Sub, Operand::Var(b)) => self.binary(a, b, |x, y| x - y, Op::Sub(a, b)),
            (ElementwiseOp::Mul, Operand::Var(b)) => self.binary(a, b, |x, y| x * y, Op::Mul(a, b)),
            (ElementwiseOp::Add, Operand::Scalar(s)) => Ok(self.map_unary(a, |x| x + s, Op::AddScalar(a))),
            (ElementwiseOp::Sub, Operand::Scalar(s)) => Ok(self.map_unary(a, |x| x - s, Op::AddScalar(a))),
            (ElementwiseOp::Mul, Operand::Scalar(s)) => Ok(self.map_unary(a, |x| x * s, Op::MulScalar(a, s))),
            (ElementwiseOp::Relu, _) => Ok(self.map_unary(a, |x| x.max(T::zero()), Op::Relu(a))),
            (ElementwiseOp::Sigmoid, _) => Ok(self.map_unary(a, sigmoid, Op::Sigmoid(a))),
            (ElementwiseOp::Clamp { lo, hi }, _) => {
                if lo > hi {
                    return Err(Error::Usage(format!("clamp bounds reversed: {lo} > {hi}")));
                }
                Ok(self.map_unary(a, |x| x.max(lo).min(hi), Op::Clamp(a, lo, hi)))
            }
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseOp::Add, a, Operand::Var(b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseOp::Sub, a, Operand::Var(b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseOp::Mul, a, Operand::Var(b))
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Var {
        self.map_unary(a, |x| x + s, Op::AddScalar(a))
    }

    pub fn mul_scalar(&mut self, a: Var, s: T) -> Var {
        self.map_unary(a, |x| x * s, Op::MulScalar(a, s))
    }

    /// `s - a`.
    pub fn scalar_sub(&mut self, s: T, a: Var) -> Var {
        self.map_unary(a, |x| s - x, Op::SubFromScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map_unary(a, |x| x.max(T::zero()), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map_unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Result<Var> {
        self.elementwise(ElementwiseOp::Clamp { lo, hi }, a, Operand::Scalar(T::zero()))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let s = n.value.iter().copied().sum();
        let rg = n.requires_grad;
        self.push(vec![], vec![s], rg, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let s: T = n.value.iter().copied().sum();
        let m = s / T::of(n.value.len() as f64);
        let rg = n.requires_grad;
        self.push(vec![], vec![m], rg, Op::Mean(a))
    }

    /// Mean squared difference, built from primitives.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        Ok(self.mean(sq))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let n = self.node(a);
        if shape.iter().product::<usize>() != n.value.len() {
            return dim_err(format!("cannot reshape {:?} into {shape:?}", n.shape));
        }
        let (value, rg) = (n.value.clone(), n.requires_grad);
        Ok(self.push(shape.to_vec(), value, rg, Op::Reshape(a)))
    }

    /// Cross-correlation of an NCHW input with an OIKK kernel.
    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let geom = ConvGeom::new(self.shape(input), self.shape(kernel), stride, padding)?;
        let value = conv::forward(self.value(input), self.value(kernel), &geom);
        let rg = self.requires_grad(input) || self.requires_grad(kernel);
        Ok(self.push(geom.out_shape(), value, rg, Op::Conv2d { input, kernel, geom }))
    }

    /// Adds a per-channel bias of shape `[C]` to an `[N, C, ...]` tensor.
    pub fn bias_add(&mut self, input: Var, bias: Var) -> Result<Var> {
        let (xs, bs) = (self.shape(input), self.shape(bias));
        if xs.len() < 2 || bs.len() != 1 || bs[0] != xs[1] {
            return dim_err(format!("bias of shape {bs:?} does not match input {xs:?}"));
        }
        let c = xs[1];
        let inner: usize = xs[2..].iter().product();
        let b = self.value(bias);
        let value = self
            .value(input)
            .iter()
            .enumerate()
            .map(|(i, &x)| x + b[(i / inner) % c])
            .collect();
        let shape = xs.to_vec();
        let rg = self.requires_grad(input) || self.requires_grad(bias);
        Ok(self.push(shape, value, rg, Op::BiasAdd { input, bias }))
    }

    /// `x · wᵀ` for `x: [N, D]`, `w: [K, D]`.
    pub fn linear(&mut self, input: Var, weight: Var) -> Result<Var> {
        let (xs, ws) = (self.shape(input), self.shape(weight));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return dim_err(format!("linear expects [N, D] x [K, D], got {xs:?} and {ws:?}"));
        }
        let (n, d, k) = (xs[0], xs[1], ws[0]);
        let mut out = vec![T::zero(); n * k];
        T::gemm_raw(
            n,
            d,
            k,
            self.value(input),
            d as isize,
            1,
            self.value(weight),
            1,
            d as isize,
            T::zero(),
            &mut out,
            k as isize,
            1,
        );
        let rg = self.requires_grad(input) || self.requires_grad(weight);
        Ok(self.push(vec![n, k], out, rg, Op::Linear { input, weight }))
    }

    pub fn pool(&mut self, input: Var, mode: PoolMode) -> Result<Var> {
        let s = self.shape(input).to_vec();
        if s.len() != 4 {
            return dim_err(format!("pooling expects an NCHW tensor, got {s:?}"));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let planes = n * c;
        let rg = self.requires_grad(input);
        let x = self.value(input);
        if matches!(mode, PoolMode::MaxPool2 | PoolMode::AvgPool2) && (h % 2 != 0 || w % 2 != 0) {
            return dim_err(format!("2x pooling needs even spatial dims, got {h}x{w}"));
        }
        Ok(match mode {
            PoolMode::MaxPool2 => {
                let (value, argmax) = pool::maxpool2(x, planes, h, w);
                self.push(vec![n, c, h / 2, w / 2], value, rg, Op::MaxPool2 { input, argmax })
            }
            PoolMode::AvgPool2 => {
                let value = pool::avgpool2(x, planes, h, w);
                self.push(vec![n, c, h / 2, w / 2], value, rg, Op::AvgPool2(input))
            }
            PoolMode::NearestUpsample2 => {
                let value = pool::upsample2(x, planes, h, w);
                self.push(vec![n, c, 2 * h, 2 * w], value, rg, Op::Upsample2(input))
            }
            PoolMode::GlobalAvg => {
                let value = pool::global_avg(x, planes, h * w);
                self.push(vec![n, c], value, rg, Op::GlobalAvg(input))
            }
        })
    }

    /// Concatenates two NCHW tensors along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 4 || sb.len() != 4 || sa[0] != sb[0] || sa[2..] != sb[2..] {
            return dim_err(format!("cannot concatenate {sa:?} and {sb:?} along channels"));
        }
        let (n, ca, cb) = (sa[0], sa[1], sb[1]);
        let area = sa[2] * sa[3];
        let shape = vec![n, ca + cb, sa[2], sa[3]];
        let (va, vb) = (self.value(a), self.value(b));
        let mut value = Vec::with_capacity(va.len() + vb.len());
        for i in 0..n {
            value.extend_from_slice(&va[i * ca * area..(i + 1) * ca * area]);
            value.extend_from_slice(&vb[i * cb * area..(i + 1) * cb * area]);
        }
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(shape, value, rg, Op::ConcatChannels(a, b)))
    }

    /// Batch mean of `-log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.shape(logits);
        if s.len() != 2 || s[0] != labels.len() {
            return dim_err(format!(
                "logits of shape {s:?} do not match {} labels",
                labels.len()
            ));
        }
        let (n, k) = (s[0], s[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Index(format!("label {bad} out of range for {k} classes")));
        }
        let z = self.value(logits);
        let mut probs = vec![T::zero(); n * k];
        let mut total = 0.0f64;
        for (i, &label) in labels.iter().enumerate() {
            let row = &z[i * k..(i + 1) * k];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut denom = T::zero();
            for (j, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                probs[i * k + j] = e;
                denom += e;
            }
            probs[i * k..(i + 1) * k].iter_mut().for_each(|p| *p /= denom);
            let log_p = row[label] - max - denom.ln();
            total -= log_p.as_f64();
        }
        let loss = T::of(total / n as f64);
        let rg = self.requires_grad(logits);
        Ok(self.push(
            vec![],
            vec![loss],
            rg,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Records an externally computed unary op. `backward` maps the upstream
    /// gradient to the input gradient.
    pub fn custom_unary(
        &mut self,
        input: Var,
        output: Tensor<T>,
        backward: impl Fn(&[T]) -> Vec<T> + 'static,
    ) -> Var {
        let rg = self.requires_grad(input);
        let shape = output.shape().to_vec();
        self.push(
            shape,
            output.into_data(),
            rg,
            Op::Custom {
                input,
                backward: Box::new(backward),
            },
        )
    }

    /// Back-propagates from a scalar `loss` with seed gradient 1.
    ///
    /// Consumes the recording: a second call is a usage error.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(Error::Usage(
                "backward already ran on this graph; record a new one".into(),
            ));
        }
        let ln = self.node(loss);
        if ln.value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                ln.shape
            )));
        }
        if !ln.requires_grad {
            return Err(Error::Usage(
                "loss does not depend on any tensor that requires grad".into(),
            ));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.backward_node(node, &g, &mut grads);
        }

        for (slot, node) in grads.iter_mut().zip(&self.nodes) {
            if !(matches!(node.op, Op::Leaf) && node.requires_grad) {
                *slot = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backward_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.wants(*a) {
                    add_into(&mut grads[a.0], g.to_vec());
                }
                if self.wants(*b) {
                    add_into(&mut grads[b.0], g.to_vec());
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    add_into(&mut grads[a.0], g.to_vec());
                }
                if self.wants(*b) {
                    add_into(&mut grads[b.0], g.iter().map(|&x| -x).collect());
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    add_into_with(&mut grads[a.0], g.len(), |i| g[i] * vb[i]);
                }
                if self.wants(*b) {
                    add_into_with(&mut grads[b.0], g.len(), |i| g[i] * va[i]);
                }
            }
            Op::AddScalar(a) | Op::Reshape(a) => add_into(&mut grads[a.0], g.to_vec()),
            Op::SubFromScalar(a) => add_into(&mut grads[a.0], g.iter().map(|&x| -x).collect()),
            Op::MulScalar(a, s) => add_into(&mut grads[a.0], g.iter().map(|&x| x * *s).collect()),
            Op::Relu(a) => {
                let va = self.value(*a);
                add_into_with(&mut grads[a.0], g.len(), |i| {
                    if va[i] > T::zero() {
                        g[i]
                    } else {
                        T::zero()
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                add_into_with(&mut grads[a.0], g.len(), |i| g[i] * y[i] * (T::one() - y[i]));
            }
            Op::Clamp(a, lo, hi) => {
                let va = self.value(*a);
                add_into_with(&mut grads[a.0], g.len(), |i| {
                    if va[i] >= *lo && va[i] <= *hi {
                        g[i]
                    } else {
                        T::zero()
                    }
                });
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                add_into(&mut grads[a.0], vec![g[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.value(*a).len();
                add_into(&mut grads[a.0], vec![g[0] / T::of(n as f64); n]);
            }
            Op::Conv2d {
                input,
                kernel,
                geom,
            } => {
                let (need_dx, need_dk) = (self.wants(*input), self.wants(*kernel));
                let (dx, dk) = conv::backward(
                    self.value(*input),
                    self.value(*kernel),
                    g,
                    geom,
                    need_dx,
                    need_dk,
                );
                if let Some(dx) = dx {
                    add_into(&mut grads[input.0], dx);
                }
                if let Some(dk) = dk {
                    add_into(&mut grads[kernel.0], dk);
                }
            }
            Op::BiasAdd { input, bias } => {
                if self.wants(*input) {
                    add_into(&mut grads[input.0], g.to_vec());
                }
                if self.wants(*bias) {
                    let c = self.shape(*bias)[0];
                    let inner: usize = node.shape[2..].iter().product();
                    let mut db = vec![T::zero(); c];
                    for (i, chunk) in g.chunks_exact(inner).enumerate() {
                        db[i % c] += chunk.iter().copied().sum::<T>();
                    }
                    add_into(&mut grads[bias.0], db);
                }
            }
            Op::Linear { input, weight } => {
                let (n, k) = (node.shape[0], node.shape[1]);
                let d = self.shape(*input)[1];
                if self.wants(*input) {
                    // dX (N×D) = G (N×K) · W (K×D)
                    let mut dx = vec![T::zero(); n * d];
                    T::gemm_raw(
                        n,
                        k,
                        d,
                        g,
                        k as isize,
                        1,
                        self.value(*weight),
                        d as isize,
                        1,
                        T::zero(),
                        &mut dx,
                        d as isize,
                        1,
                    );
                    add_into(&mut grads[input.0], dx);
                }
                if self.wants(*weight) {
                    // dW (K×D) = Gᵀ (K×N) · X (N×D)
                    let mut dw = vec![T::zero(); k * d];
                    T::gemm_raw(
                        k,
                        n,
                        d,
                        g,
                        1,
                        k as isize,
                        self.value(*input),
                        d as isize,
                        1,
                        T::zero(),
                        &mut dw,
                        d as isize,
                        1,
                    );
                    add_into(&mut grads[weight.0], dw);
                }
            }
            Op::MaxPool2 { input, argmax } => {
                let len = self.value(*input).len();
                let mut dx = vec![T::zero(); len];
                for (&src, &gv) in argmax.iter().zip(g) {
                    dx[src] += gv;
                }
                add_into(&mut grads[input.0], dx);
            }
            Op::AvgPool2(a) => {
                let s = self.shape(*a);
                let dx = pool::avgpool2_backward(g, s[0] * s[1], s[2], s[3]);
                add_into(&mut grads[a.0], dx);
            }
            Op::Upsample2(a) => {
                let s = self.shape(*a);
                let dx = pool::upsample2_backward(g, s[0] * s[1], s[2], s[3]);
                add_into(&mut grads[a.0], dx);
            }
            Op::GlobalAvg(a) => {
                let s = self.shape(*a);
                let area = s[2] * s[3];
                let inv = T::one() / T::of(area as f64);
                add_into_with(&mut grads[a.0], s.iter().product(), |i| g[i / area] * inv);
            }
            Op::ConcatChannels(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let area = sa[2] * sa[3];
                let (ca, cb) = (sa[1] * area, sb[1] * area);
                if self.wants(*a) {
                    let da = g.chunks_exact(ca + cb).flat_map(|c| c[..ca].iter().copied()).collect();
                    add_into(&mut grads[a.0], da);
                }
                if self.wants(*b) {
                    let db = g.chunks_exact(ca + cb).flat_map(|c| c[ca..].iter().copied()).collect();
                    add_into(&mut grads[b.0], db);
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let k = self.shape(*logits)[1];
                let scale = g[0] / T::of(labels.len() as f64);
                add_into_with(&mut grads[logits.0], probs.len(), |i| {
                    let onehot = if labels[i / k] == i % k { T::one() } else { T::zero() };
                    (probs[i] - onehot) * scale
                });
            }
            Op::Custom { input, backward } => {
                let dx = backward(g);
                debug_assert_eq!(dx.len(), self.value(*input).len());
                add_into(&mut grads[input.0], dx);
            }
        }
    }
}

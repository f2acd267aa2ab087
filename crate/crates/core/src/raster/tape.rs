//! Wengert-list reverse-mode differentiation over [`Raster`] values.
//!
//! Every operation appends a node holding its output and whatever it needs
//! for the vector-Jacobian product. [`Tape::backward`] walks the list in
//! exact reverse order. Only leaves keep their gradients afterwards.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;
use std::sync::Arc;

use super::conv::{conv_backward, conv_forward};
use super::dense::{dense_rows, dense_rows_backward};
use super::sample::SamplePlan;
use super::{depth_to_space, space_to_depth, ConvKernel, Raster, Real};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Conv {
        input: Var,
        kernel: Var,
        out_channels: usize,
    },
    Relu(Var),
    Sigmoid(Var),
    DepthToSpace(Var, usize),
    SpaceToDepth(Var, usize),
    Sample {
        source: Var,
        plan: Arc<SamplePlan<T>>,
    },
    Concat(Vec<Var>),
    Slice {
        input: Var,
        start: usize,
    },
    Blend {
        alpha: Var,
        candidate: Var,
        history: Var,
    },
    Dense {
        input: Var,
        weights: Var,
        bias: Var,
    },
    Row {
        input: Var,
        row: usize,
    },
    L1 {
        pred: Var,
        target: Arc<Raster<T>>,
    },
    Mean(Vec<Var>),
}

struct Node<T> {
    value: Raster<T>,
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

/// Leaf gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Raster<T>>>,
    visited: Vec<usize>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Raster<T>> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Raster<T>> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }

    /// Node indices in the order their vector-Jacobian products ran.
    pub fn visit_order(&self) -> &[usize] {
        &self.visited
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Hash of the sign of every ReLU input and every L1 residual. Two
    /// evaluations of the same graph with equal signatures lie on the same
    /// smooth piece of the function.
    pub fn kink_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => {
                    for v in self.nodes[x.0].value.data() {
                        h.write_u8((*v > T::zero()) as u8);
                    }
                }
                Op::L1 { pred, target } => {
                    for (p, t) in self.nodes[pred.0].value.data().iter().zip(target.data()) {
                        h.write_u8((*p > *t) as u8);
                    }
                }
                _ => {}
            }
        }
        h.finish()
    }

    pub fn value(&self, var: Var) -> &Raster<T> {
        &self.nodes[var.0].value
    }

    /// A differentiable input, typically a parameter.
    pub fn leaf(&mut self, value: Raster<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// An input that never receives a gradient (data).
    pub fn constant(&mut self, value: Raster<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Raster<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn check(&self, var: Var) -> Result<()> {
        if var.0 >= self.nodes.len() {
            return Err(Error::Usage(format!(
                "variable {} is not on this tape",
                var.0
            )));
        }
        Ok(())
    }

    /// Zero-padded 3×3 convolution with a flat `taps ++ bias` kernel.
    pub fn conv3x3(&mut self, input: Var, kernel: Var, out_channels: usize) -> Result<Var> {
        self.check(input)?;
        self.check(kernel)?;
        let x = &self.nodes[input.0].value;
        let k = &self.nodes[kernel.0].value;
        if k.len() != ConvKernel::<T>::flat_len(out_channels, x.channels()) {
            return Err(Error::config(format!(
                "conv3x3: kernel of length {} does not map {} to {out_channels} channels",
                k.len(),
                x.channels()
            )));
        }
        let split = out_channels * x.channels() * 9;
        let out = conv_forward(x, &k.data()[..split], &k.data()[split..], out_channels);
        let rg = self.needs(&[input, kernel]);
        Ok(self.push(
            out,
            Op::Conv {
                input,
                kernel,
                out_channels,
            },
            rg,
        ))
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        self.check(input)?;
        let out = super::relu(&self.nodes[input.0].value);
        let rg = self.needs(&[input]);
        Ok(self.push(out, Op::Relu(input), rg))
    }

    pub fn sigmoid(&mut self, input: Var) -> Result<Var> {
        self.check(input)?;
        let out = super::sigmoid(&self.nodes[input.0].value);
        let rg = self.needs(&[input]);
        Ok(self.push(out, Op::Sigmoid(input), rg))
    }

    pub fn depth_to_space(&mut self, input: Var, scale: usize) -> Result<Var> {
        self.check(input)?;
        let out = depth_to_space(&self.nodes[input.0].value, scale)?;
        let rg = self.needs(&[input]);
        Ok(self.push(out, Op::DepthToSpace(input, scale), rg))
    }

    pub fn space_to_depth(&mut self, input: Var, scale: usize) -> Result<Var> {
        self.check(input)?;
        let out = space_to_depth(&self.nodes[input.0].value, scale)?;
        let rg = self.needs(&[input]);
        Ok(self.push(out, Op::SpaceToDepth(input, scale), rg))
    }

    /// Bilinear sampling at fixed absolute positions; differentiable with
    /// respect to the source only.
    pub fn sample(&mut self, source: Var, positions: &Raster<T>) -> Result<Var> {
        self.check(source)?;
        let src = &self.nodes[source.0].value;
        let plan = Arc::new(SamplePlan::new(src.height(), src.width(), positions)?);
        let out = plan.forward(src);
        let rg = self.needs(&[source]);
        Ok(self.push(out, Op::Sample { source, plan }, rg))
    }

    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        for v in inputs {
            self.check(*v)?;
        }
        let parts: Vec<&Raster<T>> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
        let out = Raster::concat(&parts)?;
        let rg = self.needs(inputs);
        Ok(self.push(out, Op::Concat(inputs.to_vec()), rg))
    }

    pub fn slice_channels(&mut self, input: Var, start: usize, count: usize) -> Result<Var> {
        self.check(input)?;
        let out = self.nodes[input.0].value.slice_channels(start, count)?;
        let rg = self.needs(&[input]);
        Ok(self.push(out, Op::Slice { input, start }, rg))
    }

    /// `alpha·candidate + (1 − alpha)·history`, alpha broadcast over channels.
    pub fn blend(&mut self, alpha: Var, candidate: Var, history: Var) -> Result<Var> {
        for v in [alpha, candidate, history] {
            self.check(v)?;
        }
        let out = blend_values(
            &self.nodes[alpha.0].value,
            &self.nodes[candidate.0].value,
            &self.nodes[history.0].value,
        )?;
        let rg = self.needs(&[alpha, candidate, history]);
        Ok(self.push(
            out,
            Op::Blend {
                alpha,
                candidate,
                history,
            },
            rg,
        ))
    }

    /// Affine map applied to each row of a `1 × rows × in` input.
    /// `weights` holds `out × in` values and `bias` holds `out`.
    pub fn dense(&mut self, input: Var, weights: Var, bias: Var) -> Result<Var> {
        for v in [input, weights, bias] {
            self.check(v)?;
        }
        let x = &self.nodes[input.0].value;
        let w = &self.nodes[weights.0].value;
        let b = &self.nodes[bias.0].value;
        let (rows, inf) = (x.height(), x.width());
        let outf = b.len();
        if x.channels() != 1 || w.len() != outf * inf {
            return Err(Error::config(format!(
                "dense: input {:?}, {} weights, {} biases",
                x.shape(),
                w.len(),
                outf
            )));
        }
        let y = dense_rows(x.data(), rows, w.data(), b.data(), outf, inf);
        let out = Raster::from_vec_unchecked(1, rows, outf, y)?;
        let rg = self.needs(&[input, weights, bias]);
        Ok(self.push(
            out,
            Op::Dense {
                input,
                weights,
                bias,
            },
            rg,
        ))
    }

    /// Extracts one row of a `1 × rows × cols` matrix as a `1 × 1 × cols` vector.
    pub fn row(&mut self, input: Var, row: usize) -> Result<Var> {
        self.check(input)?;
        let x = &self.nodes[input.0].value;
        if x.channels() != 1 || row >= x.height() {
            return Err(Error::config(format!("row {row} of {:?}", x.shape())));
        }
        let w = x.width();
        let out = Raster::vector(x.data()[row * w..(row + 1) * w].to_vec());
        let rg = self.needs(&[input]);
        Ok(self.push(out, Op::Row { input, row }, rg))
    }

    /// Mean absolute error against a constant target.
    pub fn l1(&mut self, pred: Var, target: Arc<Raster<T>>) -> Result<Var> {
        self.check(pred)?;
        let p = &self.nodes[pred.0].value;
        if !p.same_shape(&target) {
            return Err(Error::config(format!(
                "l1: prediction {:?} vs target {:?}",
                p.shape(),
                target.shape()
            )));
        }
        let loss = l1_value(p, &target);
        let rg = self.needs(&[pred]);
        Ok(self.push(Raster::vector(vec![loss]), Op::L1 { pred, target }, rg))
    }

    /// Mean of scalar nodes.
    pub fn mean(&mut self, inputs: &[Var]) -> Result<Var> {
        if inputs.is_empty() {
            return Err(Error::config("mean of zero scalars"));
        }
        let mut acc = T::zero();
        for v in inputs {
            self.check(*v)?;
            let x = &self.nodes[v.0].value;
            if x.len() != 1 {
                return Err(Error::config("mean expects scalar nodes"));
            }
            acc += x.data()[0];
        }
        let out = acc / T::of(inputs.len() as f64);
        let rg = self.needs(inputs);
        Ok(self.push(Raster::vector(vec![out]), Op::Mean(inputs.to_vec()), rg))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        self.check(root)?;
        if self.nodes[root.0].value.len() != 1 {
            return Err(Error::Usage(
                "backward from a non-scalar node needs a seed".into(),
            ));
        }
        self.backward_with_seed(root, Raster::vector(vec![T::one()]))
    }

    /// Reverse pass seeded with an explicit upstream gradient.
    pub fn backward_with_seed(&self, root: Var, seed: Raster<T>) -> Result<Gradients<T>> {
        if self.nodes.is_empty() {
            return Err(Error::Usage("backward called on an empty tape".into()));
        }
        self.check(root)?;
        if seed.len() != self.nodes[root.0].value.len() {
            return Err(Error::config("backward seed does not match root shape"));
        }
        let mut grads: Vec<Option<Raster<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(seed);
        let mut visited = Vec::new();
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if !node.requires_grad {
                continue;
            }
            visited.push(i);
            self.vjp(node, &g, &mut grads);
        }
        Ok(Gradients { grads, visited })
    }

    fn vjp(&self, node: &Node<T>, g: &Raster<T>, grads: &mut [Option<Raster<T>>]) {
        let want = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Conv {
                input,
                kernel,
                out_channels,
            } => {
                let x = &self.nodes[input.0].value;
                let k = &self.nodes[kernel.0].value;
                let split = out_channels * x.channels() * 9;
                let (gx, gk) = conv_backward(x, &k.data()[..split], *out_channels, g, want(*input));
                if let Some(gx) = gx {
                    accumulate(grads, *input, gx);
                }
                if want(*kernel) {
                    let gk = Raster::from_vec_unchecked(k.channels(), k.height(), k.width(), gk)
                        .expect("kernel gradient shape");
                    accumulate(grads, *kernel, gk);
                }
            }
            Op::Relu(input) => {
                let y = &node.value;
                let mut gx = g.clone();
                for (d, &v) in gx.data_mut().iter_mut().zip(y.data()) {
                    if v <= T::zero() {
                        *d = T::zero();
                    }
                }
                accumulate(grads, *input, gx);
            }
            Op::Sigmoid(input) => {
                let y = &node.value;
                let mut gx = g.clone();
                for (d, &v) in gx.data_mut().iter_mut().zip(y.data()) {
                    *d = *d * v * (T::one() - v);
                }
                accumulate(grads, *input, gx);
            }
            Op::DepthToSpace(input, s) => {
                accumulate(grads, *input, space_to_depth(g, *s).expect("shuffle shape"));
            }
            Op::SpaceToDepth(input, s) => {
                accumulate(grads, *input, depth_to_space(g, *s).expect("shuffle shape"));
            }
            Op::Sample { source, plan } => {
                let c = self.nodes[source.0].value.channels();
                accumulate(grads, *source, plan.backward(c, g));
            }
            Op::Concat(inputs) => {
                let mut start = 0;
                for v in inputs {
                    let c = self.nodes[v.0].value.channels();
                    if want(*v) {
                        accumulate(grads, *v, g.slice_channels(start, c).expect("concat slice"));
                    }
                    start += c;
                }
            }
            Op::Slice { input, start } => {
                let x = &self.nodes[input.0].value;
                let mut gx = Raster::zeros(x.channels(), x.height(), x.width());
                let n = x.plane_len();
                gx.data_mut()[start * n..start * n + g.len()].copy_from_slice(g.data());
                accumulate(grads, *input, gx);
            }
            Op::Blend {
                alpha,
                candidate,
                history,
            } => {
                let a = &self.nodes[alpha.0].value;
                let c = &self.nodes[candidate.0].value;
                let h = &self.nodes[history.0].value;
                let n = a.plane_len();
                if want(*alpha) {
                    let mut ga = Raster::zeros(1, a.height(), a.width());
                    for ch in 0..c.channels() {
                        let (gp, cp, hp) = (g.plane(ch), c.plane(ch), h.plane(ch));
                        for i in 0..n {
                            ga.data_mut()[i] += gp[i] * (cp[i] - hp[i]);
                        }
                    }
                    accumulate(grads, *alpha, ga);
                }
                if want(*candidate) {
                    let mut gc = g.clone();
                    for ch in 0..c.channels() {
                        for (d, &av) in gc.plane_mut(ch).iter_mut().zip(a.data()) {
                            *d = *d * av;
                        }
                    }
                    accumulate(grads, *candidate, gc);
                }
                if want(*history) {
                    let mut gh = g.clone();
                    for ch in 0..c.channels() {
                        for (d, &av) in gh.plane_mut(ch).iter_mut().zip(a.data()) {
                            *d = *d * (T::one() - av);
                        }
                    }
                    accumulate(grads, *history, gh);
                }
            }
            Op::Dense {
                input,
                weights,
                bias,
            } => {
                let x = &self.nodes[input.0].value;
                let w = &self.nodes[weights.0].value;
                let b = &self.nodes[bias.0].value;
                let (rows, inf, outf) = (x.height(), x.width(), b.len());
                let (gx, gw, gb) = dense_rows_backward(
                    x.data(),
                    rows,
                    w.data(),
                    g.data(),
                    outf,
                    inf,
                    want(*input),
                );
                if let Some(gx) = gx {
                    accumulate(
                        grads,
                        *input,
                        Raster::from_vec_unchecked(1, rows, inf, gx).unwrap(),
                    );
                }
                if want(*weights) {
                    let gw = Raster::from_vec_unchecked(w.channels(), w.height(), w.width(), gw)
                        .unwrap();
                    accumulate(grads, *weights, gw);
                }
                if want(*bias) {
                    let gb = Raster::from_vec_unchecked(b.channels(), b.height(), b.width(), gb)
                        .unwrap();
                    accumulate(grads, *bias, gb);
                }
            }
            Op::Row { input, row } => {
                let x = &self.nodes[input.0].value;
                let mut gx = Raster::zeros(1, x.height(), x.width());
                let w = x.width();
                gx.data_mut()[row * w..(row + 1) * w].copy_from_slice(g.data());
                accumulate(grads, *input, gx);
            }
            Op::L1 { pred, target } => {
                let p = &self.nodes[pred.0].value;
                let scale = g.data()[0] / T::of(p.len() as f64);
                let data = p
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(&a, &b)| {
                        let d = a - b;
                        if d > T::zero() {
                            scale
                        } else if d < T::zero() {
                            -scale
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                let gp =
                    Raster::from_vec_unchecked(p.channels(), p.height(), p.width(), data).unwrap();
                accumulate(grads, *pred, gp);
            }
            Op::Mean(inputs) => {
                let share = g.data()[0] / T::of(inputs.len() as f64);
                for v in inputs {
                    if want(*v) {
                        accumulate(grads, *v, Raster::vector(vec![share]));
                    }
                }
            }
        }
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Raster<T>>], var: Var, g: Raster<T>) {
    match &mut grads[var.0] {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(g.data()) {
                *a += *b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

pub(crate) fn blend_values<T: Real>(
    alpha: &Raster<T>,
    candidate: &Raster<T>,
    history: &Raster<T>,
) -> Result<Raster<T>> {
    if alpha.channels() != 1
        || !candidate.same_shape(history)
        || (alpha.height(), alpha.width()) != (candidate.height(), candidate.width())
    {
        return Err(Error::config(format!(
            "blend: alpha {:?}, candidate {:?}, history {:?}",
            alpha.shape(),
            candidate.shape(),
            history.shape()
        )));
    }
    let mut out = history.clone();
    for ch in 0..candidate.channels() {
        let cp = candidate.plane(ch);
        for ((o, &c), &a) in out.plane_mut(ch).iter_mut().zip(cp).zip(alpha.data()) {
            // a·c + (1 − a)·h, written to stay inside [min(c,h), max(c,h)].
            *o = a * c + (T::one() - a) * *o;
        }
    }
    Ok(out)
}

pub(crate) fn l1_value<T: Real>(pred: &Raster<T>, target: &Raster<T>) -> T {
    let n = pred.len().max(1);
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&a, &b)| (a - b).abs().as_f64())
        .sum();
    T::of(sum / n as f64)
}

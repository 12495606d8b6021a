//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s in creation
//! order, which is already a topological order. [`Graph::backward`] walks the
//! tape in reverse and accumulates vector-Jacobian products. The tape is
//! single-threaded; independent batch items each get their own graph.

use std::cell::{Ref, RefCell};

use crate::error::{Error, Result};
use crate::numerics::fft;
use crate::numerics::nn;
use crate::numerics::tensor::Tensor;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    /// Elementwise product with a one-element variable.
    MulScalarVar(usize, usize),
    MatMul(usize, usize),
    /// `a · bᵀ`
    MatMulNt(usize, usize),
    Transpose(usize),
    Reshape(usize),
    Sum(usize),
    Abs(usize),
    Gelu(usize),
    Sigmoid(usize),
    AddRowBias(usize, usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        eps: f64,
    },
    SoftmaxRows(usize),
    Conv2d {
        x: usize,
        kernel: usize,
        bias: Option<usize>,
    },
    PixelShuffle(usize, usize),
    /// `[rows × n] → [2 × rows × bins]` (plane 0 real, plane 1 imaginary).
    Rfft(usize),
    /// `[2 × rows × bins] → [rows × n]`
    Irfft(usize),
    Select(usize, usize),
    Stack(Vec<usize>),
    SliceCols {
        x: usize,
        start: usize,
    },
    ConcatCols(Vec<usize>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recording tape for one forward/backward pass.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    id: usize,
    graph: &'g Graph,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Var#{}{:?}",
            self.id,
            self.graph.nodes.borrow()[self.id].value.shape()
        )
    }
}

/// A value together with its gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct DualGrad {
    pub value: Tensor,
    pub grad: Tensor,
}

/// Result of a backward pass: one optional gradient per recorded node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    /// Gradient of `var`, or zeros when the loss does not depend on it.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.value().shape()))
    }

    pub fn dual(&self, var: Var<'_>) -> DualGrad {
        DualGrad {
            value: var.value().clone(),
            grad: self.wrt(var),
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable leaf.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            id: nodes.len() - 1,
            graph: self,
        }
    }

    fn value(&self, id: usize) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    fn record(&self, value: Tensor, op: Op, inputs: &[usize]) -> Result<Var<'_>> {
        if !value.all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite value produced by {op:?}"
            )));
        }
        let rg = inputs.iter().any(|&i| self.needs(i));
        Ok(self.push(value, op, rg))
    }

    /// Reverse pass from a one-element root.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if nodes[root.id].value.len() != 1 {
            return Err(Error::usage(format!(
                "backward requires a scalar root, got shape {:?}",
                nodes[root.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[root.id] = Some(Tensor::ones(nodes[root.id].value.shape()));
        for id in (0..=root.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let contributions = vjp(&nodes, id, &g)?;
            for (input, ig) in contributions {
                if !nodes[input].requires_grad {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => acc.add_assign(&ig)?,
                    slot @ None => *slot = Some(ig),
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn val(nodes: &[Node], id: usize) -> &Tensor {
    &nodes[id].value
}

/// Vector-Jacobian products of node `id` for each of its inputs.
fn vjp(nodes: &[Node], id: usize, g: &Tensor) -> Result<Vec<(usize, Tensor)>> {
    let needs = |i: usize| nodes[i].requires_grad;
    let out = &nodes[id].value;
    Ok(match &nodes[id].op {
        Op::Leaf => vec![],
        &Op::Add(a, b) => vec![(a, g.clone()), (b, g.clone())],
        &Op::Sub(a, b) => vec![(a, g.clone()), (b, g.scale(-1.0))],
        &Op::Mul(a, b) => {
            let mut v = vec![];
            if needs(a) {
                v.push((a, g.mul(val(nodes, b))?));
            }
            if needs(b) {
                v.push((b, g.mul(val(nodes, a))?));
            }
            v
        }
        &Op::Scale(a, s) => vec![(a, g.scale(s))],
        &Op::AddScalar(a) => vec![(a, g.clone())],
        &Op::MulScalarVar(a, s) => {
            let sv = val(nodes, s).data()[0];
            let ds = g.mul(val(nodes, a))?.sum();
            vec![(a, g.scale(sv)), (s, Tensor::scalar(ds))]
        }
        &Op::MatMul(a, b) => {
            let mut v = vec![];
            if needs(a) {
                v.push((a, g.matmul_nt(val(nodes, b))?));
            }
            if needs(b) {
                v.push((b, val(nodes, a).matmul_tn(g)?));
            }
            v
        }
        &Op::MatMulNt(a, b) => {
            // out = a bᵀ; da = g b; db = gᵀ a
            let mut v = vec![];
            if needs(a) {
                v.push((a, g.matmul(val(nodes, b))?));
            }
            if needs(b) {
                v.push((b, g.matmul_tn(val(nodes, a))?));
            }
            v
        }
        &Op::Transpose(a) => vec![(a, g.transpose()?)],
        &Op::Reshape(a) => vec![(a, g.reshape(val(nodes, a).shape())?)],
        &Op::Sum(a) => vec![(a, Tensor::full(val(nodes, a).shape(), g.data()[0]))],
        &Op::Abs(a) => {
            // Subgradient 0 at ties.
            let x = val(nodes, a);
            let s = x.map(|v| {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            });
            vec![(a, g.mul(&s)?)]
        }
        &Op::Gelu(a) => {
            let d = val(nodes, a).map(nn::gelu_grad);
            vec![(a, g.mul(&d)?)]
        }
        &Op::Sigmoid(a) => {
            let d = out.map(|y| y * (1.0 - y));
            vec![(a, g.mul(&d)?)]
        }
        &Op::AddRowBias(a, b) => {
            let (_, c) = g.dims2()?;
            let mut gb = vec![0.0; c];
            for row in g.data().chunks(c) {
                for (acc, v) in gb.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            vec![(a, g.clone()), (b, Tensor::new(val(nodes, b).shape(), gb)?)]
        }
        &Op::LayerNorm { x, gain, bias, eps } => {
            let (gx, gg, gb) = nn::layer_norm_backward(val(nodes, x), val(nodes, gain), eps, g)?;
            vec![(x, gx), (gain, gg), (bias, gb)]
        }
        &Op::SoftmaxRows(a) => vec![(a, nn::softmax_rows_backward(out, g)?)],
        &Op::Conv2d { x, kernel, bias } => {
            let (gx, gk, gb) = nn::conv2d_backward(val(nodes, x), val(nodes, kernel), g)?;
            let mut v = vec![(x, gx), (kernel, gk)];
            if let Some(b) = bias {
                v.push((b, gb));
            }
            v
        }
        &Op::PixelShuffle(a, r) => vec![(a, nn::pixel_unshuffle(g, r)?)],
        &Op::Rfft(a) => {
            let n = val(nodes, a).shape()[1];
            vec![(a, fft::rfft_adjoint(&g.select(0)?, &g.select(1)?, n)?)]
        }
        &Op::Irfft(a) => {
            let (re, im) = fft::irfft_adjoint(g)?;
            vec![(a, Tensor::stack(&[&re, &im])?)]
        }
        &Op::Select(a, index) => {
            let src = val(nodes, a);
            let inner = g.len();
            let mut gd = vec![0.0; src.len()];
            gd[index * inner..(index + 1) * inner].copy_from_slice(g.data());
            vec![(a, Tensor::new(src.shape(), gd)?)]
        }
        Op::Stack(parts) => {
            let mut v = vec![];
            for (i, &p) in parts.iter().enumerate() {
                v.push((p, g.select(i)?));
            }
            v
        }
        &Op::SliceCols { x, start } => {
            let (r, c) = val(nodes, x).dims2()?;
            let w = g.shape()[1];
            let mut gd = vec![0.0; r * c];
            for i in 0..r {
                gd[i * c + start..i * c + start + w].copy_from_slice(&g.data()[i * w..(i + 1) * w]);
            }
            vec![(x, Tensor::new(&[r, c], gd)?)]
        }
        Op::ConcatCols(parts) => {
            let (r, total) = g.dims2()?;
            let mut start = 0;
            let mut v = vec![];
            for &p in parts {
                let w = val(nodes, p).shape()[1];
                let mut gd = Vec::with_capacity(r * w);
                for i in 0..r {
                    gd.extend_from_slice(&g.data()[i * total + start..i * total + start + w]);
                }
                v.push((p, Tensor::new(&[r, w], gd)?));
                start += w;
            }
            v
        }
    })
}

impl<'g> Var<'g> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Ref<'g, Tensor> {
        self.graph.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    fn unary(self, op: Op, f: impl FnOnce(&Tensor) -> Result<Tensor>) -> Result<Var<'g>> {
        let v = f(&self.value())?;
        self.graph.record(v, op, &[self.id])
    }

    fn binary(
        self,
        other: Var<'g>,
        op: Op,
        f: impl FnOnce(&Tensor, &Tensor) -> Result<Tensor>,
    ) -> Result<Var<'g>> {
        let v = f(&self.value(), &other.value())?;
        self.graph.record(v, op, &[self.id, other.id])
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, Op::Add(self.id, other.id), |a, b| a.add(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, Op::Sub(self.id, other.id), |a, b| a.sub(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, Op::Mul(self.id, other.id), |a, b| a.mul(b))
    }

    pub fn scale(self, s: f64) -> Result<Var<'g>> {
        self.unary(Op::Scale(self.id, s), |a| Ok(a.scale(s)))
    }

    pub fn add_scalar(self, s: f64) -> Result<Var<'g>> {
        self.unary(Op::AddScalar(self.id), |a| Ok(a.map(|v| v + s)))
    }

    /// Multiplies every element by the value of a one-element variable.
    pub fn mul_scalar_var(self, s: Var<'g>) -> Result<Var<'g>> {
        let sv = s.value().item()?;
        self.binary(s, Op::MulScalarVar(self.id, s.id), |a, _| Ok(a.scale(sv)))
    }

    pub fn matmul(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, Op::MatMul(self.id, other.id), |a, b| a.matmul(b))
    }

    /// `self · otherᵀ`
    pub fn matmul_nt(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, Op::MatMulNt(self.id, other.id), |a, b| {
            a.matmul_nt(b)
        })
    }

    pub fn transpose(self) -> Result<Var<'g>> {
        self.unary(Op::Transpose(self.id), |a| a.transpose())
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'g>> {
        self.unary(Op::Reshape(self.id), |a| a.reshape(shape))
    }

    pub fn sum(self) -> Result<Var<'g>> {
        self.unary(Op::Sum(self.id), |a| Ok(Tensor::scalar(a.sum())))
    }

    pub fn mean(self) -> Result<Var<'g>> {
        let n = self.value().len() as f64;
        self.sum()?.scale(1.0 / n)
    }

    pub fn abs(self) -> Result<Var<'g>> {
        self.unary(Op::Abs(self.id), |a| Ok(a.map(f64::abs)))
    }

    pub fn gelu(self) -> Result<Var<'g>> {
        self.unary(Op::Gelu(self.id), |a| Ok(a.map(nn::gelu)))
    }

    pub fn sigmoid(self) -> Result<Var<'g>> {
        self.unary(Op::Sigmoid(self.id), |a| Ok(a.map(nn::sigmoid)))
    }

    pub fn add_row_bias(self, bias: Var<'g>) -> Result<Var<'g>> {
        self.binary(bias, Op::AddRowBias(self.id, bias.id), nn::add_row_bias)
    }

    pub fn layer_norm(self, gain: Var<'g>, bias: Var<'g>, eps: f64) -> Result<Var<'g>> {
        let v = nn::layer_norm(&self.value(), &gain.value(), &bias.value(), eps)?;
        let op = Op::LayerNorm {
            x: self.id,
            gain: gain.id,
            bias: bias.id,
            eps,
        };
        self.graph.record(v, op, &[self.id, gain.id, bias.id])
    }

    pub fn softmax_rows(self) -> Result<Var<'g>> {
        self.unary(Op::SoftmaxRows(self.id), nn::softmax_rows)
    }

    pub fn conv2d(self, kernel: Var<'g>, bias: Option<Var<'g>>) -> Result<Var<'g>> {
        let v = {
            let b = bias.map(|b| b.value());
            nn::conv2d(&self.value(), &kernel.value(), b.as_deref())?
        };
        let mut inputs = vec![self.id, kernel.id];
        inputs.extend(bias.map(|b| b.id));
        let op = Op::Conv2d {
            x: self.id,
            kernel: kernel.id,
            bias: bias.map(|b| b.id),
        };
        self.graph.record(v, op, &inputs)
    }

    pub fn pixel_shuffle(self, r: usize) -> Result<Var<'g>> {
        self.unary(Op::PixelShuffle(self.id, r), |a| nn::pixel_shuffle(a, r))
    }

    /// Packed real FFT of each row: `[rows × n] → [2 × rows × n/2+1]`.
    pub fn rfft(self) -> Result<Var<'g>> {
        self.unary(Op::Rfft(self.id), |a| {
            let (re, im) = fft::rfft(a)?.into_parts();
            Tensor::stack(&[&re, &im])
        })
    }

    /// Inverse of [`Var::rfft`], dropping imaginary parts of the DC and
    /// Nyquist bins.
    pub fn irfft(self, n: usize) -> Result<Var<'g>> {
        self.unary(Op::Irfft(self.id), |a| {
            if a.rank() != 3 || a.shape()[0] != 2 {
                return Err(Error::dim(format!(
                    "irfft expects [2 x rows x bins], got {:?}",
                    a.shape()
                )));
            }
            fft::irfft_hermitian(&a.select(0)?, &a.select(1)?, n)
        })
    }

    pub fn select(self, index: usize) -> Result<Var<'g>> {
        self.unary(Op::Select(self.id, index), |a| a.select(index))
    }

    pub fn slice_cols(self, start: usize, width: usize) -> Result<Var<'g>> {
        self.unary(Op::SliceCols { x: self.id, start }, |a| {
            let (r, c) = a.dims2()?;
            if start + width > c || width == 0 {
                return Err(Error::dim(format!(
                    "column slice {start}..{} of {c} columns",
                    start + width
                )));
            }
            let mut d = Vec::with_capacity(r * width);
            for row in a.data().chunks(c) {
                d.extend_from_slice(&row[start..start + width]);
            }
            Tensor::new(&[r, width], d)
        })
    }
}

pub fn stack<'g>(parts: &[Var<'g>]) -> Result<Var<'g>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::dim("stack of zero variables"))?;
    let graph = first.graph;
    let v = {
        let vals: Vec<Ref<'_, Tensor>> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Tensor> = vals.iter().map(|r| &**r).collect();
        Tensor::stack(&refs)?
    };
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    graph.record(v, Op::Stack(ids.clone()), &ids)
}

pub fn concat_cols<'g>(parts: &[Var<'g>]) -> Result<Var<'g>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::dim("concat of zero variables"))?;
    let graph = first.graph;
    let v = {
        let vals: Vec<Ref<'_, Tensor>> = parts.iter().map(|p| p.value()).collect();
        let (r, _) = vals[0].dims2()?;
        let mut widths = Vec::with_capacity(vals.len());
        for t in &vals {
            let (ri, ci) = t.dims2()?;
            if ri != r {
                return Err(Error::dim("concat_cols row counts differ"));
            }
            widths.push(ci);
        }
        let total: usize = widths.iter().sum();
        let mut d = Vec::with_capacity(r * total);
        for i in 0..r {
            for (t, &w) in vals.iter().zip(&widths) {
                d.extend_from_slice(&t.data()[i * w..(i + 1) * w]);
            }
        }
        Tensor::new(&[r, total], d)?
    };
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    graph.record(v, Op::ConcatCols(ids.clone()), &ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let g = Graph::new();
        let x = g.param(Tensor::from_fn(&[2, 3], |i| i as f64));
        let loss = x.sum().unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.wrt(x), Tensor::ones(&[2, 3]));
    }

    #[test]
    fn l1_gradient_is_sign() {
        let g = Graph::new();
        let x = g.param(Tensor::new(&[4], vec![1.0, -2.0, 3.0, 0.5]).unwrap());
        let y = g.constant(Tensor::new(&[4], vec![0.0, 0.0, 5.0, 0.5]).unwrap());
        let loss = x.sub(y).unwrap().abs().unwrap().sum().unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).data(), &[1.0, -1.0, -1.0, 0.0]);
        assert!(grads.get(y).is_none());
    }

    #[test]
    fn non_scalar_root_rejected() {
        let g = Graph::new();
        let x = g.param(Tensor::ones(&[2]));
        assert!(matches!(g.backward(x), Err(Error::Usage(_))));
    }

    #[test]
    fn shared_input_accumulates() {
        let g = Graph::new();
        let x = g.param(Tensor::new(&[2], vec![3.0, -1.0]).unwrap());
        let loss = x.mul(x).unwrap().sum().unwrap();
        let d = g.backward(loss).unwrap().dual(x);
        assert_eq!(d.grad.data(), &[6.0, -2.0]);
        assert_eq!(d.value.shape(), d.grad.shape());
    }
}

use std::rc::Rc;

use super::conv::{col2im, gemm, im2col, ConvGeometry, Mat};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Log(Var),
    Exp(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    Clamp(Var, f64, f64),
    Relu(Var),
    Softplus(Var),
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    },
    Upsample2x(Var),
    MaskedSelect(Var, Rc<[usize]>),
    Reshape(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records a computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and backward is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients from one backward sweep, indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Moves the gradient out, leaving `None`.
    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }

    /// The gradient, or zeros when `v` does not influence the root.
    pub fn wrt(&self, v: Var) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

fn broadcast_pair(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Vec<usize>> {
    if a.shape() == b.shape() {
        Ok(a.shape().to_vec())
    } else if b.is_scalar() {
        Ok(a.shape().to_vec())
    } else if a.is_scalar() {
        Ok(b.shape().to_vec())
    } else {
        Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())))
    }
}

fn zip_broadcast(a: &Tensor, b: &Tensor, shape: Vec<usize>, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let n: usize = shape.iter().product();
    let (da, db) = (a.data(), b.data());
    let data = (0..n)
        .map(|i| {
            let x = if da.len() == 1 { da[0] } else { da[i] };
            let y = if db.len() == 1 { db[0] } else { db[i] };
            f(x, y)
        })
        .collect();
    Tensor::new(shape, data).expect("broadcast shape")
}

/// Reduces an upstream gradient to the shape of a (possibly broadcast) operand.
fn reduce_to(grad: Tensor, target: &Tensor) -> Tensor {
    if grad.numel() == target.numel() {
        grad.reshaped(target.shape().to_vec()).expect("same numel")
    } else {
        Tensor::new(target.shape().to_vec(), vec![grad.sum()]).expect("scalar operand")
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// A trainable input; gradients flow to it.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A constant input; no gradient is computed for it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, rec: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = broadcast_pair(op, ta, tb)?;
        let out = zip_broadcast(ta, tb, shape, f);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, rec, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product; either side may be a one-element tensor.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(b).data().contains(&0.0) {
            return Err(Error::Domain {
                op: "div",
                detail: "division by zero".into(),
            });
        }
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| c * x);
        let needs = self.needs(a);
        self.push(out, Op::Scale(a, c), needs)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x + c);
        let needs = self.needs(a);
        self.push(out, Op::Offset(a), needs)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(x) = self.value(a).data().iter().find(|x| !(**x > 0.0)) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("non-positive argument {x}"),
            });
        }
        let out = self.value(a).map(f64::ln);
        let needs = self.needs(a);
        Ok(self.push(out, Op::Log(a), needs))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        let needs = self.needs(a);
        self.push(out, Op::Exp(a), needs)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * x);
        let needs = self.needs(a);
        self.push(out, Op::Square(a), needs)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let needs = self.needs(a);
        self.push(out, Op::Sum(a), needs)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.numel() == 0 {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let out = Tensor::scalar(t.sum() / t.numel() as f64);
        let needs = self.needs(a);
        Ok(self.push(out, Op::Mean(a), needs))
    }

    /// Clamp into `[lo, hi]`. The gradient is 1 on the closed interval and 0 outside.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        let needs = self.needs(a);
        self.push(out, Op::Clamp(a, lo, hi), needs)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        let needs = self.needs(a);
        self.push(out, Op::Relu(a), needs)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(softplus);
        let needs = self.needs(a);
        self.push(out, Op::Softplus(a), needs)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        let needs = self.needs(a);
        Ok(self.push(out, Op::Reshape(a), needs))
    }

    /// Flat vector of the entries where `mask` is true.
    pub fn masked_select(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let t = self.value(a);
        if mask.len() != t.numel() {
            return Err(Error::shape(
                "masked_select",
                format!("mask of {} for tensor of {}", mask.len(), t.numel()),
            ));
        }
        let idx: Rc<[usize]> = mask.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i).collect();
        let data = idx.iter().map(|&i| t.data()[i]).collect();
        let out = Tensor::new(vec![idx.len()], data)?;
        let needs = self.needs(a);
        Ok(self.push(out, Op::MaskedSelect(a, idx), needs))
    }

    /// Nearest-neighbour ×2 upsampling of `[N, C, H, W]`.
    pub fn upsample2x(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let &[n, c, h, w] = t.shape() else {
            return Err(Error::shape("upsample2x", format!("expected NCHW, got {:?}", t.shape())));
        };
        let mut out = vec![0.0; n * c * 4 * h * w];
        let src = t.data();
        for plane in 0..n * c {
            let s = &src[plane * h * w..(plane + 1) * h * w];
            let d = &mut out[plane * 4 * h * w..(plane + 1) * 4 * h * w];
            for y in 0..2 * h {
                for x in 0..2 * w {
                    d[y * 2 * w + x] = s[(y / 2) * w + x / 2];
                }
            }
        }
        let out = Tensor::new(vec![n, c, 2 * h, 2 * w], out)?;
        let needs = self.needs(a);
        Ok(self.push(out, Op::Upsample2x(a), needs))
    }

    /// 2-D convolution (cross-correlation) of `[N, C, H, W]` with `[O, C, kh, kw]`
    /// weights and optional `[O]` bias, zero padding.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        if !(1..=2).contains(&stride) {
            return Err(Error::shape("conv2d", format!("stride {stride} not in 1..=2")));
        }
        let (x, wt) = (self.value(input), self.value(weight));
        let (&[n, c, h, w], &[o, wc, kh, kw]) = (x.shape(), wt.shape()) else {
            return Err(Error::shape(
                "conv2d",
                format!("input {:?} / weight {:?} must be 4-D", x.shape(), wt.shape()),
            ));
        };
        if wc != c {
            return Err(Error::shape("conv2d", format!("input has {c} channels, weight expects {wc}")));
        }
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(Error::shape("conv2d", "kernel larger than padded input"));
        }
        if let Some(b) = bias {
            if self.value(b).shape() != [o] {
                return Err(Error::shape("conv2d", format!("bias {:?}, expected [{o}]", self.value(b).shape())));
            }
        }
        let g = ConvGeometry {
            channels: c,
            height: h,
            width: w,
            kernel_h: kh,
            kernel_w: kw,
            stride,
            padding,
        };
        let (ho, wo) = (g.out_height(), g.out_width());
        let (k, hw) = (g.patch_len(), ho * wo);
        let mut out = vec![0.0; n * o * hw];
        let mut cols = vec![0.0; k * hw];
        for b in 0..n {
            im2col(&x.data()[b * c * h * w..(b + 1) * c * h * w], &g, &mut cols);
            let dst = &mut out[b * o * hw..(b + 1) * o * hw];
            gemm(o, k, hw, Mat::rows(wt.data(), k), Mat::rows(&cols, hw), 0.0, dst);
            if let Some(bv) = bias {
                for (oc, &bval) in self.value(bv).data().iter().enumerate() {
                    for y in &mut dst[oc * hw..(oc + 1) * hw] {
                        *y += bval;
                    }
                }
            }
        }
        let out = Tensor::new(vec![n, o, ho, wo], out)?;
        let needs = self.needs(input) || self.needs(weight) || bias.is_some_and(|b| self.needs(b));
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            },
            needs,
        ))
    }

    /// Gradients of scalar `root` with respect to every node that feeds it.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if !self.value(root).is_scalar() {
            return Err(Error::shape("backward", format!("root has shape {:?}", self.value(root).shape())));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::full(self.value(root).shape(), 1.0));

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                // Keep gradients of leaves for the caller.
                grads[id] = Some(g);
                continue;
            }
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        acc(&mut grads, *a, reduce_to(g.clone(), self.value(*a)));
                    }
                    if self.needs(*b) {
                        acc(&mut grads, *b, reduce_to(g.clone(), self.value(*b)));
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(*a) {
                        acc(&mut grads, *a, reduce_to(g.clone(), self.value(*a)));
                    }
                    if self.needs(*b) {
                        acc(&mut grads, *b, reduce_to(g.map(|x| -x), self.value(*b)));
                    }
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        let ga = zip_broadcast(&g, tb, g.shape().to_vec(), |gg, y| gg * y);
                        acc(&mut grads, *a, reduce_to(ga, ta));
                    }
                    if self.needs(*b) {
                        let gb = zip_broadcast(&g, ta, g.shape().to_vec(), |gg, x| gg * x);
                        acc(&mut grads, *b, reduce_to(gb, tb));
                    }
                }
                Op::Div(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        let ga = zip_broadcast(&g, tb, g.shape().to_vec(), |gg, y| gg / y);
                        acc(&mut grads, *a, reduce_to(ga, ta));
                    }
                    if self.needs(*b) {
                        // d(x/y)/dy = -out/y
                        let q = zip_broadcast(&node.value, tb, g.shape().to_vec(), |o, y| -o / y);
                        let gb = zip_broadcast(&g, &q, g.shape().to_vec(), |gg, qq| gg * qq);
                        acc(&mut grads, *b, reduce_to(gb, tb));
                    }
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g.map(|x| c * x)),
                Op::Offset(a) => acc(&mut grads, *a, g),
                Op::Log(a) => {
                    let x = self.value(*a);
                    acc(&mut grads, *a, zip_broadcast(&g, x, g.shape().to_vec(), |gg, xx| gg / xx));
                }
                Op::Exp(a) => {
                    acc(&mut grads, *a, zip_broadcast(&g, &node.value, g.shape().to_vec(), |gg, e| gg * e));
                }
                Op::Square(a) => {
                    let x = self.value(*a);
                    acc(&mut grads, *a, zip_broadcast(&g, x, g.shape().to_vec(), |gg, xx| 2.0 * gg * xx));
                }
                Op::Sum(a) => acc(&mut grads, *a, Tensor::full(self.value(*a).shape(), g.item())),
                Op::Mean(a) => {
                    let t = self.value(*a);
                    acc(&mut grads, *a, Tensor::full(t.shape(), g.item() / t.numel() as f64));
                }
                Op::Clamp(a, lo, hi) => {
                    let x = self.value(*a);
                    let gx = zip_broadcast(&g, x, g.shape().to_vec(), |gg, xx| {
                        if xx >= *lo && xx <= *hi {
                            gg
                        } else {
                            0.0
                        }
                    });
                    acc(&mut grads, *a, gx);
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let gx = zip_broadcast(&g, x, g.shape().to_vec(), |gg, xx| if xx > 0.0 { gg } else { 0.0 });
                    acc(&mut grads, *a, gx);
                }
                Op::Softplus(a) => {
                    let x = self.value(*a);
                    acc(&mut grads, *a, zip_broadcast(&g, x, g.shape().to_vec(), |gg, xx| gg * sigmoid(xx)));
                }
                Op::Reshape(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    acc(&mut grads, *a, g.reshaped(shape)?);
                }
                Op::MaskedSelect(a, idx) => {
                    let mut gx = Tensor::zeros(self.value(*a).shape());
                    let dst = gx.data_mut();
                    for (&i, &gv) in idx.iter().zip(g.data()) {
                        dst[i] += gv;
                    }
                    acc(&mut grads, *a, gx);
                }
                Op::Upsample2x(a) => {
                    let src = self.value(*a);
                    let &[n, c, h, w] = src.shape() else { unreachable!() };
                    let mut gx = Tensor::zeros(src.shape());
                    let dst = gx.data_mut();
                    for plane in 0..n * c {
                        let gs = &g.data()[plane * 4 * h * w..(plane + 1) * 4 * h * w];
                        let gd = &mut dst[plane * h * w..(plane + 1) * h * w];
                        for y in 0..2 * h {
                            for x in 0..2 * w {
                                gd[(y / 2) * w + x / 2] += gs[y * 2 * w + x];
                            }
                        }
                    }
                    acc(&mut grads, *a, gx);
                }
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    stride,
                    padding,
                } => {
                    let (x, wt) = (self.value(*input), self.value(*weight));
                    let &[n, c, h, w] = x.shape() else { unreachable!() };
                    let &[o, _, kh, kw] = wt.shape() else { unreachable!() };
                    let geom = ConvGeometry {
                        channels: c,
                        height: h,
                        width: w,
                        kernel_h: kh,
                        kernel_w: kw,
                        stride: *stride,
                        padding: *padding,
                    };
                    let (k, hw) = (geom.patch_len(), geom.out_height() * geom.out_width());
                    let need_x = self.needs(*input);
                    let need_w = self.needs(*weight);
                    let mut gw = Tensor::zeros(wt.shape());
                    let mut gx = Tensor::zeros(x.shape());
                    let mut cols = vec![0.0; k * hw];
                    let mut dcols = vec![0.0; k * hw];
                    for b in 0..n {
                        let gout = &g.data()[b * o * hw..(b + 1) * o * hw];
                        if need_w {
                            im2col(&x.data()[b * c * h * w..(b + 1) * c * h * w], &geom, &mut cols);
                            // dW += dOut · colsᵀ
                            gemm(o, hw, k, Mat::rows(gout, hw), Mat::transposed(&cols, hw), 1.0, gw.data_mut());
                        }
                        if need_x {
                            // dCols = Wᵀ · dOut
                            gemm(k, o, hw, Mat::transposed(wt.data(), k), Mat::rows(gout, hw), 0.0, &mut dcols);
                            col2im(&dcols, &geom, &mut gx.data_mut()[b * c * h * w..(b + 1) * c * h * w]);
                        }
                    }
                    if need_w {
                        acc(&mut grads, *weight, gw);
                    }
                    if need_x {
                        acc(&mut grads, *input, gx);
                    }
                    if let Some(bv) = bias {
                        if self.needs(*bv) {
                            let mut gb = Tensor::zeros(&[o]);
                            for b in 0..n {
                                for oc in 0..o {
                                    let s = &g.data()[(b * o + oc) * hw..(b * o + oc + 1) * hw];
                                    gb.data_mut()[oc] += s.iter().sum::<f64>();
                                }
                            }
                            acc(&mut grads, *bv, gb);
                        }
                    }
                }
            }
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: f64) -> Tensor {
        Tensor::scalar(x)
    }

    #[test]
    fn square_and_log_derivatives() {
        let mut t = Tape::new();
        let x = t.leaf(s(3.0));
        let y = t.square(x);
        assert_eq!(t.backward(y).unwrap().wrt(x).item(), 6.0);

        let mut t = Tape::new();
        let x = t.leaf(s(2.0));
        let y = t.log(x).unwrap();
        assert_eq!(t.backward(y).unwrap().wrt(x).item(), 0.5);
    }

    #[test]
    fn accumulates_over_paths() {
        let mut t = Tape::new();
        let x = t.leaf(s(1.5));
        let z = t.leaf(s(4.0));
        let y = t.add(x, x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(x).item(), 2.0);
        assert_eq!(g.wrt(z).item(), 0.0);
        assert!(g.get(z).is_none());
    }

    #[test]
    fn log_of_non_positive_is_domain_error() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new(vec![2], vec![1.0, 0.0]).unwrap());
        assert!(matches!(t.log(x), Err(Error::Domain { .. })));
    }

    #[test]
    fn shape_errors() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::zeros(&[2, 3]));
        let b = t.leaf(Tensor::zeros(&[3, 2]));
        assert!(matches!(t.add(a, b), Err(Error::Shape { .. })));
        let m = t.leaf(Tensor::zeros(&[2]));
        assert!(t.masked_select(m, &[true]).is_err());
        assert!(t.backward(a).is_err());
        assert!(t.upsample2x(a).is_err());
        let x = t.leaf(Tensor::zeros(&[1, 2, 4, 4]));
        let w = t.leaf(Tensor::zeros(&[3, 1, 3, 3]));
        assert!(t.conv2d(x, w, None, 1, 1).is_err());
        let w = t.leaf(Tensor::zeros(&[3, 2, 3, 3]));
        assert!(t.conv2d(x, w, None, 3, 1).is_err());
    }

    #[test]
    fn clamp_boundary_passes_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new(vec![4], vec![-1.0, 0.0, 0.5, 2.0]).unwrap());
        let c = t.clamp(x, 0.0, 1.0);
        let y = t.sum(c);
        assert_eq!(t.backward(y).unwrap().wrt(x).data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn scalar_broadcast_mul() {
        let mut t = Tape::new();
        let a = t.leaf(s(2.0));
        let v = t.leaf(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let p = t.mul(a, v).unwrap();
        let y = t.sum(p);
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(a).item(), 6.0);
        assert_eq!(g.wrt(v).data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn conv_identity_kernel() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let w = t.leaf(Tensor::new(vec![1, 1, 3, 3], k).unwrap());
        let b = t.leaf(Tensor::new(vec![1], vec![0.5]).unwrap());
        let y = t.conv2d(x, w, Some(b), 1, 1).unwrap();
        assert_eq!(t.value(y).data(), &[1.5, 2.5, 3.5, 4.5]);
        let y2 = t.conv2d(x, w, None, 2, 1).unwrap();
        assert_eq!(t.value(y2).shape(), &[1, 1, 1, 1]);
    }

    #[test]
    fn softplus_is_stable() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new(vec![3], vec![-800.0, 0.0, 800.0]).unwrap());
        let y = t.softplus(x);
        let v = t.value(y).data();
        assert!(v[0] >= 0.0 && v[0] < 1e-300);
        assert!((v[1] - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(v[2], 800.0);
    }
}

//! A small reverse-mode automatic differentiation engine.
//!
//! Values are dense row-major [`Tensor`]s. Feature maps use the
//! channel-major layout `[C, N, H, W]` where `N` enumerates every view of
//! every light field in the batch, ordered `(b, u, v)`. Keeping channels
//! outermost makes each convolution a single matrix product over all views.
//!
//! A [`Var`] is a reference-counted graph node. Nodes that do not depend on
//! any gradient-requiring leaf drop their parents immediately, so inference
//! without gradients keeps no graph alive. Everything runs on the calling
//! thread in a fixed order, so results are bit-reproducible.

mod conv;
mod upsample;

use std::collections::{HashMap, HashSet};
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};
use std::rc::Rc;

use num_traits::FromPrimitive;

pub use conv::AngularGrid;
use conv::{AngularGeom, ConvGeom};

use crate::error::{Error, Result};

/// Scalar types the engine runs on.
pub trait Float:
    num_traits::Float
    + FromPrimitive
    + Default
    + Debug
    + Display
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to every engine float")
    }

    /// `self * a + b` with a single rounding.
    fn fused(self, a: Self, b: Self) -> Self;
}

impl Float for f32 {
    #[inline(always)]
    fn fused(self, a: Self, b: Self) -> Self {
        f32::mul_add(self, a, b)
    }
}

impl Float for f64 {
    #[inline(always)]
    fn fused(self, a: Self, b: Self) -> Self {
        f64::mul_add(self, a, b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Float> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let want: usize = shape.iter().product();
        if want != data.len() {
            return Err(Error::size(format!(
                "shape {shape:?} needs {want} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `[C, N, H, W]` dimensions of a feature map.
    pub fn dims4(&self) -> Result<[usize; 4]> {
        match self.shape[..] {
            [c, n, h, w] => Ok([c, n, h, w]),
            _ => Err(Error::size(format!(
                "expected a 4-d tensor, got {:?}",
                self.shape
            ))),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert_eq!(self.shape, other.shape);
        Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, &b)| *a += b);
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |a, &b| a + b)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |a, &b| a.max(b.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |a, (&x, &y)| a.max((x - y).abs()))
    }

    pub fn cast<U: Float>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&x| U::of(x.to_f64().expect("finite float")))
                .collect(),
        }
    }

    /// Channel slice `[c0, c1)` of a `[C, N, H, W]` tensor.
    pub fn channels(&self, c0: usize, c1: usize) -> Result<Self> {
        let [c, n, h, w] = self.dims4()?;
        if c0 > c1 || c1 > c {
            return Err(Error::bounds(format!("channels {c0}..{c1} of {c}")));
        }
        let plane = n * h * w;
        Ok(Self {
            shape: vec![c1 - c0, n, h, w],
            data: self.data[c0 * plane..c1 * plane].to_vec(),
        })
    }
}

enum Op<T: Float> {
    Add(Var<T>, Var<T>),
    Sub(Var<T>, Var<T>),
    Scale(Var<T>, T),
    LeakyRelu(Var<T>, T),
    Concat(Vec<Var<T>>),
    Conv2d {
        x: Var<T>,
        w: Var<T>,
        b: Option<Var<T>>,
        geom: ConvGeom,
    },
    Angular {
        x: Var<T>,
        w: Var<T>,
        b: Option<Var<T>>,
        geom: AngularGeom,
    },
    Upsample {
        x: Var<T>,
        factor: usize,
    },
    PadEdge {
        x: Var<T>,
        pad: usize,
    },
    L1 {
        pred: Var<T>,
        target: Tensor<T>,
    },
    Sum(Var<T>),
}

impl<T: Float> Op<T> {
    fn parents(&self) -> Vec<&Var<T>> {
        match self {
            Op::Add(a, b) | Op::Sub(a, b) => vec![a, b],
            Op::Scale(a, _) | Op::LeakyRelu(a, _) | Op::Sum(a) => vec![a],
            Op::Concat(xs) => xs.iter().collect(),
            Op::Conv2d { x, w, b, .. } | Op::Angular { x, w, b, .. } => {
                let mut v = vec![x, w];
                v.extend(b.iter());
                v
            }
            Op::Upsample { x, .. } | Op::PadEdge { x, .. } => vec![x],
            Op::L1 { pred, .. } => vec![pred],
        }
    }
}

struct Node<T: Float> {
    value: Tensor<T>,
    op: Option<Op<T>>,
    requires_grad: bool,
    param: Option<usize>,
}

/// A value in the computation graph.
pub struct Var<T: Float>(Rc<Node<T>>);

impl<T: Float> Clone for Var<T> {
    fn clone(&self) -> Self {
        Var(Rc::clone(&self.0))
    }
}

impl<T: Float> Debug for Var<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("shape", &self.0.value.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("param", &self.0.param)
            .finish()
    }
}

impl<T: Float> Var<T> {
    /// A value that never receives gradients.
    pub fn constant(value: Tensor<T>) -> Self {
        Var(Rc::new(Node {
            value,
            op: None,
            requires_grad: false,
            param: None,
        }))
    }

    /// A leaf that collects gradients.
    pub fn leaf(value: Tensor<T>) -> Self {
        Var(Rc::new(Node {
            value,
            op: None,
            requires_grad: true,
            param: None,
        }))
    }

    /// A trainable parameter leaf identified by its index in a parameter store.
    pub fn param(id: usize, value: Tensor<T>, trainable: bool) -> Self {
        Var(Rc::new(Node {
            value,
            op: None,
            requires_grad: trainable,
            param: Some(id),
        }))
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.value.shape
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    fn key(&self) -> usize {
        Rc::as_ptr(&self.0) as usize
    }

    fn from_op(value: Tensor<T>, op: Op<T>) -> Self {
        let requires_grad = op.parents().iter().any(|p| p.requires_grad());
        Var(Rc::new(Node {
            value,
            op: requires_grad.then_some(op),
            requires_grad,
            param: None,
        }))
    }

    fn same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::size(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other, "add")?;
        let v = self.value().zip_map(other.value(), |a, b| a + b);
        Ok(Self::from_op(v, Op::Add(self.clone(), other.clone())))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other, "sub")?;
        let v = self.value().zip_map(other.value(), |a, b| a - b);
        Ok(Self::from_op(v, Op::Sub(self.clone(), other.clone())))
    }

    pub fn scale(&self, k: T) -> Self {
        Self::from_op(self.value().map(|a| a * k), Op::Scale(self.clone(), k))
    }

    pub fn leaky_relu(&self, slope: T) -> Self {
        let v = self
            .value()
            .map(|a| if a > T::zero() { a } else { a * slope });
        Self::from_op(v, Op::LeakyRelu(self.clone(), slope))
    }

    /// Concatenates `[C_i, N, H, W]` tensors along channels.
    pub fn concat(parts: &[Var<T>]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::size("concat of nothing"))?;
        let [_, n, h, w] = first.value().dims4()?;
        let mut c_total = 0;
        for p in parts {
            let [c, pn, ph, pw] = p.value().dims4()?;
            if (pn, ph, pw) != (n, h, w) {
                return Err(Error::size(format!(
                    "concat: {:?} does not match {:?}",
                    p.shape(),
                    first.shape()
                )));
            }
            c_total += c;
        }
        let mut data = Vec::with_capacity(c_total * n * h * w);
        for p in parts {
            data.extend_from_slice(p.value().data());
        }
        let v = Tensor {
            shape: vec![c_total, n, h, w],
            data,
        };
        Ok(Self::from_op(v, Op::Concat(parts.to_vec())))
    }

    /// 2-D convolution of every view. `w` is `[Cout, Cin, kh, kw]`, `b` is `[Cout]`.
    pub fn conv2d(
        &self,
        w: &Var<T>,
        b: Option<&Var<T>>,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let geom = ConvGeom::new(self.value().dims4()?, w.value().dims4()?, stride, pad)
            .map_err(Error::Size)?;
        self.conv2d_with(w, b, geom)
    }

    /// [`Var::conv2d`] with edge-replicating padding, the same as
    /// `self.pad_edge(pad)?.conv2d(w, b, stride, 0)` without the padded copy.
    pub fn conv2d_edge(
        &self,
        w: &Var<T>,
        b: Option<&Var<T>>,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let geom = ConvGeom::new(self.value().dims4()?, w.value().dims4()?, stride, pad)
            .map_err(Error::Size)?;
        self.conv2d_with(w, b, geom.edge_padded())
    }

    fn conv2d_with(&self, w: &Var<T>, b: Option<&Var<T>>, geom: ConvGeom) -> Result<Self> {
        if let Some(b) = b {
            if b.shape() != [geom.cout] {
                return Err(Error::size(format!(
                    "bias shape {:?} for {} outputs",
                    b.shape(),
                    geom.cout
                )));
            }
        }
        let out = conv::conv2d_forward(
            &geom,
            self.value().data(),
            w.value().data(),
            b.map(|b| b.value().data()),
        );
        let v = Tensor {
            shape: vec![geom.cout, geom.n, geom.ho, geom.wo],
            data: out,
        };
        Ok(Self::from_op(
            v,
            Op::Conv2d {
                x: self.clone(),
                w: w.clone(),
                b: b.cloned(),
                geom,
            },
        ))
    }

    /// 3x3 convolution across the angular grid at every pixel, zero-padded
    /// at the grid border. `w` is `[Cout, Cin, 3, 3]` indexed `(du, dv)`.
    pub fn angular_conv(&self, w: &Var<T>, b: Option<&Var<T>>, grid: AngularGrid) -> Result<Self> {
        let [cin, n, h, wd] = self.value().dims4()?;
        let [cout, wcin, kh, kw] = w.value().dims4()?;
        if wcin != cin || kh != 3 || kw != 3 {
            return Err(Error::size(format!(
                "angular kernel {:?} does not fit {cin} input channels",
                w.shape()
            )));
        }
        if grid.views() == 0 || n % grid.views() != 0 {
            return Err(Error::size(format!(
                "{n} views do not form whole {}x{} grids",
                grid.u, grid.v
            )));
        }
        if let Some(b) = b {
            if b.shape() != [cout] {
                return Err(Error::size(format!(
                    "bias shape {:?} for {cout} outputs",
                    b.shape()
                )));
            }
        }
        let geom = AngularGeom {
            cin,
            cout,
            batch: n / grid.views(),
            grid,
            plane: h * wd,
        };
        let out = conv::angular_forward(
            &geom,
            self.value().data(),
            w.value().data(),
            b.map(|b| b.value().data()),
        );
        let v = Tensor {
            shape: vec![cout, n, h, wd],
            data: out,
        };
        Ok(Self::from_op(
            v,
            Op::Angular {
                x: self.clone(),
                w: w.clone(),
                b: b.cloned(),
                geom,
            },
        ))
    }

    /// Bilinear upsampling of every plane by an integer factor.
    pub fn upsample(&self, factor: usize) -> Result<Self> {
        let [c, n, h, w] = self.value().dims4()?;
        if factor == 0 {
            return Err(Error::size("upsample factor must be positive"));
        }
        let out = upsample::upsample_forward(self.value().data(), c * n, h, w, factor);
        let v = Tensor {
            shape: vec![c, n, h * factor, w * factor],
            data: out,
        };
        Ok(Self::from_op(
            v,
            Op::Upsample {
                x: self.clone(),
                factor,
            },
        ))
    }

    /// Pads every plane by `pad` on each side, repeating the edge pixels.
    pub fn pad_edge(&self, pad: usize) -> Result<Self> {
        let [c, n, h, w] = self.value().dims4()?;
        if h == 0 || w == 0 {
            return Err(Error::size("cannot edge-pad an empty plane"));
        }
        let out = upsample::pad_edge_forward(self.value().data(), c * n, h, w, pad);
        let v = Tensor {
            shape: vec![c, n, h + 2 * pad, w + 2 * pad],
            data: out,
        };
        Ok(Self::from_op(
            v,
            Op::PadEdge {
                x: self.clone(),
                pad,
            },
        ))
    }

    /// Mean absolute error against a fixed target.
    pub fn l1_loss(&self, target: &Tensor<T>) -> Result<Self> {
        if self.shape() != target.shape() {
            return Err(Error::size(format!(
                "l1: prediction {:?} vs target {:?}",
                self.shape(),
                target.shape()
            )));
        }
        let n = T::of(target.len() as f64);
        let total = self
            .value()
            .data()
            .iter()
            .zip(target.data())
            .fold(T::zero(), |acc, (&p, &t)| acc + (p - t).abs());
        Ok(Self::from_op(
            Tensor::scalar(total / n),
            Op::L1 {
                pred: self.clone(),
                target: target.clone(),
            },
        ))
    }

    pub fn sum(&self) -> Self {
        Self::from_op(Tensor::scalar(self.value().sum()), Op::Sum(self.clone()))
    }

    /// Gradients of this scalar with respect to every leaf it depends on.
    pub fn backward(&self) -> Result<Gradients<T>> {
        if self.value().len() != 1 {
            return Err(Error::size(format!(
                "backward needs a scalar, got {:?}",
                self.shape()
            )));
        }
        let order = self.topo_order();
        let mut pending: HashMap<usize, Tensor<T>> = HashMap::new();
        pending.insert(self.key(), Tensor::full(self.shape(), T::one()));
        let mut grads = Gradients {
            params: HashMap::new(),
            leaves: HashMap::new(),
        };
        for var in order.iter().rev() {
            let Some(g) = pending.remove(&var.key()) else {
                continue;
            };
            match &var.0.op {
                Some(op) => propagate(op, &g, &mut pending),
                None => {
                    if let Some(id) = var.0.param {
                        grads.params.insert(id, g);
                    } else {
                        grads.leaves.insert(var.key(), g);
                    }
                }
            }
        }
        Ok(grads)
    }

    /// Gradient-requiring nodes in dependency order (parents first).
    fn topo_order(&self) -> Vec<Var<T>> {
        let mut order = Vec::new();
        let mut seen = HashSet::new();
        let mut stack: Vec<(Var<T>, bool)> = vec![(self.clone(), false)];
        while let Some((var, expanded)) = stack.pop() {
            if expanded {
                order.push(var);
                continue;
            }
            if !var.requires_grad() || !seen.insert(var.key()) {
                continue;
            }
            stack.push((var.clone(), true));
            if let Some(op) = &var.0.op {
                for p in op.parents().into_iter().rev() {
                    if p.requires_grad() && !seen.contains(&p.key()) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        order
    }
}

fn accumulate<T: Float>(pending: &mut HashMap<usize, Tensor<T>>, var: &Var<T>, grad: Tensor<T>) {
    if !var.requires_grad() {
        return;
    }
    match pending.get_mut(&var.key()) {
        Some(acc) => acc.add_assign(&grad),
        None => {
            pending.insert(var.key(), grad);
        }
    }
}

fn propagate<T: Float>(op: &Op<T>, g: &Tensor<T>, pending: &mut HashMap<usize, Tensor<T>>) {
    match op {
        Op::Add(a, b) => {
            accumulate(pending, a, g.clone());
            accumulate(pending, b, g.clone());
        }
        Op::Sub(a, b) => {
            accumulate(pending, a, g.clone());
            if b.requires_grad() {
                accumulate(pending, b, g.map(|x| -x));
            }
        }
        Op::Scale(a, k) => accumulate(pending, a, g.map(|x| x * *k)),
        Op::LeakyRelu(a, slope) => {
            let d = g.zip_map(
                a.value(),
                |gv, x| if x > T::zero() { gv } else { gv * *slope },
            );
            accumulate(pending, a, d);
        }
        Op::Concat(parts) => {
            let mut c0 = 0;
            for p in parts {
                let c = p.shape()[0];
                if p.requires_grad() {
                    accumulate(pending, p, g.channels(c0, c0 + c).expect("concat layout"));
                }
                c0 += c;
            }
        }
        Op::Conv2d { x, w, b, geom } => {
            let need = (
                x.requires_grad(),
                w.requires_grad(),
                b.as_ref().is_some_and(|b| b.requires_grad()),
            );
            let grads =
                conv::conv2d_backward(geom, x.value().data(), w.value().data(), g.data(), need);
            deliver(pending, x, w, b.as_ref(), grads);
        }
        Op::Angular { x, w, b, geom } => {
            let need = (
                x.requires_grad(),
                w.requires_grad(),
                b.as_ref().is_some_and(|b| b.requires_grad()),
            );
            let grads =
                conv::angular_backward(geom, x.value().data(), w.value().data(), g.data(), need);
            deliver(pending, x, w, b.as_ref(), grads);
        }
        Op::Upsample { x, factor } => {
            let [c, n, h, w] = x.value().dims4().expect("upsample input is 4-d");
            let dx = upsample::upsample_backward(g.data(), c * n, h, w, *factor);
            accumulate(
                pending,
                x,
                Tensor {
                    shape: x.shape().to_vec(),
                    data: dx,
                },
            );
        }
        Op::PadEdge { x, pad } => {
            let [c, n, h, w] = x.value().dims4().expect("pad input is 4-d");
            let dx = upsample::pad_edge_backward(g.data(), c * n, h, w, *pad);
            accumulate(
                pending,
                x,
                Tensor {
                    shape: x.shape().to_vec(),
                    data: dx,
                },
            );
        }
        Op::L1 { pred, target } => {
            let scale = g.data()[0] / T::of(target.len() as f64);
            let d = pred.value().zip_map(target, |p, t| {
                if p > t {
                    scale
                } else if p < t {
                    -scale
                } else {
                    T::zero()
                }
            });
            accumulate(pending, pred, d);
        }
        Op::Sum(a) => accumulate(pending, a, Tensor::full(a.shape(), g.data()[0])),
    }
}

fn deliver<T: Float>(
    pending: &mut HashMap<usize, Tensor<T>>,
    x: &Var<T>,
    w: &Var<T>,
    b: Option<&Var<T>>,
    grads: conv::ConvGrads<T>,
) {
    if let Some(dx) = grads.dx {
        accumulate(
            pending,
            x,
            Tensor {
                shape: x.shape().to_vec(),
                data: dx,
            },
        );
    }
    if let Some(dw) = grads.dw {
        accumulate(
            pending,
            w,
            Tensor {
                shape: w.shape().to_vec(),
                data: dw,
            },
        );
    }
    if let (Some(b), Some(db)) = (b, grads.db) {
        accumulate(
            pending,
            b,
            Tensor {
                shape: b.shape().to_vec(),
                data: db,
            },
        );
    }
}

/// Result of [`Var::backward`].
pub struct Gradients<T> {
    params: HashMap<usize, Tensor<T>>,
    leaves: HashMap<usize, Tensor<T>>,
}

impl<T: Float> Gradients<T> {
    /// Gradient of a parameter by store index; `None` if it did not
    /// influence the output.
    pub fn param(&self, id: usize) -> Option<&Tensor<T>> {
        self.params.get(&id)
    }

    /// Gradient of a non-parameter leaf that is still alive.
    pub fn wrt(&self, var: &Var<T>) -> Option<&Tensor<T>> {
        match var.0.param {
            Some(id) => self.params.get(&id),
            None => self.leaves.get(&var.key()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], seed: u64) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|i| ((((i as u64 + 1) * 2654435761 + seed * 40503) % 2000) as f64 / 1000.0) - 1.0)
            .collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    /// Central-difference check of d(sum(f(x)))/dx for every input element.
    fn check_grad(f: impl Fn(&Var<f64>) -> Var<f64>, x0: Tensor<f64>) {
        let x = Var::leaf(x0.clone());
        let g = f(&x).sum().backward().unwrap();
        let analytic = g.wrt(&x).unwrap().clone();
        let h = 1e-6;
        for i in 0..x0.len() {
            let mut p = x0.clone();
            p.data_mut()[i] += h;
            let mut m = x0.clone();
            m.data_mut()[i] -= h;
            let fp = f(&Var::constant(p)).value().sum();
            let fm = f(&Var::constant(m)).value().sum();
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic.data()[i];
            assert!(
                (a - numeric).abs() < 1e-6 * (1.0 + numeric.abs()),
                "elem {i}: {a} vs {numeric}"
            );
        }
    }

    #[test]
    fn elementwise_and_structural_grads() {
        let other = Var::constant(t(&[2, 3, 2, 2], 9));
        check_grad(
            |x| x.add(&other).unwrap().leaky_relu(0.1).scale(3.0),
            t(&[2, 3, 2, 2], 1),
        );
        check_grad(
            |x| other.sub(x).unwrap().leaky_relu(0.2),
            t(&[2, 3, 2, 2], 2),
        );
        check_grad(
            |x| {
                Var::concat(&[x.scale(2.0), other.clone(), x.clone()])
                    .unwrap()
                    .upsample(2)
                    .unwrap()
            },
            t(&[2, 3, 2, 2], 3),
        );
    }

    #[test]
    fn conv_grads_wrt_input_and_weights() {
        let w = Var::constant(t(&[3, 2, 4, 4], 4));
        let b = Var::constant(t(&[3], 5));
        check_grad(
            |x| x.conv2d(&w, Some(&b), 2, 1).unwrap().leaky_relu(0.1),
            t(&[2, 2, 6, 4], 6),
        );
        let x = Var::constant(t(&[2, 2, 5, 5], 7));
        check_grad(
            |w| x.conv2d(w, None, 1, 1).unwrap().leaky_relu(0.1),
            t(&[3, 2, 3, 3], 8),
        );
    }

    #[test]
    fn edge_padded_conv_matches_explicit_padding() {
        for &(k, stride, pad) in &[(4, 2, 1), (3, 1, 1), (3, 2, 2), (5, 1, 2)] {
            let w = Var::leaf(t(&[3, 2, k, k], 15));
            let x = Var::leaf(t(&[2, 3, 8, 6], 16));
            let d = Var::constant(t(
                &[
                    3,
                    3,
                    (8 + 2 * pad - k) / stride + 1,
                    (6 + 2 * pad - k) / stride + 1,
                ],
                17,
            ));
            let fused = x.conv2d_edge(&w, None, stride, pad).unwrap();
            let explicit = x
                .pad_edge(pad)
                .unwrap()
                .conv2d(&w, None, stride, 0)
                .unwrap();
            assert_eq!(fused.value().data(), explicit.value().data());
            let gf = fused
                .sub(&d)
                .unwrap()
                .leaky_relu(0.1)
                .sum()
                .backward()
                .unwrap();
            let ge = explicit
                .sub(&d)
                .unwrap()
                .leaky_relu(0.1)
                .sum()
                .backward()
                .unwrap();
            for v in [&x, &w] {
                for (a, b) in gf
                    .wrt(v)
                    .unwrap()
                    .data()
                    .iter()
                    .zip(ge.wrt(v).unwrap().data())
                {
                    assert!((a - b).abs() < 1e-12, "k{k} s{stride} p{pad}: {a} vs {b}");
                }
            }
        }
        let w = Var::constant(t(&[3, 2, 4, 4], 18));
        check_grad(
            |x| x.conv2d_edge(&w, None, 2, 1).unwrap().leaky_relu(0.1),
            t(&[2, 2, 6, 4], 19),
        );
    }

    #[test]
    fn angular_grads() {
        let grid = AngularGrid { u: 3, v: 2 };
        let w = Var::constant(t(&[2, 2, 3, 3], 10));
        check_grad(
            |x| x.angular_conv(&w, None, grid).unwrap().leaky_relu(0.1),
            t(&[2, 12, 2, 3], 11),
        );
        let x = Var::constant(t(&[2, 6, 2, 2], 12));
        let b = Var::constant(t(&[2], 13));
        check_grad(
            |w| x.angular_conv(w, Some(&b), grid).unwrap().leaky_relu(0.1),
            t(&[2, 2, 3, 3], 14),
        );
    }

    #[test]
    fn l1_values_and_grad() {
        let pred = Var::leaf(Tensor::zeros(&[1, 1, 2, 2]));
        let ones = Tensor::full(&[1, 1, 2, 2], 1.0f64);
        let loss = pred.l1_loss(&ones).unwrap();
        assert_eq!(loss.value().data(), &[1.0]);
        let g = loss.backward().unwrap();
        assert_eq!(g.wrt(&pred).unwrap().data(), &[-0.25; 4]);
    }

    #[test]
    fn shared_subexpressions_accumulate() {
        let x = Var::leaf(Tensor::full(&[1, 1, 1, 1], 2.0f64));
        let y = x.add(&x).unwrap().add(&x.scale(3.0)).unwrap();
        let g = y.sum().backward().unwrap();
        assert_eq!(g.wrt(&x).unwrap().data(), &[5.0]);
    }

    #[test]
    fn constants_record_no_graph() {
        let x = Var::constant(Tensor::full(&[1, 1, 2, 2], 1.0f32));
        let y = x.scale(2.0).upsample(2).unwrap();
        assert!(!y.requires_grad());
        assert!(y.0.op.is_none());
    }

    #[test]
    fn shape_errors_are_reported() {
        let a = Var::constant(Tensor::<f32>::zeros(&[1, 1, 2, 2]));
        let b = Var::constant(Tensor::<f32>::zeros(&[1, 1, 2, 3]));
        assert!(matches!(a.add(&b), Err(Error::Size(_))));
        assert!(matches!(Var::concat(&[a.clone(), b]), Err(Error::Size(_))));
        let w = Var::constant(Tensor::<f32>::zeros(&[1, 2, 3, 3]));
        assert!(matches!(a.conv2d(&w, None, 1, 1), Err(Error::Size(_))));
        let grid = AngularGrid { u: 2, v: 2 };
        let w = Var::constant(Tensor::<f32>::zeros(&[1, 1, 3, 3]));
        let odd = Var::constant(Tensor::<f32>::zeros(&[1, 3, 2, 2]));
        assert!(matches!(
            odd.angular_conv(&w, None, grid),
            Err(Error::Size(_))
        ));
    }
}

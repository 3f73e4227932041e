//! Reverse-mode automatic differentiation over whole tensors.
//!
//! A [`GradTape`] records every operation as a node holding its forward value
//! and the ids of its inputs. Ids are handed out in creation order, so any
//! node's inputs always have smaller ids; [`GradTape::backward`] walks ids in
//! reverse once, accumulating vector-Jacobian products into each input.
//!
//! Two deliberate non-smooth conventions, matching how the model trains:
//! top-k selection masks enter through [`GradTape::mul_mask`] where the mask
//! is a constant (straight-through: gradients flow only to surviving
//! entries), and [`GradTape::irfft_re`] treats the imaginary plane of the
//! spectrum as a constant, differentiating only through the real plane.

use alloc::format;
use alloc::vec::Vec;

use crate::fft;
use crate::ops;
use crate::tensor::{dim_err, ComplexTensor, Error, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddBias { input: NodeId, bias: NodeId },
    MatMul(NodeId, NodeId),
    Bmm(NodeId, NodeId),
    SwapAxes12(NodeId),
    Reshape(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    SoftmaxLastDim(NodeId),
    MulMask { input: NodeId, mask: Tensor },
    ScaleByScalar { input: NodeId, scalar: NodeId },
    SubConst { input: NodeId },
    IrfftRe { re: NodeId, im: Tensor, series_len: usize },
    SumAll(NodeId),
    MeanAll(NodeId),
}

struct Node {
    value: Tensor,
    op: Op,
}

pub struct GradTape {
    nodes: Vec<Node>,
}

impl Default for GradTape {
    fn default() -> Self {
        Self::new()
    }
}

impl GradTape {
    pub fn new() -> Self {
        GradTape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Records an input or parameter. Leaves are where gradients land.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = ops::add(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = ops::sub(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = ops::mul(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, input: NodeId, factor: f64) -> NodeId {
        let v = ops::scale(self.value(input), factor);
        self.push(v, Op::Scale(input, factor))
    }

    pub fn add_bias(&mut self, input: NodeId, bias: NodeId) -> Result<NodeId> {
        let v = ops::add_bias(self.value(input), self.value(bias))?;
        Ok(self.push(v, Op::AddBias { input, bias }))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = ops::matmul(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn bmm(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = ops::bmm(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::Bmm(a, b)))
    }

    pub fn swap_axes_12(&mut self, input: NodeId) -> Result<NodeId> {
        let v = ops::swap_axes_12(self.value(input))?;
        Ok(self.push(v, Op::SwapAxes12(input)))
    }

    pub fn reshape(&mut self, input: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let v = self.value(input).reshape(shape)?;
        Ok(self.push(v, Op::Reshape(input)))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let v = ops::relu(self.value(input));
        self.push(v, Op::Relu(input))
    }

    pub fn sigmoid(&mut self, input: NodeId) -> NodeId {
        let v = ops::sigmoid(self.value(input));
        self.push(v, Op::Sigmoid(input))
    }

    pub fn softmax_lastdim(&mut self, input: NodeId) -> Result<NodeId> {
        let v = ops::softmax_lastdim(self.value(input))?;
        Ok(self.push(v, Op::SoftmaxLastDim(input)))
    }

    /// Multiplies by a constant 0/1 mask. The mask is not differentiated
    /// through; entries it zeroes receive zero gradient.
    pub fn mul_mask(&mut self, input: NodeId, mask: Tensor) -> Result<NodeId> {
        let v = ops::mul(self.value(input), &mask)?;
        Ok(self.push(v, Op::MulMask { input, mask }))
    }

    /// Multiplies a tensor by a scalar node (shape `[1]`), e.g. a learned gate.
    pub fn scale_by_scalar(&mut self, input: NodeId, scalar: NodeId) -> Result<NodeId> {
        let s = self.value(scalar);
        if s.len() != 1 {
            return dim_err(format!(
                "scale_by_scalar expects a [1] scalar node, got {:?}",
                s.shape()
            ));
        }
        let factor = s.data()[0];
        let v = ops::scale(self.value(input), factor);
        Ok(self.push(v, Op::ScaleByScalar { input, scalar }))
    }

    /// Subtracts a constant tensor (e.g. the regression target).
    pub fn sub_const(&mut self, input: NodeId, value: Tensor) -> Result<NodeId> {
        let v = ops::sub(self.value(input), &value)?;
        Ok(self.push(v, Op::SubConst { input }))
    }

    /// Inverse rfft along time where only the real spectrum plane `re` is a
    /// tape node; the imaginary plane is a captured constant. Input is
    /// `[B, F, C]`, output `[B, series_len, C]`.
    pub fn irfft_re(&mut self, re: NodeId, im: Tensor, series_len: usize) -> Result<NodeId> {
        let re_val = self.value(re);
        if re_val.shape() != im.shape() {
            return dim_err(format!(
                "spectrum planes differ in shape: {:?} vs {:?}",
                re_val.shape(),
                im.shape()
            ));
        }
        let spec = ComplexTensor::new(
            re_val.shape().to_vec(),
            re_val.data().to_vec(),
            im.data().to_vec(),
        )?;
        let v = fft::irfft_time(&spec, series_len)?;
        Ok(self.push(v, Op::IrfftRe { re, im, series_len }))
    }

    pub fn sum_all(&mut self, input: NodeId) -> NodeId {
        let v = Tensor::scalar(ops::sum_all(self.value(input)));
        self.push(v, Op::SumAll(input))
    }

    pub fn mean_all(&mut self, input: NodeId) -> NodeId {
        let v = Tensor::scalar(ops::mean_all(self.value(input)));
        self.push(v, Op::MeanAll(input))
    }

    /// Accumulates d(loss)/d(node) for every node at or before `loss`.
    /// `loss` must be scalar-shaped. Nodes the loss does not depend on keep a
    /// zero adjoint (represented as absent in [`Gradients`]).
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::new();
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            // Inputs always precede their consumers, so taking the adjoint
            // out while accumulating into strictly smaller ids is sound.
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, ops::scale(&g, -1.0));
                }
                Op::Mul(a, b) => {
                    let da = ops::mul(&g, self.value(*b))?;
                    let db = ops::mul(&g, self.value(*a))?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Scale(a, factor) => {
                    accumulate(&mut grads, *a, ops::scale(&g, *factor));
                }
                Op::AddBias { input, bias } => {
                    accumulate(&mut grads, *bias, ops::bias_grad(&g));
                    accumulate(&mut grads, *input, g.clone());
                }
                Op::MatMul(a, b) => {
                    let da = ops::matmul_nt(&g, self.value(*b))?;
                    let db = ops::matmul_tn(self.value(*a), &g)?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Bmm(a, b) => {
                    let da = ops::bmm_nt(&g, self.value(*b))?;
                    let db = ops::bmm_tn(self.value(*a), &g)?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::SwapAxes12(a) => {
                    accumulate(&mut grads, *a, ops::swap_axes_12(&g)?);
                }
                Op::Reshape(a) => {
                    let back = g.reshape(self.value(*a).shape().to_vec())?;
                    accumulate(&mut grads, *a, back);
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let data = g
                        .data()
                        .iter()
                        .zip(x.data())
                        .map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *a, Tensor::new(x.shape().to_vec(), data)?);
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[i].value;
                    let data = g
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(&gv, &yv)| gv * yv * (1.0 - yv))
                        .collect();
                    accumulate(&mut grads, *a, Tensor::new(y.shape().to_vec(), data)?);
                }
                Op::SoftmaxLastDim(a) => {
                    // dX = y * (g - sum(g * y)) per row.
                    let y = &self.nodes[i].value;
                    let n = *y.shape().last().expect("softmax output has an axis");
                    let mut dx = Tensor::zeros(y.shape().to_vec());
                    for ((grow, yrow), orow) in g
                        .data()
                        .chunks_exact(n)
                        .zip(y.data().chunks_exact(n))
                        .zip(dx.data_mut().chunks_exact_mut(n))
                    {
                        let dot: f64 = grow.iter().zip(yrow).map(|(gv, yv)| gv * yv).sum();
                        for ((o, &gv), &yv) in orow.iter_mut().zip(grow).zip(yrow) {
                            *o = yv * (gv - dot);
                        }
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::MulMask { input, mask } => {
                    accumulate(&mut grads, *input, ops::mul(&g, mask)?);
                }
                Op::ScaleByScalar { input, scalar } => {
                    let factor = self.value(*scalar).data()[0];
                    accumulate(&mut grads, *input, ops::scale(&g, factor));
                    let dot: f64 = g
                        .data()
                        .iter()
                        .zip(self.value(*input).data())
                        .map(|(gv, xv)| gv * xv)
                        .sum();
                    accumulate(&mut grads, *scalar, Tensor::scalar(dot));
                }
                Op::SubConst { input } => {
                    accumulate(&mut grads, *input, g.clone());
                }
                Op::IrfftRe {
                    re,
                    im,
                    series_len,
                } => {
                    // d/dRe[k] of sum_t g_t * irfft(...)_t is the real part
                    // of the forward transform of g, weighted 1/L at DC and
                    // Nyquist and 2/L at interior bins (Hermitian doubling).
                    let l = *series_len;
                    let spec_g = fft::rfft_time(&g)?;
                    let (mut dre, _) = spec_g.into_planes();
                    let f = fft::bin_count(l);
                    let c = *im.shape().last().expect("spectrum has a channel axis");
                    for (flat, v) in dre.data_mut().iter_mut().enumerate() {
                        let k = (flat / c) % f;
                        let interior = k != 0 && !(l % 2 == 0 && k == l / 2);
                        let w = if interior { 2.0 } else { 1.0 } / l as f64;
                        *v *= w;
                    }
                    accumulate(&mut grads, *re, dre);
                }
                Op::SumAll(a) => {
                    let x = self.value(*a);
                    accumulate(
                        &mut grads,
                        *a,
                        Tensor::full(x.shape().to_vec(), g.data()[0]),
                    );
                }
                Op::MeanAll(a) => {
                    let x = self.value(*a);
                    let w = g.data()[0] / x.len() as f64;
                    accumulate(&mut grads, *a, Tensor::full(x.shape().to_vec(), w));
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, contribution: Tensor) {
    match &mut grads[id.0] {
        Some(existing) => ops::add_in_place(existing, &contribution),
        slot @ None => *slot = Some(contribution),
    }
}

/// Adjoints produced by one backward pass, indexed by [`NodeId`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Adjoint of a node; `None` means the loss does not depend on it
    /// (an all-zero gradient).
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.index()).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.index()).and_then(|g| g.take())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use alloc::vec::Vec;

    fn random(shape: Vec<usize>, seed: u64) -> Tensor {
        let mut rng = Rng::from_seed(seed);
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
    }

    /// Central-difference gradient of `f` at `at`, one element at a time.
    fn fd_grad(f: &mut dyn FnMut(&Tensor) -> f64, at: &Tensor, h: f64) -> Tensor {
        let mut g = Tensor::zeros(at.shape().to_vec());
        let mut x = at.clone();
        for i in 0..at.len() {
            let orig = x.data()[i];
            x.data_mut()[i] = orig + h;
            let fp = f(&x);
            x.data_mut()[i] = orig - h;
            let fm = f(&x);
            x.data_mut()[i] = orig;
            g.data_mut()[i] = (fp - fm) / (2.0 * h);
        }
        g
    }

    fn max_rel(a: &Tensor, b: &Tensor) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    #[test]
    fn sum_of_leaf_has_unit_gradient() {
        let mut tape = GradTape::new();
        let p = tape.leaf(random(vec![3, 2], 1));
        let loss = tape.sum_all(p);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(p).unwrap(), &Tensor::full(vec![3, 2], 1.0));
    }

    #[test]
    fn quadratic_gradient_is_two_x() {
        let mut tape = GradTape::new();
        let p = tape.leaf(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let sq = tape.mul(p, p).unwrap();
        let loss = tape.sum_all(sq);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(p).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = GradTape::new();
        let p = tape.leaf(random(vec![2, 2], 2));
        assert!(matches!(tape.backward(p), Err(Error::Contract(_))));
    }

    #[test]
    fn unused_nodes_have_no_adjoint() {
        let mut tape = GradTape::new();
        let used = tape.leaf(random(vec![2], 3));
        let unused = tape.leaf(random(vec![2], 4));
        let loss = tape.sum_all(used);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(unused).is_none());
        assert!(grads.get(used).is_some());
    }

    /// Every differentiable op, checked against central differences through
    /// a mean-based scalar loss.
    #[test]
    fn per_op_gradients_match_finite_differences() {
        type Builder = fn(&mut GradTape, NodeId) -> NodeId;
        let cases: Vec<(&str, Vec<usize>, Builder)> = vec![
            ("relu", vec![3, 4], |t, x| {
                let y = t.relu(x);
                t.mean_all(y)
            }),
            ("sigmoid", vec![3, 4], |t, x| {
                let y = t.sigmoid(x);
                t.mean_all(y)
            }),
            ("softmax", vec![2, 5], |t, x| {
                let y = t.softmax_lastdim(x).unwrap();
                let sq = t.mul(y, y).unwrap();
                t.mean_all(sq)
            }),
            ("matmul_lhs", vec![3, 4], |t, x| {
                let w = t.leaf(random(vec![4, 2], 50));
                let y = t.matmul(x, w).unwrap();
                let sq = t.mul(y, y).unwrap();
                t.mean_all(sq)
            }),
            ("matmul_rhs", vec![4, 2], |t, x| {
                let a = t.leaf(random(vec![3, 4], 51));
                let y = t.matmul(a, x).unwrap();
                let sq = t.mul(y, y).unwrap();
                t.mean_all(sq)
            }),
            ("bmm", vec![2, 3, 4], |t, x| {
                let w = t.leaf(random(vec![2, 4, 2], 52));
                let y = t.bmm(x, w).unwrap();
                let sq = t.mul(y, y).unwrap();
                t.mean_all(sq)
            }),
            ("swap_axes", vec![2, 3, 4], |t, x| {
                let y = t.swap_axes_12(x).unwrap();
                let sq = t.mul(y, y).unwrap();
                t.mean_all(sq)
            }),
            ("reshape", vec![2, 6], |t, x| {
                let y = t.reshape(x, vec![3, 4]).unwrap();
                let sq = t.mul(y, y).unwrap();
                t.mean_all(sq)
            }),
            ("add_bias_input", vec![3, 4], |t, x| {
                let b = t.leaf(random(vec![4], 53));
                let y = t.add_bias(x, b).unwrap();
                let sq = t.mul(y, y).unwrap();
                t.mean_all(sq)
            }),
            ("add_bias_bias", vec![4], |t, x| {
                let a = t.leaf(random(vec![3, 4], 54));
                let y = t.add_bias(a, x).unwrap();
                let sq = t.mul(y, y).unwrap();
                t.mean_all(sq)
            }),
            ("mul_mask", vec![3, 4], |t, x| {
                let mask =
                    Tensor::new(vec![3, 4], (0..12).map(|i| (i % 3 == 0) as u64 as f64).collect())
                        .unwrap();
                let y = t.mul_mask(x, mask).unwrap();
                let sq = t.mul(y, y).unwrap();
                t.mean_all(sq)
            }),
            ("scale_by_scalar_input", vec![3, 4], |t, x| {
                let s = t.leaf(Tensor::scalar(0.7));
                let y = t.scale_by_scalar(x, s).unwrap();
                let sq = t.mul(y, y).unwrap();
                t.mean_all(sq)
            }),
            ("scale_by_scalar_scalar", vec![1], |t, x| {
                let a = t.leaf(random(vec![3, 4], 55));
                let y = t.scale_by_scalar(a, x).unwrap();
                let sq = t.mul(y, y).unwrap();
                t.mean_all(sq)
            }),
            ("sub_const", vec![3, 4], |t, x| {
                let y = t.sub_const(x, random(vec![3, 4], 56)).unwrap();
                let sq = t.mul(y, y).unwrap();
                t.mean_all(sq)
            }),
            ("scale", vec![3, 4], |t, x| {
                let y = t.scale(x, -1.7);
                let sq = t.mul(y, y).unwrap();
                t.mean_all(sq)
            }),
            ("irfft_re", vec![2, 5, 3], |t, x| {
                // 5 bins -> series length 8 (DC + 3 interior + Nyquist).
                let im = random(vec![2, 5, 3], 57);
                let y = t.irfft_re(x, im, 8).unwrap();
                let sq = t.mul(y, y).unwrap();
                t.mean_all(sq)
            }),
        ];

        for (name, shape, build) in cases {
            let at = random(shape, 60);
            let mut tape = GradTape::new();
            let x = tape.leaf(at.clone());
            let loss = build(&mut tape, x);
            let grads = tape.backward(loss).unwrap();
            let ad = grads.get(x).expect("loss depends on x").clone();

            let mut f = |v: &Tensor| {
                let mut t = GradTape::new();
                let x = t.leaf(v.clone());
                let loss = build(&mut t, x);
                t.value(loss).data()[0]
            };
            let fd = fd_grad(&mut f, &at, 1e-6);
            let err = max_rel(&ad, &fd);
            assert!(err < 1e-6, "{name}: max rel err {err}");
        }
    }

    #[test]
    fn fan_out_accumulates_both_paths() {
        // loss = mean(x*x) + mean(x) touches x twice.
        let at = random(vec![4], 70);
        let mut tape = GradTape::new();
        let x = tape.leaf(at.clone());
        let sq = tape.mul(x, x).unwrap();
        let m1 = tape.mean_all(sq);
        let m2 = tape.mean_all(x);
        let loss = tape.add(m1, m2).unwrap();
        let grads = tape.backward(loss).unwrap();
        let want: Vec<f64> = at.data().iter().map(|v| 2.0 * v / 4.0 + 0.25).collect();
        for (g, w) in grads.get(x).unwrap().data().iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }
}

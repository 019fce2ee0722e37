//! Reverse-mode differentiation over the handful of ops the flow needs.
//!
//! Values are batched: the leading dimension of every non-scalar node is the
//! sample index. Nodes are appended in evaluation order, so the node list is
//! already a topological order and the backward sweep is a single reverse
//! pass.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use super::layers::{conv2d_batch, conv2d_batch_backward, linear_batch, linear_batch_backward, ConvGeom};
use super::Tensor;
use crate::{Error, Result};

/// Handle to a node on a [`GradientTape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Identifies a trainable parameter array across tapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    Linear { x: usize, w: usize, b: usize },
    Conv { x: usize, k: usize, b: usize, geom: ConvGeom },
    Relu(usize),
    Exp(usize),
    Add(usize, usize),
    Mul(usize, usize),
    Affine { x: usize, scale: f64 },
    Gather { x: usize, index: Arc<[usize]> },
    Concat(usize, usize),
    SumPerSample(usize),
    SumAll(usize),
    StdNormalLogDensity(usize),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor<f64>,
    op: Op,
}

/// Records a computation from parameters and inputs to a scalar loss.
#[derive(Debug, Clone, Default)]
pub struct GradientTape {
    nodes: Vec<Node>,
}

/// `∂loss/∂p` for every parameter reachable from the loss.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    by_param: BTreeMap<ParamId, Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.by_param.get(&id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.by_param.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// Adds `other` into `self`, parameter by parameter.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (id, g) in &other.by_param {
            match self.by_param.get_mut(id) {
                Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                None => {
                    self.by_param.insert(*id, g.clone());
                }
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.by_param.values().flat_map(|g| g.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `−(l/2) ln 2π − ‖z‖²/2`.
///
/// Squares are summed in ascending order so that any permutation of `z`
/// yields bit-identical results.
pub(crate) fn std_normal_log_density(z: &[f64]) -> f64 {
    let mut sq: Vec<f64> = z.iter().map(|v| v * v).collect();
    sq.sort_by(f64::total_cmp);
    let ss: f64 = sq.iter().sum();
    -0.5 * z.len() as f64 * (2.0 * PI).ln() - 0.5 * ss
}

fn batch_of(t: &Tensor<f64>) -> usize {
    t.shape().first().copied().unwrap_or(1)
}

impl GradientTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<f64> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, i: usize) -> &Tensor<f64> {
        &self.nodes[i].value
    }

    /// Constant leaf; receives no gradient.
    pub fn input(&mut self, value: Tensor<f64>) -> Var {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, id: ParamId, value: Tensor<f64>) -> Var {
        self.push(value, Op::Param(id))
    }

    /// Batched dense layer: `x` is `[B, …]` (flattened per sample), `w` is
    /// `[m, n]`, `b` is `[m]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.val(x.0), self.val(w.0), self.val(b.0));
        let batch = batch_of(xv);
        let n = xv.numel() / batch.max(1);
        let &[m, wn] = wv.shape() else {
            return Err(Error::Dimension(format!("linear weight must be 2-D, got {:?}", wv.shape())));
        };
        if wn != n || bv.numel() != m {
            return Err(Error::Dimension(format!(
                "linear: input has {n} features per sample, weight is {m}×{wn}, bias has {}",
                bv.numel()
            )));
        }
        let out = linear_batch(xv.data(), batch, n, wv.data(), bv.data());
        let value = Tensor::new(vec![batch, m], out)?;
        Ok(self.push(value, Op::Linear { x: x.0, w: w.0, b: b.0 }))
    }

    /// Batched cross-correlation: `x` is `[B, C, H, W]`, `k` is
    /// `[OutC, C, kH, kW]`, `b` is `[OutC]`.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let (xv, kv, bv) = (self.val(x.0), self.val(k.0), self.val(b.0));
        let &[batch, c, h, w] = xv.shape() else {
            return Err(Error::Dimension(format!("conv2d input must be [B,C,H,W], got {:?}", xv.shape())));
        };
        let &[oc, ic, kh, kw] = kv.shape() else {
            return Err(Error::Dimension(format!("conv2d kernel must be 4-D, got {:?}", kv.shape())));
        };
        if ic != c || bv.numel() != oc {
            return Err(Error::Dimension(format!(
                "conv2d: input has {c} channels, kernel {:?}, bias {}",
                kv.shape(),
                bv.numel()
            )));
        }
        let geom = ConvGeom::new(c, h, w, oc, kh, kw, stride, padding)?;
        let out = conv2d_batch(xv.data(), batch, &geom, kv.data(), bv.data());
        let value = Tensor::new(vec![batch, oc, geom.out_h, geom.out_w], out)?;
        Ok(self.push(value, Op::Conv { x: x.0, k: k.0, b: b.0, geom }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.val(x.0);
        let data = xv.data().iter().map(|&v| v.max(0.0)).collect();
        let value = Tensor::new(xv.shape().to_vec(), data).expect("shape preserved");
        self.push(value, Op::Relu(x.0))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let xv = self.val(x.0);
        let data = xv.data().iter().map(|&v| v.exp()).collect();
        let value = Tensor::new(xv.shape().to_vec(), data).expect("shape preserved");
        self.push(value, Op::Exp(x.0))
    }

    fn zip_same(&self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor<f64>> {
        let (av, bv) = (self.val(a.0), self.val(b.0));
        if av.numel() != bv.numel() {
            return Err(Error::Dimension(format!("{what}: {:?} vs {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same(a, b, "add", |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a.0, b.0)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(value, Op::Mul(a.0, b.0)))
    }

    /// `scale · x + shift` with constant `scale` and `shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let xv = self.val(x.0);
        let data = xv.data().iter().map(|&v| scale * v + shift).collect();
        let value = Tensor::new(xv.shape().to_vec(), data).expect("shape preserved");
        self.push(value, Op::Affine { x: x.0, scale })
    }

    /// Per-sample gather: output feature `i` of every sample is input feature
    /// `index[i]` of the same sample. The result has shape
    /// `[B, sample_shape…]`.
    pub fn gather(&mut self, x: Var, index: Arc<[usize]>, sample_shape: &[usize]) -> Result<Var> {
        let xv = self.val(x.0);
        let batch = batch_of(xv);
        let n = xv.numel() / batch.max(1);
        if sample_shape.iter().product::<usize>() != index.len() || index.iter().any(|&i| i >= n) {
            return Err(Error::Dimension(format!(
                "gather: {} indices into {n} features, sample shape {sample_shape:?}",
                index.len()
            )));
        }
        let mut data = Vec::with_capacity(batch * index.len());
        for row in xv.data().chunks_exact(n.max(1)).take(batch) {
            data.extend(index.iter().map(|&i| row[i]));
        }
        let mut shape = vec![batch];
        shape.extend_from_slice(sample_shape);
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Gather { x: x.0, index }))
    }

    /// Per-sample concatenation of flattened features, reshaped to
    /// `[B, sample_shape…]`.
    pub fn concat(&mut self, a: Var, b: Var, sample_shape: &[usize]) -> Result<Var> {
        let (av, bv) = (self.val(a.0), self.val(b.0));
        let batch = batch_of(av);
        if batch_of(bv) != batch {
            return Err(Error::Dimension("concat: batch sizes differ".into()));
        }
        let (na, nb) = (av.numel() / batch.max(1), bv.numel() / batch.max(1));
        if sample_shape.iter().product::<usize>() != na + nb {
            return Err(Error::Dimension(format!(
                "concat: {na} + {nb} features do not fill sample shape {sample_shape:?}"
            )));
        }
        let mut data = Vec::with_capacity(batch * (na + nb));
        for s in 0..batch {
            data.extend_from_slice(&av.data()[s * na..(s + 1) * na]);
            data.extend_from_slice(&bv.data()[s * nb..(s + 1) * nb]);
        }
        let mut shape = vec![batch];
        shape.extend_from_slice(sample_shape);
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Concat(a.0, b.0)))
    }

    /// `[B, …] → [B, 1]`.
    pub fn sum_per_sample(&mut self, x: Var) -> Var {
        let xv = self.val(x.0);
        let batch = batch_of(xv);
        let n = xv.numel() / batch.max(1);
        let data: Vec<f64> = xv.data().chunks_exact(n.max(1)).map(|r| r.iter().sum()).collect();
        let value = Tensor::new(vec![batch, 1], data).expect("one value per sample");
        self.push(value, Op::SumPerSample(x.0))
    }

    /// Sum of every element, as a scalar node of shape `[1]`.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: f64 = self.val(x.0).data().iter().sum();
        self.push(Tensor::from_vec(vec![s]), Op::SumAll(x.0))
    }

    /// Per-sample standard-normal log-density, `[B, …] → [B, 1]`.
    pub fn std_normal_log_density(&mut self, z: Var) -> Var {
        let zv = self.val(z.0);
        let batch = batch_of(zv);
        let n = zv.numel() / batch.max(1);
        let data: Vec<f64> = zv.data().chunks_exact(n.max(1)).map(std_normal_log_density).collect();
        let value = Tensor::new(vec![batch, 1], data).expect("one value per sample");
        self.push(value, Op::StdNormalLogDensity(z.0))
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = self.val(root.0);
        if rv.numel() != 1 {
            return Err(Error::Contract(format!("backward needs a scalar root, got shape {:?}", rv.shape())));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(vec![1.0]);
        let mut grads = Gradients::default();

        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    let mut one = Gradients::default();
                    one.by_param.insert(*id, g);
                    grads.accumulate(&one);
                }
                Op::Linear { x, w, b } => {
                    let xv = self.val(*x);
                    let batch = batch_of(xv);
                    let n = xv.numel() / batch.max(1);
                    let (dx, dw, db) = linear_batch_backward(xv.data(), batch, n, self.val(*w).data(), &g);
                    add_into(&mut adj, *x, dx);
                    add_into(&mut adj, *w, dw);
                    add_into(&mut adj, *b, db);
                }
                Op::Conv { x, k, b, geom } => {
                    let xv = self.val(*x);
                    let (dx, dk, db) = conv2d_batch_backward(xv.data(), batch_of(xv), geom, self.val(*k).data(), &g);
                    add_into(&mut adj, *x, dx);
                    add_into(&mut adj, *k, dk);
                    add_into(&mut adj, *b, db);
                }
                Op::Relu(x) => {
                    // Subgradient at 0 is 0.
                    let d = g.iter().zip(self.val(*x).data()).map(|(&g, &v)| if v > 0.0 { g } else { 0.0 }).collect();
                    add_into(&mut adj, *x, d);
                }
                Op::Exp(x) => {
                    let d = g.iter().zip(node.value.data()).map(|(g, y)| g * y).collect();
                    add_into(&mut adj, *x, d);
                }
                Op::Add(a, b) => {
                    add_into(&mut adj, *a, g.clone());
                    add_into(&mut adj, *b, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.val(*a).data(), self.val(*b).data());
                    let da = g.iter().zip(bv).map(|(g, y)| g * y).collect();
                    let db = g.iter().zip(av).map(|(g, y)| g * y).collect();
                    add_into(&mut adj, *a, da);
                    add_into(&mut adj, *b, db);
                }
                Op::Affine { x, scale } => {
                    add_into(&mut adj, *x, g.iter().map(|v| v * scale).collect());
                }
                Op::Gather { x, index } => {
                    let xv = self.val(*x);
                    let batch = batch_of(xv);
                    let n = xv.numel() / batch.max(1);
                    let mut d = vec![0.0; xv.numel()];
                    for (s, gr) in g.chunks_exact(index.len().max(1)).enumerate() {
                        for (&src, &gv) in index.iter().zip(gr) {
                            d[s * n + src] += gv;
                        }
                    }
                    add_into(&mut adj, *x, d);
                }
                Op::Concat(a, b) => {
                    let (na_total, nb_total) = (self.val(*a).numel(), self.val(*b).numel());
                    let batch = batch_of(&node.value);
                    let (na, nb) = (na_total / batch.max(1), nb_total / batch.max(1));
                    let mut da = Vec::with_capacity(na_total);
                    let mut db = Vec::with_capacity(nb_total);
                    for row in g.chunks_exact((na + nb).max(1)) {
                        da.extend_from_slice(&row[..na]);
                        db.extend_from_slice(&row[na..]);
                    }
                    add_into(&mut adj, *a, da);
                    add_into(&mut adj, *b, db);
                }
                Op::SumPerSample(x) => {
                    let xv = self.val(*x);
                    let n = xv.numel() / batch_of(xv).max(1);
                    let d = g.iter().flat_map(|&gv| std::iter::repeat_n(gv, n)).collect();
                    add_into(&mut adj, *x, d);
                }
                Op::SumAll(x) => {
                    add_into(&mut adj, *x, vec![g[0]; self.val(*x).numel()]);
                }
                Op::StdNormalLogDensity(z) => {
                    let zv = self.val(*z);
                    let n = zv.numel() / batch_of(zv).max(1);
                    let d = zv
                        .data()
                        .chunks_exact(n.max(1))
                        .zip(&g)
                        .flat_map(|(row, &gv)| row.iter().map(move |&v| -gv * v))
                        .collect();
                    add_into(&mut adj, *z, d);
                }
            }
        }
        Ok(grads)
    }
}

fn add_into(adj: &mut [Option<Vec<f64>>], i: usize, d: Vec<f64>) {
    match &mut adj[i] {
        Some(acc) => acc.iter_mut().zip(&d).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(d),
    }
}

/// Free-function form of [`GradientTape::backward`].
pub fn backward(tape: &GradientTape, root: Var) -> Result<Gradients> {
    tape.backward(root)
}

#[cfg(test)]
mod tests {
    use super::super::finite_diff_grad;
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::from_vec(vec![v])
    }

    #[test]
    fn square_gradient() {
        let mut tape = GradientTape::new();
        let p = tape.param(ParamId(0), scalar(3.0));
        let sq = tape.mul(p, p).unwrap();
        let loss = tape.sum_all(sq);
        let g = backward(&tape, loss).unwrap();
        assert_eq!(g.get(ParamId(0)).unwrap(), &[6.0]);
    }

    #[test]
    fn inactive_relu_blocks_gradient() {
        let mut tape = GradientTape::new();
        let p = tape.param(ParamId(0), scalar(1.0));
        let neg = tape.affine(p, -1.0, 0.0);
        let r = tape.relu(neg);
        let loss = tape.sum_all(r);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(ParamId(0)).unwrap(), &[0.0]);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut tape = GradientTape::new();
        let p = tape.param(ParamId(0), scalar(0.0));
        let r = tape.relu(p);
        let loss = tape.sum_all(r);
        assert_eq!(tape.backward(loss).unwrap().get(ParamId(0)).unwrap(), &[0.0]);
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut tape = GradientTape::new();
        let p = tape.param(ParamId(0), Tensor::from_vec(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(p), Err(Error::Contract(_))));
    }

    #[test]
    fn unreached_params_get_no_entry() {
        let mut tape = GradientTape::new();
        let a = tape.param(ParamId(0), scalar(2.0));
        let _b = tape.param(ParamId(1), scalar(5.0));
        let loss = tape.sum_all(a);
        let g = tape.backward(loss).unwrap();
        assert!(g.get(ParamId(1)).is_none());
        assert_eq!(g.get(ParamId(0)).unwrap(), &[1.0]);
    }

    /// A composite of every op, differentiated both ways.
    fn composite(params: &[f64], tape: &mut GradientTape) -> Var {
        let x = tape.input(Tensor::new(vec![2, 1, 3, 3], (0..18).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap());
        let k = tape.param(ParamId(0), Tensor::new(vec![2, 1, 3, 3], params[..18].to_vec()).unwrap());
        let kb = tape.param(ParamId(1), Tensor::new(vec![2], params[18..20].to_vec()).unwrap());
        let h = tape.conv2d(x, k, kb, 1, 1).unwrap();
        let h = tape.relu(h);
        let w = tape.param(ParamId(2), Tensor::new(vec![3, 18], params[20..74].to_vec()).unwrap());
        let b = tape.param(ParamId(3), Tensor::new(vec![3], params[74..77].to_vec()).unwrap());
        let y = tape.linear(h, w, b).unwrap();
        let first: Arc<[usize]> = Arc::from(vec![0usize]);
        let rest: Arc<[usize]> = Arc::from(vec![2usize, 1]);
        let a = tape.gather(y, first, &[1]).unwrap();
        let r = tape.gather(y, rest, &[2]).unwrap();
        let e = tape.exp(r);
        let m = tape.mul(e, r).unwrap();
        let m = tape.add(m, r).unwrap();
        let cat = tape.concat(a, m, &[3]).unwrap();
        let ll = tape.std_normal_log_density(cat);
        let s = tape.sum_per_sample(a);
        let tot = tape.add(ll, s).unwrap();
        let tot = tape.sum_all(tot);
        tape.affine(tot, -0.5, 1.0)
    }

    #[test]
    fn composite_matches_finite_differences() {
        let params: Vec<f64> = (0..77).map(|i| ((i as f64) * 0.731).cos() * 0.4 + 0.05).collect();
        let mut tape = GradientTape::new();
        let root = composite(&params, &mut tape);
        let g = tape.backward(root).unwrap();
        let analytic: Vec<f64> = (0..4).flat_map(|i| g.get(ParamId(i)).unwrap().to_vec()).collect();

        let f = |p: &[f64]| {
            let mut t = GradientTape::new();
            let r = composite(p, &mut t);
            t.value(r).data()[0]
        };
        let numeric = finite_diff_grad(f, &params, 1e-6);
        let num: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
        assert!(num / den < 1e-6, "relative error {}", num / den);
    }

    #[test]
    fn log_density_is_permutation_invariant_bitwise() {
        let z = [0.1, -3.7, 2.2, 1e-3, 0.9];
        let mut r = z;
        r.reverse();
        assert_eq!(std_normal_log_density(&z), std_normal_log_density(&r));
    }
}

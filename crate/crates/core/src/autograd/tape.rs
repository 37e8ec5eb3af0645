//! Re-evaluable computation graph with differentiable backward passes.
//!
//! Every operation is recorded eagerly: its value is computed when the node is
//! created. [`Tape::grad`] appends the backward pass to the same tape as
//! ordinary nodes, so a gradient is itself a graph value and can be
//! differentiated again (reverse-over-reverse).
//!
//! Leaves created with [`Tape::input`] can be overwritten with
//! [`Tape::set_input`]; [`Tape::run`] then recomputes only the nodes of a
//! [`Plan`] whose ancestors changed since they were last evaluated.

use crate::tensor::Tensor;

use super::ops::{self, Activation, ConvGeom};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Const,
    Add,
    Sub,
    Mul,
    Scale(f64),
    /// `[s, v]`: scalar node times tensor.
    ScalarMul,
    /// `[a, b]` -> scalar inner product.
    Dot,
    /// `[w, x]` -> `w x`.
    MatVec,
    /// `[w, v]` -> `w^T v`.
    MatTVec,
    /// `[a, b]` -> `a b^T`.
    Outer,
    /// `[x, k]`.
    Conv(ConvGeom),
    /// `[u, k]`, adjoint of `Conv` in its input.
    ConvInputGrad(ConvGeom),
    /// `[x, u]`, adjoint of `Conv` in its kernel.
    ConvWeightGrad(ConvGeom),
    /// `[b]` with shape `[c]` -> `[c, h, w]`.
    ChannelBroadcast {
        h: usize,
        w: usize,
    },
    /// `[u]` with shape `[c, h, w]` -> `[c]`.
    ChannelSum,
    Act(Activation, u32),
    Pow(f64),
    Reshape(Vec<usize>),
    /// Contiguous view of a flat vector, reshaped.
    Slice {
        offset: usize,
        shape: Vec<usize>,
    },
    /// Places a tensor's elements at `offset` inside a zero vector of length `len`.
    Embed {
        offset: usize,
        len: usize,
    },
    LogSumExp,
    Softmax,
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    inputs: [usize; 2],
    arity: u8,
}

impl Node {
    fn inputs(&self) -> &[usize] {
        &self.inputs[..self.arity as usize]
    }
}

/// Ordered subset of nodes needed to evaluate a set of targets.
#[derive(Debug, Clone)]
pub struct Plan {
    nodes: Vec<usize>,
}

impl Plan {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    values: Vec<Tensor>,
    /// Generation of the newest leaf value each node was computed from.
    gens: Vec<u64>,
    clock: u64,
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
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.values[v.0].shape()
    }

    /// A leaf whose value may later be replaced with [`Tape::set_input`].
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push_leaf(Op::Input, value)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(Op::Const, value)
    }

    fn push_leaf(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node {
            op,
            inputs: [0, 0],
            arity: 0,
        });
        self.values.push(value);
        self.gens.push(self.clock);
        Var(self.nodes.len() - 1)
    }

    /// Replaces the value of an input leaf. The shape must not change.
    ///
    /// # Panics
    /// If `v` is not an input leaf or the shape differs.
    pub fn set_input(&mut self, v: Var, data: &[f64]) {
        assert!(
            matches!(self.nodes[v.0].op, Op::Input),
            "node {} is not an input leaf",
            v.0
        );
        let slot = self.values[v.0].data_mut();
        assert_eq!(slot.len(), data.len(), "input {} length changed", v.0);
        slot.copy_from_slice(data);
        self.clock += 1;
        self.gens[v.0] = self.clock;
    }

    fn push(&mut self, op: Op, inputs: &[Var]) -> Var {
        let mut ids = [0usize; 2];
        for (slot, v) in ids.iter_mut().zip(inputs) {
            *slot = v.0;
        }
        let node = Node {
            op,
            inputs: ids,
            arity: inputs.len() as u8,
        };
        let value = self.evaluate(&node);
        let gen = node
            .inputs()
            .iter()
            .map(|&i| self.gens[i])
            .max()
            .unwrap_or(0);
        self.nodes.push(node);
        self.values.push(value);
        self.gens.push(gen);
        Var(self.nodes.len() - 1)
    }

    fn evaluate(&self, node: &Node) -> Tensor {
        let arg = |k: usize| &self.values[node.inputs[k]];
        match &node.op {
            Op::Input | Op::Const => unreachable!("leaves are never re-evaluated"),
            Op::Add => zip_map(arg(0), arg(1), |a, b| a + b),
            Op::Sub => zip_map(arg(0), arg(1), |a, b| a - b),
            Op::Mul => zip_map(arg(0), arg(1), |a, b| a * b),
            Op::Scale(c) => map(arg(0), |a| a * c),
            Op::ScalarMul => {
                let s = arg(0).item();
                map(arg(1), |a| a * s)
            }
            Op::Dot => Tensor::scalar(crate::tensor::dot(arg(0).data(), arg(1).data())),
            Op::MatVec => {
                let w = arg(0);
                Tensor::from_parts(vec![w.shape()[0]], ops::mat_vec(w, arg(1).data()))
            }
            Op::MatTVec => {
                let w = arg(0);
                Tensor::from_parts(vec![w.shape()[1]], ops::mat_t_vec(w, arg(1).data()))
            }
            Op::Outer => {
                let (a, b) = (arg(0), arg(1));
                Tensor::from_parts(vec![a.len(), b.len()], ops::outer(a.data(), b.data()))
            }
            Op::Conv(g) => Tensor::from_parts(
                g.output_shape().to_vec(),
                ops::conv2d(*g, arg(0).data(), arg(1).data()),
            ),
            Op::ConvInputGrad(g) => Tensor::from_parts(
                g.input_shape().to_vec(),
                ops::conv2d_input_grad(*g, arg(0).data(), arg(1).data()),
            ),
            Op::ConvWeightGrad(g) => Tensor::from_parts(
                g.kernel_shape().to_vec(),
                ops::conv2d_weight_grad(*g, arg(0).data(), arg(1).data()),
            ),
            Op::ChannelBroadcast { h, w } => {
                let b = arg(0);
                let plane = h * w;
                let mut out = Vec::with_capacity(b.len() * plane);
                for &v in b.data() {
                    out.extend(std::iter::repeat_n(v, plane));
                }
                Tensor::from_parts(vec![b.len(), *h, *w], out)
            }
            Op::ChannelSum => {
                let u = arg(0);
                let c = u.shape()[0];
                let plane = u.len() / c;
                let sums = u.data().chunks(plane).map(|ch| ch.iter().sum()).collect();
                Tensor::from_parts(vec![c], sums)
            }
            Op::Act(kind, order) => {
                let (kind, order) = (*kind, *order);
                map(arg(0), |a| kind.derivative(order, a))
            }
            Op::Pow(p) => {
                let p = *p;
                map(arg(0), |a| if p == 0.0 { 1.0 } else { a.powf(p) })
            }
            Op::Reshape(shape) => Tensor::from_parts(shape.clone(), arg(0).data().to_vec()),
            Op::Slice { offset, shape } => {
                let n: usize = shape.iter().product();
                Tensor::from_parts(shape.clone(), arg(0).data()[*offset..offset + n].to_vec())
            }
            Op::Embed { offset, len } => {
                let u = arg(0);
                let mut out = vec![0.0; *len];
                out[*offset..offset + u.len()].copy_from_slice(u.data());
                Tensor::from_parts(vec![*len], out)
            }
            Op::LogSumExp => Tensor::scalar(ops::log_sum_exp(arg(0).data())),
            Op::Softmax => {
                let z = arg(0);
                Tensor::from_parts(z.shape().to_vec(), ops::softmax(z.data()))
            }
        }
    }

    // ---- operation builders ----

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_len(a, b, "add");
        self.push(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.same_len(a, b, "sub");
        self.push(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_len(a, b, "mul");
        self.push(Op::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.push(Op::Scale(c), &[a])
    }

    pub fn scalar_mul(&mut self, s: Var, v: Var) -> Var {
        assert_eq!(
            self.values[s.0].len(),
            1,
            "scalar_mul expects a one-element scale"
        );
        self.push(Op::ScalarMul, &[s, v])
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        self.same_len(a, b, "dot");
        self.push(Op::Dot, &[a, b])
    }

    pub fn mat_vec(&mut self, w: Var, x: Var) -> Var {
        let ws = self.shape(w);
        assert!(
            ws.len() == 2 && ws[1] == self.values[x.0].len(),
            "mat_vec shape mismatch"
        );
        self.push(Op::MatVec, &[w, x])
    }

    pub fn mat_t_vec(&mut self, w: Var, v: Var) -> Var {
        let ws = self.shape(w);
        assert!(
            ws.len() == 2 && ws[0] == self.values[v.0].len(),
            "mat_t_vec shape mismatch"
        );
        self.push(Op::MatTVec, &[w, v])
    }

    pub fn outer(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Outer, &[a, b])
    }

    pub fn conv2d(&mut self, x: Var, k: Var, g: ConvGeom) -> Var {
        assert_eq!(self.shape(x), g.input_shape(), "conv2d input shape");
        assert_eq!(self.shape(k), g.kernel_shape(), "conv2d kernel shape");
        self.push(Op::Conv(g), &[x, k])
    }

    fn conv2d_input_grad(&mut self, u: Var, k: Var, g: ConvGeom) -> Var {
        self.push(Op::ConvInputGrad(g), &[u, k])
    }

    fn conv2d_weight_grad(&mut self, x: Var, u: Var, g: ConvGeom) -> Var {
        self.push(Op::ConvWeightGrad(g), &[x, u])
    }

    /// Adds a per-channel bias `b` (shape `[c]`) to `y` (shape `[c, h, w]`).
    pub fn add_channel_bias(&mut self, y: Var, b: Var) -> Var {
        let s = self.shape(y).to_vec();
        assert!(
            s.len() == 3 && self.shape(b) == [s[0]],
            "channel bias shape"
        );
        let bb = self.push(Op::ChannelBroadcast { h: s[1], w: s[2] }, &[b]);
        self.add(y, bb)
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        self.push(Op::Act(kind, 0), &[a])
    }

    /// Elementwise power `a^p`.
    pub fn pow(&mut self, a: Var, p: f64) -> Var {
        self.push(Op::Pow(p), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.values[a.0].len(),
            "reshape size"
        );
        self.push(Op::Reshape(shape.to_vec()), &[a])
    }

    pub fn slice(&mut self, flat: Var, offset: usize, shape: &[usize]) -> Var {
        let n: usize = shape.iter().product();
        assert!(
            offset + n <= self.values[flat.0].len(),
            "slice out of bounds"
        );
        self.push(
            Op::Slice {
                offset,
                shape: shape.to_vec(),
            },
            &[flat],
        )
    }

    fn embed(&mut self, u: Var, offset: usize, len: usize) -> Var {
        self.push(Op::Embed { offset, len }, &[u])
    }

    pub fn log_sum_exp(&mut self, z: Var) -> Var {
        self.push(Op::LogSumExp, &[z])
    }

    pub fn softmax(&mut self, z: Var) -> Var {
        self.push(Op::Softmax, &[z])
    }

    fn same_len(&self, a: Var, b: Var, what: &str) {
        assert_eq!(
            self.values[a.0].len(),
            self.values[b.0].len(),
            "{what}: operand lengths differ"
        );
    }

    // ---- differentiation ----

    /// Appends the reverse-mode derivative of the one-element node `output`
    /// with respect to each of `wrt`. The returned nodes are ordinary tape
    /// values and can be differentiated again.
    pub fn grad(&mut self, output: Var, wrt: &[Var]) -> Vec<Var> {
        assert_eq!(
            self.values[output.0].len(),
            1,
            "grad needs a one-element output"
        );
        let n = output.0 + 1;
        let mut depends = vec![false; n];
        for w in wrt {
            if w.0 < n {
                depends[w.0] = true;
            }
        }
        for i in 0..n {
            if !depends[i] {
                depends[i] = self.nodes[i].inputs().iter().any(|&j| depends[j]);
            }
        }

        let mut adjoint: Vec<Option<Var>> = vec![None; n];
        let seed_shape = self.values[output.0].shape().to_vec();
        adjoint[output.0] = Some(self.constant(Tensor::filled(&seed_shape, 1.0)));

        for i in (0..n).rev() {
            let Some(g) = adjoint[i] else { continue };
            if !depends[i] {
                continue;
            }
            let node = self.nodes[i].clone();
            let ins = node.inputs().to_vec();
            let needs: Vec<bool> = ins.iter().map(|&j| depends[j]).collect();
            if !needs.iter().any(|&b| b) {
                continue;
            }
            let contribs = self.backward_rule(&node.op, Var(i), &ins, &needs, g);
            for (k, c) in contribs.into_iter().enumerate() {
                let Some(c) = c else { continue };
                let j = ins[k];
                adjoint[j] = Some(match adjoint[j] {
                    None => c,
                    Some(prev) => self.add(prev, c),
                });
            }
        }

        wrt.iter()
            .map(|w| match adjoint.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let shape = self.values[w.0].shape().to_vec();
                    self.constant(Tensor::zeros(&shape))
                }
            })
            .collect()
    }

    /// Vector-Jacobian products of one node, expressed as new tape nodes.
    fn backward_rule(
        &mut self,
        op: &Op,
        out: Var,
        ins: &[usize],
        needs: &[bool],
        g: Var,
    ) -> Vec<Option<Var>> {
        let a = Var(ins[0]);
        let b = ins.get(1).map(|&j| Var(j));
        let need = |k: usize| needs[k];
        match op {
            Op::Input | Op::Const => vec![],
            Op::Add => vec![need(0).then_some(g), need(1).then_some(g)],
            Op::Sub => {
                let gb = need(1).then(|| self.scale(g, -1.0));
                vec![need(0).then_some(g), gb]
            }
            Op::Mul => {
                let b = b.unwrap();
                let ga = need(0).then(|| self.mul(g, b));
                let gb = need(1).then(|| self.mul(g, a));
                vec![ga, gb]
            }
            Op::Scale(c) => vec![Some(self.scale(g, *c))],
            Op::ScalarMul => {
                let v = b.unwrap();
                let gs = need(0).then(|| {
                    let d = self.dot(g, v);
                    let s_shape = self.values[a.0].shape().to_vec();
                    if s_shape.is_empty() {
                        d
                    } else {
                        self.reshape(d, &s_shape)
                    }
                });
                let gv = need(1).then(|| self.scalar_mul(a, g));
                vec![gs, gv]
            }
            Op::Dot => {
                let b = b.unwrap();
                let ga = need(0).then(|| self.scalar_mul(g, b));
                let gb = need(1).then(|| self.scalar_mul(g, a));
                vec![ga, gb]
            }
            Op::MatVec => {
                let x = b.unwrap();
                let gw = need(0).then(|| self.outer(g, x));
                let gx = need(1).then(|| {
                    let r = self.mat_t_vec(a, g);
                    self.match_shape(r, x)
                });
                vec![gw, gx]
            }
            Op::MatTVec => {
                let v = b.unwrap();
                let gw = need(0).then(|| self.outer(v, g));
                let gv = need(1).then(|| {
                    let r = self.mat_vec(a, g);
                    self.match_shape(r, v)
                });
                vec![gw, gv]
            }
            Op::Outer => {
                let bb = b.unwrap();
                let ga = need(0).then(|| {
                    let r = self.mat_vec(g, bb);
                    self.match_shape(r, a)
                });
                let gb = need(1).then(|| {
                    let r = self.mat_t_vec(g, a);
                    self.match_shape(r, bb)
                });
                vec![ga, gb]
            }
            Op::Conv(geom) => {
                let k = b.unwrap();
                let gx = need(0).then(|| self.conv2d_input_grad(g, k, *geom));
                let gk = need(1).then(|| self.conv2d_weight_grad(a, g, *geom));
                vec![gx, gk]
            }
            Op::ConvInputGrad(geom) => {
                // out = B_x(k)^T u; <h, out> = <conv(h, k), u>
                let k = b.unwrap();
                let gu = need(0).then(|| self.push(Op::Conv(*geom), &[g, k]));
                let gk = need(1).then(|| self.conv2d_weight_grad(g, a, *geom));
                vec![gu, gk]
            }
            Op::ConvWeightGrad(geom) => {
                // <H, out> = <conv(x, H), u>
                let u = b.unwrap();
                let gx = need(0).then(|| self.conv2d_input_grad(u, g, *geom));
                let gu = need(1).then(|| self.push(Op::Conv(*geom), &[a, g]));
                vec![gx, gu]
            }
            Op::ChannelBroadcast { .. } => vec![Some(self.push(Op::ChannelSum, &[g]))],
            Op::ChannelSum => {
                let s = self.values[a.0].shape().to_vec();
                vec![Some(
                    self.push(Op::ChannelBroadcast { h: s[1], w: s[2] }, &[g]),
                )]
            }
            Op::Act(kind, order) => {
                let d = self.push(Op::Act(*kind, order + 1), &[a]);
                vec![Some(self.mul(g, d))]
            }
            Op::Pow(p) => {
                if *p == 0.0 {
                    return vec![None];
                }
                let lower = self.pow(a, p - 1.0);
                let d = self.scale(lower, *p);
                vec![Some(self.mul(g, d))]
            }
            Op::Reshape(_) => {
                let s = self.values[a.0].shape().to_vec();
                vec![Some(self.reshape(g, &s))]
            }
            Op::Slice { offset, .. } => {
                let len = self.values[a.0].len();
                vec![Some(self.embed(g, *offset, len))]
            }
            Op::Embed { offset, .. } => {
                let s = self.values[a.0].shape().to_vec();
                vec![Some(self.slice(g, *offset, &s))]
            }
            Op::LogSumExp => {
                let s = self.softmax(a);
                vec![Some(self.scalar_mul(g, s))]
            }
            Op::Softmax => {
                // s * (g - <s, g>)
                let sg = self.mul(out, g);
                let inner = self.dot(out, g);
                let proj = self.scalar_mul(inner, out);
                vec![Some(self.sub(sg, proj))]
            }
        }
    }

    fn match_shape(&mut self, v: Var, like: Var) -> Var {
        if self.values[v.0].shape() == self.values[like.0].shape() {
            v
        } else {
            let s = self.values[like.0].shape().to_vec();
            self.reshape(v, &s)
        }
    }

    // ---- re-evaluation ----

    /// Collects the ancestors of `targets` in evaluation order.
    pub fn plan(&self, targets: &[Var]) -> Plan {
        let hi = targets.iter().map(|t| t.0).max().map_or(0, |m| m + 1);
        let mut needed = vec![false; hi];
        for t in targets {
            needed[t.0] = true;
        }
        for i in (0..hi).rev() {
            if needed[i] {
                for &j in self.nodes[i].inputs() {
                    needed[j] = true;
                }
            }
        }
        Plan {
            nodes: (0..hi).filter(|&i| needed[i]).collect(),
        }
    }

    /// Brings every node in `plan` up to date with the current input values.
    pub fn run(&mut self, plan: &Plan) {
        for &i in &plan.nodes {
            let node = &self.nodes[i];
            if node.arity == 0 {
                continue;
            }
            let newest = node
                .inputs()
                .iter()
                .map(|&j| self.gens[j])
                .max()
                .unwrap_or(0);
            if newest > self.gens[i] {
                let value = self.evaluate(node);
                self.values[i] = value;
                self.gens[i] = newest;
            }
        }
    }

    /// Recomputes every node from the current leaf values.
    pub fn replay(&mut self) {
        for i in 0..self.nodes.len() {
            if self.nodes[i].arity > 0 {
                let value = self.evaluate(&self.nodes[i]);
                self.values[i] = value;
            }
        }
        let newest = self.clock;
        for (i, node) in self.nodes.iter().enumerate() {
            if node.arity > 0 {
                self.gens[i] = newest;
            }
        }
    }
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_parts(a.shape().to_vec(), a.data().iter().map(|&v| f(v)).collect())
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::from_parts(
        a.shape().to_vec(),
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_input(t: &mut Tape, v: &[f64]) -> Var {
        t.input(Tensor::vector(v.to_vec()))
    }

    #[test]
    fn gradient_of_product() {
        let mut t = Tape::new();
        let x = vec_input(&mut t, &[3.0]);
        let y = t.mul(x, x);
        let s = t.reshape(y, &[]);
        let g = t.grad(s, &[x])[0];
        assert_eq!(t.value(g).data(), &[6.0]);
        let g_s = t.reshape(g, &[]);
        let gg = t.grad(g_s, &[x])[0];
        assert_eq!(t.value(gg).data(), &[2.0]);
    }

    #[test]
    fn bilinear_gradients() {
        // L = theta . x
        let mut t = Tape::new();
        let x = vec_input(&mut t, &[1.0, 0.0]);
        let th = vec_input(&mut t, &[2.0, 1.0]);
        let l = t.dot(th, x);
        let g = t.grad(l, &[th, x]);
        assert_eq!(t.value(g[0]).data(), &[1.0, 0.0]);
        assert_eq!(t.value(g[1]).data(), &[2.0, 1.0]);
    }

    #[test]
    fn mixed_second_derivative_of_half_square() {
        // L = 0.5 (theta . x)^2 ; J = theta x^T + (theta . x) I
        let mut t = Tape::new();
        let x = vec_input(&mut t, &[1.0, 0.0]);
        let th = vec_input(&mut t, &[2.0, 1.0]);
        let delta = vec_input(&mut t, &[1.0, 1.0]);
        let a = t.dot(th, x);
        let a2 = t.mul(a, a);
        let l = t.scale(a2, 0.5);
        let gth = t.grad(l, &[th])[0];
        let s = t.dot(gth, delta);
        let jd = t.grad(s, &[x])[0];
        assert_eq!(t.value(jd).data(), &[4.0, 3.0]);
    }

    #[test]
    fn run_recomputes_only_stale_nodes() {
        let mut t = Tape::new();
        let x = vec_input(&mut t, &[1.0, 2.0]);
        let y = vec_input(&mut t, &[3.0, 4.0]);
        let xx = t.mul(x, x);
        let out = t.dot(xx, y);
        let plan = t.plan(&[out]);
        assert_eq!(t.value(out).item(), 1.0 * 3.0 + 4.0 * 4.0);
        t.set_input(y, &[1.0, 1.0]);
        t.run(&plan);
        assert_eq!(t.value(out).item(), 5.0);
        t.set_input(x, &[2.0, 0.0]);
        t.run(&plan);
        assert_eq!(t.value(out).item(), 4.0);
    }

    #[test]
    fn replay_is_bitwise_reproducible() {
        let mut t = Tape::new();
        let x = vec_input(&mut t, &[0.3, -1.7, 2.2]);
        let s = t.activation(x, Activation::Sigmoid);
        let l = t.log_sum_exp(s);
        let g = t.grad(l, &[x])[0];
        let before: Vec<f64> = t.value(g).data().to_vec();
        t.replay();
        assert_eq!(before, t.value(g).data());
    }

    #[test]
    fn softmax_backward_matches_finite_differences() {
        let z0 = [0.2, -0.4, 1.1];
        let w = [0.5, -1.0, 2.0];
        let f = |z: &[f64]| crate::tensor::dot(&ops::softmax(z), &w);
        let mut t = Tape::new();
        let z = vec_input(&mut t, &z0);
        let wv = t.constant(Tensor::vector(w.to_vec()));
        let s = t.softmax(z);
        let l = t.dot(s, wv);
        let g = t.grad(l, &[z])[0];
        for i in 0..3 {
            let mut zp = z0;
            let mut zm = z0;
            zp[i] += 1e-6;
            zm[i] -= 1e-6;
            let fd = (f(&zp) - f(&zm)) / 2e-6;
            assert!((t.value(g).data()[i] - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn unused_wrt_gets_zero_gradient() {
        let mut t = Tape::new();
        let x = vec_input(&mut t, &[1.0]);
        let y = vec_input(&mut t, &[2.0, 3.0]);
        let l = t.dot(x, x);
        let g = t.grad(l, &[y])[0];
        assert_eq!(t.value(g).data(), &[0.0, 0.0]);
    }
}

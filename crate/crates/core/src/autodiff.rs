//! Dense-tensor engine with reverse-mode automatic differentiation.
//!
//! Values are flat row-major `f64` buffers plus a shape. A [`Tape`]
//! records every operation of one forward pass in execution order; since
//! an op can only reference earlier nodes, the tape is topologically
//! sorted by construction and [`Tape::backward`] is a single reverse
//! sweep that visits each node exactly once. Gradients accumulate
//! additively, so using a value twice yields the sum of both path
//! gradients.
//!
//! The tape is rebuilt per training step (sequence lengths vary per
//! sample). Learnable tensors live outside the tape in a [`ParamSet`];
//! a [`Fwd`] context leafs them onto the tape on first use and copies
//! accumulated gradients back after the sweep.
//!
//! There is no broadcasting: binary elementwise ops require identical
//! shapes, and the only mixed-shape ops are explicit ([`Tape::mul_scalar`],
//! the matrix/vector products). All arithmetic is `f64`.

use crate::error::{CoreError, Result};
use std::collections::HashMap;

// ─── Tensors and parameter storage ──────────────────────────────────────

/// A dense value: flat row-major buffer plus shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) || numel != values.len() {
            return Err(CoreError::Shape {
                op: "tensor",
                lhs: shape,
                rhs: vec![values.len()],
            });
        }
        Ok(Tensor {
            shape,
            values,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            values: vec![0.0; numel],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(x: f64) -> Self {
        Tensor {
            shape: vec![1],
            values: vec![x],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn param(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let mut t = Tensor::new(shape, values)?;
        t.requires_grad = true;
        Ok(t)
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Zero the gradient buffer if one exists.
    pub fn clear_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Handle to one named tensor in a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named learnable tensors, checkpointable and stable in insertion order.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, mut tensor: Tensor) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(CoreError::config(format!("duplicate parameter {name}")));
        }
        tensor.requires_grad = true;
        let id = self.entries.len();
        self.index.insert(name.to_string(), id);
        self.entries.push((name.to_string(), tensor));
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].1
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].1
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].0
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn clear_grads(&mut self) {
        for (_, t) in &mut self.entries {
            t.clear_grad();
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_finite())
    }
}

// ─── Tape ────────────────────────────────────────────────────────────────

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// [m,k]·[k,n] -> [m,n]
    Matmul { a: Var, b: Var },
    /// [m,n]·[n] -> [m]
    MatVec { a: Var, x: Var },
    /// aᵀx: [m,n],[m] -> [n]
    MatVecT { a: Var, x: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Sigmoid { x: Var },
    Tanh { x: Var },
    /// Stable softmax over a vector.
    Softmax { x: Var },
    /// ln(max(x, floor)); zero slope once clamped.
    LnClamped { x: Var, floor: f64 },
    Concat { parts: Vec<Var> },
    /// k vectors of length n stacked into [k,n].
    StackRows { rows: Vec<Var> },
    /// Single element as a [1] tensor.
    Pick { x: Var, index: usize },
    /// Row of a matrix as a vector; embedding lookup.
    Row { x: Var, index: usize },
    /// out[ids[i]] += x[i]; used to scatter attention mass onto token ids.
    ScatterSum { x: Var, ids: Vec<usize> },
    /// Append zeros up to a target length.
    PadZeros { x: Var },
    /// Vector times a [1] tensor.
    MulScalar { x: Var, s: Var },
    /// Multiply by a plain constant.
    Scale { x: Var, c: f64 },
    Sum { x: Var },
}

struct Node {
    shape: Vec<usize>,
    values: Vec<f64>,
    op: Op,
}

/// Records one forward pass; replays it in reverse for gradients.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    /// Times `ln_clamped` hit its floor during the forward pass.
    clamp_events: usize,
}

fn dim2(shape: &[usize]) -> Option<(usize, usize)> {
    match shape {
        [r, c] => Some((*r, *c)),
        _ => None,
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    pub fn values(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].values
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].values[0]
    }

    // Non-finite values are allowed to propagate; the training loop
    // checks the loss and parameters each step and aborts with a
    // diagnostic rather than panicking mid-forward.
    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, op: Op) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node { shape, values, op });
        Var(id)
    }

    // ── Leaves ───────────────────────────────────────────────────────

    pub fn leaf(&mut self, shape: Vec<usize>, values: Vec<f64>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != values.len() || shape.iter().any(|&d| d == 0) {
            return Err(CoreError::Shape {
                op: "leaf",
                lhs: shape,
                rhs: vec![values.len()],
            });
        }
        Ok(self.push(shape, values, Op::Leaf))
    }

    pub fn constant(&mut self, tensor: &Tensor) -> Var {
        self.push(tensor.shape.clone(), tensor.values.clone(), Op::Leaf)
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.push(vec![1], vec![x], Op::Leaf)
    }

    pub fn zeros(&mut self, shape: Vec<usize>) -> Var {
        let numel: usize = shape.iter().product();
        self.push(shape, vec![0.0; numel], Op::Leaf)
    }

    // ── Linear algebra ───────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dim2(self.shape(a)).ok_or_else(|| self.shape_err("matmul", a, b))?;
        let (k2, n) = dim2(self.shape(b)).ok_or_else(|| self.shape_err("matmul", a, b))?;
        if k != k2 {
            return Err(self.shape_err("matmul", a, b));
        }
        let av = self.values(a);
        let bv = self.values(b);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = av[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += aip * brow[j];
                }
            }
        }
        Ok(self.push(vec![m, n], out, Op::Matmul { a, b }))
    }

    pub fn matvec(&mut self, a: Var, x: Var) -> Result<Var> {
        let (m, n) = dim2(self.shape(a)).ok_or_else(|| self.shape_err("matvec", a, x))?;
        if self.shape(x) != [n] {
            return Err(self.shape_err("matvec", a, x));
        }
        let av = self.values(a);
        let xv = self.values(x);
        let mut out = vec![0.0; m];
        for i in 0..m {
            let row = &av[i * n..(i + 1) * n];
            let mut s = 0.0;
            for j in 0..n {
                s += row[j] * xv[j];
            }
            out[i] = s;
        }
        Ok(self.push(vec![m], out, Op::MatVec { a, x }))
    }

    /// aᵀx for a: [m,n], x: [m]. Lets callers keep one weight orientation.
    pub fn matvec_t(&mut self, a: Var, x: Var) -> Result<Var> {
        let (m, n) = dim2(self.shape(a)).ok_or_else(|| self.shape_err("matvec_t", a, x))?;
        if self.shape(x) != [m] {
            return Err(self.shape_err("matvec_t", a, x));
        }
        let av = self.values(a);
        let xv = self.values(x);
        let mut out = vec![0.0; n];
        for i in 0..m {
            let row = &av[i * n..(i + 1) * n];
            let xi = xv[i];
            for j in 0..n {
                out[j] += row[j] * xi;
            }
        }
        Ok(self.push(vec![n], out, Op::MatVecT { a, x }))
    }

    // ── Elementwise ──────────────────────────────────────────────────

    fn binary(&mut self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(self.shape_err(op, a, b));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b)?;
        let out: Vec<f64> = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b)?;
        let out: Vec<f64> = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(x, y)| x - y)
            .collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::Sub { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b)?;
        let out: Vec<f64> = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::Mul { a, b }))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self
            .values(x)
            .iter()
            .map(|&v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        self.push(self.shape(x).to_vec(), out, Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self.values(x).iter().map(|&v| v.tanh()).collect();
        self.push(self.shape(x).to_vec(), out, Op::Tanh { x })
    }

    /// Stable softmax over a vector (max subtraction before exp).
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xv = self.values(x);
        if self.shape(x).len() != 1 || xv.is_empty() {
            return Err(CoreError::Shape {
                op: "softmax",
                lhs: self.shape(x).to_vec(),
                rhs: vec![],
            });
        }
        let max = xv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = xv.iter().map(|&v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let out: Vec<f64> = exps.iter().map(|&e| e / total).collect();
        Ok(self.push(self.shape(x).to_vec(), out, Op::Softmax { x }))
    }

    /// ln(max(x, floor)). Counts every clamped component.
    pub fn ln_clamped(&mut self, x: Var, floor: f64) -> Var {
        let mut clamped = 0usize;
        let out: Vec<f64> = self
            .values(x)
            .iter()
            .map(|&v| {
                if v < floor {
                    clamped += 1;
                    floor.ln()
                } else {
                    v.ln()
                }
            })
            .collect();
        self.clamp_events += clamped;
        self.push(self.shape(x).to_vec(), out, Op::LnClamped { x, floor })
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(CoreError::contract("concat of zero vectors"));
        }
        let mut out = Vec::new();
        for &p in parts {
            if self.shape(p).len() != 1 {
                return Err(CoreError::Shape {
                    op: "concat",
                    lhs: self.shape(p).to_vec(),
                    rhs: vec![],
                });
            }
            out.extend_from_slice(self.values(p));
        }
        Ok(self.push(vec![out.len()], out, Op::Concat { parts: parts.to_vec() }))
    }

    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        if rows.is_empty() {
            return Err(CoreError::contract("stack_rows of zero vectors"));
        }
        let n = self.values(rows[0]).len();
        let mut out = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            if self.shape(r) != [n] {
                return Err(self.shape_err("stack_rows", rows[0], r));
            }
            out.extend_from_slice(self.values(r));
        }
        Ok(self.push(vec![rows.len(), n], out, Op::StackRows { rows: rows.to_vec() }))
    }

    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var> {
        let xv = self.values(x);
        if index >= xv.len() {
            return Err(CoreError::contract(format!(
                "pick index {index} out of bounds for length {}",
                xv.len()
            )));
        }
        let v = xv[index];
        Ok(self.push(vec![1], vec![v], Op::Pick { x, index }))
    }

    /// Row `index` of a matrix, as a vector.
    pub fn row(&mut self, x: Var, index: usize) -> Result<Var> {
        let Some((m, n)) = dim2(self.shape(x)) else {
            return Err(CoreError::Shape {
                op: "row",
                lhs: self.shape(x).to_vec(),
                rhs: vec![],
            });
        };
        if index >= m {
            return Err(CoreError::contract(format!(
                "row {index} out of bounds for {m} rows"
            )));
        }
        let values = self.values(x)[index * n..(index + 1) * n].to_vec();
        Ok(self.push(vec![n], values, Op::Row { x, index }))
    }

    /// out[ids[i]] += x[i] over a fresh zero vector of length `size`.
    pub fn scatter_sum(&mut self, x: Var, ids: &[usize], size: usize) -> Result<Var> {
        let xv = self.values(x);
        if ids.len() != xv.len() {
            return Err(CoreError::contract(format!(
                "scatter_sum: {} weights but {} ids",
                xv.len(),
                ids.len()
            )));
        }
        let mut out = vec![0.0; size];
        for (i, &id) in ids.iter().enumerate() {
            if id >= size {
                return Err(CoreError::contract(format!(
                    "scatter_sum id {id} out of bounds for size {size}"
                )));
            }
            out[id] += xv[i];
        }
        Ok(self.push(vec![size], out, Op::ScatterSum { x, ids: ids.to_vec() }))
    }

    pub fn pad_zeros(&mut self, x: Var, len: usize) -> Result<Var> {
        let xv = self.values(x);
        if len < xv.len() || self.shape(x).len() != 1 {
            return Err(CoreError::contract(format!(
                "pad_zeros to {len} from length {}",
                xv.len()
            )));
        }
        let mut out = xv.to_vec();
        out.resize(len, 0.0);
        Ok(self.push(vec![len], out, Op::PadZeros { x }))
    }

    /// x * s where s is a [1] tensor on the tape.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.shape(s) != [1] {
            return Err(self.shape_err("mul_scalar", x, s));
        }
        let sv = self.values(s)[0];
        let out: Vec<f64> = self.values(x).iter().map(|&v| v * sv).collect();
        Ok(self.push(self.shape(x).to_vec(), out, Op::MulScalar { x, s }))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out: Vec<f64> = self.values(x).iter().map(|&v| v * c).collect();
        self.push(self.shape(x).to_vec(), out, Op::Scale { x, c })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.values(x).iter().sum();
        self.push(vec![1], vec![s], Op::Sum { x })
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> CoreError {
        CoreError::Shape {
            op,
            lhs: self.shape(a).to_vec(),
            rhs: self.shape(b).to_vec(),
        }
    }

    // ── Backward ─────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Returns per-node gradients,
    /// indexed like the tape.
    pub fn backward(&self, loss: Var) -> Result<Vec<Vec<f64>>> {
        if self.nodes[loss.0].values.len() != 1 {
            return Err(CoreError::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let mut grads: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.values.len()])
            .collect();
        grads[loss.0][0] = 1.0;

        for i in (0..=loss.0).rev() {
            // split_at_mut: grads of inputs (index < i) vs grad of node i
            let (lower, upper) = grads.split_at_mut(i);
            let g = &upper[0];
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Matmul { a, b } => {
                    let (m, k) = dim2(&self.nodes[a.0].shape).unwrap();
                    let n = self.nodes[b.0].shape[1];
                    let av = &self.nodes[a.0].values;
                    let bv = &self.nodes[b.0].values;
                    // dA = G·Bᵀ
                    {
                        let da = &mut lower[a.0];
                        for i2 in 0..m {
                            for p in 0..k {
                                let mut s = 0.0;
                                for j in 0..n {
                                    s += g[i2 * n + j] * bv[p * n + j];
                                }
                                da[i2 * k + p] += s;
                            }
                        }
                    }
                    // dB = Aᵀ·G
                    {
                        let db = &mut lower[b.0];
                        for p in 0..k {
                            for j in 0..n {
                                let mut s = 0.0;
                                for i2 in 0..m {
                                    s += av[i2 * k + p] * g[i2 * n + j];
                                }
                                db[p * n + j] += s;
                            }
                        }
                    }
                }
                Op::MatVec { a, x } => {
                    let (m, n) = dim2(&self.nodes[a.0].shape).unwrap();
                    let av = &self.nodes[a.0].values;
                    let xv = &self.nodes[x.0].values;
                    {
                        let da = &mut lower[a.0];
                        for i2 in 0..m {
                            let gi = g[i2];
                            if gi == 0.0 {
                                continue;
                            }
                            let row = &mut da[i2 * n..(i2 + 1) * n];
                            for j in 0..n {
                                row[j] += gi * xv[j];
                            }
                        }
                    }
                    {
                        let dx = &mut lower[x.0];
                        for i2 in 0..m {
                            let gi = g[i2];
                            if gi == 0.0 {
                                continue;
                            }
                            let row = &av[i2 * n..(i2 + 1) * n];
                            for j in 0..n {
                                dx[j] += row[j] * gi;
                            }
                        }
                    }
                }
                Op::MatVecT { a, x } => {
                    let (m, n) = dim2(&self.nodes[a.0].shape).unwrap();
                    let av = &self.nodes[a.0].values;
                    let xv = &self.nodes[x.0].values;
                    {
                        let da = &mut lower[a.0];
                        for i2 in 0..m {
                            let xi = xv[i2];
                            if xi == 0.0 {
                                continue;
                            }
                            let row = &mut da[i2 * n..(i2 + 1) * n];
                            for j in 0..n {
                                row[j] += xi * g[j];
                            }
                        }
                    }
                    {
                        let dx = &mut lower[x.0];
                        for i2 in 0..m {
                            let row = &av[i2 * n..(i2 + 1) * n];
                            let mut s = 0.0;
                            for j in 0..n {
                                s += row[j] * g[j];
                            }
                            dx[i2] += s;
                        }
                    }
                }
                Op::Add { a, b } => {
                    for (d, &gi) in lower[a.0].iter_mut().zip(g) {
                        *d += gi;
                    }
                    for (d, &gi) in lower[b.0].iter_mut().zip(g) {
                        *d += gi;
                    }
                }
                Op::Sub { a, b } => {
                    for (d, &gi) in lower[a.0].iter_mut().zip(g) {
                        *d += gi;
                    }
                    for (d, &gi) in lower[b.0].iter_mut().zip(g) {
                        *d -= gi;
                    }
                }
                Op::Mul { a, b } => {
                    let av = &self.nodes[a.0].values;
                    let bv = &self.nodes[b.0].values;
                    for (j, &gi) in g.iter().enumerate() {
                        lower[a.0][j] += gi * bv[j];
                    }
                    for (j, &gi) in g.iter().enumerate() {
                        lower[b.0][j] += gi * av[j];
                    }
                }
                Op::Sigmoid { x } => {
                    let y = &node.values;
                    for (j, &gi) in g.iter().enumerate() {
                        lower[x.0][j] += gi * y[j] * (1.0 - y[j]);
                    }
                }
                Op::Tanh { x } => {
                    let y = &node.values;
                    for (j, &gi) in g.iter().enumerate() {
                        lower[x.0][j] += gi * (1.0 - y[j] * y[j]);
                    }
                }
                Op::Softmax { x } => {
                    let y = &node.values;
                    let dot: f64 = g.iter().zip(y).map(|(gi, yi)| gi * yi).sum();
                    for (j, &yi) in y.iter().enumerate() {
                        lower[x.0][j] += yi * (g[j] - dot);
                    }
                }
                Op::LnClamped { x, floor } => {
                    let xv = &self.nodes[x.0].values;
                    for (j, &gi) in g.iter().enumerate() {
                        if xv[j] >= *floor {
                            lower[x.0][j] += gi / xv[j];
                        }
                    }
                }
                Op::Concat { parts } => {
                    let mut off = 0;
                    for &p in parts {
                        let len = self.nodes[p.0].values.len();
                        for (d, &gi) in lower[p.0].iter_mut().zip(&g[off..off + len]) {
                            *d += gi;
                        }
                        off += len;
                    }
                }
                Op::StackRows { rows } => {
                    let n = self.nodes[rows[0].0].values.len();
                    for (r, &row) in rows.iter().enumerate() {
                        for (d, &gi) in lower[row.0].iter_mut().zip(&g[r * n..(r + 1) * n]) {
                            *d += gi;
                        }
                    }
                }
                Op::Pick { x, index } => {
                    lower[x.0][*index] += g[0];
                }
                Op::Row { x, index } => {
                    let n = node.values.len();
                    let dst = &mut lower[x.0][index * n..(index + 1) * n];
                    for (d, &gi) in dst.iter_mut().zip(g) {
                        *d += gi;
                    }
                }
                Op::ScatterSum { x, ids } => {
                    for (i2, &id) in ids.iter().enumerate() {
                        lower[x.0][i2] += g[id];
                    }
                }
                Op::PadZeros { x } => {
                    let len = self.nodes[x.0].values.len();
                    for (d, &gi) in lower[x.0].iter_mut().zip(&g[..len]) {
                        *d += gi;
                    }
                }
                Op::MulScalar { x, s } => {
                    let sv = self.nodes[s.0].values[0];
                    let xv = &self.nodes[x.0].values;
                    let mut ds = 0.0;
                    for (j, &gi) in g.iter().enumerate() {
                        lower[x.0][j] += gi * sv;
                        ds += gi * xv[j];
                    }
                    lower[s.0][0] += ds;
                }
                Op::Scale { x, c } => {
                    for (d, &gi) in lower[x.0].iter_mut().zip(g) {
                        *d += gi * c;
                    }
                }
                Op::Sum { x } => {
                    for d in lower[x.0].iter_mut() {
                        *d += g[0];
                    }
                }
            }
        }
        Ok(grads)
    }
}

// ─── Forward context: parameters bound on demand ─────────────────────────

/// One forward pass: a tape plus lazily-leafed parameters. Parameters
/// never touched by the pass never reach the tape, so their gradient
/// stays absent rather than zero.
pub struct Fwd {
    pub tape: Tape,
    bound: HashMap<usize, Var>,
}

impl Fwd {
    pub fn new() -> Self {
        Fwd {
            tape: Tape::new(),
            bound: HashMap::new(),
        }
    }

    /// Leaf a parameter onto the tape (once; later calls return the same
    /// node, so gradient accumulation across uses is automatic).
    pub fn p(&mut self, set: &ParamSet, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id.0) {
            return v;
        }
        let t = set.get(id);
        let v = self
            .tape
            .leaf(t.shape.clone(), t.values.clone())
            .expect("parameter tensors are valid by construction");
        self.bound.insert(id.0, v);
        v
    }

    pub fn bound_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.bound.keys().map(|&i| ParamId(i))
    }

    /// Backward from `loss`, then accumulate gradients of every bound
    /// parameter into the set (allocating grad buffers on first write).
    pub fn backprop(&self, set: &mut ParamSet, loss: Var) -> Result<()> {
        let grads = self.tape.backward(loss)?;
        for (&idx, &var) in &self.bound {
            let t = set.get_mut(ParamId(idx));
            if !t.requires_grad {
                continue;
            }
            let g = &grads[var.0];
            match &mut t.grad {
                Some(buf) => {
                    for (d, &gi) in buf.iter_mut().zip(g) {
                        *d += gi;
                    }
                }
                None => t.grad = Some(g.clone()),
            }
        }
        Ok(())
    }
}

impl Default for Fwd {
    fn default() -> Self {
        Fwd::new()
    }
}

// ─── Gradient checking ───────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_rel_err)
            .fold(0.0, f64::max)
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

/// Compare analytic gradients of a scalar function against central finite
/// differences, componentwise, subsampling at most `per_tensor` entries
/// per parameter (all entries when the tensor is that small).
///
/// `build` must construct the full forward pass on the supplied context
/// and return the scalar loss node.
pub fn grad_check<F>(
    params: &mut ParamSet,
    mut build: F,
    eps: f64,
    per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Fwd, &ParamSet) -> Result<Var>,
{
    use rand::seq::SliceRandom;

    if eps <= 0.0 {
        return Err(CoreError::contract("grad_check eps must be positive"));
    }

    // Analytic pass.
    params.clear_grads();
    let mut fw = Fwd::new();
    let loss = build(&mut fw, params)?;
    let f0 = fw.tape.scalar_value(loss);
    if !f0.is_finite() {
        return Err(CoreError::numeric(format!("grad_check: loss is {f0}")));
    }
    fw.backprop(params, loss)?;
    let analytic: Vec<(String, Option<Vec<f64>>)> = params
        .iter()
        .map(|(n, t)| (n.to_string(), t.grad.clone()))
        .collect();

    let mut rng = crate::rng::SeedSplitter::new(seed).stream("grad_check");
    let mut entries = Vec::new();
    for id in params.ids().collect::<Vec<_>>() {
        let numel = params.get(id).numel();
        let name = params.name(id).to_string();
        let Some(grad) = analytic[id.0].1.clone() else {
            // Parameter absent from the pass; nothing to compare.
            continue;
        };
        let mut indices: Vec<usize> = (0..numel).collect();
        if numel > per_tensor {
            indices.shuffle(&mut rng);
            indices.truncate(per_tensor);
            indices.sort_unstable();
        }
        let mut max_err = 0.0f64;
        for &j in &indices {
            let orig = params.get(id).values[j];
            params.get_mut(id).values[j] = orig + eps;
            let mut fp = Fwd::new();
            let lp = build(&mut fp, params)?;
            let fplus = fp.tape.scalar_value(lp);
            params.get_mut(id).values[j] = orig - eps;
            let mut fm = Fwd::new();
            let lm = build(&mut fm, params)?;
            let fminus = fm.tape.scalar_value(lm);
            params.get_mut(id).values[j] = orig;
            if !fplus.is_finite() || !fminus.is_finite() {
                return Err(CoreError::numeric(
                    "grad_check: non-finite loss under perturbation".to_string(),
                ));
            }
            let numeric = (fplus - fminus) / (2.0 * eps);
            max_err = max_err.max(rel_err(grad[j], numeric));
        }
        entries.push(GradCheckEntry {
            name,
            checked: indices.len(),
            max_rel_err: max_err,
        });
    }
    params.clear_grads();
    Ok(GradCheckReport { entries })
}

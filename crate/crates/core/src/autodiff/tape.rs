use std::cell::RefCell;
use std::rc::Rc;

use super::tensor::Tensor;
use crate::{Error, Result};

const LEAKY_SLOPE: f64 = 0.01;

/// The public primitive set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrimitiveKind {
    MatMul,
    AddBroadcast,
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
    Log,
    Square,
    Sqrt,
    Sum,
    Mean,
    ScalarMul(f64),
    Sub,
    Mul,
    L2NormRows,
}

impl PrimitiveKind {
    pub fn arity(self) -> usize {
        match self {
            PrimitiveKind::MatMul
            | PrimitiveKind::AddBroadcast
            | PrimitiveKind::Sub
            | PrimitiveKind::Mul => 2,
            _ => 1,
        }
    }
}

// Internal ops are a superset of `PrimitiveKind`: backward passes are expressed in
// these same ops so that they can be differentiated again.
#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { ta: bool, tb: bool },
    Add,
    AddRow,
    Sub,
    Mul,
    Scale(f64),
    AddScalar,
    Relu,
    LeakyRelu,
    ClampMin(f64),
    Abs,
    Tanh,
    Sigmoid,
    Log,
    Square,
    Sqrt,
    Recip,
    Sum,
    Mean,
    SumRows,
    BroadcastRows,
    BroadcastScalar,
    L2NormRows,
    RowScale,
    SumCols,
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul { .. } => "matmul",
            Op::Add => "add",
            Op::AddRow => "add-broadcast",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Scale(_) => "scalar-mul",
            Op::AddScalar => "add-scalar",
            Op::Relu => "relu",
            Op::LeakyRelu => "leaky-relu",
            Op::ClampMin(_) => "clamp-min",
            Op::Abs => "abs",
            Op::Tanh => "tanh",
            Op::Sigmoid => "sigmoid",
            Op::Log => "log",
            Op::Square => "square",
            Op::Sqrt => "sqrt",
            Op::Recip => "recip",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::SumRows => "sum-rows",
            Op::BroadcastRows => "broadcast-rows",
            Op::BroadcastScalar => "broadcast-scalar",
            Op::L2NormRows => "l2-norm-per-row",
            Op::RowScale => "row-scale",
            Op::SumCols => "sum-cols",
        }
    }
}

struct Node {
    op: Op,
    inputs: [usize; 2],
    arity: usize,
    value: Rc<Tensor>,
}

/// Append-only record of primitive evaluations.
///
/// Node ids grow monotonically. [`Tape::grad_graph`] records the backward pass on
/// this same tape, so the gradients it returns can be differentiated again.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

fn dim_err(op: &'static str, operand: &'static str, expected: String, found: &[usize]) -> Error {
    Error::Dimension {
        op,
        operand,
        expected,
        found: found.to_vec(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers a tensor as a leaf (parameter, data or constant).
    pub fn input(&self, value: Tensor) -> Var<'_> {
        self.record(Op::Leaf, &[], value)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.input(Tensor::scalar(value))
    }

    fn record(&self, op: Op, inputs: &[usize], value: Tensor) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        let mut ids = [0usize; 2];
        ids[..inputs.len()].copy_from_slice(inputs);
        nodes.push(Node {
            op,
            inputs: ids,
            arity: inputs.len(),
            value: Rc::new(value),
        });
        Var { tape: self, id }
    }

    fn push(&self, op: Op, inputs: &[usize], value: Tensor) -> Result<Var<'_>> {
        if !value.all_finite() {
            return Err(Error::NonFinite(op.name().to_string()));
        }
        Ok(self.record(op, inputs, value))
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Evaluates one public primitive on tape inputs.
    pub fn forward_primitive<'t>(&'t self, kind: PrimitiveKind, inputs: &[Var<'t>]) -> Result<Var<'t>> {
        if inputs.len() != kind.arity() {
            return Err(Error::Contract(format!(
                "{kind:?} takes {} inputs, got {}",
                kind.arity(),
                inputs.len()
            )));
        }
        let a = inputs[0];
        match kind {
            PrimitiveKind::MatMul => a.matmul(inputs[1]),
            PrimitiveKind::AddBroadcast => a.add(inputs[1]),
            PrimitiveKind::Sub => a.sub(inputs[1]),
            PrimitiveKind::Mul => a.mul(inputs[1]),
            PrimitiveKind::Relu => a.relu(),
            PrimitiveKind::LeakyRelu => a.leaky_relu(),
            PrimitiveKind::Tanh => a.tanh(),
            PrimitiveKind::Sigmoid => a.sigmoid(),
            PrimitiveKind::Log => a.log(),
            PrimitiveKind::Square => a.square(),
            PrimitiveKind::Sqrt => a.sqrt(),
            PrimitiveKind::Sum => a.sum(),
            PrimitiveKind::Mean => a.mean(),
            PrimitiveKind::ScalarMul(s) => a.scale(s),
            PrimitiveKind::L2NormRows => a.l2_norm_rows(),
        }
    }

    /// Gradients of a scalar `output` with respect to `wrt`, as plain tensors.
    ///
    /// Nodes recorded while differentiating are discarded afterwards. Tensors that
    /// do not influence `output` get a zero gradient.
    pub fn grad<'t>(&'t self, output: Var<'t>, wrt: &[Var<'t>]) -> Result<Vec<Tensor>> {
        let mark = self.len();
        let result = self.backward(output, wrt).map(|adj| {
            adj.iter()
                .zip(wrt)
                .map(|(g, w)| match g {
                    Some(id) => (*self.value(*id)).clone(),
                    None => Tensor::zeros(&w.shape()),
                })
                .collect()
        });
        self.nodes.borrow_mut().truncate(mark);
        result
    }

    /// Gradients of a scalar `output` recorded as differentiable tape nodes.
    pub fn grad_graph<'t>(&'t self, output: Var<'t>, wrt: &[Var<'t>]) -> Result<Vec<Var<'t>>> {
        let adj = self.backward(output, wrt)?;
        Ok(adj
            .into_iter()
            .zip(wrt)
            .map(|(g, w)| match g {
                Some(id) => Var { tape: self, id },
                None => self.input(Tensor::zeros(&w.shape())),
            })
            .collect())
    }

    /// `grad` or `grad_graph` selected by flag, always returning tape handles.
    pub fn grad_with<'t>(
        &'t self,
        output: Var<'t>,
        wrt: &[Var<'t>],
        create_graph: bool,
    ) -> Result<Vec<Var<'t>>> {
        if create_graph {
            self.grad_graph(output, wrt)
        } else {
            let grads = self.grad(output, wrt)?;
            Ok(grads.into_iter().map(|g| self.input(g)).collect())
        }
    }

    fn backward<'t>(&'t self, output: Var<'t>, wrt: &[Var<'t>]) -> Result<Vec<Option<usize>>> {
        let out_shape = output.shape();
        if out_shape.iter().product::<usize>() != 1 {
            return Err(Error::Contract(format!(
                "gradient requested of non-scalar output with shape {out_shape:?}"
            )));
        }
        let out_id = output.id;
        let Some(lo) = wrt.iter().map(|w| w.id).filter(|&id| id <= out_id).min() else {
            return Ok(vec![None; wrt.len()]);
        };

        // A node is relevant if some wrt node lies in its input cone.
        let mut relevant = vec![false; out_id + 1 - lo];
        for w in wrt {
            if w.id <= out_id {
                relevant[w.id - lo] = true;
            }
        }
        {
            let nodes = self.nodes.borrow();
            for id in lo..=out_id {
                if relevant[id - lo] {
                    continue;
                }
                let n = &nodes[id];
                relevant[id - lo] = n.inputs[..n.arity]
                    .iter()
                    .any(|&i| i >= lo && relevant[i - lo]);
            }
        }
        if !relevant[out_id - lo] {
            return Ok(vec![None; wrt.len()]);
        }

        let mut adj: Vec<Option<usize>> = vec![None; out_id + 1 - lo];
        adj[out_id - lo] = Some(self.input(Tensor::filled(&out_shape, 1.0)).id);

        for id in (lo..=out_id).rev() {
            if !relevant[id - lo] {
                continue;
            }
            let Some(g) = adj[id - lo] else { continue };
            let (op, inputs, arity) = {
                let nodes = self.nodes.borrow();
                let n = &nodes[id];
                (n.op.clone(), n.inputs, n.arity)
            };
            if arity == 0 {
                continue;
            }
            let mut need = [false; 2];
            for k in 0..arity {
                need[k] = inputs[k] >= lo && relevant[inputs[k] - lo];
            }
            let grads = self.vjp(&op, id, inputs, Var { tape: self, id: g }, need)?;
            for k in 0..arity {
                if let Some(gk) = grads[k] {
                    let slot = &mut adj[inputs[k] - lo];
                    *slot = Some(match *slot {
                        None => gk.id,
                        Some(prev) => Var { tape: self, id: prev }.add(gk)?.id,
                    });
                }
            }
        }
        Ok(wrt
            .iter()
            .map(|w| if w.id <= out_id { adj[w.id - lo] } else { None })
            .collect())
    }

    fn vjp<'t>(
        &'t self,
        op: &Op,
        id: usize,
        inputs: [usize; 2],
        g: Var<'t>,
        need: [bool; 2],
    ) -> Result<[Option<Var<'t>>; 2]> {
        let a = Var { tape: self, id: inputs[0] };
        let b = Var { tape: self, id: inputs[1] };
        let y = Var { tape: self, id };
        let masked = |f: &dyn Fn(f64) -> f64| -> Result<Var<'t>> {
            let mask = a.value().map(f);
            g.mul(self.input(mask))
        };
        let ga: Option<Var<'t>>;
        let mut gb: Option<Var<'t>> = None;
        match op {
            Op::Leaf => return Ok([None, None]),
            Op::MatMul { ta, tb } => {
                let (ta, tb) = (*ta, *tb);
                ga = if need[0] {
                    Some(match (ta, tb) {
                        (false, false) => g.matmul_t(b, false, true)?,
                        (false, true) => g.matmul_t(b, false, false)?,
                        (true, false) => b.matmul_t(g, false, true)?,
                        (true, true) => b.matmul_t(g, true, true)?,
                    })
                } else {
                    None
                };
                if need[1] {
                    gb = Some(match (ta, tb) {
                        (false, false) => a.matmul_t(g, true, false)?,
                        (false, true) => g.matmul_t(a, true, false)?,
                        (true, false) => a.matmul_t(g, false, false)?,
                        (true, true) => g.matmul_t(a, true, true)?,
                    });
                }
            }
            Op::Add => {
                ga = Some(g);
                gb = Some(g);
            }
            Op::AddRow => {
                ga = Some(g);
                if need[1] {
                    gb = Some(g.sum_rows()?);
                }
            }
            Op::Sub => {
                ga = Some(g);
                if need[1] {
                    gb = Some(g.scale(-1.0)?);
                }
            }
            Op::Mul => {
                ga = if need[0] { Some(g.mul(b)?) } else { None };
                if need[1] {
                    gb = Some(g.mul(a)?);
                }
            }
            Op::Scale(s) => ga = Some(g.scale(*s)?),
            Op::AddScalar => ga = Some(g),
            Op::Relu => ga = Some(masked(&|x| if x > 0.0 { 1.0 } else { 0.0 })?),
            Op::LeakyRelu => ga = Some(masked(&|x| if x > 0.0 { 1.0 } else { LEAKY_SLOPE })?),
            Op::ClampMin(lo) => {
                let lo = *lo;
                ga = Some(masked(&move |x| if x > lo { 1.0 } else { 0.0 })?)
            }
            Op::Abs => ga = Some(masked(&|x| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 })?),
            Op::Tanh => {
                let dy = y.square()?.scale(-1.0)?.add_scalar(1.0)?;
                ga = Some(g.mul(dy)?);
            }
            Op::Sigmoid => {
                let dy = y.mul(y.scale(-1.0)?.add_scalar(1.0)?)?;
                ga = Some(g.mul(dy)?);
            }
            Op::Log => ga = Some(g.mul(a.recip()?)?),
            Op::Square => ga = Some(g.mul(a.scale(2.0)?)?),
            Op::Sqrt => ga = Some(g.mul(y.recip()?.scale(0.5)?)?),
            Op::Recip => ga = Some(g.mul(y.square()?.scale(-1.0)?)?),
            Op::Sum => ga = Some(g.broadcast_scalar(&a.shape())?),
            Op::Mean => {
                let shape = a.shape();
                let n = shape.iter().product::<usize>() as f64;
                ga = Some(g.broadcast_scalar(&shape)?.scale(1.0 / n)?);
            }
            Op::SumRows => ga = Some(g.broadcast_rows(a.value().rows())?),
            Op::BroadcastRows => ga = Some(g.sum_rows()?),
            Op::BroadcastScalar => ga = Some(g.sum()?),
            Op::L2NormRows => ga = Some(a.row_scale(g.mul(y.recip()?)?)?),
            Op::RowScale => {
                ga = if need[0] { Some(g.row_scale(b)?) } else { None };
                if need[1] {
                    gb = Some(g.mul(a)?.sum_cols()?);
                }
            }
            Op::SumCols => {
                let ones = self.input(Tensor::filled(&a.shape(), 1.0));
                ga = Some(ones.row_scale(g)?);
            }
        }
        Ok([ga.filter(|_| need[0]), gb.filter(|_| need[1])])
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    /// Scalar value of a one-element node.
    pub fn item(&self) -> Result<f64> {
        self.value().item()
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Result<Var<'t>> {
        let out = self.value().map(f);
        self.tape.push(op, &[self.id], out)
    }

    fn same_shape(&self, other: &Var<'t>, op: &'static str) -> Result<()> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa != sb {
            return Err(dim_err(op, "rhs", format!("{sa:?}"), &sb));
        }
        Ok(())
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.matmul_t(other, false, false)
    }

    /// `op(self) · op(other)` with optional transposes; both operands must be rank 2.
    pub fn matmul_t(self, other: Var<'t>, ta: bool, tb: bool) -> Result<Var<'t>> {
        let (av, bv) = (self.value(), other.value());
        if av.shape().len() != 2 {
            return Err(dim_err("matmul", "lhs", "rank 2".into(), av.shape()));
        }
        if bv.shape().len() != 2 {
            return Err(dim_err("matmul", "rhs", "rank 2".into(), bv.shape()));
        }
        let out = Tensor::matmul(&av, &bv, ta, tb)?;
        self.tape.push(Op::MatMul { ta, tb }, &[self.id, other.id], out)
    }

    /// Elementwise add; a rank-1 `other` of length `cols` is broadcast over rows.
    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        let (av, bv) = (self.value(), other.value());
        if av.shape() == bv.shape() {
            let out = av.zip_map(&bv, |x, y| x + y);
            return self.tape.push(Op::Add, &[self.id, other.id], out);
        }
        let (r, c) = av.dims2();
        if av.shape().len() == 2 && bv.shape() == [c] {
            let mut out = (*av).clone();
            let bias = bv.data();
            for row in out.data_mut().chunks_mut(c) {
                for (o, b) in row.iter_mut().zip(bias) {
                    *o += b;
                }
            }
            debug_assert_eq!(out.len(), r * c);
            return self.tape.push(Op::AddRow, &[self.id, other.id], out);
        }
        Err(dim_err(
            "add-broadcast",
            "rhs",
            format!("{:?} or [{c}]", av.shape()),
            bv.shape(),
        ))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_shape(&other, "sub")?;
        let out = self.value().zip_map(&other.value(), |x, y| x - y);
        self.tape.push(Op::Sub, &[self.id, other.id], out)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_shape(&other, "mul")?;
        let out = self.value().zip_map(&other.value(), |x, y| x * y);
        self.tape.push(Op::Mul, &[self.id, other.id], out)
    }

    pub fn scale(self, s: f64) -> Result<Var<'t>> {
        self.unary(Op::Scale(s), |x| x * s)
    }

    pub fn add_scalar(self, s: f64) -> Result<Var<'t>> {
        self.unary(Op::AddScalar, |x| x + s)
    }

    pub fn relu(self) -> Result<Var<'t>> {
        self.unary(Op::Relu, |x| x.max(0.0))
    }

    pub fn leaky_relu(self) -> Result<Var<'t>> {
        self.unary(Op::LeakyRelu, |x| if x > 0.0 { x } else { LEAKY_SLOPE * x })
    }

    pub fn clamp_min(self, lo: f64) -> Result<Var<'t>> {
        self.unary(Op::ClampMin(lo), |x| x.max(lo))
    }

    pub fn abs(self) -> Result<Var<'t>> {
        self.unary(Op::Abs, f64::abs)
    }

    pub fn tanh(self) -> Result<Var<'t>> {
        self.unary(Op::Tanh, f64::tanh)
    }

    pub fn sigmoid(self) -> Result<Var<'t>> {
        self.unary(Op::Sigmoid, |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        })
    }

    pub fn log(self) -> Result<Var<'t>> {
        self.unary(Op::Log, f64::ln)
    }

    pub fn square(self) -> Result<Var<'t>> {
        self.unary(Op::Square, |x| x * x)
    }

    pub fn sqrt(self) -> Result<Var<'t>> {
        self.unary(Op::Sqrt, f64::sqrt)
    }

    /// `1/x`, defined as 0 at 0.
    pub fn recip(self) -> Result<Var<'t>> {
        self.unary(Op::Recip, |x| if x == 0.0 { 0.0 } else { 1.0 / x })
    }

    pub fn sum(self) -> Result<Var<'t>> {
        let s = self.value().sum();
        self.tape.push(Op::Sum, &[self.id], Tensor::scalar(s))
    }

    pub fn mean(self) -> Result<Var<'t>> {
        let v = self.value();
        if v.is_empty() {
            return Err(dim_err("mean", "input", "nonempty".into(), v.shape()));
        }
        let m = v.sum() / v.len() as f64;
        self.tape.push(Op::Mean, &[self.id], Tensor::scalar(m))
    }

    /// Column sums of a matrix: `[m, n] -> [n]`.
    pub fn sum_rows(self) -> Result<Var<'t>> {
        let v = self.value();
        let (_, c) = v.dims2();
        let mut out = vec![0.0; c];
        for row in v.data().chunks(c.max(1)) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        self.tape.push(Op::SumRows, &[self.id], Tensor::vector(out))
    }

    /// Repeats a rank-1 `[n]` tensor as `m` rows.
    pub fn broadcast_rows(self, m: usize) -> Result<Var<'t>> {
        let v = self.value();
        if v.shape().len() != 1 {
            return Err(dim_err("broadcast-rows", "input", "rank 1".into(), v.shape()));
        }
        let n = v.len();
        let mut out = Vec::with_capacity(m * n);
        for _ in 0..m {
            out.extend_from_slice(v.data());
        }
        self.tape
            .push(Op::BroadcastRows, &[self.id], Tensor::matrix(m, n, out)?)
    }

    pub fn broadcast_scalar(self, shape: &[usize]) -> Result<Var<'t>> {
        let s = self.value().item()?;
        self.tape.push(
            Op::BroadcastScalar,
            &[self.id],
            Tensor::filled(shape, s),
        )
    }

    /// Euclidean norm of every row: `[m, n] -> [m]`; the gradient at a zero row is zero.
    pub fn l2_norm_rows(self) -> Result<Var<'t>> {
        let v = self.value();
        if v.shape().len() != 2 {
            return Err(dim_err("l2-norm-per-row", "input", "rank 2".into(), v.shape()));
        }
        let (_, c) = v.dims2();
        let out = v
            .data()
            .chunks(c.max(1))
            .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        self.tape.push(Op::L2NormRows, &[self.id], Tensor::vector(out))
    }

    /// Scales row `i` of `[m, n]` by `s[i]`.
    pub fn row_scale(self, s: Var<'t>) -> Result<Var<'t>> {
        let (v, sv) = (self.value(), s.value());
        let (r, c) = v.dims2();
        if v.shape().len() != 2 || sv.shape() != [r] {
            return Err(dim_err("row-scale", "scale", format!("[{r}]"), sv.shape()));
        }
        let mut out = (*v).clone();
        for (row, k) in out.data_mut().chunks_mut(c.max(1)).zip(sv.data()) {
            for x in row {
                *x *= k;
            }
        }
        self.tape.push(Op::RowScale, &[self.id, s.id], out)
    }

    /// Row sums of a matrix: `[m, n] -> [m]`.
    pub fn sum_cols(self) -> Result<Var<'t>> {
        let v = self.value();
        let (_, c) = v.dims2();
        let out = v
            .data()
            .chunks(c.max(1))
            .map(|r| r.iter().sum())
            .collect();
        self.tape.push(Op::SumCols, &[self.id], Tensor::vector(out))
    }
}

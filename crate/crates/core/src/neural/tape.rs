//! Reverse-mode differentiation over batch matrices.
//!
//! Only the primitives needed by the flow-matching losses exist: affine maps
//! (`matmul` + `add_row`), `tanh`/`silu`, column concatenation, elementwise
//! add/sub, scalar scaling and the batch-mean squared norm. Shape errors are
//! reported when a node is recorded, not during the backward pass.

use std::borrow::Cow;
use std::collections::BTreeMap;

use ndarray::{s, Array2, Axis, Zip};

use super::{Activation, NeuralError};

pub type Matrix = Array2<f64>;

/// Identifies one parameter tensor: `tensor = 2·layer` for weights and
/// `2·layer + 1` for biases of model `model`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamKey {
    pub model: usize,
    pub tensor: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamKey),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Act(Var, Activation),
    Concat(Vec<Var>),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    MeanSquaredNorm(Var),
}

#[derive(Default)]
pub struct Tape<'a> {
    values: Vec<Cow<'a, Matrix>>,
    ops: Vec<Op>,
    needs_grad: Vec<bool>,
}

/// Gradients keyed by parameter tensor.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    pub map: BTreeMap<ParamKey, Matrix>,
}

impl Gradients {
    pub fn get(&self, key: ParamKey) -> Option<&Matrix> {
        self.map.get(&key)
    }

    pub fn all_finite(&self) -> bool {
        self.map.values().all(|m| m.iter().all(|v| v.is_finite()))
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Matrix>, op: Op, needs_grad: bool) -> Var {
        self.values.push(value);
        self.ops.push(op);
        self.needs_grad.push(needs_grad);
        Var(self.values.len() - 1)
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(Cow::Owned(m), Op::Constant, false)
    }

    pub fn constant_ref(&mut self, m: &'a Matrix) -> Var {
        self.push(Cow::Borrowed(m), Op::Constant, false)
    }

    pub fn param(&mut self, key: ParamKey, m: &'a Matrix) -> Var {
        self.push(Cow::Borrowed(m), Op::Param(key), true)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.values[v.0]
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.values[v.0][[0, 0]]
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.values[v.0].dim()
    }

    fn ng(&self, v: Var) -> bool {
        self.needs_grad[v.0]
    }

    fn mismatch(op: &'static str, a: (usize, usize), b: (usize, usize)) -> NeuralError {
        NeuralError::ShapeMismatch {
            op,
            left: a,
            right: b,
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NeuralError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(Self::mismatch("matmul", sa, sb));
        }
        let v = self.value(a).dot(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Cow::Owned(v), Op::MatMul(a, b), ng))
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NeuralError> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr.0 != 1 || sr.1 != sa.1 {
            return Err(Self::mismatch("add_row", sa, sr));
        }
        let v = self.value(a) + self.value(row);
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(Cow::Owned(v), Op::AddRow(a, row), ng))
    }

    pub fn activation(&mut self, a: Var, act: Activation) -> Var {
        let v = self.value(a).mapv(|x| act.apply(x));
        let ng = self.ng(a);
        self.push(Cow::Owned(v), Op::Act(a, act), ng)
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NeuralError> {
        let Some(first) = parts.first() else {
            return Err(NeuralError::EmptyConcat);
        };
        let rows = self.shape(*first).0;
        let mut cols = 0;
        for p in parts {
            let sp = self.shape(*p);
            if sp.0 != rows {
                return Err(Self::mismatch("concat", (rows, cols), sp));
            }
            cols += sp.1;
        }
        let mut out = Matrix::zeros((rows, cols));
        let mut c = 0;
        for p in parts {
            let w = self.shape(*p).1;
            out.slice_mut(s![.., c..c + w]).assign(self.value(*p));
            c += w;
        }
        let ng = parts.iter().any(|p| self.ng(*p));
        Ok(self.push(Cow::Owned(out), Op::Concat(parts.to_vec()), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NeuralError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Self::mismatch("add", sa, sb));
        }
        let v = self.value(a) + self.value(b);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Cow::Owned(v), Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NeuralError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Self::mismatch("sub", sa, sb));
        }
        let v = self.value(a) - self.value(b);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Cow::Owned(v), Op::Sub(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        let ng = self.ng(a);
        self.push(Cow::Owned(v), Op::Scale(a, c), ng)
    }

    /// `(1/rows) Σ_ij a_ij²` as a `1 × 1` node.
    pub fn mean_squared_norm(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let rows = m.nrows().max(1) as f64;
        let v = m.iter().map(|x| x * x).sum::<f64>() / rows;
        let ng = self.ng(a);
        self.push(
            Cow::Owned(Matrix::from_elem((1, 1), v)),
            Op::MeanSquaredNorm(a),
            ng,
        )
    }

    /// Gradients of the scalar node `loss` with respect to every parameter
    /// reachable from it.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NeuralError> {
        if self.shape(loss) != (1, 1) {
            return Err(NeuralError::NonScalarLoss(self.shape(loss)));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::from_elem((1, 1), 1.0));
        let mut out = Gradients::default();

        fn accumulate(slot: &mut Option<Matrix>, g: Matrix) {
            match slot {
                Some(acc) => *acc += &g,
                None => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.needs_grad[i] {
                continue;
            }
            match &self.ops[i] {
                Op::Constant => {}
                Op::Param(key) => match out.map.get_mut(key) {
                    Some(acc) => *acc += &g,
                    None => {
                        out.map.insert(*key, g);
                    }
                },
                Op::MatMul(a, b) => {
                    if self.ng(*a) {
                        accumulate(&mut grads[a.0], g.dot(&self.value(*b).t()));
                    }
                    if self.ng(*b) {
                        accumulate(&mut grads[b.0], self.value(*a).t().dot(&g));
                    }
                }
                Op::AddRow(a, row) => {
                    if self.ng(*row) {
                        let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                        accumulate(&mut grads[row.0], gr);
                    }
                    if self.ng(*a) {
                        accumulate(&mut grads[a.0], g);
                    }
                }
                Op::Act(a, act) => {
                    let mut ga = g;
                    match act {
                        Activation::Tanh => {
                            let y = &self.values[i];
                            Zip::from(&mut ga)
                                .and(y.as_ref())
                                .for_each(|gv, &yv| *gv *= 1.0 - yv * yv);
                        }
                        Activation::Silu => {
                            let x = self.value(*a);
                            Zip::from(&mut ga).and(x).for_each(|gv, &xv| {
                                let sg = 1.0 / (1.0 + (-xv).exp());
                                *gv *= sg * (1.0 + xv * (1.0 - sg));
                            });
                        }
                    }
                    accumulate(&mut grads[a.0], ga);
                }
                Op::Concat(parts) => {
                    let mut c = 0;
                    for p in parts {
                        let w = self.shape(*p).1;
                        if self.ng(*p) {
                            accumulate(&mut grads[p.0], g.slice(s![.., c..c + w]).to_owned());
                        }
                        c += w;
                    }
                }
                Op::Add(a, b) => {
                    if self.ng(*b) {
                        accumulate(&mut grads[b.0], g.clone());
                    }
                    if self.ng(*a) {
                        accumulate(&mut grads[a.0], g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.ng(*b) {
                        accumulate(&mut grads[b.0], -&g);
                    }
                    if self.ng(*a) {
                        accumulate(&mut grads[a.0], g);
                    }
                }
                Op::Scale(a, c) => accumulate(&mut grads[a.0], g * *c),
                Op::MeanSquaredNorm(a) => {
                    let x = self.value(*a);
                    let factor = 2.0 * g[[0, 0]] / x.nrows().max(1) as f64;
                    accumulate(&mut grads[a.0], x * factor);
                }
            }
        }
        Ok(out)
    }
}

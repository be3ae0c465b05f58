//! A small reverse-mode differentiation tape over vectors and matrices.
//!
//! Values are computed eagerly as nodes are pushed; a single reverse sweep
//! from a scalar node accumulates adjoints for every leaf. The engine only
//! knows first-order vector-Jacobian products. Second derivatives (needed
//! when a loss is taken through the network's own input gradient) are
//! obtained by recording the backward pass itself as tape operations, so
//! one reverse sweep over the extended program suffices.
//!
//! Replaying a program on identical inputs reproduces values bit-exactly:
//! evaluation order is fixed by node order and the reverse sweep visits
//! nodes in strictly decreasing index order.

use ndarray::{Array1, Array2};

pub type NodeId = usize;

/// A tape value: rank-1 or rank-2. Scalars are length-1 vectors.
#[derive(Debug, Clone)]
pub enum Tensor {
    Vector(Array1<f64>),
    Matrix(Array2<f64>),
}

impl Tensor {
    pub fn vector(&self) -> &Array1<f64> {
        match self {
            Tensor::Vector(v) => v,
            Tensor::Matrix(_) => panic!("expected vector tensor"),
        }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        match self {
            Tensor::Matrix(m) => m,
            Tensor::Vector(_) => panic!("expected matrix tensor"),
        }
    }


    pub fn is_finite(&self) -> bool {
        match self {
            Tensor::Vector(v) => v.iter().all(|x| x.is_finite()),
            Tensor::Matrix(m) => m.iter().all(|x| x.is_finite()),
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `W x`
    MatVec(NodeId, NodeId),
    /// `W^T x`
    MatTVec(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    /// Elementwise product
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    /// `a + c * b`
    AddScaled(NodeId, NodeId, f64),
    Sigmoid(NodeId),
    /// `1 - x` elementwise
    OneMinus(NodeId),
    /// `|x|` elementwise (subgradient 0 at 0)
    Abs(NodeId),
    /// Sum of entries, as a length-1 vector
    Sum(NodeId),
    /// Contiguous sub-vector `x[start .. start + len]`
    Slice(NodeId, usize, usize),
    /// `[a; b]`
    Concat(NodeId, NodeId),
}

/// Recorded computation graph with eagerly evaluated node values.
#[derive(Default)]
pub struct Tape {
    ops: Vec<Op>,
    values: Vec<Tensor>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.values[id]
    }

    /// Scalar value of a length-1 vector node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.values[id].vector();
        assert_eq!(v.len(), 1, "node is not a scalar");
        v[0]
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.ops.push(op);
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn leaf_vector(&mut self, v: Array1<f64>) -> NodeId {
        self.push(Op::Leaf, Tensor::Vector(v))
    }

    pub fn leaf_matrix(&mut self, m: Array2<f64>) -> NodeId {
        self.push(Op::Leaf, Tensor::Matrix(m))
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> NodeId {
        let v = self.values[w].matrix().dot(self.values[x].vector());
        self.push(Op::MatVec(w, x), Tensor::Vector(v))
    }

    pub fn mat_t_vec(&mut self, w: NodeId, x: NodeId) -> NodeId {
        let v = self.values[w].matrix().t().dot(self.values[x].vector());
        self.push(Op::MatTVec(w, x), Tensor::Vector(v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.values[a].vector() + self.values[b].vector();
        self.push(Op::Add(a, b), Tensor::Vector(v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.values[a].vector() - self.values[b].vector();
        self.push(Op::Sub(a, b), Tensor::Vector(v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.values[a].vector() * self.values[b].vector();
        self.push(Op::Mul(a, b), Tensor::Vector(v))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = self.values[x].vector().mapv(|e| c * e);
        self.push(Op::Scale(x, c), Tensor::Vector(v))
    }

    pub fn add_scaled(&mut self, a: NodeId, b: NodeId, c: f64) -> NodeId {
        let av = self.values[a].vector();
        let bv = self.values[b].vector();
        let v = av + &bv.mapv(|e| c * e);
        self.push(Op::AddScaled(a, b, c), Tensor::Vector(v))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.values[x].vector().mapv(logistic);
        self.push(Op::Sigmoid(x), Tensor::Vector(v))
    }

    pub fn one_minus(&mut self, x: NodeId) -> NodeId {
        let v = self.values[x].vector().mapv(|e| 1.0 - e);
        self.push(Op::OneMinus(x), Tensor::Vector(v))
    }

    pub fn abs(&mut self, x: NodeId) -> NodeId {
        let v = self.values[x].vector().mapv(f64::abs);
        self.push(Op::Abs(x), Tensor::Vector(v))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.values[x].vector().sum();
        self.push(Op::Sum(x), Tensor::Vector(Array1::from_elem(1, s)))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.values[x]
            .vector()
            .slice(ndarray::s![start..start + len])
            .to_owned();
        self.push(Op::Slice(x, start, len), Tensor::Vector(v))
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let av = self.values[a].vector();
        let bv = self.values[b].vector();
        let mut v = Array1::zeros(av.len() + bv.len());
        v.slice_mut(ndarray::s![..av.len()]).assign(av);
        v.slice_mut(ndarray::s![av.len()..]).assign(bv);
        self.push(Op::Concat(a, b), Tensor::Vector(v))
    }

    /// Reverse sweep from a scalar node. Returns one adjoint per node
    /// (`None` where the node does not influence the seed).
    pub fn backward(&self, seed: NodeId) -> Vec<Option<Tensor>> {
        assert_eq!(
            self.values[seed].vector().len(),
            1,
            "backward seed must be scalar"
        );
        let mut adj: Vec<Option<Tensor>> = vec![None; self.ops.len()];
        adj[seed] = Some(Tensor::Vector(Array1::from_elem(1, 1.0)));
        for id in (0..self.ops.len()).rev() {
            let Some(g) = adj[id].take() else { continue };
            match &self.ops[id] {
                Op::Leaf => {
                    adj[id] = Some(g);
                    continue;
                }
                Op::MatVec(w, x) => {
                    let gv = g.vector();
                    let xv = self.values[*x].vector();
                    let wv = self.values[*w].matrix();
                    add_mat(&mut adj, *w, &outer(gv, xv));
                    add_vec(&mut adj, *x, &wv.t().dot(gv));
                }
                Op::MatTVec(w, x) => {
                    let gv = g.vector();
                    let xv = self.values[*x].vector();
                    let wv = self.values[*w].matrix();
                    add_mat(&mut adj, *w, &outer(xv, gv));
                    add_vec(&mut adj, *x, &wv.dot(gv));
                }
                Op::Add(a, b) => {
                    add_vec(&mut adj, *a, g.vector());
                    add_vec(&mut adj, *b, g.vector());
                }
                Op::Sub(a, b) => {
                    add_vec(&mut adj, *a, g.vector());
                    add_vec(&mut adj, *b, &g.vector().mapv(|e| -e));
                }
                Op::Mul(a, b) => {
                    let ga = g.vector() * self.values[*b].vector();
                    let gb = g.vector() * self.values[*a].vector();
                    add_vec(&mut adj, *a, &ga);
                    add_vec(&mut adj, *b, &gb);
                }
                Op::Scale(x, c) => {
                    add_vec(&mut adj, *x, &g.vector().mapv(|e| c * e));
                }
                Op::AddScaled(a, b, c) => {
                    add_vec(&mut adj, *a, g.vector());
                    add_vec(&mut adj, *b, &g.vector().mapv(|e| c * e));
                }
                Op::Sigmoid(x) => {
                    let y = self.values[id].vector();
                    let gx = g.vector() * &(y * &y.mapv(|e| 1.0 - e));
                    add_vec(&mut adj, *x, &gx);
                }
                Op::OneMinus(x) => {
                    add_vec(&mut adj, *x, &g.vector().mapv(|e| -e));
                }
                Op::Abs(x) => {
                    let xv = self.values[*x].vector();
                    let gx = g.vector() * &xv.mapv(|e| {
                        if e > 0.0 {
                            1.0
                        } else if e < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    });
                    add_vec(&mut adj, *x, &gx);
                }
                Op::Sum(x) => {
                    let s = g.vector()[0];
                    let n = self.values[*x].vector().len();
                    add_vec(&mut adj, *x, &Array1::from_elem(n, s));
                }
                Op::Slice(x, start, len) => {
                    let mut full = Array1::zeros(self.values[*x].vector().len());
                    full.slice_mut(ndarray::s![*start..*start + *len])
                        .assign(g.vector());
                    add_vec(&mut adj, *x, &full);
                }
                Op::Concat(a, b) => {
                    let la = self.values[*a].vector().len();
                    let gv = g.vector();
                    add_vec(&mut adj, *a, &gv.slice(ndarray::s![..la]).to_owned());
                    add_vec(&mut adj, *b, &gv.slice(ndarray::s![la..]).to_owned());
                }
            }
        }
        adj
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Exact logistic sigmoid, shared by the fast (non-tape) evaluation paths.
pub fn sigmoid_scalar(x: f64) -> f64 {
    logistic(x)
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let (m, n) = (a.len(), b.len());
    let mut out = Array2::zeros((m, n));
    for i in 0..m {
        for j in 0..n {
            out[[i, j]] = a[i] * b[j];
        }
    }
    out
}

fn add_vec(adj: &mut [Option<Tensor>], id: NodeId, g: &Array1<f64>) {
    match &mut adj[id] {
        Some(Tensor::Vector(v)) => *v += g,
        Some(Tensor::Matrix(_)) => panic!("shape mismatch in adjoint accumulation"),
        slot @ None => *slot = Some(Tensor::Vector(g.clone())),
    }
}

fn add_mat(adj: &mut [Option<Tensor>], id: NodeId, g: &Array2<f64>) {
    match &mut adj[id] {
        Some(Tensor::Matrix(m)) => *m += g,
        Some(Tensor::Vector(_)) => panic!("shape mismatch in adjoint accumulation"),
        slot @ None => *slot = Some(Tensor::Matrix(g.clone())),
    }
}

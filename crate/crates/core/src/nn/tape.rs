//! Reverse-mode automatic differentiation over dense matrices.
//!
//! Every operation appends a node holding its value; [`Tape::backward`]
//! walks the nodes in reverse and accumulates adjoints. Nodes created with
//! [`Tape::constant`] (and everything computed only from constants) get no
//! gradient, which keeps data matrices out of the backward pass.

use ndarray::{s, Array2, Axis};

pub type Mat = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    /// `a + b` with `b` a single row broadcast over the rows of `a`.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Relu(Var),
    /// Elementwise product with a constant (broadcast if it is one row).
    MulConst(Var, Mat),
    Scale(Var, f64),
    Square(Var),
    Mean(Var),
    Sum(Var),
    Rows(Var, usize, usize),
    /// Row-major reshape.
    Reshape(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Mat,
    op: Op,
    grad: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints from one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Grads(Vec<Option<Mat>>);

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.0[v.0].as_ref()
    }

    /// The adjoint of `v`, or zeros of `shape` when `v` did not influence the output.
    pub fn take_or_zeros(&mut self, v: Var, shape: (usize, usize)) -> Mat {
        self.0[v.0].take().unwrap_or_else(|| Mat::zeros(shape))
    }
}

fn reshape(m: &Mat, rows: usize, cols: usize) -> Mat {
    Mat::from_shape_vec((rows, cols), m.iter().copied().collect()).expect("reshape keeps size")
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

    fn push(&mut self, value: Mat, op: Op, grad: bool) -> Var {
        self.nodes.push(Node { value, op, grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].grad
    }

    /// A differentiable leaf.
    pub fn var(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::MatMul(a, b), g)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        let g = self.needs(a);
        self.push(v, Op::Transpose(a), g)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.shape(row).0, 1, "add_row expects a single row");
        let v = self.value(a) + self.value(row);
        let g = self.needs(a) || self.needs(row);
        self.push(v, Op::AddRow(a, row), g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), g)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::Sub(a, b), g)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        let g = self.needs(a);
        self.push(v, Op::Relu(a), g)
    }

    pub fn mul_const(&mut self, a: Var, c: Mat) -> Var {
        let v = self.value(a) * &c;
        let g = self.needs(a);
        self.push(v, Op::MulConst(a, c), g)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        let g = self.needs(a);
        self.push(v, Op::Scale(a, c), g)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * x);
        let g = self.needs(a);
        self.push(v, Op::Square(a), g)
    }

    /// Mean of all entries, as a 1x1 matrix.
    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let v = Mat::from_elem((1, 1), m.sum() / m.len() as f64);
        let g = self.needs(a);
        self.push(v, Op::Mean(a), g)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Mat::from_elem((1, 1), self.value(a).sum());
        let g = self.needs(a);
        self.push(v, Op::Sum(a), g)
    }

    /// Rows `start..end`.
    pub fn rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![start..end, ..]).to_owned();
        let g = self.needs(a);
        self.push(v, Op::Rows(a, start, end), g)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let v = reshape(self.value(a), rows, cols);
        let g = self.needs(a);
        self.push(v, Op::Reshape(a), g)
    }

    /// Adjoints of every node with respect to the scalar `out`.
    pub fn backward(&self, out: Var) -> Grads {
        assert_eq!(self.shape(out), (1, 1), "backward needs a scalar output");
        let mut adj: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        adj[out.0] = Some(Mat::ones((1, 1)));
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.grad {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            let send = |v: Var, d: Mat, adj: &mut [Option<Mat>]| {
                if !self.needs(v) {
                    return;
                }
                match &mut adj[v.0] {
                    Some(acc) => *acc += &d,
                    slot => *slot = Some(d),
                }
            };
            match &node.op {
                Op::Leaf => {
                    adj[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        send(*a, g.dot(&self.value(*b).t()), &mut adj);
                    }
                    if self.needs(*b) {
                        send(*b, self.value(*a).t().dot(&g), &mut adj);
                    }
                }
                Op::Transpose(a) => send(*a, g.t().to_owned(), &mut adj),
                Op::AddRow(a, r) => {
                    if self.needs(*r) {
                        send(*r, g.sum_axis(Axis(0)).insert_axis(Axis(0)), &mut adj);
                    }
                    send(*a, g, &mut adj);
                }
                Op::Add(a, b) => {
                    if self.needs(*b) {
                        send(*b, g.clone(), &mut adj);
                    }
                    send(*a, g, &mut adj);
                }
                Op::Sub(a, b) => {
                    if self.needs(*b) {
                        send(*b, -&g, &mut adj);
                    }
                    send(*a, g, &mut adj);
                }
                Op::Relu(a) => {
                    let mut d = g;
                    d.zip_mut_with(self.value(*a), |d, &x| {
                        if x <= 0.0 {
                            *d = 0.0;
                        }
                    });
                    send(*a, d, &mut adj);
                }
                Op::MulConst(a, c) => send(*a, g * c, &mut adj),
                Op::Scale(a, c) => send(*a, g * *c, &mut adj),
                Op::Square(a) => {
                    let mut d = g;
                    d.zip_mut_with(self.value(*a), |d, &x| *d *= 2.0 * x);
                    send(*a, d, &mut adj);
                }
                Op::Mean(a) => {
                    let m = self.value(*a);
                    send(*a, Mat::from_elem(m.dim(), g[[0, 0]] / m.len() as f64), &mut adj);
                }
                Op::Sum(a) => send(*a, Mat::from_elem(self.shape(*a), g[[0, 0]]), &mut adj),
                Op::Rows(a, start, end) => {
                    let mut d = Mat::zeros(self.shape(*a));
                    d.slice_mut(s![*start..*end, ..]).assign(&g);
                    send(*a, d, &mut adj);
                }
                Op::Reshape(a) => {
                    let (r, c) = self.shape(*a);
                    send(*a, reshape(&g, r, c), &mut adj);
                }
            }
        }
        Grads(adj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Central differences of `f` at every entry of `x`.
    fn numeric_grad(x: &Mat, f: impl Fn(&Mat) -> f64) -> Mat {
        let h = 1e-6;
        let mut g = Mat::zeros(x.dim());
        for idx in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            xp[[r, c]] += h;
            xm[[r, c]] -= h;
            g[[r, c]] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
        g
    }

    fn close(a: &Mat, b: &Mat) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-6 * x.abs().max(y.abs()).max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn linear_neuron_matches_closed_form() {
        // loss = (w x + b - t)^2, dL/dw = 2 (w x + b - t) x
        let (w, b, x, t) = (0.7, -0.2, 1.5, 2.0);
        let mut tp = Tape::new();
        let wv = tp.var(array![[w]]);
        let bv = tp.var(array![[b]]);
        let xv = tp.constant(array![[x]]);
        let y = tp.matmul(xv, wv);
        let y = tp.add_row(y, bv);
        let tv = tp.constant(array![[t]]);
        let r = tp.sub(y, tv);
        let l = tp.square(r);
        let l = tp.sum(l);
        let g = tp.backward(l);
        let res = w * x + b - t;
        assert!((g.get(wv).unwrap()[[0, 0]] - 2.0 * res * x).abs() < 1e-12);
        assert!((g.get(bv).unwrap()[[0, 0]] - 2.0 * res).abs() < 1e-12);
        assert!(g.get(xv).is_none());
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut tp = Tape::new();
        let w = tp.var(array![[1.0, 2.0]]);
        let c = tp.constant(array![[3.0]]);
        let z = tp.scale(w, 0.0);
        let z = tp.sum(z);
        let l = tp.add(z, c);
        let mut g = tp.backward(l);
        assert!(g.take_or_zeros(w, (1, 2)).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn composite_graph_matches_finite_differences() {
        let a0 = array![[0.3, -1.2, 0.5], [0.9, 0.4, -0.7]];
        let b0 = array![[0.2, 0.1], [-0.5, 0.8], [1.1, -0.3]];
        let f = |a: &Mat, b: &Mat, tp: &mut Tape| {
            let av = tp.var(a.clone());
            let bv = tp.var(b.clone());
            let p = tp.matmul(av, bv); // 2x2
            let bt = tp.transpose(bv); // 2x3
            let q = tp.matmul(p, bt); // 2x3
            let r = tp.relu(q);
            let m = tp.mul_const(r, array![[1.0, 0.5, 2.0]]);
            let row = tp.rows(av, 1, 2);
            let m = tp.add_row(m, row);
            let m = tp.sub(m, av);
            let m = tp.reshape(m, 3, 2);
            let sq = tp.square(m);
            let l = tp.mean(sq);
            let l2 = tp.scale(l, 3.0);
            (av, bv, l2)
        };
        let mut tp = Tape::new();
        let (av, bv, l) = f(&a0, &b0, &mut tp);
        let g = tp.backward(l);
        let ga = numeric_grad(&a0, |a| {
            let mut t = Tape::new();
            let (_, _, l) = f(a, &b0, &mut t);
            t.scalar(l)
        });
        let gb = numeric_grad(&b0, |b| {
            let mut t = Tape::new();
            let (_, _, l) = f(&a0, b, &mut t);
            t.scalar(l)
        });
        close(g.get(av).unwrap(), &ga);
        close(g.get(bv).unwrap(), &gb);
    }
}

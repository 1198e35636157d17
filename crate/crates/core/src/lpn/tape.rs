//! Reverse-mode differentiation over dense row-major matrices.
//!
//! A `Tape` records one forward pass. Parameters are borrowed from the model
//! rather than copied; their gradients are accumulated into a buffer aligned
//! with the parameter list when `backward` runs.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

pub(crate) const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Var(usize);

enum Op {
    Input,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Array2<f64>,
        inv_std: Array1<f64>,
    },
    CausalAttention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: Vec<Array2<f64>>,
    },
}

struct Node {
    value: Option<Array2<f64>>,
    op: Op,
}

pub(crate) struct Tape<'p> {
    params: &'p [Array2<f64>],
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Array2<f64>]) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn value(&self, v: Var) -> ArrayView2<'_, f64> {
        match (&self.nodes[v.0].value, &self.nodes[v.0].op) {
            (Some(a), _) => a.view(),
            (None, Op::Param(i)) => self.params[*i].view(),
            _ => unreachable!("node without value"),
        }
    }

    fn push(&mut self, value: Option<Array2<f64>>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Array2<f64>) -> Var {
        self.push(Some(value), Op::Input)
    }

    pub fn param(&mut self, index: usize) -> Var {
        self.push(None, Op::Param(index))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(&self.value(b));
        self.push(Some(out), Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = &self.value(a) + &self.value(b);
        self.push(Some(out), Op::Add(a, b))
    }

    /// `a + b` with the `1 x n` row `b` broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let out = &self.value(a) + &self.value(b);
        self.push(Some(out), Op::AddRow(a, b))
    }

    /// `x W + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add_row(xw, b)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(gelu);
        self.push(Some(out), Op::Gelu(x))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let n = xv.ncols() as f64;
        let mean = xv.sum_axis(Axis(1)) / n;
        let mut xhat = xv.to_owned();
        let mut inv_std = Array1::zeros(xv.nrows());
        for (i, mut row) in xhat.rows_mut().into_iter().enumerate() {
            row -= mean[i];
            let var = row.iter().map(|v| v * v).sum::<f64>() / n;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row *= is;
            inv_std[i] = is;
        }
        let out = &(&xhat * &self.value(gamma)) + &self.value(beta);
        self.push(
            Some(out),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// Multi-head scaled dot-product attention where query `i` only sees
    /// keys `0..=i`.
    pub fn causal_attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (t, d) = qv.dim();
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Array2::zeros((t, d));
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut p = qv.slice(cols).dot(&kv.slice(cols).t());
            for (i, mut row) in p.rows_mut().into_iter().enumerate() {
                let mut max = f64::NEG_INFINITY;
                for j in 0..=i {
                    row[j] *= scale;
                    max = max.max(row[j]);
                }
                let mut sum = 0.0;
                for j in 0..=i {
                    row[j] = (row[j] - max).exp();
                    sum += row[j];
                }
                for j in 0..t {
                    row[j] = if j <= i { row[j] / sum } else { 0.0 };
                }
            }
            out.slice_mut(cols).assign(&p.dot(&vv.slice(cols)));
            probs.push(p);
        }
        self.push(
            Some(out),
            Op::CausalAttention {
                q,
                k,
                v,
                heads,
                probs,
            },
        )
    }

    /// Propagates `seeds` (node, d output) back through the tape and adds the
    /// parameter gradients into `param_grads`.
    pub fn backward(&self, seeds: Vec<(Var, Array2<f64>)>, param_grads: &mut [Array2<f64>]) {
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        for (v, g) in seeds {
            accumulate(&mut grads[v.0], g);
        }
        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &self.nodes[idx].op {
                Op::Input => {}
                Op::Param(i) => param_grads[*i] += &g,
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[b.0], g.clone());
                    accumulate(&mut grads[a.0], g);
                }
                Op::AddRow(a, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads[b.0], gb);
                    accumulate(&mut grads[a.0], g);
                }
                Op::Gelu(x) => {
                    let mut gx = g;
                    Zip::from(&mut gx)
                        .and(&self.value(*x))
                        .for_each(|g, &x| *g *= gelu_grad(x));
                    accumulate(&mut grads[x.0], gx);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let gbeta = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let ggamma = (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let mut dxhat = &g * &self.value(*gamma);
                    let n = xhat.ncols() as f64;
                    for (i, mut row) in dxhat.rows_mut().into_iter().enumerate() {
                        let xr = xhat.row(i);
                        let sum = row.sum();
                        let dot = row.dot(&xr);
                        let is = inv_std[i];
                        Zip::from(&mut row)
                            .and(&xr)
                            .for_each(|d, &xh| *d = is * (*d - sum / n - xh * dot / n));
                    }
                    accumulate(&mut grads[beta.0], gbeta);
                    accumulate(&mut grads[gamma.0], ggamma);
                    accumulate(&mut grads[x.0], dxhat);
                }
                Op::CausalAttention {
                    q,
                    k,
                    v,
                    heads,
                    probs,
                } => {
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let (t, d) = qv.dim();
                    let dh = d / heads;
                    let scale = 1.0 / (dh as f64).sqrt();
                    let mut gq = Array2::zeros((t, d));
                    let mut gk = Array2::zeros((t, d));
                    let mut gv = Array2::zeros((t, d));
                    for (h, p) in probs.iter().enumerate() {
                        let cols = s![.., h * dh..(h + 1) * dh];
                        let go = g.slice(cols);
                        gv.slice_mut(cols).assign(&p.t().dot(&go));
                        let mut gs = go.dot(&vv.slice(cols).t());
                        for (mut row, prow) in gs.rows_mut().into_iter().zip(p.rows()) {
                            let dot = row.dot(&prow);
                            Zip::from(&mut row)
                                .and(&prow)
                                .for_each(|g, &p| *g = p * (*g - dot) * scale);
                        }
                        gq.slice_mut(cols).assign(&gs.dot(&kv.slice(cols)));
                        gk.slice_mut(cols).assign(&gs.t().dot(&qv.slice(cols)));
                    }
                    accumulate(&mut grads[v.0], gv);
                    accumulate(&mut grads[k.0], gk);
                    accumulate(&mut grads[q.0], gq);
                }
            }
        }
    }
}

fn accumulate(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let th = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Central differences of `f` w.r.t. every entry of `params[which]`.
    fn numeric(
        params: &mut [Array2<f64>],
        which: usize,
        f: &dyn Fn(&[Array2<f64>]) -> f64,
    ) -> Array2<f64> {
        let eps = 1e-6;
        let mut out = Array2::zeros(params[which].dim());
        for idx in 0..params[which].len() {
            let (r, c) = (idx / params[which].ncols(), idx % params[which].ncols());
            let orig = params[which][[r, c]];
            params[which][[r, c]] = orig + eps;
            let up = f(params);
            params[which][[r, c]] = orig - eps;
            let down = f(params);
            params[which][[r, c]] = orig;
            out[[r, c]] = (up - down) / (2.0 * eps);
        }
        out
    }

    fn check(params: Vec<Array2<f64>>, build: fn(&mut Tape) -> Var) {
        let loss = |p: &[Array2<f64>]| {
            let mut tape = Tape::new(p);
            let out = build(&mut tape);
            // Fixed weighting so the seed gradient is non-trivial.
            let v = tape.value(out);
            v.iter().enumerate().map(|(i, x)| (1.0 + i as f64 * 0.1) * x).sum::<f64>()
        };
        let mut params = params;
        let mut grads: Vec<Array2<f64>> = params.iter().map(|p| Array2::zeros(p.dim())).collect();
        {
            let mut tape = Tape::new(&params);
            let out = build(&mut tape);
            let dim = tape.value(out).dim();
            let seed = Array2::from_shape_fn(dim, |(r, c)| 1.0 + (r * dim.1 + c) as f64 * 0.1);
            tape.backward(vec![(out, seed)], &mut grads);
        }
        for which in 0..params.len() {
            let num = numeric(&mut params, which, &loss);
            for (a, n) in grads[which].iter().zip(num.iter()) {
                assert!((a - n).abs() < 1e-6 * (1.0 + n.abs()), "param {which}: {a} vs {n}");
            }
        }
    }

    #[test]
    fn linear_gelu_gradients() {
        let x = array![[0.3, -1.2, 0.5], [1.0, 0.1, -0.4]];
        let w = array![[0.2, -0.5], [0.7, 0.1], [-0.3, 0.9]];
        let b = array![[0.05, -0.2]];
        check(vec![x, w, b], |t| {
            let (x, w, b) = (t.param(0), t.param(1), t.param(2));
            let y = t.linear(x, w, b);
            t.gelu(y)
        });
    }

    #[test]
    fn layer_norm_gradients() {
        let x = array![[0.3, -1.2, 0.5, 2.0], [1.0, 0.1, -0.4, 0.0]];
        let g = array![[1.1, 0.9, -0.5, 1.3]];
        let b = array![[0.0, 0.1, 0.2, -0.3]];
        check(vec![x, g, b], |t| {
            let (x, g, b) = (t.param(0), t.param(1), t.param(2));
            t.layer_norm(x, g, b)
        });
    }

    #[test]
    fn attention_gradients() {
        let q = Array2::from_shape_fn((3, 4), |(i, j)| ((i * 4 + j) as f64 * 0.37).sin());
        let k = Array2::from_shape_fn((3, 4), |(i, j)| ((i * 4 + j) as f64 * 0.91).cos());
        let v = Array2::from_shape_fn((3, 4), |(i, j)| ((i + 2 * j) as f64 * 0.53).sin());
        check(vec![q, k, v], |t| {
            let (q, k, v) = (t.param(0), t.param(1), t.param(2));
            t.causal_attention(q, k, v, 2)
        });
    }

    #[test]
    fn attention_is_causal() {
        let q = Array2::from_shape_fn((4, 4), |(i, j)| (i as f64 - j as f64) * 0.2);
        let mut k = q.clone();
        let v = Array2::from_shape_fn((4, 4), |(i, j)| (i * j) as f64 * 0.1);
        let run = |k: &Array2<f64>| {
            let params = vec![q.clone(), k.clone(), v.clone()];
            let mut t = Tape::new(&params);
            let (a, b, c) = (t.param(0), t.param(1), t.param(2));
            let o = t.causal_attention(a, b, c, 2);
            t.value(o).to_owned()
        };
        let before = run(&k);
        k.row_mut(3).fill(9.0);
        let after = run(&k);
        assert_eq!(before.slice(s![..3, ..]), after.slice(s![..3, ..]));
    }
}

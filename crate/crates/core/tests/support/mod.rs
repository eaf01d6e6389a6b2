//! Scalar-loop reference implementations and random structures shared by
//! the integration tests.
#![allow(dead_code, clippy::too_many_arguments, clippy::needless_range_loop)]

use rabsa_core::corpus::{DepTree, LabelInventory, Token};
use rand::seq::SliceRandom;
use rand::Rng;

/// Row-major dense matrix.
#[derive(Clone, Debug)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// One syntax-fusion layer computed entry by entry:
/// `z_ij = [r_j; e_ij; r_asp]`, `s_ij = z_ij · w_b`, `α_i = softmax over
/// neighbours`, `r_i = relu(Σ_j α_ij (z_ij W_a + b))`.
/// `label_rows[i*n + j]` is the row of `table` holding `e_ij`.
pub fn usgcn_reference(
    r_prev: &Mat,
    table: &Mat,
    label_rows: &[usize],
    r_asp: &[f64],
    adjacency: &[bool],
    wa: &Mat,
    ba: &[f64],
    wb: &[f64],
) -> (Mat, Mat) {
    let n = r_prev.rows;
    let d_out = wa.cols;
    let z = |i: usize, j: usize| -> Vec<f64> {
        let mut v = r_prev.row(j).to_vec();
        v.extend_from_slice(table.row(label_rows[i * n + j]));
        v.extend_from_slice(r_asp);
        v
    };
    let mut alpha = Mat::new(n, n, vec![0.0; n * n]);
    let mut out = Mat::new(n, d_out, vec![0.0; n * d_out]);
    for i in 0..n {
        let neigh: Vec<usize> = (0..n).filter(|&j| adjacency[i * n + j]).collect();
        let scores: Vec<f64> = neigh
            .iter()
            .map(|&j| z(i, j).iter().zip(wb).map(|(a, b)| a * b).sum())
            .collect();
        let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
        let total: f64 = exps.iter().sum();
        for (k, &j) in neigh.iter().enumerate() {
            let a = exps[k] / total;
            alpha.data[i * n + j] = a;
            let zij = z(i, j);
            for c in 0..d_out {
                let mut m = ba[c];
                for (r, zv) in zij.iter().enumerate() {
                    m += zv * wa.at(r, c);
                }
                out.data[i * d_out + c] += a * m;
            }
        }
        for c in 0..d_out {
            let v = &mut out.data[i * d_out + c];
            *v = v.max(0.0);
        }
    }
    (out, alpha)
}

/// Aspect-aware pooling computed entry by entry. Returns `(β, r_a)`.
pub fn aggregate_reference(r: &Mat, r_asp: &[f64], wc: &[f64], bc: f64) -> (Vec<f64>, Vec<f64>) {
    let v: Vec<f64> = (0..r.rows)
        .map(|i| {
            let mut s = bc;
            for (k, x) in r.row(i).iter().chain(r_asp).enumerate() {
                s += x * wc[k];
            }
            s.tanh()
        })
        .collect();
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - mx).exp()).collect();
    let z: f64 = e.iter().sum();
    let beta: Vec<f64> = e.iter().map(|x| x / z).collect();
    let mut ra = vec![0.0; r.cols];
    for i in 0..r.rows {
        for c in 0..r.cols {
            ra[c] += beta[i] * r.at(i, c);
        }
    }
    (beta, ra)
}

/// A random projective-or-not tree over `n` tokens with labels drawn from
/// the inventory.
pub fn random_tree<R: Rng>(rng: &mut R, n: usize, labels: &LabelInventory) -> DepTree {
    let mut order: Vec<usize> = (1..=n).collect();
    order.shuffle(rng);
    let mut heads = vec![0; n];
    let mut names = vec![String::new(); n];
    for (k, &tok) in order.iter().enumerate() {
        if k == 0 {
            heads[tok - 1] = 0;
            names[tok - 1] = "root".into();
        } else {
            heads[tok - 1] = order[rng.gen_range(0..k)];
            let pick = loop {
                let l = labels.get(rng.gen_range(0..labels.len()));
                if l != "root" {
                    break l;
                }
            };
            names[tok - 1] = pick.to_string();
        }
    }
    let tokens = (1..=n)
        .map(|i| Token::new(i, format!("w{}", rng.gen_range(0..20)), "NOUN"))
        .collect();
    DepTree::new(tokens, heads, names).expect("random tree is valid")
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

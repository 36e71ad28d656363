//! Projection of one modality's factors onto the remaining covariates by a
//! Dantzig-type program, solved column by column:
//!
//! ```text
//! minimize ‖w‖₁  subject to  ‖c − G w‖∞ ≤ λ₂,   G = XᵀX/n,  c = Xᵀf/n.
//! ```
//!
//! Each column is the linear program over `w = w⁺ − w⁻` with `2q` inequality
//! rows. It is solved by a dual simplex started from the all-slack basis,
//! which is dual feasible because every cost is one. A basis is described by
//! the set `R` of tight rows and the set `J` of basic structural variables
//! (`|R| = |J|`), so only the small matrix `A[R, J]` is ever factored, and
//! rows of `G` are formed on demand from `X`.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{column, dot, to_column_major, Lu};
use crate::{cast, to_f64, Error, Real, Result};

/// Set by the null-rejection sweep in `examples/calibrate_tuning.rs`.
pub const DEFAULT_C2: f64 = 0.25;

/// Constraint tolerance used to accept a column as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DantzigOptions {
    pub feasibility_tol: f64,
    /// Pivot cap per column; `200 q + 5000` when absent.
    pub max_pivots: Option<usize>,
}

impl Default for DantzigOptions {
    fn default() -> Self {
        DantzigOptions {
            feasibility_tol: FEASIBILITY_TOL,
            max_pivots: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionEstimate<T> {
    /// `p_{−m} × K_m`.
    pub w_hat: Array2<T>,
    pub lambda2: T,
    pub per_column_l1: Vec<T>,
    pub feasible: Vec<bool>,
    pub iterations: Vec<usize>,
}

/// `c₂ √(log p_{−m} / n) · max(1, n^{1/4} / √p_m)`.
pub fn default_lambda2<T: Real>(n: usize, p_minus_m: usize, p_m: usize, c2: T) -> T {
    let n = n as f64;
    let rate = ((p_minus_m.max(2) as f64).ln() / n).sqrt();
    let boost = (n.powf(0.25) / (p_m as f64).sqrt()).max(1.0);
    c2 * cast::<T>(rate * boost)
}

/// Solves the program for every column of `f_hat_m`.
pub fn solve_projection<T: Real>(
    x_minus_m: ArrayView2<T>,
    f_hat_m: ArrayView2<T>,
    lambda2: T,
) -> Result<ProjectionEstimate<T>> {
    solve_projection_with(x_minus_m, f_hat_m, lambda2, &DantzigOptions::default())
}

pub fn solve_projection_with<T: Real>(
    x_minus_m: ArrayView2<T>,
    f_hat_m: ArrayView2<T>,
    lambda2: T,
    options: &DantzigOptions,
) -> Result<ProjectionEstimate<T>> {
    let (n, q) = x_minus_m.dim();
    if f_hat_m.nrows() != n {
        return Err(Error::InvalidInput(format!(
            "factor matrix has {} rows, design has {n}",
            f_hat_m.nrows()
        )));
    }
    if !(lambda2 > T::zero()) || !lambda2.is_finite() {
        return Err(Error::InvalidInput(format!(
            "λ₂ must be positive, got {}",
            to_f64(lambda2)
        )));
    }
    if x_minus_m
        .iter()
        .chain(f_hat_m.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::InvalidInput(
            "non-finite value in projection inputs".into(),
        ));
    }
    let x = to_column_major(x_minus_m.mapv(to_f64).view());
    let lambda = to_f64(lambda2);
    let columns: Vec<ColumnSolution> = (0..f_hat_m.ncols())
        .into_par_iter()
        .map(|k| {
            let f: Vec<f64> = f_hat_m.column(k).iter().map(|&v| to_f64(v)).collect();
            let c: Vec<f64> = (0..q).map(|j| dot(column(&x, j), &f) / n as f64).collect();
            DualSimplex::new(&x, c, lambda, options).solve()
        })
        .collect();
    let mut w_hat = Array2::zeros((q, columns.len()));
    let mut per_column_l1 = Vec::with_capacity(columns.len());
    let mut feasible = Vec::with_capacity(columns.len());
    let mut iterations = Vec::with_capacity(columns.len());
    for (k, col) in columns.into_iter().enumerate() {
        for (j, &v) in col.w.iter().enumerate() {
            w_hat[[j, k]] = cast(v);
        }
        per_column_l1.push(cast(col.w.iter().map(|v| v.abs()).sum()));
        feasible.push(col.feasible);
        iterations.push(col.iterations);
    }
    Ok(ProjectionEstimate {
        w_hat,
        lambda2,
        per_column_l1,
        feasible,
        iterations,
    })
}

#[derive(Debug, Clone)]
struct ColumnSolution {
    w: Vec<f64>,
    feasible: bool,
    iterations: usize,
}

/// Rows `0..q` are `G w ≤ c + λ`, rows `q..2q` are `−G w ≤ λ − c`.
/// Structural `l < q` is `w⁺_l`, `l ≥ q` is `w⁻_{l−q}`.
struct DualSimplex<'a> {
    x: &'a Array2<f64>,
    c: Vec<f64>,
    lambda: f64,
    q: usize,
    gram: HashMap<usize, Vec<f64>>,
    feasibility_tol: f64,
    cap: usize,
}

enum Leaving {
    Slack(usize),
    Structural(usize),
}

#[derive(Clone, Copy, PartialEq)]
enum Entering {
    Structural(usize),
    Slack(usize),
}

impl<'a> DualSimplex<'a> {
    fn new(x: &'a Array2<f64>, c: Vec<f64>, lambda: f64, options: &DantzigOptions) -> Self {
        let q = c.len();
        DualSimplex {
            x,
            c,
            lambda,
            q,
            gram: HashMap::new(),
            feasibility_tol: options.feasibility_tol,
            cap: options.max_pivots.unwrap_or(200 * q + 5000),
        }
    }

    fn sign(idx: usize, q: usize) -> f64 {
        if idx < q {
            1.0
        } else {
            -1.0
        }
    }

    fn gram_row(&mut self, i: usize) -> &[f64] {
        let x = self.x;
        let n = x.nrows() as f64;
        self.gram.entry(i).or_insert_with(|| {
            let xi = column(x, i);
            (0..x.ncols()).map(|l| dot(xi, column(x, l)) / n).collect()
        })
    }

    fn rhs(&self, r: usize) -> f64 {
        let q = self.q;
        self.lambda + Self::sign(r, q) * self.c[r % q]
    }

    /// `A[r, s]`.
    fn entry(&mut self, r: usize, s: usize) -> f64 {
        let q = self.q;
        let sign = Self::sign(r, q) * Self::sign(s, q);
        sign * self.gram_row(r % q)[s % q]
    }

    /// `Σ_t coef_t · sign(rows_t) · G[rows_t mod q, :]`.
    fn combine_rows(&mut self, rows: &[usize], coef: &[f64]) -> Vec<f64> {
        let q = self.q;
        let mut out = vec![0.0; q];
        for (&r, &a) in rows.iter().zip(coef) {
            if a != 0.0 {
                let s = Self::sign(r, q) * a;
                let g = self.gram_row(r % q);
                for (o, &v) in out.iter_mut().zip(g) {
                    *o += s * v;
                }
            }
        }
        out
    }

    fn net_w(&self, basic: &[usize], values: &[f64]) -> Vec<f64> {
        let q = self.q;
        let mut w = vec![0.0; q];
        for (&j, &v) in basic.iter().zip(values) {
            w[j % q] += Self::sign(j, q) * v;
        }
        w
    }

    fn solve(mut self) -> ColumnSolution {
        let q = self.q;
        let scale = self.c.iter().fold(self.lambda, |m, v| m.max(v.abs()));
        let primal_tol = 1e-11 * scale.max(1.0);
        let pivot_tol = 1e-10;
        let mut tight: Vec<usize> = Vec::new();
        let mut basic: Vec<usize> = Vec::new();
        let bland_after = 50 * q + 1000;
        let cap = self.cap;
        let mut iterations = 0;

        loop {
            // Primal values of the current basis.
            let k = basic.len();
            let mut m = Array2::zeros((k, k));
            for a in 0..k {
                for b in 0..k {
                    m[[a, b]] = self.entry(tight[a], basic[b]);
                }
            }
            let lu = if k > 0 {
                match Lu::new(m.view()) {
                    Ok(lu) => Some(lu),
                    Err(_) => return self.finish(&basic, &[], iterations, false),
                }
            } else {
                None
            };
            let xb: Vec<f64> = match &lu {
                Some(lu) => {
                    let b = ndarray::Array1::from_iter(tight.iter().map(|&r| self.rhs(r)));
                    lu.solve_vec(b.view()).to_vec()
                }
                None => Vec::new(),
            };
            let w = self.net_w(&basic, &xb);
            let mut gw = vec![0.0; q];
            for (l, &wl) in w.iter().enumerate() {
                if wl != 0.0 {
                    let g = self.gram_row(l).to_vec();
                    for (o, v) in gw.iter_mut().zip(g) {
                        *o += wl * v;
                    }
                }
            }
            if iterations >= cap {
                return self.finish(&basic, &xb, iterations, false);
            }
            let bland = iterations >= bland_after;

            // Leaving variable: most negative basic value (or first under Bland).
            let mut leaving = None;
            let mut worst = -primal_tol;
            let mut consider = |cand: Leaving, value: f64, leaving: &mut Option<Leaving>| {
                if bland {
                    if value < -primal_tol && leaving.is_none() {
                        *leaving = Some(cand);
                    }
                } else if value < worst {
                    worst = value;
                    *leaving = Some(cand);
                }
            };
            for (t, &v) in xb.iter().enumerate() {
                consider(Leaving::Structural(t), v, &mut leaving);
            }
            for r in 0..2 * q {
                if tight.contains(&r) {
                    continue;
                }
                let slack = self.rhs(r) - Self::sign(r, q) * gw[r % q];
                consider(Leaving::Slack(r), slack, &mut leaving);
            }
            let Some(leaving) = leaving else {
                return self.finish(&basic, &xb, iterations, true);
            };
            iterations += 1;

            // Row of B⁻¹ for the leaving variable, restricted to tight rows.
            let lu_ref = lu.as_ref();
            let (rho, extra_row) = match leaving {
                Leaving::Slack(r) => {
                    let rhs: Vec<f64> = basic.iter().map(|&j| -self.entry(r, j)).collect();
                    let rho = match lu_ref {
                        Some(lu) => lu
                            .solve_transpose_vec(ndarray::Array1::from(rhs).view())
                            .to_vec(),
                        None => Vec::new(),
                    };
                    (rho, Some(r))
                }
                Leaving::Structural(t) => {
                    let mut e = ndarray::Array1::zeros(k);
                    e[t] = 1.0;
                    (
                        lu_ref
                            .expect("structural basis")
                            .solve_transpose_vec(e.view())
                            .to_vec(),
                        None,
                    )
                }
            };
            let mut alpha_rows = self.combine_rows(&tight, &rho);
            if let Some(r) = extra_row {
                let s = Self::sign(r, q);
                let g = self.gram_row(r % q).to_vec();
                for (o, v) in alpha_rows.iter_mut().zip(g) {
                    *o += s * v;
                }
            }
            // Duals on tight rows and reduced costs.
            let y: Vec<f64> = match lu_ref {
                Some(lu) => lu
                    .solve_transpose_vec(ndarray::Array1::from_elem(k, 1.0).view())
                    .to_vec(),
                None => Vec::new(),
            };
            let ty = self.combine_rows(&tight, &y);

            let mut best: Option<(Entering, f64)> = None;
            let offer = |e: Entering, alpha: f64, d: f64, best: &mut Option<(Entering, f64)>| {
                if alpha < -pivot_tol {
                    let ratio = d.max(0.0) / -alpha;
                    let better = match best {
                        None => true,
                        Some((_, r)) => ratio < *r,
                    };
                    if better {
                        *best = Some((e, ratio));
                    }
                }
            };
            for s in 0..2 * q {
                if basic.contains(&s) {
                    continue;
                }
                let sg = Self::sign(s, q);
                let alpha = sg * alpha_rows[s % q];
                let d = 1.0 - sg * ty[s % q];
                offer(Entering::Structural(s), alpha, d, &mut best);
            }
            for (a, &r) in tight.iter().enumerate() {
                offer(Entering::Slack(r), rho[a], -y[a], &mut best);
            }
            let Some((entering, _)) = best else {
                // Dual unbounded: the column's constraint set is empty.
                return self.finish(&basic, &xb, iterations, false);
            };

            match leaving {
                Leaving::Slack(r) => tight.push(r),
                Leaving::Structural(t) => {
                    basic.remove(t);
                }
            }
            match entering {
                Entering::Structural(s) => basic.push(s),
                Entering::Slack(r) => tight.retain(|&x| x != r),
            }
        }
    }

    fn finish(
        &mut self,
        basic: &[usize],
        values: &[f64],
        iterations: usize,
        optimal: bool,
    ) -> ColumnSolution {
        let q = self.q;
        let mut w = if values.len() == basic.len() {
            self.net_w(basic, values)
        } else {
            vec![0.0; q]
        };
        for v in w.iter_mut() {
            if v.abs() < 1e-15 {
                *v = 0.0;
            }
        }
        let mut worst: f64 = 0.0;
        let mut gw = vec![0.0; q];
        for (l, &wl) in w.iter().enumerate() {
            if wl != 0.0 {
                let g = self.gram_row(l).to_vec();
                for (o, v) in gw.iter_mut().zip(g) {
                    *o += wl * v;
                }
            }
        }
        for i in 0..q {
            worst = worst.max((self.c[i] - gw[i]).abs());
        }
        let feasible = optimal && worst <= self.lambda + self.feasibility_tol;
        if !feasible {
            log::warn!(
                "projection column {} after {iterations} pivots (constraint sup {worst:e}, λ₂ {:e})",
                if optimal { "violates tolerance" } else { "not solved" },
                self.lambda
            );
        }
        ColumnSolution {
            w,
            feasible,
            iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array1;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, p), |_| StandardNormal.sample(&mut rng))
    }

    fn constraint_sup(x: &Array2<f64>, f: &Array1<f64>, w: &Array1<f64>) -> f64 {
        let n = x.nrows() as f64;
        let r = f - &x.dot(w);
        x.t().dot(&r).iter().fold(0.0f64, |m, v| m.max(v.abs() / n))
    }

    #[test]
    fn default_lambda2_reference() {
        let l: f64 = default_lambda2(100, 400, 200, 1.0);
        assert_abs_diff_eq!(l, (400f64.ln() / 100.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(l, 0.2448, epsilon = 1e-4);
        let big: f64 = default_lambda2(100, 400, 1_000_000, 1.0);
        assert_abs_diff_eq!(big, l, epsilon = 1e-15);
        let boosted: f64 = default_lambda2(10_000, 400, 1, 1.0);
        assert_abs_diff_eq!(
            boosted,
            10.0 * (400f64.ln() / 10_000.0).sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn large_lambda_gives_zero() {
        let x = gaussian(40, 6, 1);
        let f = gaussian(40, 1, 2);
        let c = x.t().dot(&f.column(0)) / 40.0;
        let lmax = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let est = solve_projection(x.view(), f.view(), lmax).unwrap();
        assert!(est.w_hat.iter().all(|&v| v == 0.0));
        assert!(est.feasible[0]);
    }

    #[test]
    fn exact_representation_is_recovered() {
        let x = gaussian(40, 6, 3);
        let f = (x.column(2).to_owned() * 1.7).insert_axis(ndarray::Axis(1));
        for lambda in [1e-6, 1e-3] {
            let est = solve_projection(x.view(), f.view(), lambda).unwrap();
            assert!(est.feasible[0]);
            // Lowest-L1 point of a tiny box around 1.7·e₂.
            assert!(est.per_column_l1[0] <= 1.7 + 1e-9);
            assert_abs_diff_eq!(est.w_hat[[2, 0]], 1.7, epsilon = 0.01);
        }
    }

    #[test]
    fn feasibility_and_monotonicity_on_wide_design() {
        let x = gaussian(30, 80, 4);
        let f = gaussian(30, 2, 5);
        let mut prev = [f64::INFINITY; 2];
        for lambda in [0.05, 0.1, 0.2, 0.4] {
            let est = solve_projection(x.view(), f.view(), lambda).unwrap();
            for k in 0..2 {
                assert!(est.feasible[k]);
                let w = est.w_hat.column(k).to_owned();
                assert!(constraint_sup(&x, &f.column(k).to_owned(), &w) <= lambda + 1e-8);
                assert!(est.per_column_l1[k] <= prev[k] + 1e-9);
                prev[k] = est.per_column_l1[k];
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = gaussian(10, 3, 6);
        let f = gaussian(10, 1, 7);
        assert!(solve_projection(x.view(), f.view(), 0.0).is_err());
        assert!(solve_projection(x.view(), gaussian(9, 1, 8).view(), 0.1).is_err());
        let mut bad = x.clone();
        bad[[0, 0]] = f64::NAN;
        assert!(solve_projection(bad.view(), f.view(), 0.1).is_err());
    }
}

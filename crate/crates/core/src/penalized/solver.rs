use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::penalty::{Penalty, PenaltyKind};
use crate::linalg::{axpy, column, dot, largest_gram_eigenvalue, to_column_major};
use crate::{cast, Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Cyclic exact coordinate minimization with an active-set cycle.
    #[default]
    CoordinateDescent,
    /// Proximal gradient with backtracking from `1/L`.
    ProximalGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub method: Solver,
    /// Coordinate descent: stop when every scaled coordinate move is below
    /// `tol · sd(y)`. Proximal gradient: relative objective change.
    pub tol: f64,
    /// Cap on sweeps (coordinate descent) or iterations (proximal gradient).
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: Solver::CoordinateDescent,
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PenalizedFit<T> {
    pub gamma_hat: Array1<T>,
    pub beta_hat: Array1<T>,
    /// `{j : β̂_j ≠ 0}`, ascending.
    pub active_set: Vec<usize>,
    pub lambda_used: T,
    pub objective_trace: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
    pub sigma_eps_hat: Option<T>,
}

impl<T: Real> PenalizedFit<T> {
    fn theta(&self) -> Vec<T> {
        self.gamma_hat
            .iter()
            .chain(self.beta_hat.iter())
            .copied()
            .collect()
    }

    pub fn objective(&self) -> T {
        *self
            .objective_trace
            .last()
            .expect("trace holds the starting objective")
    }
}

/// Least-squares data `(y, [F̂, Û])` prepared for repeated penalized fits.
#[derive(Debug, Clone)]
pub struct PenalizedProblem<T> {
    z: ndarray::Array2<T>,
    y: Vec<T>,
    k: usize,
    col_sq: Vec<T>,
}

impl<T: Real> PenalizedProblem<T> {
    /// `f_hat` may have zero columns.
    pub fn new(y: ArrayView1<T>, f_hat: ArrayView2<T>, u_hat: ArrayView2<T>) -> Result<Self> {
        let n = y.len();
        if f_hat.nrows() != n || u_hat.nrows() != n {
            return Err(Error::InvalidInput(format!(
                "row mismatch: y has {n}, factors {}, design {}",
                f_hat.nrows(),
                u_hat.nrows()
            )));
        }
        if n == 0 {
            return Err(Error::InvalidInput("empty response".into()));
        }
        if y.iter()
            .chain(f_hat.iter())
            .chain(u_hat.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput(
                "non-finite value in regression inputs".into(),
            ));
        }
        let z = to_column_major(
            ndarray::concatenate(Axis(1), &[f_hat, u_hat])
                .expect("rows agree")
                .view(),
        );
        Ok(Self::from_parts(z, y.to_vec(), f_hat.ncols()))
    }

    fn from_parts(z: ndarray::Array2<T>, y: Vec<T>, k: usize) -> Self {
        let nf = cast::<T>(y.len() as f64);
        let col_sq = (0..z.ncols())
            .map(|j| dot(column(&z, j), column(&z, j)) / nf)
            .collect();
        PenalizedProblem { z, y, k, col_sq }
    }

    /// Sub-problem on the given rows.
    pub fn rows(&self, rows: &[usize]) -> Self {
        let z = to_column_major(self.z.select(Axis(0), rows).view());
        let y = rows.iter().map(|&i| self.y[i]).collect();
        Self::from_parts(z, y, self.k)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn num_factors(&self) -> usize {
        self.k
    }

    pub fn p(&self) -> usize {
        self.z.ncols() - self.k
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    fn nf(&self) -> T {
        cast(self.n() as f64)
    }

    /// `y − [F̂, Û] (γ, β)`.
    pub fn residuals(&self, fit: &PenalizedFit<T>) -> Vec<T> {
        self.residual_of(&fit.theta())
    }

    fn residual_of(&self, theta: &[T]) -> Vec<T> {
        let mut r = self.y.clone();
        for (j, &t) in theta.iter().enumerate() {
            if t != T::zero() {
                axpy(-t, column(&self.z, j), &mut r);
            }
        }
        r
    }

    /// Predictions for the design rows of `self` using coefficients of `fit`.
    pub fn predict(&self, fit: &PenalizedFit<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.n()];
        for (j, t) in fit.theta().into_iter().enumerate() {
            if t != T::zero() {
                axpy(t, column(&self.z, j), &mut out);
            }
        }
        out
    }

    /// `(1/n) [F̂, Û]ᵀ r` for the residual of `fit`, i.e. minus the loss gradient.
    pub fn correlations(&self, fit: &PenalizedFit<T>) -> Vec<T> {
        let r = self.residuals(fit);
        self.correlations_of(&r)
    }

    fn correlations_of(&self, r: &[T]) -> Vec<T> {
        let nf = self.nf();
        (0..self.z.ncols())
            .map(|j| dot(column(&self.z, j), r) / nf)
            .collect()
    }

    fn check_penalty(&self, penalty: &Penalty<T>) -> Result<()> {
        if penalty.dim() != self.p() {
            return Err(Error::InvalidInput(format!(
                "penalty mask has length {}, design has {} columns",
                penalty.dim(),
                self.p()
            )));
        }
        Ok(())
    }

    fn is_free(&self, penalty: &Penalty<T>, j: usize) -> bool {
        j < self.k || !penalty.is_penalized(j - self.k)
    }

    fn objective_of(&self, r: &[T], theta: &[T], penalty: &Penalty<T>) -> T {
        dot(r, r) / (cast::<T>(2.0) * self.nf()) + penalty.total(&theta[self.k..])
    }

    /// Fits the penalized objective. Folded-concave penalties start from the
    /// Lasso solution at the same `λ` unless `init` is given.
    pub fn fit(
        &self,
        penalty: &Penalty<T>,
        init: Option<&PenalizedFit<T>>,
        options: &SolverOptions,
    ) -> Result<PenalizedFit<T>> {
        self.check_penalty(penalty)?;
        let start = match init {
            Some(f) => {
                if f.gamma_hat.len() != self.k || f.beta_hat.len() != self.p() {
                    return Err(Error::InvalidInput(
                        "initial fit has wrong dimensions".into(),
                    ));
                }
                f.theta()
            }
            None if !penalty.kind.is_convex() => {
                let lasso = penalty.with_kind(PenaltyKind::Lasso);
                self.fit_from(&lasso, vec![T::zero(); self.z.ncols()], options, false)?
                    .theta()
            }
            None => vec![T::zero(); self.z.ncols()],
        };
        let fit = self.fit_from(penalty, start, options, false)?;
        if !fit.converged {
            log::warn!(
                "penalized fit did not converge in {} iterations (λ = {:?})",
                fit.iterations,
                fit.lambda_used
            );
        }
        Ok(fit)
    }

    /// Least squares on the free coordinates with every penalized one at zero.
    pub fn fit_free_only(
        &self,
        penalty: &Penalty<T>,
        options: &SolverOptions,
    ) -> Result<PenalizedFit<T>> {
        self.check_penalty(penalty)?;
        self.fit_from(penalty, vec![T::zero(); self.z.ncols()], options, true)
    }

    fn fit_from(
        &self,
        penalty: &Penalty<T>,
        theta: Vec<T>,
        options: &SolverOptions,
        free_only: bool,
    ) -> Result<PenalizedFit<T>> {
        let (theta, trace, converged, iterations) = match options.method {
            Solver::CoordinateDescent => {
                self.coordinate_descent(penalty, theta, options, free_only)
            }
            Solver::ProximalGradient => self.proximal_gradient(penalty, theta, options, free_only),
        };
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "penalized solver produced non-finite coefficients".into(),
            ));
        }
        let gamma_hat = Array1::from(theta[..self.k].to_vec());
        let beta_hat = Array1::from(theta[self.k..].to_vec());
        let active_set = (0..beta_hat.len())
            .filter(|&j| beta_hat[j] != T::zero())
            .collect();
        Ok(PenalizedFit {
            gamma_hat,
            beta_hat,
            active_set,
            lambda_used: penalty.lambda,
            objective_trace: trace,
            converged,
            iterations,
            sigma_eps_hat: None,
        })
    }

    fn coordinate_descent(
        &self,
        penalty: &Penalty<T>,
        mut theta: Vec<T>,
        options: &SolverOptions,
        free_only: bool,
    ) -> (Vec<T>, Vec<T>, bool, usize) {
        let d = self.z.ncols();
        let nf = self.nf();
        let scale = (dot(&self.y, &self.y) / nf).max(T::min_positive_value());
        let tol = cast::<T>(options.tol * options.tol) * scale;
        let eligible: Vec<usize> = (0..d)
            .filter(|&j| !free_only || self.is_free(penalty, j))
            .collect();
        if free_only {
            theta.iter_mut().enumerate().for_each(|(j, t)| {
                if !self.is_free(penalty, j) {
                    *t = T::zero();
                }
            });
        }

        let mut r = self.residual_of(&theta);
        let mut trace = vec![self.objective_of(&r, &theta, penalty)];
        let mut sweeps = 0;
        let mut converged = false;
        let mut active: Vec<usize> = Vec::with_capacity(d);
        while sweeps < options.max_iter {
            r = self.residual_of(&theta);
            let delta = self.sweep(penalty, &eligible, &mut theta, &mut r);
            sweeps += 1;
            trace.push(self.objective_of(&r, &theta, penalty));
            if delta < tol {
                converged = true;
                break;
            }
            active.clear();
            active.extend(
                eligible
                    .iter()
                    .copied()
                    .filter(|&j| theta[j] != T::zero() || self.is_free(penalty, j)),
            );
            sweeps = self.active_sweeps(
                penalty,
                &active,
                &mut theta,
                &r,
                tol,
                sweeps,
                options.max_iter,
                &mut trace,
            );
        }
        (theta, trace, converged, sweeps)
    }

    /// Cycles over `active` until converged, in Gram form so an update costs
    /// `O(|active|)` rather than `O(n)`. `r` must match `theta` on entry and
    /// is stale on exit.
    #[allow(clippy::too_many_arguments)]
    fn active_sweeps(
        &self,
        penalty: &Penalty<T>,
        active: &[usize],
        theta: &mut [T],
        r: &[T],
        tol: T,
        mut sweeps: usize,
        max_iter: usize,
        trace: &mut Vec<T>,
    ) -> usize {
        let s = active.len();
        if s == 0 {
            return sweeps;
        }
        let nf = self.nf();
        let mut gram = vec![T::zero(); s * s];
        for a in 0..s {
            let za = column(&self.z, active[a]);
            for b in 0..=a {
                let v = dot(za, column(&self.z, active[b])) / nf;
                gram[a * s + b] = v;
                gram[b * s + a] = v;
            }
        }
        let mut c: Vec<T> = active
            .iter()
            .map(|&j| dot(column(&self.z, j), r) / nf)
            .collect();
        let mut rss = dot(r, r);
        let two = cast::<T>(2.0);
        while sweeps < max_iter {
            let mut delta = T::zero();
            for a in 0..s {
                let j = active[a];
                let g = self.col_sq[j];
                if g <= T::zero() {
                    theta[j] = T::zero();
                    continue;
                }
                let old = theta[j];
                let target = old + c[a] / g;
                let new = if self.is_free(penalty, j) {
                    target
                } else {
                    penalty.prox_unchecked(target, T::one() / g)
                };
                if new != old {
                    let d = new - old;
                    rss = rss - two * d * nf * c[a] + d * d * nf * g;
                    let col = &gram[a * s..(a + 1) * s];
                    for (cb, &gb) in c.iter_mut().zip(col) {
                        *cb -= d * gb;
                    }
                    theta[j] = new;
                    delta = delta.max(g * d * d);
                }
            }
            sweeps += 1;
            trace.push(rss.max(T::zero()) / (two * nf) + penalty.total(&theta[self.k..]));
            if delta < tol {
                break;
            }
        }
        sweeps
    }

    /// One cyclic pass over `coords`; returns the largest `a_j Δ_j²`.
    fn sweep(&self, penalty: &Penalty<T>, coords: &[usize], theta: &mut [T], r: &mut [T]) -> T {
        let nf = self.nf();
        let mut delta = T::zero();
        for &j in coords {
            let a = self.col_sq[j];
            let old = theta[j];
            if a <= T::zero() {
                theta[j] = T::zero();
                continue;
            }
            let zj = column(&self.z, j);
            let target = old + dot(zj, r) / nf / a;
            let new = if self.is_free(penalty, j) {
                target
            } else {
                penalty.prox_unchecked(target, T::one() / a)
            };
            if new != old {
                axpy(old - new, zj, r);
                theta[j] = new;
                delta = delta.max(a * (new - old) * (new - old));
            }
        }
        delta
    }

    fn proximal_gradient(
        &self,
        penalty: &Penalty<T>,
        mut theta: Vec<T>,
        options: &SolverOptions,
        free_only: bool,
    ) -> (Vec<T>, Vec<T>, bool, usize) {
        let d = self.z.ncols();
        let nf = self.nf();
        let lipschitz = largest_gram_eigenvalue(&self.z, 200).max(T::min_positive_value());
        let mut step = T::one() / lipschitz;
        let half = cast::<T>(0.5);
        let tol = cast::<T>(options.tol);
        let frozen = |j: usize| free_only && !self.is_free(penalty, j);
        for (j, t) in theta.iter_mut().enumerate() {
            if frozen(j) {
                *t = T::zero();
            }
        }
        let mut r = self.residual_of(&theta);
        let mut loss = dot(&r, &r) / (cast::<T>(2.0) * nf);
        let mut obj = loss + penalty.total(&theta[self.k..]);
        let mut trace = vec![obj];
        let mut converged = false;
        let mut iters = 0;
        let mut candidate = vec![T::zero(); d];
        while iters < options.max_iter {
            iters += 1;
            let grad = self.correlations_of(&r);
            loop {
                for j in 0..d {
                    candidate[j] = if frozen(j) {
                        T::zero()
                    } else {
                        let v = theta[j] + step * grad[j];
                        if self.is_free(penalty, j) {
                            v
                        } else {
                            penalty.prox_unchecked(v, step)
                        }
                    };
                }
                let r_new = self.residual_of(&candidate);
                let loss_new = dot(&r_new, &r_new) / (cast::<T>(2.0) * nf);
                let mut lin = T::zero();
                let mut sq = T::zero();
                for j in 0..d {
                    let diff = candidate[j] - theta[j];
                    lin -= grad[j] * diff;
                    sq += diff * diff;
                }
                let bound = loss + lin + half * sq / step;
                let obj_new = loss_new + penalty.total(&candidate[self.k..]);
                if loss_new <= bound + cast::<T>(1e-12) * loss.abs().max(T::one()) && obj_new <= obj
                    || step < cast::<T>(1e-20)
                {
                    let change = (obj - obj_new).abs();
                    theta.copy_from_slice(&candidate);
                    r = r_new;
                    loss = loss_new;
                    let prev = obj;
                    obj = obj_new.min(obj);
                    trace.push(obj);
                    if change <= tol * prev.abs().max(T::min_positive_value()) {
                        converged = true;
                    }
                    break;
                }
                step *= half;
            }
            if converged {
                break;
            }
        }
        (theta, trace, converged, iters)
    }

    /// Sup-norm violation of the first-order conditions at `fit`.
    ///
    /// Free coordinates contribute `|∂L|`; penalized zeros contribute
    /// `(|∂L| − p'(0))₊`; penalized nonzeros `|∂L + p'(|β|) sign β|`.
    pub fn kkt_violation(&self, fit: &PenalizedFit<T>, penalty: &Penalty<T>) -> T {
        let theta = fit.theta();
        let g = self.correlations(fit);
        let mut worst = T::zero();
        for j in 0..theta.len() {
            let v = if self.is_free(penalty, j) {
                g[j].abs()
            } else if theta[j] == T::zero() {
                (g[j].abs() - penalty.derivative(T::zero())).max(T::zero())
            } else {
                (g[j] - penalty.derivative(theta[j]) * theta[j].signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }
}

/// One-shot fit of the penalized objective on `(y, F̂, Û)`.
pub fn fit_penalized<T: Real>(
    y: ArrayView1<T>,
    f_hat: ArrayView2<T>,
    u_hat: ArrayView2<T>,
    penalty: &Penalty<T>,
    init: Option<&PenalizedFit<T>>,
) -> Result<PenalizedFit<T>> {
    PenalizedProblem::new(y, f_hat, u_hat)?.fit(penalty, init, &SolverOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, p), |_| StandardNormal.sample(&mut rng))
    }

    fn empty(n: usize) -> Array2<f64> {
        Array2::zeros((n, 0))
    }

    fn monotone(trace: &[f64]) -> bool {
        trace
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0))
    }

    #[test]
    fn large_lambda_gives_zero() {
        let u = gaussian(40, 10, 1);
        let y = gaussian(40, 1, 2).column(0).to_owned();
        let lmax = u.t().dot(&y).iter().fold(0.0f64, |m, v| m.max(v.abs())) / 40.0;
        let pen = Penalty::new(PenaltyKind::Lasso, lmax, 10).unwrap();
        let fit = fit_penalized(y.view(), empty(40).view(), u.view(), &pen, None).unwrap();
        assert!(fit.active_set.is_empty());
        assert!(fit.beta_hat.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zero_lambda_is_least_squares() {
        let u = gaussian(50, 5, 3);
        let beta = ndarray::arr1(&[1.0, -2.0, 0.5, 0.0, 3.0]);
        let y = u.dot(&beta);
        for kind in [PenaltyKind::Lasso, PenaltyKind::Scad, PenaltyKind::Mcp] {
            let pen = Penalty::new(kind, 0.0, 5).unwrap();
            let fit = fit_penalized(y.view(), empty(50).view(), u.view(), &pen, None).unwrap();
            for j in 0..5 {
                assert_abs_diff_eq!(fit.beta_hat[j], beta[j], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn solvers_agree_and_traces_descend() {
        let u = gaussian(60, 20, 4);
        let f = gaussian(60, 2, 5);
        let mut y = u.column(0).to_owned() * 2.0 - u.column(3) + f.column(1);
        y += &(gaussian(60, 1, 6).column(0).to_owned() * 0.3);
        let problem = PenalizedProblem::new(y.view(), f.view(), u.view()).unwrap();
        for kind in [PenaltyKind::Lasso, PenaltyKind::Scad, PenaltyKind::Mcp] {
            let pen = Penalty::new(kind, 0.1, 20).unwrap();
            let cd = problem.fit(&pen, None, &SolverOptions::default()).unwrap();
            let pg = problem
                .fit(
                    &pen,
                    None,
                    &SolverOptions {
                        method: Solver::ProximalGradient,
                        tol: 1e-13,
                        max_iter: 100_000,
                    },
                )
                .unwrap();
            assert!(cd.converged && pg.converged);
            assert!(monotone(&cd.objective_trace));
            assert!(monotone(&pg.objective_trace));
            assert!(problem.kkt_violation(&cd, &pen) < 1e-6);
            assert_abs_diff_eq!(cd.objective(), pg.objective(), epsilon = 1e-8);
            for j in 0..20 {
                assert_abs_diff_eq!(cd.beta_hat[j], pg.beta_hat[j], epsilon = 1e-4);
            }
        }
    }

    #[test]
    fn free_coordinates_are_not_shrunk() {
        let u = gaussian(50, 8, 7);
        let y = u.column(2).to_owned() * 0.3 + &u.column(5) * 0.2;
        let pen = Penalty::new(PenaltyKind::Scad, 1e6, 8)
            .unwrap()
            .free(&[2, 5])
            .unwrap();
        let fit = fit_penalized(y.view(), empty(50).view(), u.view(), &pen, None).unwrap();
        assert_abs_diff_eq!(fit.beta_hat[2], 0.3, epsilon = 1e-8);
        assert_abs_diff_eq!(fit.beta_hat[5], 0.2, epsilon = 1e-8);
        assert_eq!(fit.active_set, vec![2, 5]);
    }

    #[test]
    fn mask_length_is_checked() {
        let u = gaussian(10, 3, 8);
        let y = Array1::zeros(10);
        let pen = Penalty::new(PenaltyKind::Lasso, 0.1, 4).unwrap();
        assert!(fit_penalized(y.view(), empty(10).view(), u.view(), &pen, None).is_err());
    }

    #[test]
    fn iteration_cap_is_flagged() {
        let u = gaussian(30, 10, 9);
        let y = u.column(0).to_owned() + u.column(1);
        let pen = Penalty::new(PenaltyKind::Lasso, 0.01, 10).unwrap();
        let problem = PenalizedProblem::new(y.view(), empty(30).view(), u.view()).unwrap();
        let fit = problem
            .fit(
                &pen,
                None,
                &SolverOptions {
                    max_iter: 1,
                    ..Default::default()
                },
            )
            .unwrap();
        assert!(!fit.converged);
    }
}

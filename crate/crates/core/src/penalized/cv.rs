use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::penalty::Penalty;
use super::solver::{PenalizedFit, PenalizedProblem, SolverOptions};
use crate::{cast, Error, Real, Result};

/// Which grid value the final fit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CvRule {
    /// The minimizer of the mean held-out error.
    #[default]
    Min,
    /// The largest `λ` whose mean error is within one standard error of
    /// the minimum.
    OneSe,
}

impl std::str::FromStr for CvRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "min" => Ok(CvRule::Min),
            "1se" | "one-se" => Ok(CvRule::OneSe),
            other => Err(Error::InvalidInput(format!("unknown CV rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub grid_size: usize,
    /// Smallest grid value as a fraction of `λ_max`.
    pub min_ratio: f64,
    #[serde(default)]
    pub rule: CvRule,
    pub solver: SolverOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            folds: 10,
            grid_size: 50,
            min_ratio: 0.01,
            rule: CvRule::Min,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CvResult<T> {
    /// Minimizer of `cv_curve`.
    pub lambda_star: T,
    /// Largest `λ` with `cv_curve` within one standard error of the minimum.
    pub lambda_1se: T,
    pub grid: Vec<T>,
    /// Mean held-out squared error per grid value.
    pub cv_curve: Vec<T>,
    /// Standard error of `cv_curve` across folds.
    pub cv_se: Vec<T>,
}

impl<T: Real> CvResult<T> {
    pub fn selected(&self, rule: CvRule) -> T {
        match rule {
            CvRule::Min => self.lambda_star,
            CvRule::OneSe => self.lambda_1se,
        }
    }
}

/// Smallest `λ` at which every penalized coefficient is zero.
pub fn lambda_max<T: Real>(
    problem: &PenalizedProblem<T>,
    template: &Penalty<T>,
    solver: &SolverOptions,
) -> Result<T> {
    let null = problem.fit_free_only(template, solver)?;
    let g = problem.correlations(&null);
    let k = problem.num_factors();
    Ok((0..problem.p())
        .filter(|&j| template.is_penalized(j))
        .map(|j| g[k + j].abs())
        .fold(T::zero(), |m, v| m.max(v)))
}

/// `size` log-spaced values from `lambda_max` down to `min_ratio · lambda_max`.
pub fn lambda_grid<T: Real>(lambda_max: T, size: usize, min_ratio: f64) -> Vec<T> {
    if lambda_max <= T::zero() || size <= 1 {
        return vec![lambda_max.max(T::zero())];
    }
    let hi = crate::to_f64(lambda_max).ln();
    let lo = hi + min_ratio.ln();
    (0..size)
        .map(|i| cast::<T>((hi + (lo - hi) * i as f64 / (size - 1) as f64).exp()))
        .collect()
}

fn fold_bounds(n: usize, folds: usize) -> Vec<(usize, usize)> {
    (0..folds)
        .map(|f| (f * n / folds, (f + 1) * n / folds))
        .collect()
}

/// K-fold cross-validation over a strictly decreasing grid.
///
/// Folds are contiguous row blocks. Within each fold the path is traced from
/// the largest `λ` with warm starts. Ties in held-out error go to the larger
/// `λ`.
pub fn cross_validate<T: Real>(
    problem: &PenalizedProblem<T>,
    template: &Penalty<T>,
    grid: &[T],
    folds: usize,
    solver: &SolverOptions,
) -> Result<CvResult<T>> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty λ grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidInput(
            "λ grid must be strictly decreasing".into(),
        ));
    }
    if folds < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    let n = problem.n();
    if n / folds < 2 {
        return Err(Error::InvalidInput(format!(
            "{folds} folds leave fewer than 2 rows in a fold (n = {n})"
        )));
    }
    if grid.len() == 1 {
        return Ok(CvResult {
            lambda_star: grid[0],
            lambda_1se: grid[0],
            grid: grid.to_vec(),
            cv_curve: vec![T::nan()],
            cv_se: vec![T::nan()],
        });
    }
    let bounds = fold_bounds(n, folds);
    let errors: Vec<Vec<T>> = bounds
        .par_iter()
        .map(|&(lo, hi)| {
            let train: Vec<usize> = (0..lo).chain(hi..n).collect();
            let test: Vec<usize> = (lo..hi).collect();
            let train_p = problem.rows(&train);
            let test_p = problem.rows(&test);
            let mut prev: Option<PenalizedFit<T>> = None;
            let mut errs = Vec::with_capacity(grid.len());
            for &lambda in grid {
                let pen = template.with_lambda(lambda);
                let fit = train_p.fit(&pen, prev.as_ref(), solver)?;
                let pred = test_p.predict(&fit);
                let mse = test_p
                    .y()
                    .iter()
                    .zip(&pred)
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum::<T>()
                    / cast::<T>(test.len() as f64);
                errs.push(mse);
                prev = Some(fit);
            }
            Ok(errs)
        })
        .collect::<Result<_>>()?;
    let kf = cast::<T>(folds as f64);
    let cv_curve: Vec<T> = (0..grid.len())
        .map(|i| errors.iter().map(|e| e[i]).sum::<T>() / kf)
        .collect();
    let cv_se: Vec<T> = (0..grid.len())
        .map(|i| {
            let ss = errors
                .iter()
                .map(|e| (e[i] - cv_curve[i]) * (e[i] - cv_curve[i]))
                .sum::<T>();
            (ss / (kf - T::one()) / kf).sqrt()
        })
        .collect();
    let mut best = 0;
    for i in 1..grid.len() {
        if cv_curve[i] < cv_curve[best] {
            best = i;
        }
    }
    let bound = cv_curve[best] + cv_se[best];
    let one_se = (0..=best).find(|&i| cv_curve[i] <= bound).unwrap_or(best);
    Ok(CvResult {
        lambda_star: grid[best],
        lambda_1se: grid[one_se],
        grid: grid.to_vec(),
        cv_curve,
        cv_se,
    })
}

/// Builds the default grid, cross-validates, and refits at `λ*` on all rows.
pub fn fit_cv<T: Real>(
    problem: &PenalizedProblem<T>,
    template: &Penalty<T>,
    options: &CvOptions,
) -> Result<(PenalizedFit<T>, CvResult<T>)> {
    let lmax = lambda_max(problem, template, &options.solver)?;
    let grid = lambda_grid(lmax, options.grid_size, options.min_ratio);
    let cv = cross_validate(problem, template, &grid, options.folds, &options.solver)?;
    let fit = problem.fit(
        &template.with_lambda(cv.selected(options.rule)),
        None,
        &options.solver,
    )?;
    Ok((fit, cv))
}

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::cv::{fit_cv, CvOptions};
use super::penalty::{Penalty, PenaltyKind};
use super::solver::{PenalizedFit, PenalizedProblem};
use crate::dataset::MultimodalDataset;
use crate::{cast, Error, Real, Result};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NoiseVariance<T> {
    pub sigma2: T,
    pub lambda: T,
}

/// Source of `σ̂²_ε` when no value is supplied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseEstimator {
    /// Residuals of the SCAD fit on `(F̂, Û)`, divided by `n − |Ŝ| − K`.
    #[default]
    FactorAdjusted,
    /// `n⁻¹ · RSS` of the Lasso on the raw design.
    Lasso,
}

impl std::str::FromStr for NoiseEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "factor-adjusted" | "factor" => Ok(NoiseEstimator::FactorAdjusted),
            "lasso" => Ok(NoiseEstimator::Lasso),
            other => Err(Error::InvalidInput(format!(
                "unknown noise estimator `{other}`"
            ))),
        }
    }
}

/// `RSS / (n − |Ŝ| − K)` for a fit of `problem`.
pub fn residual_variance<T: Real>(
    problem: &PenalizedProblem<T>,
    fit: &PenalizedFit<T>,
) -> Result<T> {
    let n = problem.n();
    let used = fit.active_set.len() + fit.gamma_hat.len();
    if used >= n {
        return Err(Error::Numerical(format!(
            "fit uses {used} coefficients with n = {n}; no degrees of freedom left for the noise variance"
        )));
    }
    let r = problem.residuals(fit);
    let rss: T = r.iter().map(|&v| v * v).sum();
    Ok(rss / cast::<T>((n - used) as f64))
}

/// Degrees-of-freedom corrected residual variance of a cross-validated SCAD
/// fit of `y` on `(F̂, Û)`.
pub fn estimate_factor_adjusted_noise<T: Real>(
    y: ArrayView1<T>,
    f_hat: ArrayView2<T>,
    u_hat: ArrayView2<T>,
    cv: &CvOptions,
) -> Result<NoiseVariance<T>> {
    if y.iter().all(|v| *v == T::zero()) {
        return Err(Error::ZeroVariance);
    }
    let problem = PenalizedProblem::new(y, f_hat, u_hat)?;
    let template = Penalty::new(PenaltyKind::Scad, T::zero(), u_hat.ncols())?;
    let fit = fit_cv(&problem, &template, cv)?.0;
    Ok(NoiseVariance {
        sigma2: residual_variance(&problem, &fit)?,
        lambda: fit.lambda_used,
    })
}

/// `λ_ε = C √(log p / n)`.
pub fn noise_lambda<T: Real>(c: T, n: usize, p: usize) -> T {
    c * cast::<T>(((p.max(2) as f64).ln() / n as f64).sqrt())
}

/// `n⁻¹ · RSS` of the Lasso of `y` on the raw design.
///
/// `lambda_eps` fixes the Lasso level; when absent it is chosen by
/// cross-validation.
pub fn estimate_noise_variance<T: Real>(
    ds: &MultimodalDataset<T>,
    lambda_eps: Option<T>,
    cv: &CvOptions,
) -> Result<NoiseVariance<T>> {
    if !ds.is_centered() {
        return Err(Error::InvalidInput(
            "noise variance needs a centered dataset".into(),
        ));
    }
    let y = ds.y();
    let scale = y.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if scale == T::zero() {
        return Err(Error::ZeroVariance);
    }
    let n = ds.n();
    let problem = PenalizedProblem::new(y.view(), Array2::zeros((n, 0)).view(), ds.x().view())?;
    let template = Penalty::new(PenaltyKind::Lasso, T::zero(), ds.p())?;
    let fit = match lambda_eps {
        Some(l) => problem.fit(&template.with_lambda(l), None, &cv.solver)?,
        None => fit_cv(&problem, &template, cv)?.0,
    };
    let r = problem.residuals(&fit);
    let rss: T = r.iter().map(|&v| v * v).sum();
    Ok(NoiseVariance {
        sigma2: rss / cast::<T>(n as f64),
        lambda: fit.lambda_used,
    })
}

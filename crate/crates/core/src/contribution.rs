//! Variance of the response explained by one modality beyond others.
//!
//! With shared factors `f` (identity covariance), loadings `Λ` and
//! idiosyncratic covariance `Σ_u`, the conditional variance of `x_mᵀβ_m`
//! given the modalities in `C` is
//!
//! ```text
//! σ²_{m|C} = β_mᵀ { Λ_m (I + Λ_Cᵀ Σ_{u,C}⁻¹ Λ_C)⁻¹ Λ_mᵀ + Σ_{u,m} } β_m,
//! ```
//!
//! which needs one solve with `Σ_{u,C}` and a K×K inverse, never the inverse
//! of the full covariance of `x_C`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::MultimodalDataset;
use crate::factor::{decompose_dataset, FactorDecomposition, FactorOptions};
use crate::linalg::{cholesky, cholesky_solve, min_eigenvalue, spd_inverse, symmetrize};
use crate::penalized::{fit_cv, CvOptions, PenalizedFit, PenalizedProblem, Penalty, PenaltyKind};
use crate::report::ContributionReport;
use crate::{cast, to_f64, Error, Real, Result};

pub const DEFAULT_C_OMEGA: f64 = 2.0;

/// Eigenvalue below which a ridge is added to `Σ̂_{u,C}`.
pub const EIGENVALUE_FLOOR: f64 = 1e-8;
/// Ridge size relative to the mean diagonal.
pub const RIDGE_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdRule {
    #[default]
    Soft,
    Hard,
}

impl std::str::FromStr for ThresholdRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "soft" => Ok(ThresholdRule::Soft),
            "hard" => Ok(ThresholdRule::Hard),
            other => Err(Error::InvalidInput(format!(
                "unknown threshold rule `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdedCovariance<T> {
    pub sigma_u: Array2<T>,
    pub omega: T,
    pub rule: ThresholdRule,
    pub min_eigenvalue: T,
}

/// `c_ω (√(log p / n) + 1/√p)`.
pub fn default_omega<T: Real>(n: usize, p: usize, c_omega: T) -> T {
    let p = p.max(2) as f64;
    c_omega * cast::<T>((p.ln() / n as f64).sqrt() + 1.0 / p.sqrt())
}

/// Sample covariance of `Û` with off-diagonal entries thresholded at
/// `ω √θ̂_ij`, where `θ̂_ij` is the sample variance of `Û_i Û_j`.
pub fn threshold_covariance<T: Real>(
    u_hat: ArrayView2<T>,
    omega: Option<T>,
    c_omega: T,
    rule: ThresholdRule,
) -> Result<ThresholdedCovariance<T>> {
    let (n, p) = u_hat.dim();
    if n < 2 {
        return Err(Error::InvalidInput(
            "threshold covariance needs at least two rows".into(),
        ));
    }
    let omega = omega.unwrap_or_else(|| default_omega(n, p, c_omega));
    let nf = cast::<T>(n as f64);
    let cov = u_hat.t().dot(&u_hat) / nf;
    let sq = u_hat.mapv(|v| v * v);
    // θ̂_ij = mean(u_i² u_j²) − σ̂_ij²
    let fourth = sq.t().dot(&sq) / nf;
    let mut sigma_u = cov.clone();
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            let s = cov[[i, j]];
            let theta = (fourth[[i, j]] - s * s).max(T::zero());
            let level = omega * theta.sqrt();
            sigma_u[[i, j]] = match rule {
                ThresholdRule::Soft => s.signum() * (s.abs() - level).max(T::zero()),
                ThresholdRule::Hard => {
                    if s.abs() > level {
                        s
                    } else {
                        T::zero()
                    }
                }
            };
        }
    }
    let sigma_u = symmetrize(sigma_u.view());
    let min = if p > 0 {
        min_eigenvalue(sigma_u.view())?
    } else {
        T::zero()
    };
    if p > 0 && min <= T::zero() {
        log::warn!(
            "thresholded idiosyncratic covariance has smallest eigenvalue {:e}",
            to_f64(min)
        );
    }
    Ok(ThresholdedCovariance {
        sigma_u,
        omega,
        rule,
        min_eigenvalue: min,
    })
}

/// Plug-in evaluation of `σ²_{m|C}` for one coefficient block.
///
/// `lambda_c` and `sigma_u_c` may be empty, giving the marginal variance
/// `β_mᵀ(Λ_mΛ_mᵀ + Σ_{u,m})β_m`.
pub fn conditional_variance<T: Real>(
    beta_m: ArrayView1<T>,
    lambda_m: ArrayView2<T>,
    sigma_u_m: ArrayView2<T>,
    lambda_c: ArrayView2<T>,
    sigma_u_c: ArrayView2<T>,
) -> Result<T> {
    let k = lambda_m.ncols();
    if lambda_c.ncols() != k
        || lambda_m.nrows() != beta_m.len()
        || sigma_u_c.nrows() != lambda_c.nrows()
    {
        return Err(Error::InvalidInput(
            "dimension mismatch in contribution inputs".into(),
        ));
    }
    let mut inner = Array2::<T>::eye(k);
    if lambda_c.nrows() > 0 && k > 0 {
        let l = regularized_cholesky(sigma_u_c)?;
        inner = inner + lambda_c.t().dot(&cholesky_solve(&l, lambda_c));
    }
    let a = lambda_m.t().dot(&beta_m);
    let factor_part = if k > 0 {
        let inv = spd_inverse(symmetrize(inner.view()).view())
            .map_err(|_| Error::Singular("K×K inner matrix of the contribution formula".into()))?;
        a.dot(&inv.dot(&a))
    } else {
        T::zero()
    };
    let idio = beta_m.dot(&sigma_u_m.dot(&beta_m));
    let total = factor_part + idio;
    Ok(if total < T::zero() && total > cast::<T>(-1e-10) {
        T::zero()
    } else {
        total
    })
}

fn regularized_cholesky<T: Real>(sigma: ArrayView2<T>) -> Result<Array2<T>> {
    let min = min_eigenvalue(sigma)?;
    if min >= cast::<T>(EIGENVALUE_FLOOR) {
        return cholesky(sigma);
    }
    let dim = sigma.nrows();
    let mean_diag = (0..dim).map(|i| sigma[[i, i]]).sum::<T>() / cast::<T>(dim as f64);
    let ridge = cast::<T>(RIDGE_SCALE) * mean_diag - min.min(T::zero());
    log::warn!(
        "idiosyncratic covariance has eigenvalue {:e}; adding ridge {:e}",
        to_f64(min),
        to_f64(ridge)
    );
    let mut reg = sigma.to_owned();
    for i in 0..dim {
        reg[[i, i]] += ridge;
    }
    cholesky(reg.view())
}

/// `σ̂²_{m|C}` for modality `m` given the modalities in `conditioning`.
pub fn modality_contribution<T: Real>(
    ds: &MultimodalDataset<T>,
    m: usize,
    conditioning: &[usize],
    beta_hat: ArrayView1<T>,
    joint: &FactorDecomposition<T>,
    sigma_u: &ThresholdedCovariance<T>,
) -> Result<T> {
    let part = ds.partition();
    let cols_m: Vec<usize> = part.range(m)?.collect();
    let mut cols_c = Vec::new();
    for &c in conditioning {
        if c == m {
            return Err(Error::InvalidInput(format!(
                "modality {m} cannot condition on itself"
            )));
        }
        cols_c.extend(part.range(c)?);
    }
    let beta_m = beta_hat.select(Axis(0), &cols_m);
    let lambda_m = joint.loadings.select(Axis(0), &cols_m);
    let lambda_c = joint.loadings.select(Axis(0), &cols_c);
    let su = &sigma_u.sigma_u;
    let su_m = su.select(Axis(0), &cols_m).select(Axis(1), &cols_m);
    let su_c = su.select(Axis(0), &cols_c).select(Axis(1), &cols_c);
    conditional_variance(
        beta_m.view(),
        lambda_m.view(),
        su_m.view(),
        lambda_c.view(),
        su_c.view(),
    )
}

/// Sequential report: each modality in `order` given all entered before it.
pub fn contribution_report<T: Real>(
    ds: &MultimodalDataset<T>,
    beta_hat: ArrayView1<T>,
    joint: &FactorDecomposition<T>,
    sigma_u: &ThresholdedCovariance<T>,
    order: &[usize],
) -> Result<ContributionReport> {
    let mut seen = vec![false; ds.partition().num_modalities()];
    for &m in order {
        if m >= seen.len() {
            return Err(Error::ModalityOutOfRange {
                index: m,
                count: seen.len(),
            });
        }
        if std::mem::replace(&mut seen[m], true) {
            return Err(Error::InvalidInput(format!(
                "modality {m} repeated in order"
            )));
        }
    }
    let y = ds.y();
    let mean = y.mean().unwrap_or(T::zero());
    let sigma_y2 =
        to_f64(y.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / cast::<T>(y.len() as f64));
    let mut cond = Vec::with_capacity(order.len());
    let mut marg = Vec::with_capacity(order.len());
    for (i, &m) in order.iter().enumerate() {
        cond.push(to_f64(modality_contribution(
            ds,
            m,
            &order[..i],
            beta_hat,
            joint,
            sigma_u,
        )?));
        marg.push(to_f64(modality_contribution(
            ds,
            m,
            &[],
            beta_hat,
            joint,
            sigma_u,
        )?));
    }
    let ratio = |v: &Vec<f64>| {
        v.iter()
            .map(|x| if sigma_y2 > 0.0 { x / sigma_y2 } else { 0.0 })
            .collect()
    };
    Ok(ContributionReport {
        order: order.to_vec(),
        names: order
            .iter()
            .map(|&m| ds.partition().names()[m].clone())
            .collect(),
        ratio_cond: ratio(&cond),
        ratio_marginal: ratio(&marg),
        sigma2_cond: cond,
        sigma2_marginal: marg,
        sigma_y2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionOptions {
    pub penalty: PenaltyKind,
    /// SCAD `a` or MCP `γ`; the kind's default when absent.
    pub shape: Option<f64>,
    pub lambda: Option<f64>,
    /// Joint factor count; chosen by the criterion when absent.
    pub k: Option<usize>,
    pub factors: FactorOptions,
    pub omega: Option<f64>,
    pub c_omega: f64,
    pub rule: ThresholdRule,
    pub cv: CvOptions,
}

impl Default for ContributionOptions {
    fn default() -> Self {
        ContributionOptions {
            penalty: PenaltyKind::Scad,
            shape: None,
            lambda: None,
            k: None,
            factors: FactorOptions::default(),
            omega: None,
            c_omega: DEFAULT_C_OMEGA,
            rule: ThresholdRule::Soft,
            cv: CvOptions::default(),
        }
    }
}

/// Joint decomposition, penalized fit on `(F̂, Û)`, thresholded `Σ̂_u` and
/// the sequential report for `order`.
pub fn analyze_contributions<T: Real>(
    ds: &MultimodalDataset<T>,
    order: &[usize],
    options: &ContributionOptions,
) -> Result<(ContributionReport, PenalizedFit<T>)> {
    let joint = decompose_dataset(
        ds,
        true,
        options.k.map(|k| vec![k]).as_deref(),
        &options.factors,
    )?
    .pop()
    .expect("joint decomposition");
    let problem =
        PenalizedProblem::new(ds.y().view(), joint.factors.view(), joint.residuals.view())?;
    let shape = cast::<T>(
        options
            .shape
            .unwrap_or_else(|| options.penalty.default_shape()),
    );
    let template = Penalty::with_mask(options.penalty, T::zero(), shape, vec![true; ds.p()])?;
    let fit = match options.lambda {
        Some(l) => problem.fit(&template.with_lambda(cast(l)), None, &options.cv.solver)?,
        None => fit_cv(&problem, &template, &options.cv)?.0,
    };
    let sigma_u = threshold_covariance(
        joint.residuals.view(),
        options.omega.map(cast::<T>),
        cast::<T>(options.c_omega),
        options.rule,
    )?;
    let report = contribution_report(ds, fit.beta_hat.view(), &joint, &sigma_u, order)?;
    Ok((report, fit))
}

/// `β_mᵀ(Σ_mm − Σ_mC Σ_CC⁻¹ Σ_Cm)β_m` for a dense covariance `Σ` ordered as
/// `(m, C)`; used to cross-check the closed form.
pub fn schur_conditional_variance<T: Real>(
    sigma: ArrayView2<T>,
    p_m: usize,
    beta_m: ArrayView1<T>,
) -> Result<T> {
    let smm = sigma.slice(s![..p_m, ..p_m]);
    let smc = sigma.slice(s![..p_m, p_m..]);
    let scc = sigma.slice(s![p_m.., p_m..]);
    let cond: Array2<T> = if scc.nrows() == 0 {
        smm.to_owned()
    } else {
        let l = cholesky(scc)?;
        &smm - &smc.dot(&cholesky_solve(&l, smc.t()))
    };
    let b: Array1<T> = beta_m.to_owned();
    Ok(b.dot(&cond.dot(&b)))
}

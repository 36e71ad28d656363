//! Factor-adjusted decorrelated score test that a whole modality has no
//! effect on the response.
//!
//! Under the model `y = Σ_m x_mᵀβ_m + ε` with `x_m = Λ_m f_m + u_m`, the null
//! `β_m = 0` is tested through the coefficient `θ_m = Λ_mᵀβ_m` of modality
//! `m`'s factors. The nuisance `β_{−m}` comes from an L1 fit of `y` on
//! `(X_{−m}, F̂_m)`, and the factors are decorrelated from `X_{−m}` by a
//! Dantzig-type projection `Ŵ`. The statistic `Q = n Ŝᵀ Î⁻¹ Ŝ` is compared
//! with the χ² law on `K_m` degrees of freedom.

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dantzig::{
    default_lambda2, solve_projection_with, DantzigOptions, ProjectionEstimate, DEFAULT_C2,
};
use crate::dataset::MultimodalDataset;
use crate::distributions::local_power;
use crate::factor::{decompose_block, FactorOptions, FactorScope};
use crate::linalg::{min_eigenvalue, spd_inverse, spd_inverse_sqrt, symmetrize};
use crate::penalized::{
    estimate_factor_adjusted_noise, estimate_noise_variance, fit_cv, CvOptions, NoiseEstimator,
    PenalizedFit, PenalizedProblem, Penalty, PenaltyKind,
};
use crate::report::{TestMethod, TestReport};
use crate::{cast, to_f64, Error, Real, Result};

/// Set together with `DEFAULT_C2` by `examples/calibrate_tuning.rs`.
pub const DEFAULT_C1: f64 = 0.5;

/// Smallest eigenvalue accepted for the estimated information matrix.
pub const MIN_INFO_EIGENVALUE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTestOptions {
    pub alpha: f64,
    /// Constant in the default `λ₁`.
    pub c1: f64,
    /// Fixed `λ₁`; overrides `c1`.
    pub lambda1: Option<f64>,
    /// Choose `λ₁` by cross-validation instead of the rate formula.
    pub lambda1_cv: bool,
    pub c2: f64,
    pub lambda2: Option<f64>,
    /// Externally supplied noise variance.
    pub sigma2: Option<f64>,
    pub noise: NoiseEstimator,
    /// Fixed level for the raw-design Lasso noise fit; setting it selects
    /// that estimator.
    pub lambda_eps: Option<f64>,
    /// Fixed number of factors for the tested modality.
    pub k: Option<usize>,
    pub factors: FactorOptions,
    pub cv: CvOptions,
    pub dantzig: DantzigOptions,
}

impl Default for ScoreTestOptions {
    fn default() -> Self {
        ScoreTestOptions {
            alpha: 0.05,
            c1: DEFAULT_C1,
            lambda1: None,
            lambda1_cv: false,
            c2: DEFAULT_C2,
            lambda2: None,
            sigma2: None,
            noise: NoiseEstimator::default(),
            lambda_eps: None,
            k: None,
            factors: FactorOptions::default(),
            cv: CvOptions::default(),
            dantzig: DantzigOptions::default(),
        }
    }
}

/// Intermediate quantities of one score test.
#[derive(Debug, Clone, Serialize)]
pub struct ScoreTestWorkspace<T> {
    pub m: usize,
    pub factors: Array2<T>,
    pub beta_minus_m: Array1<T>,
    pub theta_m: Array1<T>,
    pub lambda1: T,
    pub projection: ProjectionEstimate<T>,
    pub sigma2: T,
    pub score: Array1<T>,
    pub info: Array2<T>,
}

impl<T: Real> ScoreTestWorkspace<T> {
    pub fn k(&self) -> usize {
        self.factors.ncols()
    }

    pub fn n(&self) -> usize {
        self.factors.nrows()
    }

    /// `Q = n Ŝᵀ Î⁻¹ Ŝ`.
    pub fn statistic(&self) -> Result<T> {
        let inv = spd_inverse(self.info.view())?;
        Ok(cast::<T>(self.n() as f64) * self.score.dot(&inv.dot(&self.score)))
    }

    /// `T_n = √n Î^{−1/2} Ŝ`, asymptotically standard normal under the null.
    pub fn standardized_score(&self) -> Result<Array1<T>> {
        let root = spd_inverse_sqrt(self.info.view())?;
        Ok(root.dot(&self.score) * cast::<T>(self.n() as f64).sqrt())
    }

    pub fn report(&self, alpha: f64) -> Result<TestReport> {
        TestReport::calibrate(
            TestMethod::ScoreModality,
            to_f64(self.statistic()?),
            self.k(),
            alpha,
        )
    }
}

/// `c₁ (√(log p_{−m} / n) + 1/√p_m)`.
pub fn default_lambda1<T: Real>(n: usize, p_minus_m: usize, p_m: usize, c1: T) -> T {
    let rate = ((p_minus_m.max(2) as f64).ln() / n as f64).sqrt() + 1.0 / (p_m as f64).sqrt();
    c1 * cast::<T>(rate)
}

/// L1 fit of `y` on `(X_{−m}, F̂_m)` penalizing only `β_{−m}`.
///
/// Returns the fit, whose `gamma_hat` is `θ̂_m` and `beta_hat` is `β̂_{−m}`.
pub fn fit_null_model<T: Real>(
    y: ArrayView1<T>,
    x_minus_m: ArrayView2<T>,
    f_hat_m: ArrayView2<T>,
    lambda1: Option<T>,
    cv: &CvOptions,
) -> Result<PenalizedFit<T>> {
    let problem = PenalizedProblem::new(y, f_hat_m, x_minus_m)?;
    let template = Penalty::new(PenaltyKind::Lasso, T::zero(), x_minus_m.ncols())?;
    match lambda1 {
        Some(l) => problem.fit(&template.with_lambda(l), None, &cv.solver),
        None if x_minus_m.ncols() == 0 => problem.fit(&template, None, &cv.solver),
        None => Ok(fit_cv(&problem, &template, cv)?.0),
    }
}

/// `Ŝ = (nσ̂²)⁻¹ Σ_i (y_i − x_{i,−m}ᵀβ̂_{−m})(f̂_{i,m} − Ŵᵀx_{i,−m})`.
pub fn decorrelated_score<T: Real>(
    y: ArrayView1<T>,
    x_minus_m: ArrayView2<T>,
    f_hat_m: ArrayView2<T>,
    beta_minus_m: ArrayView1<T>,
    w_hat: ArrayView2<T>,
    sigma2: T,
) -> Result<Array1<T>> {
    if !(sigma2 > T::zero()) {
        return Err(Error::Numerical(format!(
            "noise variance must be positive, got {}",
            to_f64(sigma2)
        )));
    }
    let n = cast::<T>(y.len() as f64);
    let resid = &y - &x_minus_m.dot(&beta_minus_m);
    let decorrelated = &f_hat_m - &x_minus_m.dot(&w_hat);
    let score = decorrelated.t().dot(&resid) / (n * sigma2);
    if score.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite decorrelated score".into()));
    }
    Ok(score)
}

/// `Î = σ̂⁻² {F̂ᵀF̂/n − Ŵᵀ(X_{−m}ᵀF̂/n)}`, symmetrized and checked for
/// positive definiteness.
pub fn information_matrix<T: Real>(
    x_minus_m: ArrayView2<T>,
    f_hat_m: ArrayView2<T>,
    w_hat: ArrayView2<T>,
    sigma2: T,
) -> Result<Array2<T>> {
    if !(sigma2 > T::zero()) {
        return Err(Error::Numerical(format!(
            "noise variance must be positive, got {}",
            to_f64(sigma2)
        )));
    }
    let n = cast::<T>(f_hat_m.nrows() as f64);
    let ff = f_hat_m.t().dot(&f_hat_m) / n;
    let xf = x_minus_m.t().dot(&f_hat_m) / n;
    let info = symmetrize(((ff - w_hat.t().dot(&xf)) / sigma2).view());
    let min = min_eigenvalue(info.view())?;
    if !(min > cast::<T>(MIN_INFO_EIGENVALUE)) {
        return Err(Error::NotPositiveDefinite(format!(
            "estimated information matrix has smallest eigenvalue {:e}; \
             a larger sample or fewer factors is needed",
            to_f64(min)
        )));
    }
    Ok(info)
}

/// Noise variance from the fit of `y` on every modality's factors and
/// residuals, reusing the decomposition of modality `m`.
fn full_model_noise<T: Real>(
    ds: &MultimodalDataset<T>,
    m: usize,
    f_m: &Array2<T>,
    u_m: &Array2<T>,
    options: &ScoreTestOptions,
) -> Result<T> {
    let others = (0..ds.partition().num_modalities())
        .filter(|&j| j != m)
        .map(|j| {
            decompose_block(
                ds.modality_view(j)?,
                None,
                &options.factors,
                FactorScope::Modality(j),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let fs: Vec<_> = std::iter::once(f_m.view())
        .chain(others.iter().map(|d| d.factors.view()))
        .collect();
    let us: Vec<_> = std::iter::once(u_m.view())
        .chain(others.iter().map(|d| d.residuals.view()))
        .collect();
    let f = concatenate(Axis(1), &fs).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let u = concatenate(Axis(1), &us).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(estimate_factor_adjusted_noise(ds.y().view(), f.view(), u.view(), &options.cv)?.sigma2)
}

/// Runs the estimation steps of the score test for modality `m`.
pub fn score_workspace<T: Real>(
    ds: &MultimodalDataset<T>,
    m: usize,
    options: &ScoreTestOptions,
) -> Result<ScoreTestWorkspace<T>> {
    if !ds.is_centered() {
        return Err(Error::InvalidInput(
            "score test needs a centered dataset".into(),
        ));
    }
    let (xm, x_rest) = ds.modality_slice(m)?;
    let n = ds.n();
    let (p_m, p_rest) = (xm.ncols(), x_rest.ncols());

    let dec = decompose_block(
        xm.view(),
        options.k,
        &options.factors,
        FactorScope::Modality(m),
    )?;
    if dec.k == 0 {
        return Err(Error::NoFactors { modality: m });
    }
    let f_hat = dec.factors.clone();

    let lambda1 = match (options.lambda1, options.lambda1_cv) {
        (Some(l), _) => Some(cast::<T>(l)),
        (None, true) => None,
        (None, false) => Some(default_lambda1(n, p_rest, p_m, cast::<T>(options.c1))),
    };
    let null_fit = fit_null_model(
        ds.y().view(),
        x_rest.view(),
        f_hat.view(),
        lambda1,
        &options.cv,
    )?;

    let projection = if p_rest == 0 {
        ProjectionEstimate {
            w_hat: Array2::zeros((0, dec.k)),
            lambda2: T::zero(),
            per_column_l1: vec![T::zero(); dec.k],
            feasible: vec![true; dec.k],
            iterations: vec![0; dec.k],
        }
    } else {
        let lambda2 = options
            .lambda2
            .map(cast::<T>)
            .unwrap_or_else(|| default_lambda2(n, p_rest, p_m, cast::<T>(options.c2)));
        solve_projection_with(x_rest.view(), f_hat.view(), lambda2, &options.dantzig)?
    };
    if projection.feasible.iter().any(|&f| !f) {
        return Err(Error::Numerical(
            "projection program left a column unsolved".into(),
        ));
    }

    let sigma2 = match options.sigma2 {
        Some(s) => cast::<T>(s),
        None if options.noise == NoiseEstimator::Lasso || options.lambda_eps.is_some() => {
            estimate_noise_variance(ds, options.lambda_eps.map(cast::<T>), &options.cv)?.sigma2
        }
        None => full_model_noise(ds, m, &f_hat, &dec.residuals, options)?,
    };

    let score = decorrelated_score(
        ds.y().view(),
        x_rest.view(),
        f_hat.view(),
        null_fit.beta_hat.view(),
        projection.w_hat.view(),
        sigma2,
    )?;
    let info = information_matrix(x_rest.view(), f_hat.view(), projection.w_hat.view(), sigma2)?;
    Ok(ScoreTestWorkspace {
        m,
        factors: f_hat,
        beta_minus_m: null_fit.beta_hat,
        theta_m: null_fit.gamma_hat,
        lambda1: null_fit.lambda_used,
        projection,
        sigma2,
        score,
        info,
    })
}

/// Full score test of `β_m = 0`.
pub fn test_modality<T: Real>(
    ds: &MultimodalDataset<T>,
    m: usize,
    options: &ScoreTestOptions,
) -> Result<TestReport> {
    score_workspace(ds, m, options)?.report(options.alpha)
}

/// Asymptotic rejection probability under `β_m = b`: with `c = Λ_mᵀ b` and
/// `h = n cᵀ I* c`, returns `P(χ²(K_m, h) > χ²_α(K_m, 0))`.
pub fn theoretical_local_power(
    lambda_m: ArrayView2<f64>,
    b: ArrayView1<f64>,
    info_star: ArrayView2<f64>,
    n: usize,
    alpha: f64,
) -> Result<f64> {
    let k = lambda_m.ncols();
    if lambda_m.nrows() != b.len() || info_star.dim() != (k, k) {
        return Err(Error::InvalidInput(
            "dimension mismatch in local power inputs".into(),
        ));
    }
    let c = lambda_m.t().dot(&b);
    let h = (n as f64 * c.dot(&info_star.dot(&c))).max(0.0);
    local_power(k, h, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ModalityPartition;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, p), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn score_reduces_without_projection() {
        let f = gaussian(30, 2, 1);
        let x = gaussian(30, 4, 2);
        let y = gaussian(30, 1, 3).column(0).to_owned();
        let s = decorrelated_score(
            y.view(),
            x.view(),
            f.view(),
            Array1::zeros(4).view(),
            Array2::zeros((4, 2)).view(),
            0.5,
        )
        .unwrap();
        let direct = f.t().dot(&y) / (30.0 * 0.5);
        for k in 0..2 {
            assert_abs_diff_eq!(s[k], direct[k], epsilon = 1e-14);
        }
        assert!(decorrelated_score(
            y.view(),
            x.view(),
            f.view(),
            Array1::zeros(4).view(),
            Array2::zeros((4, 2)).view(),
            0.0
        )
        .is_err());
    }

    #[test]
    fn information_without_projection_is_scaled_identity() {
        let x = gaussian(40, 10, 4);
        let dec = crate::factor::estimate_factors(
            (&x - &x.mean_axis(ndarray::Axis(0)).unwrap()).view(),
            2,
        )
        .unwrap();
        let info = information_matrix(
            gaussian(40, 3, 5).view(),
            dec.factors.view(),
            Array2::zeros((3, 2)).view(),
            0.25,
        )
        .unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(
                    info[[i, j]],
                    if i == j { 4.0 } else { 0.0 },
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn nonpositive_information_is_an_error() {
        let f = gaussian(20, 1, 6);
        let x = f.clone();
        let w = Array2::from_elem((1, 1), 2.0);
        assert!(matches!(
            information_matrix(x.view(), f.view(), w.view(), 1.0),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn local_power_is_level_in_null_space() {
        let lambda = ndarray::arr2(&[[0.0], [1.0], [1.0]]);
        let b = ndarray::arr1(&[0.3, 0.0, 0.0]);
        let info = ndarray::arr2(&[[2.0]]);
        assert_eq!(
            theoretical_local_power(lambda.view(), b.view(), info.view(), 100, 0.05).unwrap(),
            0.05
        );
        let strong = ndarray::arr2(&[[20.0], [1.0], [1.0]]);
        let weak = ndarray::arr2(&[[1.0], [1.0], [1.0]]);
        let b = ndarray::arr1(&[0.08, 0.0, 0.0]);
        let ps = theoretical_local_power(strong.view(), b.view(), info.view(), 100, 0.05).unwrap();
        let pw = theoretical_local_power(weak.view(), b.view(), info.view(), 100, 0.05).unwrap();
        assert!(ps > pw);
    }

    #[test]
    fn single_modality_and_no_factor_paths() {
        let n = 60;
        let f = gaussian(n, 1, 7);
        let load = gaussian(1, 12, 8) * 2.0;
        let x = f.dot(&load) + gaussian(n, 12, 9) * 0.3;
        let y = f.column(0).to_owned() * 0.5 + gaussian(n, 1, 10).column(0).to_owned() * 0.7;
        let ds = MultimodalDataset::new(y, x, ModalityPartition::new(vec![12]).unwrap())
            .unwrap()
            .center()
            .unwrap();
        let opts = ScoreTestOptions {
            k: Some(1),
            sigma2: Some(0.5),
            ..Default::default()
        };
        let ws = score_workspace(&ds, 0, &opts).unwrap();
        assert!(ws.beta_minus_m.is_empty());
        assert!(ws.report(0.05).unwrap().reject);

        let zero = ScoreTestOptions { k: Some(0), ..opts };
        assert!(matches!(
            score_workspace(&ds, 0, &zero),
            Err(Error::NoFactors { modality: 0 })
        ));
    }
}

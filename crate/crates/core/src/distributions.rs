//! Central and noncentral χ² distribution functions.
//!
//! The noncentral law is evaluated as a Poisson mixture of central χ² laws,
//! `F(x; k, λ) = Σ_{j≥0} e^{-λ/2} (λ/2)^j / j! · P(k/2 + j, x/2)`, summed from
//! `j = 0` until the remaining Poisson mass drops below a tolerance.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::{cast, to_f64, Error, Real, Result};

/// Default bound on the Poisson mass left out of the mixture series.
pub const SERIES_TOLERANCE: f64 = 1e-12;

const MAX_TERMS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare<T> {
    pub df: usize,
    pub noncentrality: T,
}

impl<T: Real> ChiSquare<T> {
    pub fn new(df: usize, noncentrality: T) -> Result<Self> {
        if df == 0 {
            return Err(Error::InvalidInput(
                "χ² degrees of freedom must be positive".into(),
            ));
        }
        if !noncentrality.is_finite() || noncentrality < T::zero() {
            return Err(Error::InvalidInput(format!(
                "noncentrality must be finite and nonnegative, got {}",
                to_f64(noncentrality)
            )));
        }
        Ok(ChiSquare { df, noncentrality })
    }

    pub fn central(df: usize) -> Result<Self> {
        Self::new(df, T::zero())
    }

    pub fn cdf(&self, x: T) -> T {
        cast(self.cdf_f64(to_f64(x), SERIES_TOLERANCE))
    }

    /// Upper tail `P(X > x)`, accurate for small tail probabilities.
    pub fn sf(&self, x: T) -> T {
        cast(self.sf_f64(to_f64(x), SERIES_TOLERANCE))
    }

    pub fn cdf_with_tolerance(&self, x: T, tol: f64) -> T {
        cast(self.cdf_f64(to_f64(x), tol))
    }

    /// Point exceeded with probability `alpha_upper`.
    pub fn quantile(&self, alpha_upper: T) -> Result<T> {
        let a = to_f64(alpha_upper);
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidInput(format!(
                "upper-tail probability must lie in (0, 1), got {a}"
            )));
        }
        Ok(cast(self.quantile_f64(a)))
    }

    fn cdf_f64(&self, x: f64, tol: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x <= 0.0 {
            return 0.0;
        }
        if x == f64::INFINITY {
            return 1.0;
        }
        let half_k = self.df as f64 / 2.0;
        self.mixture(tol, |j| gamma_lr(half_k + j as f64, x / 2.0))
            .clamp(0.0, 1.0)
    }

    fn sf_f64(&self, x: f64, tol: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x <= 0.0 {
            return 1.0;
        }
        if x == f64::INFINITY {
            return 0.0;
        }
        let half_k = self.df as f64 / 2.0;
        // Terms are increasing in j and bounded by 1, so the truncated tail
        // is charged at its full Poisson mass.
        let (sum, rest) = self.mixture_with_rest(tol, |j| gamma_ur(half_k + j as f64, x / 2.0));
        (sum + rest).clamp(0.0, 1.0)
    }

    fn mixture(&self, tol: f64, term: impl Fn(usize) -> f64) -> f64 {
        self.mixture_with_rest(tol, term).0
    }

    /// Returns the truncated sum and the Poisson mass not covered.
    fn mixture_with_rest(&self, tol: f64, term: impl Fn(usize) -> f64) -> (f64, f64) {
        let mu = to_f64(self.noncentrality) / 2.0;
        if mu == 0.0 {
            return (term(0), 0.0);
        }
        let ln_mu = mu.ln();
        let mode = mu.floor() as usize;
        let mut sum = 0.0;
        let mut mass = 0.0;
        for j in 0..MAX_TERMS {
            let w = (-mu + j as f64 * ln_mu - ln_gamma(j as f64 + 1.0)).exp();
            mass += w;
            if w > 0.0 {
                sum += w * term(j);
            }
            if j >= mode && 1.0 - mass < tol {
                break;
            }
        }
        (sum, (1.0 - mass).max(0.0))
    }

    fn quantile_f64(&self, alpha: f64) -> f64 {
        let target = 1.0 - alpha;
        let f = |x: f64| self.cdf_f64(x, SERIES_TOLERANCE) - target;
        let mean = self.df as f64 + to_f64(self.noncentrality);
        let mut lo = 0.0;
        let mut hi = mean.max(1.0);
        while f(hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        let (mut flo, mut fhi) = (f(lo), f(hi));
        let mut side = 0i8;
        for _ in 0..300 {
            // Illinois step, with a bisection guard against slow ends.
            let mut x = (lo * fhi - hi * flo) / (fhi - flo);
            if !(x > lo && x < hi) {
                x = 0.5 * (lo + hi);
            }
            let fx = f(x);
            if fx.abs() < 1e-13 || hi - lo < 1e-13 * (1.0 + x) {
                return x;
            }
            if fx < 0.0 {
                lo = x;
                flo = fx;
                if side == -1 {
                    fhi *= 0.5;
                }
                side = -1;
            } else {
                hi = x;
                fhi = fx;
                if side == 1 {
                    flo *= 0.5;
                }
                side = 1;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Rejection probability `P(χ²(df, h) > χ²_α(df, 0))` of a level-`alpha` test.
pub fn local_power<T: Real>(df: usize, h: T, alpha: T) -> Result<T> {
    let critical = ChiSquare::<T>::central(df)?.quantile(alpha)?;
    if h == T::zero() {
        return Ok(alpha);
    }
    Ok(ChiSquare::new(df, h)?.sf(critical))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_and_negative_arguments() {
        let d = ChiSquare::<f64>::new(2, 0.0).unwrap();
        assert_eq!(d.cdf(0.0), 0.0);
        assert_eq!(d.cdf(-3.0), 0.0);
        assert_eq!(ChiSquare::new(3, 4.0).unwrap().cdf(0.0), 0.0);
    }

    #[test]
    fn central_closed_form_for_two_df() {
        let d = ChiSquare::<f64>::central(2).unwrap();
        for x in [0.1, 1.0, 3.0, 10.0] {
            assert_abs_diff_eq!(d.cdf(x), 1.0 - (-x / 2.0f64).exp(), epsilon = 1e-14);
        }
    }

    #[test]
    fn tabulated_quantiles() {
        let q = ChiSquare::<f64>::central(2)
            .unwrap()
            .quantile(0.05)
            .unwrap();
        assert_abs_diff_eq!(q, 5.991_464_547, epsilon = 1e-6);
        let q = ChiSquare::<f64>::central(1).unwrap().quantile(0.5).unwrap();
        assert_abs_diff_eq!(q, 0.454_936_423, epsilon = 1e-6);
        let q = ChiSquare::<f64>::central(1)
            .unwrap()
            .quantile(0.05)
            .unwrap();
        assert_abs_diff_eq!(q, 3.841_458_821, epsilon = 1e-6);
    }

    #[test]
    fn noncentral_one_df_closed_form() {
        // (Z + √λ)² ≤ x  ⇔  −√x − √λ ≤ Z ≤ √x − √λ
        let lam: f64 = 2.5;
        let d = ChiSquare::new(1, lam).unwrap();
        let phi = |t: f64| 0.5 * statrs::function::erf::erfc(-t / std::f64::consts::SQRT_2);
        for x in [0.5f64, 2.0, 7.0] {
            let exact = phi(x.sqrt() - lam.sqrt()) - phi(-x.sqrt() - lam.sqrt());
            assert_abs_diff_eq!(d.cdf(x), exact, epsilon = 1e-9);
        }
    }

    #[test]
    fn sf_complements_cdf() {
        let d = ChiSquare::new(4, 12.0).unwrap();
        for x in [1.0, 10.0, 30.0] {
            assert_abs_diff_eq!(d.cdf(x) + d.sf(x), 1.0, epsilon = 1e-11);
        }
    }

    #[test]
    fn large_noncentrality_is_handled() {
        let d = ChiSquare::new(1, 512.0).unwrap();
        assert!(d.sf(3.84) > 0.999_999);
        let q = d.quantile(0.5).unwrap();
        assert_abs_diff_eq!(d.cdf(q), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn local_power_endpoints() {
        assert_eq!(local_power(2, 0.0, 0.05).unwrap(), 0.05);
        let mut prev = 0.05;
        for h in 1..=100 {
            let p = local_power(2, h as f64, 0.05).unwrap();
            assert!(p > prev);
            prev = p;
        }
        assert!(prev > 0.999);
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(ChiSquare::<f64>::new(0, 0.0).is_err());
        assert!(ChiSquare::<f64>::new(1, -1.0).is_err());
        assert!(ChiSquare::<f64>::new(1, f64::NAN).is_err());
        assert!(ChiSquare::<f64>::central(1).unwrap().quantile(1.0).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let q = ChiSquare::<f32>::central(2)
            .unwrap()
            .quantile(0.05)
            .unwrap();
        assert!((q - 5.991_465).abs() < 1e-4);
    }
}

//! PCA estimation of latent factors, loadings and idiosyncratic residuals.
//!
//! For a centered n×q block `X`, the factors are `√n` times the top
//! eigenvectors of `X Xᵀ`, loadings are `Xᵀ F / n` and residuals are
//! `X − F Λᵀ`. The eigenproblem is solved on the n×n Gram matrix because the
//! blocks of interest are wide (q ≫ n).

use ndarray::{s, Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::{ensure_centered, MultimodalDataset};
use crate::linalg::{gram_rows, symmetric_eigen};
use crate::{cast, Error, Real, Result};

/// Which columns a decomposition was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorScope {
    /// Block of one modality (zero-based index).
    Modality(usize),
    /// Concatenation of all modalities.
    Joint,
}

/// Penalty `g(n, q)` of the factor-count information criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IcPenalty {
    /// `(n+q)/(nq) · ln(nq/(n+q))`
    #[default]
    G1,
    /// `(n+q)/(nq) · ln(min(n,q))`
    G2,
}

impl IcPenalty {
    pub fn value(self, n: usize, q: usize) -> f64 {
        let (n, q) = (n as f64, q as f64);
        let base = (n + q) / (n * q);
        match self {
            IcPenalty::G1 => base * (n * q / (n + q)).ln(),
            IcPenalty::G2 => base * n.min(q).ln(),
        }
    }
}

impl std::str::FromStr for IcPenalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "g1" => Ok(IcPenalty::G1),
            "g2" => Ok(IcPenalty::G2),
            other => Err(Error::InvalidInput(format!(
                "unknown penalty variant `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FactorDecomposition<T> {
    /// n×K, normalized so that `FᵀF / n = I`.
    pub factors: Array2<T>,
    /// q×K, columns mutually orthogonal.
    pub loadings: Array2<T>,
    /// n×q idiosyncratic part `X − F Λᵀ`.
    pub residuals: Array2<T>,
    /// Top-K eigenvalues of `X Xᵀ`, non-increasing.
    pub eigenvalues: Array1<T>,
    pub k: usize,
    pub scope: FactorScope,
    /// Present when `k` was chosen by the information criterion.
    pub criterion: Option<FactorCountCriterion<T>>,
}

impl<T: Real> FactorDecomposition<T> {
    pub fn n(&self) -> usize {
        self.residuals.nrows()
    }

    pub fn q(&self) -> usize {
        self.residuals.ncols()
    }
}

/// Values of the factor-count criterion for `k = 0..=max_k`.
#[derive(Debug, Clone, Serialize)]
pub struct FactorCountCriterion<T> {
    pub penalty: IcPenalty,
    pub max_k: usize,
    /// `ic_values[k]`; `-inf` once the residual vanishes.
    pub ic_values: Vec<T>,
    pub k_hat: usize,
    /// Set when the residual sum of squares hit zero at `k_hat`.
    pub perfect_fit: bool,
}

/// Eigen-structure of `X Xᵀ` shared by count selection and estimation.
#[derive(Debug, Clone)]
pub struct Spectrum<T> {
    values: Array1<T>,
    vectors: Array2<T>,
    total_ss: T,
}

impl<T: Real> Spectrum<T> {
    pub fn new(x: ArrayView2<T>) -> Result<Self> {
        let gram = gram_rows(x);
        let total_ss = (0..gram.nrows()).map(|i| gram[[i, i]]).sum();
        let eig = symmetric_eigen(gram.view())?;
        Ok(Spectrum {
            values: eig.values.mapv(|v| v.max(T::zero())),
            vectors: eig.vectors,
            total_ss,
        })
    }

    pub fn eigenvalues(&self) -> &Array1<T> {
        &self.values
    }
}

/// Default upper bound on the candidate factor count.
pub fn default_max_factors(n: usize, q: usize) -> usize {
    15.min(n.min(q) / 2)
}

/// Blocks narrower than this are never given factors.
pub const MIN_COLUMNS_FOR_FACTORS: usize = 3;

/// PCA factor estimate with exactly `k` factors.
pub fn estimate_factors<T: Real>(x: ArrayView2<T>, k: usize) -> Result<FactorDecomposition<T>> {
    ensure_centered(x)?;
    let (n, q) = x.dim();
    let max = n.min(q);
    if k > max {
        return Err(Error::TooManyFactors { requested: k, max });
    }
    if k == 0 {
        return Ok(empty_decomposition(x, FactorScope::Joint));
    }
    let spectrum = Spectrum::new(x)?;
    Ok(decompose_with(x, &spectrum, k, FactorScope::Joint))
}

fn empty_decomposition<T: Real>(x: ArrayView2<T>, scope: FactorScope) -> FactorDecomposition<T> {
    let (n, q) = x.dim();
    FactorDecomposition {
        factors: Array2::zeros((n, 0)),
        loadings: Array2::zeros((q, 0)),
        residuals: x.to_owned(),
        eigenvalues: Array1::zeros(0),
        k: 0,
        scope,
        criterion: None,
    }
}

fn decompose_with<T: Real>(
    x: ArrayView2<T>,
    spectrum: &Spectrum<T>,
    k: usize,
    scope: FactorScope,
) -> FactorDecomposition<T> {
    if k == 0 {
        return empty_decomposition(x, scope);
    }
    let n = x.nrows();
    let nf = cast::<T>(n as f64);
    let mut factors = spectrum.vectors.slice(s![.., ..k]).to_owned() * nf.sqrt();
    let mut loadings = x.t().dot(&factors) / nf;
    for c in 0..k {
        // Entry of largest magnitude in the loading column decides the sign;
        // the first such entry wins ties.
        let mut best = 0;
        let mut best_abs = T::neg_infinity();
        for (j, v) in loadings.column(c).iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = j;
            }
        }
        if loadings[[best, c]] < T::zero() {
            factors.column_mut(c).mapv_inplace(|v| -v);
            loadings.column_mut(c).mapv_inplace(|v| -v);
        }
    }
    let residuals = &x - &factors.dot(&loadings.t());
    FactorDecomposition {
        factors,
        loadings,
        residuals,
        eigenvalues: spectrum.values.slice(s![..k]).to_owned(),
        k,
        scope,
        criterion: None,
    }
}

/// Information-criterion choice of the number of factors over `0..=max_k`.
pub fn estimate_num_factors<T: Real>(
    x: ArrayView2<T>,
    max_k: usize,
    penalty: IcPenalty,
) -> Result<FactorCountCriterion<T>> {
    ensure_centered(x)?;
    let spectrum = Spectrum::new(x)?;
    criterion_from_spectrum(x.dim(), &spectrum, max_k, penalty)
}

fn criterion_from_spectrum<T: Real>(
    (n, q): (usize, usize),
    spectrum: &Spectrum<T>,
    max_k: usize,
    penalty: IcPenalty,
) -> Result<FactorCountCriterion<T>> {
    let limit = n.min(q);
    if max_k < 1 || max_k + 1 > limit {
        return Err(Error::InvalidInput(format!(
            "factor-count bound must lie in [1, {}], got {max_k}",
            limit.saturating_sub(1)
        )));
    }
    let g = cast::<T>(penalty.value(n, q));
    let nq = cast::<T>((n * q) as f64);
    let floor = spectrum.total_ss * cast::<T>(1e-13);
    let mut ic_values = Vec::with_capacity(max_k + 1);
    let mut explained = T::zero();
    let mut perfect_at = None;
    for k in 0..=max_k {
        if k > 0 {
            explained += spectrum.values[k - 1];
        }
        let rss = spectrum.total_ss - explained;
        if perfect_at.is_some() || rss <= floor {
            perfect_at.get_or_insert(k);
            ic_values.push(T::neg_infinity());
        } else {
            ic_values.push((rss / nq).ln() + cast::<T>(k as f64) * g);
        }
    }
    let k_hat = match perfect_at {
        Some(k) => k,
        None => {
            let mut best = 0;
            for k in 1..=max_k {
                if ic_values[k] < ic_values[best] {
                    best = k;
                }
            }
            best
        }
    };
    Ok(FactorCountCriterion {
        penalty,
        max_k,
        ic_values,
        k_hat,
        perfect_fit: perfect_at.is_some(),
    })
}

/// Settings for automatic factor-count selection.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FactorOptions {
    /// Upper bound on the count; `None` uses [`default_max_factors`].
    pub max_k: Option<usize>,
    pub penalty: IcPenalty,
}

/// Decomposes one block, selecting K by the criterion unless `k` is given.
pub fn decompose_block<T: Real>(
    x: ArrayView2<T>,
    k: Option<usize>,
    options: &FactorOptions,
    scope: FactorScope,
) -> Result<FactorDecomposition<T>> {
    ensure_centered(x)?;
    let (n, q) = x.dim();
    if let Some(k) = k {
        if k > n.min(q) {
            return Err(Error::TooManyFactors {
                requested: k,
                max: n.min(q),
            });
        }
        if k == 0 {
            return Ok(empty_decomposition(x, scope));
        }
        let spectrum = Spectrum::new(x)?;
        return Ok(decompose_with(x, &spectrum, k, scope));
    }
    if q < MIN_COLUMNS_FOR_FACTORS || n < MIN_COLUMNS_FOR_FACTORS {
        return Ok(empty_decomposition(x, scope));
    }
    let spectrum = Spectrum::new(x)?;
    let max_k = options
        .max_k
        .unwrap_or_else(|| default_max_factors(n, q))
        .min(n.min(q) - 1)
        .max(1);
    let criterion = criterion_from_spectrum((n, q), &spectrum, max_k, options.penalty)?;
    let mut dec = decompose_with(x, &spectrum, criterion.k_hat, scope);
    dec.criterion = Some(criterion);
    Ok(dec)
}

/// Per-modality or joint decomposition of a centered dataset.
pub fn decompose_dataset<T: Real>(
    ds: &MultimodalDataset<T>,
    joint: bool,
    k_override: Option<&[usize]>,
    options: &FactorOptions,
) -> Result<Vec<FactorDecomposition<T>>> {
    if !ds.is_centered() {
        return Err(Error::InvalidInput(
            "dataset must be centered before factor estimation".into(),
        ));
    }
    let blocks = if joint {
        1
    } else {
        ds.partition().num_modalities()
    };
    if let Some(ks) = k_override {
        if ks.len() != blocks {
            return Err(Error::InvalidInput(format!(
                "factor-count override has {} entries, expected {blocks}",
                ks.len()
            )));
        }
    }
    if joint {
        let k = k_override.map(|ks| ks[0]);
        return Ok(vec![decompose_block(
            ds.x().view(),
            k,
            options,
            FactorScope::Joint,
        )?]);
    }
    (0..blocks)
        .map(|m| {
            let k = k_override.map(|ks| ks[m]);
            decompose_block(ds.modality_view(m)?, k, options, FactorScope::Modality(m))
        })
        .collect()
}

/// Concatenates per-modality factors and residuals into `(F̂, Û)`.
pub fn stack_decompositions<T: Real>(decs: &[FactorDecomposition<T>]) -> (Array2<T>, Array2<T>) {
    let n = decs.first().map_or(0, |d| d.n());
    let k: usize = decs.iter().map(|d| d.k).sum();
    let q: usize = decs.iter().map(|d| d.q()).sum();
    let mut f = Array2::zeros((n, k));
    let mut u = Array2::zeros((n, q));
    let (mut kc, mut qc) = (0, 0);
    for d in decs {
        f.slice_mut(s![.., kc..kc + d.k]).assign(&d.factors);
        u.slice_mut(s![.., qc..qc + d.q()]).assign(&d.residuals);
        kc += d.k;
        qc += d.q();
    }
    (f, u)
}

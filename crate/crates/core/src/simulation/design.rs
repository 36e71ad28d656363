//! Materialized scenarios: population loadings, coefficients and sampling.

use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Serialize;

use super::scenario::{Alternative, CovarianceSpec, Scenario, TestSpec};
use crate::dataset::{ModalityPartition, MultimodalDataset};
use crate::distributions::local_power;
use crate::linalg::cholesky;
use crate::modality_test::theoretical_local_power;
use crate::wald_test::{theoretical_noncentrality, LinearHypothesis};
use crate::{Error, Result};

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replication `rep` at grid point `delta_index`; independent of
/// the order in which replications run.
pub fn replication_seed(master: u64, delta_index: usize, rep: usize) -> u64 {
    mix64(mix64(mix64(master) ^ delta_index as u64) ^ (rep as u64).rotate_left(32))
}

const DESIGN_STREAM: u64 = 0x6c6f_6164_696e_6773;

#[derive(Debug, Clone)]
enum Sampler {
    Factor {
        loadings: Array2<f64>,
        noise_sd: f64,
    },
    Dense {
        chol_t: Array2<f64>,
    },
}

/// A scenario with its random loadings drawn and samplers prepared.
#[derive(Debug, Clone)]
pub struct ScenarioDesign {
    pub scenario: Scenario,
    pub partition: ModalityPartition,
    /// Population loadings per modality (`√ρ·1` for equicorrelated blocks).
    pub loadings: Vec<Array2<f64>>,
    /// Idiosyncratic variance per modality.
    pub idiosyncratic: Vec<f64>,
    pub base_beta: Array1<f64>,
    pub direction: Array1<f64>,
    samplers: Vec<Sampler>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PopulationSummary {
    pub num_factors: Vec<usize>,
    pub idiosyncratic: Vec<f64>,
}

impl ScenarioDesign {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(scenario.seed ^ DESIGN_STREAM));
        let mut loadings = Vec::new();
        let mut idiosyncratic = Vec::new();
        let mut samplers = Vec::new();
        for m in &scenario.modalities {
            match &m.covariance {
                CovarianceSpec::RandomFactor {
                    k,
                    loading_variance,
                    noise,
                } => {
                    let dist = Normal::new(0.0, loading_variance.sqrt())
                        .map_err(|e| Error::Config(e.to_string()))?;
                    let lam = Array2::from_shape_fn((m.p, *k), |_| dist.sample(&mut rng));
                    samplers.push(Sampler::Factor {
                        loadings: lam.clone(),
                        noise_sd: noise.sqrt(),
                    });
                    loadings.push(lam);
                    idiosyncratic.push(*noise);
                }
                CovarianceSpec::FixedFactor {
                    leading,
                    rest,
                    noise,
                } => {
                    let k = rest.len();
                    let lam = Array2::from_shape_fn((m.p, k), |(i, j)| {
                        leading.get(i).map_or(rest[j], |r| r[j])
                    });
                    samplers.push(Sampler::Factor {
                        loadings: lam.clone(),
                        noise_sd: noise.sqrt(),
                    });
                    loadings.push(lam);
                    idiosyncratic.push(*noise);
                }
                CovarianceSpec::Equicorrelated { rho } => {
                    let sigma =
                        Array2::from_shape_fn((m.p, m.p), |(i, j)| if i == j { 1.0 } else { *rho });
                    let l = cholesky(sigma.view())?;
                    samplers.push(Sampler::Dense {
                        chol_t: l.t().to_owned(),
                    });
                    let k = usize::from(*rho > 0.0);
                    loadings.push(Array2::from_elem((m.p, k), rho.sqrt()));
                    idiosyncratic.push(1.0 - rho);
                }
            }
        }
        let partition = ModalityPartition::new(scenario.sizes())?;
        let p = scenario.total_dim();
        let mut base_beta = Array1::zeros(p);
        for (mi, m) in scenario.modalities.iter().enumerate() {
            let offset = partition.range(mi)?.start;
            base_beta
                .slice_mut(s![offset..offset + m.beta.len()])
                .assign(&Array1::from(m.beta.clone()));
        }
        let mut direction = Array1::zeros(p);
        match &scenario.alternative {
            Alternative::Dense { modality } => {
                let r = partition.range(modality - 1)?;
                direction.slice_mut(s![r]).fill(1.0 / p as f64);
            }
            Alternative::Sparse { modality, count } => {
                let start = partition.range(modality - 1)?.start;
                direction
                    .slice_mut(s![start..start + count])
                    .fill(1.0 / *count as f64);
            }
            Alternative::Shift { entries } => {
                for e in entries {
                    direction[scenario.column(e.modality, e.index)?] += e.weight;
                }
            }
        }
        Ok(ScenarioDesign {
            scenario: scenario.clone(),
            partition,
            loadings,
            idiosyncratic,
            base_beta,
            direction,
            samplers,
        })
    }

    pub fn beta(&self, delta: f64) -> Array1<f64> {
        &self.base_beta + &(&self.direction * delta)
    }

    pub fn population(&self) -> PopulationSummary {
        PopulationSummary {
            num_factors: self.loadings.iter().map(|l| l.ncols()).collect(),
            idiosyncratic: self.idiosyncratic.clone(),
        }
    }

    /// Draws `(y, X)`: blocks sampled independently, `y = Xβ(δ) + ε`.
    /// The dataset is returned uncentered.
    pub fn generate(&self, delta: f64, seed: u64) -> Result<MultimodalDataset<f64>> {
        let n = self.scenario.n;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, self.partition.total()));
        for (mi, sampler) in self.samplers.iter().enumerate() {
            let r = self.partition.range(mi)?;
            let block = match sampler {
                Sampler::Factor { loadings, noise_sd } => {
                    let f = standard_normal(n, loadings.ncols(), &mut rng);
                    let e = standard_normal(n, loadings.nrows(), &mut rng);
                    f.dot(&loadings.t()) + e * *noise_sd
                }
                Sampler::Dense { chol_t } => {
                    standard_normal(n, chol_t.nrows(), &mut rng).dot(chol_t)
                }
            };
            x.slice_mut(s![.., r]).assign(&block);
        }
        let sd = self.scenario.noise_variance.sqrt();
        let eps = Array1::from_shape_fn(n, |_| sd * rng.sample::<f64, _>(StandardNormal));
        let y = x.dot(&self.beta(delta)) + eps;
        MultimodalDataset::new(y, x, self.partition.clone())
    }

    /// Hypothesis encoded by a Wald test spec, with zero-based coordinates.
    pub fn hypothesis(&self) -> Result<Option<LinearHypothesis<f64>>> {
        match &self.scenario.test {
            TestSpec::Score { .. } => Ok(None),
            TestSpec::Wald {
                coordinates,
                weights,
                value,
            } => {
                let t = coordinates
                    .iter()
                    .map(|c| self.scenario.column(c.modality, c.index))
                    .collect::<Result<Vec<_>>>()?;
                let w = if weights.is_empty() {
                    vec![1.0; t.len()]
                } else {
                    weights.clone()
                };
                let a = Array2::from_shape_vec((1, t.len()), w).expect("row vector");
                Ok(Some(LinearHypothesis::new(
                    t,
                    a,
                    Array1::from_elem(1, *value),
                )?))
            }
        }
    }

    /// Asymptotic rejection probability of the configured test at `δ`.
    pub fn predicted_power(&self, delta: f64, alpha: f64) -> Result<f64> {
        let n = self.scenario.n;
        let sigma2 = self.scenario.noise_variance;
        let beta = self.beta(delta);
        match &self.scenario.test {
            TestSpec::Score { modality } => {
                let m = modality - 1;
                let lam = &self.loadings[m];
                let k = lam.ncols();
                if k == 0 {
                    return Ok(alpha);
                }
                let b = beta.slice(s![self.partition.range(m)?]);
                // blocks are independent, so the factors are uncorrelated with
                // the other modalities and the information is I/σ²
                let info = Array2::<f64>::eye(k) / sigma2;
                theoretical_local_power(lam.view(), b, info.view(), n, alpha)
            }
            TestSpec::Wald { .. } => {
                let hyp = self.hypothesis()?.expect("wald spec");
                // idiosyncratic covariances are diagonal, so Ω_T is too
                let omega = Array2::from_diag(&Array1::from_iter(hyp.t.iter().map(|&j| {
                    1.0 / self.idiosyncratic
                        [self.partition.modality_of(j).expect("column in range")]
                })));
                let beta_t = beta.select(Axis(0), &hyp.t);
                let h = hyp.a.dot(&beta_t) - &hyp.b;
                let nu = theoretical_noncentrality(&hyp, omega.view(), sigma2, n, h.view())?;
                local_power(hyp.r(), nu, alpha)
            }
        }
    }
}

fn standard_normal(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))
}

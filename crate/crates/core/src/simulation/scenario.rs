//! Declarative description of a simulation study.
//!
//! Scenario files are TOML. Modality and coefficient indices in files are
//! 1-based, matching how the designs are usually written down.
//!
//! ```toml
//! name = "example1"
//! n = 100
//! noise_variance = 0.5
//! deltas = [0.0, 1.0]
//! seed = 1
//!
//! [[modality]]
//! p = 200
//! covariance = { kind = "fixed_factor", leading = [[20.0]], rest = [1.0] }
//!
//! [[modality]]
//! p = 200
//! covariance = { kind = "fixed_factor", rest = [1.0] }
//! beta = [1.0, 2.0]
//!
//! [alternative]
//! kind = "shift"
//! entries = [{ modality = 1, index = 1, weight = 0.08 }]
//!
//! [test]
//! kind = "score"
//! modality = 1
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_IDIOSYNCRATIC_VARIANCE: f64 = 0.5;

fn default_idiosyncratic() -> f64 {
    DEFAULT_IDIOSYNCRATIC_VARIANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceSpec {
    /// `Λ Λᵀ + noise·I` with every loading drawn from `N(0, loading_variance)`
    /// once per scenario.
    RandomFactor {
        k: usize,
        loading_variance: f64,
        #[serde(default = "default_idiosyncratic")]
        noise: f64,
    },
    /// Explicit loading rows: `leading` gives the first rows, `rest` is
    /// repeated for every remaining row.
    FixedFactor {
        #[serde(default)]
        leading: Vec<Vec<f64>>,
        rest: Vec<f64>,
        #[serde(default = "default_idiosyncratic")]
        noise: f64,
    },
    /// Unit diagonal, constant off-diagonal `rho`.
    Equicorrelated { rho: f64 },
}

impl CovarianceSpec {
    /// Number of factors of the population structure.
    pub fn num_factors(&self) -> usize {
        match self {
            CovarianceSpec::RandomFactor { k, .. } => *k,
            CovarianceSpec::FixedFactor { rest, .. } => rest.len(),
            CovarianceSpec::Equicorrelated { rho } => usize::from(*rho > 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalitySpec {
    pub p: usize,
    pub covariance: CovarianceSpec,
    /// Leading coefficients under the null; the rest are zero.
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftEntry {
    pub modality: usize,
    pub index: usize,
    pub weight: f64,
}

/// How `δ` enters the coefficients: `β(δ) = β₀ + δ·d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Alternative {
    /// Every coefficient of the modality equals `δ / p`, `p` the total dimension.
    Dense { modality: usize },
    /// The first `count` coefficients equal `δ / count`.
    Sparse { modality: usize, count: usize },
    /// `β_{m,j} += δ·weight` for each entry.
    Shift { entries: Vec<ShiftEntry> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coordinate {
    pub modality: usize,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestSpec {
    /// Score test that the modality has no effect.
    Score { modality: usize },
    /// Wald test of `Σ_i w_i β_{t_i} = value`; unit weights when omitted.
    Wald {
        coordinates: Vec<Coordinate>,
        #[serde(default)]
        weights: Vec<f64>,
        #[serde(default)]
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub n: usize,
    /// Variance of the regression error.
    pub noise_variance: f64,
    #[serde(rename = "modality")]
    pub modalities: Vec<ModalitySpec>,
    pub alternative: Alternative,
    pub deltas: Vec<f64>,
    pub test: TestSpec,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.modalities.iter().map(|m| m.p).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.modalities.iter().map(|m| m.p).sum()
    }

    /// Zero-based global column of a 1-based (modality, index) pair.
    pub fn column(&self, modality: usize, index: usize) -> Result<usize> {
        if modality == 0 || modality > self.modalities.len() {
            return Err(Error::Config(format!(
                "modality {modality} outside 1..={}",
                self.modalities.len()
            )));
        }
        let p = self.modalities[modality - 1].p;
        if index == 0 || index > p {
            return Err(Error::Config(format!(
                "index {index} outside 1..={p} in modality {modality}"
            )));
        }
        let offset: usize = self.modalities[..modality - 1].iter().map(|m| m.p).sum();
        Ok(offset + index - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return bad(format!(
                "noise_variance must be positive, got {}",
                self.noise_variance
            ));
        }
        if self.modalities.is_empty() {
            return bad("scenario has no modalities".into());
        }
        if self.deltas.is_empty() || self.deltas.iter().any(|d| !d.is_finite()) {
            return bad("deltas must be a non-empty list of finite values".into());
        }
        for (i, m) in self.modalities.iter().enumerate() {
            if m.p == 0 {
                return bad(format!("modality {} has zero columns", i + 1));
            }
            if m.beta.len() > m.p || m.beta.iter().any(|b| !b.is_finite()) {
                return bad(format!(
                    "beta of modality {} is too long or not finite",
                    i + 1
                ));
            }
            match &m.covariance {
                CovarianceSpec::RandomFactor {
                    k,
                    loading_variance,
                    noise,
                } => {
                    if *k == 0 || !(*loading_variance >= 0.0) || !(*noise > 0.0) {
                        return bad(format!(
                            "random_factor in modality {} needs k ≥ 1, variance ≥ 0, noise > 0",
                            i + 1
                        ));
                    }
                }
                CovarianceSpec::FixedFactor {
                    leading,
                    rest,
                    noise,
                } => {
                    let k = rest.len();
                    if k == 0
                        || leading.len() > m.p
                        || leading.iter().any(|r| r.len() != k)
                        || !(*noise > 0.0)
                    {
                        return bad(format!(
                            "fixed_factor rows of modality {} are inconsistent",
                            i + 1
                        ));
                    }
                }
                CovarianceSpec::Equicorrelated { rho } => {
                    if !(0.0..1.0).contains(rho) {
                        return bad(format!("rho must lie in [0, 1), got {rho}"));
                    }
                }
            }
        }
        match &self.alternative {
            Alternative::Dense { modality } => {
                self.column(*modality, 1)?;
            }
            Alternative::Sparse { modality, count } => {
                if *count == 0 {
                    return bad("sparse alternative needs count ≥ 1".into());
                }
                self.column(*modality, *count)?;
            }
            Alternative::Shift { entries } => {
                for e in entries {
                    self.column(e.modality, e.index)?;
                }
            }
        }
        match &self.test {
            TestSpec::Score { modality } => {
                self.column(*modality, 1)?;
            }
            TestSpec::Wald {
                coordinates,
                weights,
                ..
            } => {
                if coordinates.is_empty()
                    || !(weights.is_empty() || weights.len() == coordinates.len())
                {
                    return bad("Wald test needs coordinates and matching weights".into());
                }
                for c in coordinates {
                    self.column(c.modality, c.index)?;
                }
            }
        }
        Ok(())
    }
}

/// Built-in designs.
pub mod presets {
    use super::*;

    /// Covariance structure of the three-modality studies.
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Design {
        /// Two factors per modality with `N(0, 2)` loadings.
        Factor,
        /// Equicorrelated blocks with the given correlation in hundredths.
        Equicorrelated(u8),
    }

    fn covariance(design: Design) -> CovarianceSpec {
        match design {
            Design::Factor => CovarianceSpec::RandomFactor {
                k: 2,
                loading_variance: 2.0,
                noise: DEFAULT_IDIOSYNCRATIC_VARIANCE,
            },
            Design::Equicorrelated(r) => CovarianceSpec::Equicorrelated {
                rho: f64::from(r) / 100.0,
            },
        }
    }

    fn three_modalities(design: Design, p: usize, betas: [Vec<f64>; 3]) -> Vec<ModalitySpec> {
        betas
            .into_iter()
            .map(|beta| ModalitySpec {
                p: p / 3,
                covariance: covariance(design),
                beta,
                name: None,
            })
            .collect()
    }

    /// Whole-modality test of modality 1 with modalities 2 and 3 active.
    pub fn score_study(
        design: Design,
        n: usize,
        p: usize,
        sparse: bool,
        deltas: Vec<f64>,
        seed: u64,
    ) -> Scenario {
        let alternative = if sparse {
            Alternative::Sparse {
                modality: 1,
                count: 5,
            }
        } else {
            Alternative::Dense { modality: 1 }
        };
        let tag = match design {
            Design::Factor => "case1".to_string(),
            Design::Equicorrelated(_) => "case2".to_string(),
        };
        Scenario {
            name: format!(
                "score_{tag}_{}_n{n}_p{p}",
                if sparse { "sparse" } else { "dense" }
            ),
            n,
            noise_variance: 0.5,
            modalities: three_modalities(design, p, [vec![], vec![1.0, 2.0], vec![-1.0, -1.0]]),
            alternative,
            deltas,
            test: TestSpec::Score { modality: 1 },
            seed,
        }
    }

    /// Wald test that the first coefficients of the three modalities sum to zero.
    pub fn wald_study(design: Design, n: usize, p: usize, deltas: Vec<f64>, seed: u64) -> Scenario {
        let tag = match design {
            Design::Factor => "case1",
            Design::Equicorrelated(_) => "case2",
        };
        let first = |modality| ShiftEntry {
            modality,
            index: 1,
            weight: 1.0,
        };
        Scenario {
            name: format!("wald_{tag}_n{n}_p{p}"),
            n,
            noise_variance: 0.5,
            modalities: three_modalities(
                design,
                p,
                [vec![-2.0, -1.0], vec![1.0, 2.0], vec![1.0, 1.0]],
            ),
            alternative: Alternative::Shift {
                entries: vec![first(1), first(2), first(3)],
            },
            deltas,
            test: TestSpec::Wald {
                coordinates: (1..=3)
                    .map(|m| Coordinate {
                        modality: m,
                        index: 1,
                    })
                    .collect(),
                weights: vec![],
                value: 0.0,
            },
            seed,
        }
    }

    /// The three two-modality examples with one factor each; `δ = 1` is
    /// the stated alternative.
    pub fn example(which: u8, seed: u64) -> Result<Scenario> {
        let (leading, shift): (Vec<Vec<f64>>, Vec<(usize, f64)>) = match which {
            1 => (vec![vec![20.0]], vec![(1, 0.08)]),
            2 => (vec![], (1..=8).map(|j| (j, 0.01)).collect()),
            3 => (vec![vec![0.0]], vec![(1, 0.2)]),
            _ => {
                return Err(Error::Config(format!(
                    "unknown example {which}; expected 1, 2 or 3"
                )))
            }
        };
        let block = |leading: Vec<Vec<f64>>, beta: Vec<f64>| ModalitySpec {
            p: 200,
            covariance: CovarianceSpec::FixedFactor {
                leading,
                rest: vec![1.0],
                noise: DEFAULT_IDIOSYNCRATIC_VARIANCE,
            },
            beta,
            name: None,
        };
        Ok(Scenario {
            name: format!("example{which}"),
            n: 100,
            noise_variance: 0.5,
            modalities: vec![block(leading, vec![]), block(vec![], vec![1.0, 2.0])],
            alternative: Alternative::Shift {
                entries: shift
                    .into_iter()
                    .map(|(index, weight)| ShiftEntry {
                        modality: 1,
                        index,
                        weight,
                    })
                    .collect(),
            },
            deltas: vec![0.0, 1.0],
            test: TestSpec::Score { modality: 1 },
            seed,
        })
    }

    /// Seed of the built-in designs; it fixes the random loadings, which
    /// the grids below were sized against.
    pub const PRESET_SEED: u64 = 1;

    /// `δ` grid reaching roughly 0.99 predicted power at `(n, p) = (200, 900)`.
    pub fn score_grid(design: Design, sparse: bool) -> Vec<f64> {
        match (design, sparse) {
            (Design::Factor, false) => vec![0.0, 2.0, 4.0, 6.0, 8.0],
            (Design::Factor, true) => vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25],
            (Design::Equicorrelated(_), false) => vec![0.0, 0.3, 0.6, 0.9, 1.2],
            (Design::Equicorrelated(_), true) => vec![0.0, 0.1, 0.2, 0.3, 0.4],
        }
    }

    pub fn wald_grid(design: Design) -> Vec<f64> {
        match design {
            Design::Factor => vec![0.0, 0.05, 0.1, 0.15, 0.2],
            Design::Equicorrelated(_) => vec![0.0, 0.1, 0.2, 0.3],
        }
    }

    pub const NAMES: [&str; 9] = [
        "example1",
        "example2",
        "example3",
        "score-case1-dense",
        "score-case1-sparse",
        "score-case2-dense",
        "score-case2-sparse",
        "wald-case1",
        "wald-case2",
    ];

    /// Built-in scenario by name; `n` and `p` apply to the three-modality
    /// studies only.
    pub fn by_name(name: &str, n: usize, p: usize) -> Result<Scenario> {
        let score = |design, sparse| {
            score_study(
                design,
                n,
                p,
                sparse,
                score_grid(design, sparse),
                PRESET_SEED,
            )
        };
        let case2 = Design::Equicorrelated(40);
        let wald2 = Design::Equicorrelated(80);
        Ok(match name {
            "example1" => example(1, PRESET_SEED)?,
            "example2" => example(2, PRESET_SEED)?,
            "example3" => example(3, PRESET_SEED)?,
            "score-case1-dense" => score(Design::Factor, false),
            "score-case1-sparse" => score(Design::Factor, true),
            "score-case2-dense" => score(case2, false),
            "score-case2-sparse" => score(case2, true),
            "wald-case1" => {
                wald_study(Design::Factor, n, p, wald_grid(Design::Factor), PRESET_SEED)
            }
            "wald-case2" => wald_study(wald2, n, p, wald_grid(wald2), PRESET_SEED),
            other => {
                return Err(Error::Config(format!(
                    "unknown preset `{other}`; expected one of {}",
                    NAMES.join(", ")
                )))
            }
        })
    }

    /// (size, power) of the factor-adjusted test as published for the examples.
    pub fn published_table2(which: u8) -> Option<(f64, f64)> {
        match which {
            1 => Some((0.06, 0.50)),
            2 => Some((0.06, 0.60)),
            3 => Some((0.06, 0.07)),
            _ => None,
        }
    }
}

//! Serializable summaries of tests and contribution analyses.

use serde::{Deserialize, Serialize};

use crate::distributions::ChiSquare;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    ScoreModality,
    WaldLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub method: TestMethod,
    pub statistic: f64,
    pub df: usize,
    /// Noncentrality predicted for a stated alternative, when one was given.
    pub noncentrality: Option<f64>,
    pub critical_value: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
}

impl TestReport {
    /// Calibrates `statistic` against the central χ² law with `df` degrees of freedom.
    pub fn calibrate(method: TestMethod, statistic: f64, df: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidInput(format!(
                "α must lie in (0, 1), got {alpha}"
            )));
        }
        if !statistic.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite test statistic {statistic}"
            )));
        }
        let null = ChiSquare::<f64>::central(df)?;
        let critical_value = null.quantile(alpha)?;
        let p_value = null.sf(statistic).clamp(0.0, 1.0);
        Ok(TestReport {
            method,
            statistic,
            df,
            noncentrality: None,
            critical_value,
            p_value,
            alpha,
            reject: statistic > critical_value,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionReport {
    /// Modalities (zero-based) in the order they entered.
    pub order: Vec<usize>,
    pub names: Vec<String>,
    /// Variance added by each modality given those entered before it.
    pub sigma2_cond: Vec<f64>,
    /// Variance of each modality's term on its own.
    pub sigma2_marginal: Vec<f64>,
    pub sigma_y2: f64,
    pub ratio_cond: Vec<f64>,
    pub ratio_marginal: Vec<f64>,
}

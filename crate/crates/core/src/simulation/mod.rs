//! Monte Carlo size and power studies.
//!
//! A [`Scenario`] describes the design, [`ScenarioDesign`] draws its random
//! loadings once, and [`run_replications`] evaluates a test over a grid of
//! `δ` values. Every replication gets its own seed derived from
//! `(master seed, δ index, replication index)`, so results do not depend on
//! how many worker threads run them.

mod design;
pub mod scenario;

use std::fmt::Write as _;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use design::{mix64, replication_seed, PopulationSummary, ScenarioDesign};
pub use scenario::{
    presets, Alternative, Coordinate, CovarianceSpec, ModalitySpec, Scenario, ShiftEntry, TestSpec,
};

use crate::factor::stack_decompositions;
use crate::factor::{decompose_block, decompose_dataset, FactorOptions, FactorScope, IcPenalty};
use crate::modality_test::{test_modality, ScoreTestOptions};
use crate::penalized::{fit_cv, CvOptions, PenalizedProblem, Penalty, PenaltyKind};
use crate::wald_test::{test_linear, WaldOptions};
use crate::{Error, Result};

/// Options for whichever test the scenario asks for.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodOptions {
    pub score: ScoreTestOptions,
    pub wald: WaldOptions,
}

impl MethodOptions {
    /// Same cross-validation settings for every fit.
    pub fn with_cv(mut self, cv: CvOptions) -> Self {
        self.score.cv = cv;
        self.wald.cv = cv;
        self
    }
}

/// Cross-validation used by the simulation presets: 5 folds over a
/// 20-point grid keeps a replication cheap without moving the rates.
pub fn simulation_cv() -> CvOptions {
    CvOptions {
        folds: 5,
        grid_size: 20,
        ..CvOptions::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePowerCurve {
    pub label: String,
    pub deltas: Vec<f64>,
    /// Rejection rate among replications that completed.
    pub rates: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub replications: usize,
    /// Replications per `δ` that ended in an error.
    pub failures: Vec<usize>,
    /// Distinct error messages, at most a few per `δ`.
    pub failure_messages: Vec<Vec<String>>,
    /// Asymptotic power at each `δ`.
    pub predicted: Vec<f64>,
}

impl SizePowerCurve {
    pub fn completed(&self, i: usize) -> usize {
        self.replications - self.failures[i]
    }

    /// True when no rate falls more than `k` standard errors below an
    /// earlier one.
    pub fn is_monotone_within(&self, k: f64) -> bool {
        (1..self.rates.len()).all(|j| {
            (0..j).all(|i| {
                let se = (self.standard_errors[i].powi(2) + self.standard_errors[j].powi(2)).sqrt();
                self.rates[j] >= self.rates[i] - k * se
            })
        })
    }
}

/// Result of one replication.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Completed { statistic: f64, reject: bool },
    Failed(String),
}

/// Runs the scenario's test once on freshly generated data.
pub fn replicate(
    design: &ScenarioDesign,
    delta: f64,
    seed: u64,
    options: &MethodOptions,
    alpha: f64,
) -> Outcome {
    let run = || -> Result<(f64, bool)> {
        let ds = design.generate(delta, seed)?.center()?;
        let report = match &design.scenario.test {
            TestSpec::Score { modality } => {
                let opts = ScoreTestOptions {
                    alpha,
                    ..options.score.clone()
                };
                test_modality(&ds, modality - 1, &opts)?
            }
            TestSpec::Wald { .. } => {
                let hyp = design.hypothesis()?.expect("wald spec");
                let opts = WaldOptions {
                    alpha,
                    ..options.wald.clone()
                };
                test_linear(&ds, &hyp, &opts)?.0
            }
        };
        Ok((report.statistic, report.reject))
    };
    match run() {
        Ok((statistic, reject)) => Outcome::Completed { statistic, reject },
        Err(e) => Outcome::Failed(e.to_string()),
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))
}

/// Rejection rates over `deltas` from `replications` runs each.
pub fn run_replications(
    design: &ScenarioDesign,
    options: &MethodOptions,
    deltas: &[f64],
    replications: usize,
    alpha: f64,
    jobs: usize,
) -> Result<SizePowerCurve> {
    if replications == 0 {
        return Err(Error::InvalidInput(
            "at least one replication is required".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "α must lie in (0, 1), got {alpha}"
        )));
    }
    let master = design.scenario.seed;
    let jobs_list: Vec<(usize, usize)> = (0..deltas.len())
        .flat_map(|d| (0..replications).map(move |r| (d, r)))
        .collect();
    let outcomes: Vec<Outcome> = thread_pool(jobs)?.install(|| {
        jobs_list
            .par_iter()
            .map(|&(d, r)| {
                replicate(
                    design,
                    deltas[d],
                    replication_seed(master, d, r),
                    options,
                    alpha,
                )
            })
            .collect()
    });

    let mut curve = SizePowerCurve {
        label: design.scenario.name.clone(),
        deltas: deltas.to_vec(),
        rates: Vec::new(),
        standard_errors: Vec::new(),
        replications,
        failures: Vec::new(),
        failure_messages: Vec::new(),
        predicted: Vec::new(),
    };
    for (d, chunk) in outcomes.chunks(replications).enumerate() {
        let mut rejections = 0usize;
        let mut failed = 0usize;
        let mut messages: Vec<String> = Vec::new();
        for o in chunk {
            match o {
                Outcome::Completed { reject, .. } => rejections += usize::from(*reject),
                Outcome::Failed(msg) => {
                    failed += 1;
                    if messages.len() < 5 && !messages.contains(msg) {
                        messages.push(msg.clone());
                    }
                }
            }
        }
        let done = replications - failed;
        let (rate, se) = if done == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let r = rejections as f64 / done as f64;
            (r, (r * (1.0 - r) / done as f64).sqrt())
        };
        if failed > 0 {
            log::warn!(
                "{}: {failed} of {replications} replications failed at δ = {}",
                curve.label,
                deltas[d]
            );
        }
        curve.rates.push(rate);
        curve.standard_errors.push(se);
        curve.failures.push(failed);
        curve.failure_messages.push(messages);
        curve
            .predicted
            .push(design.predicted_power(deltas[d], alpha)?);
    }
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub example: u8,
    pub size: f64,
    pub power: f64,
    pub size_se: f64,
    pub power_se: f64,
    pub failures: usize,
    pub predicted_power: f64,
    pub published_size: f64,
    pub published_power: f64,
}

/// Size and power of the score test in the three two-modality examples.
pub fn table2_suite(
    replications: usize,
    alpha: f64,
    options: &MethodOptions,
    seed: u64,
    jobs: usize,
) -> Result<Vec<Table2Row>> {
    (1..=3u8)
        .map(|which| {
            let sc = presets::example(which, seed.wrapping_add(u64::from(which)))?;
            let design = ScenarioDesign::new(&sc)?;
            let curve = run_replications(&design, options, &sc.deltas, replications, alpha, jobs)?;
            let (published_size, published_power) =
                presets::published_table2(which).expect("known example");
            Ok(Table2Row {
                example: which,
                size: curve.rates[0],
                power: curve.rates[1],
                size_se: curve.standard_errors[0],
                power_se: curve.standard_errors[1],
                failures: curve.failures.iter().sum(),
                predicted_power: curve.predicted[1],
                published_size,
                published_power,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorCountSummary {
    pub penalty: IcPenalty,
    pub seeds: usize,
    /// Fraction of seeds where every modality got its population count.
    pub hit_rate: f64,
    /// Counts chosen per seed and modality.
    pub k_hat: Vec<Vec<usize>>,
}

/// Factor-count recovery over scenario seeds `seeds`; each seed draws new
/// loadings and data.
pub fn factor_count_study(
    scenario: &Scenario,
    seeds: std::ops::Range<u64>,
    penalty: IcPenalty,
    jobs: usize,
) -> Result<FactorCountSummary> {
    let opts = FactorOptions {
        max_k: None,
        penalty,
    };
    let seed_list: Vec<u64> = seeds.collect();
    let k_hat: Vec<Vec<usize>> = thread_pool(jobs)?.install(|| {
        seed_list
            .par_iter()
            .map(|&seed| {
                let design = ScenarioDesign::new(&Scenario {
                    seed,
                    ..scenario.clone()
                })?;
                let ds = design
                    .generate(0.0, replication_seed(seed, 0, 0))?
                    .center()?;
                (0..ds.partition().num_modalities())
                    .map(|m| {
                        Ok(decompose_block(
                            ds.modality_view(m)?,
                            None,
                            &opts,
                            FactorScope::Modality(m),
                        )?
                        .k)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()
    })?;
    let truth: Vec<usize> = scenario
        .modalities
        .iter()
        .map(|m| m.covariance.num_factors())
        .collect();
    let hits = k_hat.iter().filter(|k| **k == truth).count();
    Ok(FactorCountSummary {
        penalty,
        seeds: k_hat.len(),
        hit_rate: hits as f64 / k_hat.len().max(1) as f64,
        k_hat,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub n: usize,
    pub seeds: usize,
    pub failures: usize,
    /// Fraction of seeds with `sign(β̂) = sign(β*)` on every coordinate.
    pub sign_recovery_rate: f64,
    pub median_sup_error: f64,
    pub sup_errors: Vec<f64>,
}

/// Penalized fit on the factor-adjusted design for each scenario seed,
/// compared with the planted coefficients at `δ`.
///
/// `lambda = None` selects λ by cross-validation.
pub fn selection_study(
    scenario: &Scenario,
    delta: f64,
    seeds: std::ops::Range<u64>,
    penalty: PenaltyKind,
    lambda: Option<f64>,
    cv: &CvOptions,
    jobs: usize,
) -> Result<SelectionSummary> {
    let seed_list: Vec<u64> = seeds.collect();
    let results: Vec<Option<(bool, f64)>> = thread_pool(jobs)?.install(|| {
        seed_list
            .par_iter()
            .map(|&seed| {
                let run = || -> Result<(bool, f64)> {
                    let design = ScenarioDesign::new(&Scenario {
                        seed,
                        ..scenario.clone()
                    })?;
                    let ds = design
                        .generate(delta, replication_seed(seed, 0, 0))?
                        .center()?;
                    let decs = decompose_dataset(&ds, false, None, &FactorOptions::default())?;
                    let (f, u) = stack_decompositions(&decs);
                    let problem = PenalizedProblem::new(ds.y().view(), f.view(), u.view())?;
                    let template = Penalty::new(penalty, 0.0, ds.p())?;
                    let fit = match lambda {
                        Some(l) => problem.fit(&template.with_lambda(l), None, &cv.solver)?,
                        None => fit_cv(&problem, &template, cv)?.0,
                    };
                    let truth = design.beta(delta);
                    let signs = fit
                        .beta_hat
                        .iter()
                        .zip(truth.iter())
                        .all(|(b, t)| sign(*b) == sign(*t));
                    let sup = (&fit.beta_hat - &truth)
                        .iter()
                        .fold(0.0f64, |m, v| m.max(v.abs()));
                    Ok((signs, sup))
                };
                run()
                    .map_err(|e| log::warn!("selection replication {seed} failed: {e}"))
                    .ok()
            })
            .collect()
    });
    let done: Vec<(bool, f64)> = results.iter().flatten().copied().collect();
    let mut sup_errors: Vec<f64> = done.iter().map(|d| d.1).collect();
    let mut sorted = sup_errors.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.is_empty() {
        f64::NAN
    } else if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    sup_errors.shrink_to_fit();
    Ok(SelectionSummary {
        n: scenario.n,
        seeds: seed_list.len(),
        failures: seed_list.len() - done.len(),
        sign_recovery_rate: done.iter().filter(|d| d.0).count() as f64 / done.len().max(1) as f64,
        median_sup_error: median,
        sup_errors,
    })
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// One row per `δ`.
pub fn curve_csv(curve: &SizePowerCurve) -> String {
    let mut out = String::from("delta,rate,se,completed,failures,predicted\n");
    for i in 0..curve.deltas.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            curve.deltas[i],
            curve.rates[i],
            curve.standard_errors[i],
            curve.completed(i),
            curve.failures[i],
            curve.predicted[i]
        );
    }
    out
}

/// Two-column `delta rate` data with a comment header, for gnuplot.
pub fn curve_plot_data(curve: &SizePowerCurve) -> String {
    let mut out = format!("# {}\n# delta rate\n", curve.label);
    for (d, r) in curve.deltas.iter().zip(&curve.rates) {
        let _ = writeln!(out, "{d} {r}");
    }
    out
}

pub fn table2_csv(rows: &[Table2Row]) -> String {
    let mut out = String::from("example,size,power,size_se,power_se,failures,predicted_power,published_size,published_power\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.example,
            r.size,
            r.power,
            r.size_se,
            r.power_se,
            r.failures,
            r.predicted_power,
            r.published_size,
            r.published_power
        );
    }
    out
}

/// Theoretical rejection curve over `deltas`.
pub fn predicted_curve(design: &ScenarioDesign, deltas: &[f64], alpha: f64) -> Result<Array1<f64>> {
    deltas
        .iter()
        .map(|&d| design.predicted_power(d, alpha))
        .collect()
}

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use intfactor::contribution::{analyze_contributions, ContributionOptions};
use intfactor::dataset::{load_csv, PartitionSpec};
use intfactor::factor::{decompose_dataset, stack_decompositions};
use intfactor::modality_test::score_workspace;
use intfactor::penalized::{fit_cv, CvOptions, PenalizedProblem, Penalty};
use intfactor::simulation::{
    curve_csv, curve_plot_data, presets, run_replications, simulation_cv, table2_csv, table2_suite,
    MethodOptions, Scenario, ScenarioDesign, SizePowerCurve, Table2Row,
};
use intfactor::wald_test::test_linear;
use intfactor::{ContributionReport, Dataset, FactorCountCriterion, LinearHypothesis, TestReport};

use crate::args::*;
use crate::output::{matrix_csv, vector_csv, Output};
use crate::CliError;

fn load(data: &DataArgs) -> Result<Dataset, CliError> {
    let spec = PartitionSpec::from_file(&data.spec)?;
    let ds: Dataset = load_csv(&data.input, &spec)?;
    if ds.is_centered() {
        Ok(ds)
    } else {
        Ok(ds.center()?)
    }
}

fn check_alpha(alpha: f64) -> Result<(), CliError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "--alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

/// Zero-based modality from a 1-based flag value.
fn modality_index(ds: &Dataset, m: usize) -> Result<usize, CliError> {
    let count = ds.partition().num_modalities();
    if m == 0 || m > count {
        return Err(CliError::Usage(format!(
            "modality {m} out of range 1..={count}"
        )));
    }
    Ok(m - 1)
}

/// Zero-based column from 1-based `(modality, index)`.
fn column_index(ds: &Dataset, m: usize, i: usize) -> Result<usize, CliError> {
    let m0 = modality_index(ds, m)?;
    let range = ds.partition().range(m0)?;
    if i == 0 || i > range.len() {
        return Err(CliError::Usage(format!(
            "index {i} out of range 1..={} for modality {m}",
            range.len()
        )));
    }
    Ok(range.start + i - 1)
}

/// 1-based `(modality, index)` of a zero-based column.
fn coordinate_of(ds: &Dataset, j: usize) -> (usize, usize) {
    let m = ds
        .partition()
        .modality_of(j)
        .expect("column inside the partition");
    let start = ds.partition().range(m).expect("known modality").start;
    (m + 1, j - start + 1)
}

#[derive(Serialize)]
struct Block {
    name: String,
    columns: usize,
    k: usize,
    criterion: Option<FactorCountCriterion>,
    eigenvalues: Vec<f64>,
}

#[derive(Serialize)]
struct FactorsPayload {
    n: usize,
    p: usize,
    joint: bool,
    k_hat: Vec<usize>,
    blocks: Vec<Block>,
}

pub fn factors(args: &FactorsArgs, out: &Output) -> Result<(), CliError> {
    let ds = load(&args.data)?;
    let decs = decompose_dataset(&ds, args.joint, args.k.as_deref(), &args.factors.options())?;
    let names: Vec<String> = if args.joint {
        vec!["joint".into()]
    } else {
        ds.partition().names().to_vec()
    };
    let blocks: Vec<Block> = decs
        .iter()
        .zip(names)
        .map(|(d, name)| Block {
            name,
            columns: d.q(),
            k: d.k,
            criterion: d.criterion.clone(),
            eigenvalues: d.eigenvalues.to_vec(),
        })
        .collect();
    let payload = FactorsPayload {
        n: ds.n(),
        p: ds.p(),
        joint: args.joint,
        k_hat: decs.iter().map(|d| d.k).collect(),
        blocks,
    };
    out.payload(&payload)?;

    let mut table = String::from("block,name,k,ic_value\n");
    for (b, block) in payload.blocks.iter().enumerate() {
        if let Some(c) = &block.criterion {
            for (k, v) in c.ic_values.iter().enumerate() {
                let _ = writeln!(table, "{},{},{k},{v}", b + 1, block.name);
            }
        }
    }
    out.table(&table)?;

    if args.dump {
        for (b, d) in decs.iter().enumerate() {
            let tag = format!(".block{}", b + 1);
            out.write(&format!("{tag}.factors.csv"), &matrix_csv(&d.factors))?;
            out.write(&format!("{tag}.loadings.csv"), &matrix_csv(&d.loadings))?;
            out.write(&format!("{tag}.residuals.csv"), &matrix_csv(&d.residuals))?;
            out.write(
                &format!("{tag}.eigenvalues.csv"),
                &vector_csv(&d.eigenvalues),
            )?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct CvSummary {
    grid: Vec<f64>,
    cv_curve: Vec<f64>,
}

#[derive(Serialize)]
struct ActiveCoefficient {
    modality: usize,
    index: usize,
    name: String,
    beta: f64,
}

#[derive(Serialize)]
struct FitPayload {
    n: usize,
    p: usize,
    penalty: intfactor::penalized::PenaltyKind,
    shape: Option<f64>,
    lambda: f64,
    cv: Option<CvSummary>,
    factor_counts: Vec<usize>,
    gamma_hat: Vec<f64>,
    active: Vec<ActiveCoefficient>,
    objective: f64,
    converged: bool,
    iterations: usize,
}

pub fn fit(args: &FitArgs, out: &Output) -> Result<(), CliError> {
    let ds = load(&args.data)?;
    let decs = decompose_dataset(&ds, false, args.k.as_deref(), &args.factors.options())?;
    let (f_hat, u_hat) = stack_decompositions(&decs);
    let problem = PenalizedProblem::new(ds.y().view(), f_hat.view(), u_hat.view())?;
    let shape = args.penalty.shape().unwrap_or(0.0);
    let template = Penalty::with_mask(args.penalty.penalty, 0.0, shape, vec![true; ds.p()])?;
    let solver = args.solver.options();
    let (fit, cv) = match args.penalty.lambda {
        Some(l) => (problem.fit(&template.with_lambda(l), None, &solver)?, None),
        None => {
            let (fit, cv) = fit_cv(
                &problem,
                &template,
                &args.cv.options(CvOptions::default(), solver),
            )?;
            (
                fit,
                Some(CvSummary {
                    grid: cv.grid,
                    cv_curve: cv.cv_curve,
                }),
            )
        }
    };
    let active = fit
        .active_set
        .iter()
        .map(|&j| {
            let (modality, index) = coordinate_of(&ds, j);
            ActiveCoefficient {
                modality,
                index,
                name: ds.partition().names()[modality - 1].clone(),
                beta: fit.beta_hat[j],
            }
        })
        .collect();
    let payload = FitPayload {
        n: ds.n(),
        p: ds.p(),
        penalty: args.penalty.penalty,
        shape: args.penalty.shape(),
        lambda: fit.lambda_used,
        cv,
        factor_counts: decs.iter().map(|d| d.k).collect(),
        gamma_hat: fit.gamma_hat.to_vec(),
        active,
        objective: fit.objective(),
        converged: fit.converged,
        iterations: fit.iterations,
    };
    out.payload(&payload)?;

    let mut table = String::from("modality,index,beta\n");
    for (j, b) in fit.beta_hat.iter().enumerate() {
        let (m, i) = coordinate_of(&ds, j);
        let _ = writeln!(table, "{m},{i},{b}");
    }
    out.table(&table)?;
    Ok(())
}

fn report_csv(report: &TestReport) -> String {
    format!(
        "statistic,df,critical_value,p_value,alpha,reject\n{},{},{},{},{},{}\n",
        report.statistic,
        report.df,
        report.critical_value,
        report.p_value,
        report.alpha,
        report.reject
    )
}

#[derive(Serialize)]
struct ScorePayload {
    modality: usize,
    name: String,
    k: usize,
    lambda1: f64,
    lambda2: f64,
    sigma2: f64,
    standardized_score: Vec<f64>,
    report: TestReport,
}

pub fn test_modality(args: &TestModalityArgs, out: &Output) -> Result<(), CliError> {
    check_alpha(args.alpha)?;
    let ds = load(&args.data)?;
    let m = modality_index(&ds, args.modality)?;
    let cv = args.cv.options(CvOptions::default(), args.solver.options());
    let mut opts = args
        .score
        .options(args.alpha, &args.noise, args.factors.options(), cv);
    opts.k = args.k;
    let ws = score_workspace(&ds, m, &opts)?;
    let report = ws.report(args.alpha)?;
    let payload = ScorePayload {
        modality: args.modality,
        name: ds.partition().names()[m].clone(),
        k: ws.k(),
        lambda1: ws.lambda1,
        lambda2: ws.projection.lambda2,
        sigma2: ws.sigma2,
        standardized_score: ws.standardized_score()?.to_vec(),
        report,
    };
    out.payload(&payload)?;
    out.table(&report_csv(&payload.report))?;
    Ok(())
}

/// Hypothesis file for `test-linear`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HypothesisFile {
    /// `"modality:index"`, 1-based.
    coordinates: Vec<String>,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

fn parse_coordinate(ds: &Dataset, s: &str) -> Result<(usize, Option<f64>), CliError> {
    let bad = || CliError::Usage(format!("coordinate `{s}` is not MODALITY:INDEX[:WEIGHT]"));
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    if parts.len() < 2 || parts.len() > 3 {
        return Err(bad());
    }
    let m: usize = parts[0].parse().map_err(|_| bad())?;
    let i: usize = parts[1].parse().map_err(|_| bad())?;
    let w = match parts.get(2) {
        Some(w) => Some(w.parse::<f64>().map_err(|_| bad())?),
        None => None,
    };
    Ok((column_index(ds, m, i)?, w))
}

/// Rows of a headerless numeric CSV.
fn read_numeric_csv(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let row = record
            .iter()
            .map(|cell| {
                cell.parse::<f64>().map_err(|_| {
                    CliError::Usage(format!(
                        "{}:{}: `{cell}` is not a number",
                        path.display(),
                        line + 1
                    ))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn build_hypothesis(ds: &Dataset, args: &TestLinearArgs) -> Result<LinearHypothesis, CliError> {
    if let Some(path) = &args.hypothesis {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::io(path, source))?;
        let file: HypothesisFile = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut t = Vec::new();
        for c in &file.coordinates {
            match parse_coordinate(ds, c)? {
                (j, None) => t.push(j),
                (_, Some(_)) => {
                    return Err(CliError::Usage(format!(
                        "hypothesis coordinate `{c}` must not carry a weight"
                    )))
                }
            }
        }
        let rows = file.a.len();
        let cols = file.a.first().map_or(0, Vec::len);
        if file.a.iter().any(|r| r.len() != cols) {
            return Err(CliError::Usage("rows of `a` differ in length".into()));
        }
        let a = Array2::from_shape_vec((rows, cols), file.a.concat()).expect("rectangular");
        return Ok(LinearHypothesis::new(t, a, Array1::from(file.b))?);
    }
    if let (Some(a_path), Some(b_path), Some(cols)) = (&args.a_csv, &args.b_csv, &args.t_cols) {
        let t = cols
            .iter()
            .map(|&c| {
                if c == 0 || c > ds.p() {
                    Err(CliError::Usage(format!(
                        "--T index {c} outside 1..={}",
                        ds.p()
                    )))
                } else {
                    Ok(c - 1)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let a_rows = read_numeric_csv(a_path)?;
        let cols = a_rows.first().map_or(0, Vec::len);
        if a_rows.iter().any(|r| r.len() != cols) {
            return Err(CliError::Usage(format!(
                "{}: rows differ in length",
                a_path.display()
            )));
        }
        let a = Array2::from_shape_vec((a_rows.len(), cols), a_rows.concat()).expect("rectangular");
        let b: Vec<f64> = read_numeric_csv(b_path)?.concat();
        return Ok(LinearHypothesis::new(t, a, Array1::from(b))?);
    }
    if args.terms.is_empty() {
        return Err(CliError::Usage(
            "give --term at least once, --hypothesis, or --A with --b and --T".into(),
        ));
    }
    let mut t = Vec::new();
    let mut w = Vec::new();
    for term in &args.terms {
        let (j, weight) = parse_coordinate(ds, term)?;
        t.push(j);
        w.push(weight.unwrap_or(1.0));
    }
    let a = Array2::from_shape_vec((1, w.len()), w).expect("one row");
    Ok(LinearHypothesis::new(t, a, Array1::from(vec![args.value]))?)
}

#[derive(Serialize)]
struct WaldPayload {
    coordinates: Vec<String>,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    beta_t: Vec<f64>,
    lambda: f64,
    active_outside_t: usize,
    sigma2: f64,
    ridge_applied: bool,
    report: TestReport,
}

pub fn test_linear_cmd(args: &TestLinearArgs, out: &Output) -> Result<(), CliError> {
    check_alpha(args.alpha)?;
    let ds = load(&args.data)?;
    let hyp = build_hypothesis(&ds, args)?;
    let cv = args.cv.options(CvOptions::default(), args.solver.options());
    let mut opts = wald_options(
        args.alpha,
        &args.penalty,
        &args.noise,
        args.factors.options(),
        cv,
    );
    opts.k = args.k.clone();
    let (report, ws) = test_linear(&ds, &hyp, &opts)?;
    let payload = WaldPayload {
        coordinates: hyp
            .t
            .iter()
            .map(|&j| {
                let (m, i) = coordinate_of(&ds, j);
                format!("{m}:{i}")
            })
            .collect(),
        a: hyp.a.rows().into_iter().map(|r| r.to_vec()).collect(),
        b: hyp.b.to_vec(),
        beta_t: hyp.t.iter().map(|&j| ws.fit.beta_hat[j]).collect(),
        lambda: ws.fit.lambda_used,
        active_outside_t: ws.s_hat_a.len(),
        sigma2: ws.sigma2,
        ridge_applied: ws.ridge_applied,
        report,
    };
    out.payload(&payload)?;
    out.table(&report_csv(&payload.report))?;
    Ok(())
}

#[derive(Serialize)]
struct ContributionPayload {
    lambda: f64,
    report: ContributionReport,
}

pub fn contribution(args: &ContributionArgs, out: &Output) -> Result<(), CliError> {
    let ds = load(&args.data)?;
    let order = match &args.order {
        Some(o) => o
            .iter()
            .map(|&m| modality_index(&ds, m))
            .collect::<Result<Vec<_>, _>>()?,
        None => (0..ds.partition().num_modalities()).collect(),
    };
    let opts = ContributionOptions {
        penalty: args.penalty.penalty,
        shape: args.penalty.shape(),
        lambda: args.penalty.lambda,
        k: args.k,
        factors: args.factors.options(),
        omega: args.omega,
        c_omega: args.c_omega,
        rule: args.threshold,
        cv: args.cv.options(CvOptions::default(), args.solver.options()),
    };
    let (report, fit) = analyze_contributions(&ds, &order, &opts)?;
    let mut table =
        String::from("step,modality,name,sigma2_cond,ratio_cond,sigma2_marginal,ratio_marginal\n");
    for s in 0..report.order.len() {
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{}",
            s + 1,
            report.order[s] + 1,
            report.names[s],
            report.sigma2_cond[s],
            report.ratio_cond[s],
            report.sigma2_marginal[s],
            report.ratio_marginal[s]
        );
    }
    out.payload(&ContributionPayload {
        lambda: fit.lambda_used,
        report,
    })?;
    out.table(&table)?;
    Ok(())
}

fn method_options(mc: &MonteCarloArgs) -> MethodOptions {
    let cv = mc.cv.options(simulation_cv(), mc.solver.options());
    let factors = mc.factors.options();
    MethodOptions {
        score: mc.score.options(mc.alpha, &mc.noise, factors, cv),
        wald: wald_options(mc.alpha, &mc.penalty, &mc.noise, factors, cv),
    }
}

#[derive(Serialize)]
struct SimulatePayload {
    scenario: Scenario,
    replications: usize,
    alpha: f64,
    options: MethodOptions,
    curve: SizePowerCurve,
}

pub fn simulate(args: &SimulateArgs, out: &Output, jobs: usize) -> Result<(), CliError> {
    check_alpha(args.mc.alpha)?;
    let mut scenario = match (&args.scenario, &args.preset) {
        (Some(path), _) => Scenario::from_file(path)?,
        (None, Some(name)) => {
            presets::by_name(name, args.n, args.p).map_err(|e| CliError::Usage(e.to_string()))?
        }
        (None, None) => return Err(CliError::Usage("give --scenario or --preset".into())),
    };
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(deltas) = &args.deltas {
        scenario.deltas = deltas.clone();
    }
    scenario.validate()?;
    let options = method_options(&args.mc);
    let replications = args.mc.replications();
    let design = ScenarioDesign::new(&scenario)?;
    log::info!(
        "{}: {} δ values × {replications} replications on {jobs} workers",
        scenario.name,
        scenario.deltas.len()
    );
    let curve = run_replications(
        &design,
        &options,
        &scenario.deltas,
        replications,
        args.mc.alpha,
        jobs,
    )?;
    out.write(".csv", &curve_csv(&curve))?;
    if args.emit_plot_data {
        out.write(".dat", &curve_plot_data(&curve))?;
    }
    out.payload(&SimulatePayload {
        scenario,
        replications,
        alpha: args.mc.alpha,
        options,
        curve,
    })?;
    Ok(())
}

#[derive(Serialize)]
struct Table2Payload {
    seed: u64,
    replications: usize,
    alpha: f64,
    options: MethodOptions,
    rows: Vec<Table2Row>,
}

pub fn table2(args: &Table2Args, out: &Output, jobs: usize) -> Result<(), CliError> {
    check_alpha(args.mc.alpha)?;
    let options = method_options(&args.mc);
    let replications = args.mc.replications();
    let rows = table2_suite(replications, args.mc.alpha, &options, args.seed, jobs)?;
    out.write(".csv", &table2_csv(&rows))?;
    out.payload(&Table2Payload {
        seed: args.seed,
        replications,
        alpha: args.mc.alpha,
        options,
        rows,
    })?;
    Ok(())
}

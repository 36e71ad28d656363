#![allow(dead_code)]

//! Property checks shared by the proptest suites and the acceptance runner.
//! Each returns `Err` with a description of the first violated property.

use intfactor::contribution::{conditional_variance, schur_conditional_variance};
use intfactor::dantzig::solve_projection;
use intfactor::dataset::{ModalityPartition, MultimodalDataset};
use intfactor::distributions::ChiSquare;
use intfactor::factor::{decompose_dataset, estimate_factors, FactorOptions};
use intfactor::penalized::{Penalty, PenaltyKind};
use intfactor::wald_test::{
    fit_partially_penalized, wald_statistic, LinearHypothesis, WaldOptions,
};
use ndarray::{s, Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{centered, dantzig_oracle, gaussian};

pub type Check = Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `F̂ᵀF̂/n = I`, `Λ̂ᵀΛ̂` diagonal and `X = F̂Λ̂ᵀ + Û`; residuals vanish when
/// `X` has rank `k`.
pub fn pca_instance(seed: u64, n: usize, q: usize, k: usize, low_rank: bool) -> Check {
    let x = if low_rank {
        centered(gaussian(n, k, seed)).dot(&gaussian(k, q, seed + 1))
    } else {
        centered(gaussian(n, q, seed))
    };
    let dec = estimate_factors(x.view(), k).map_err(|e| e.to_string())?;
    let gram = dec.factors.t().dot(&dec.factors) / n as f64;
    ensure(max_abs(&(gram - Array2::<f64>::eye(k))) < 1e-8, || {
        "F'F/n is not the identity".into()
    })?;
    let ll = dec.loadings.t().dot(&dec.loadings);
    let scale = max_abs(&ll).max(1.0);
    for i in 0..k {
        for j in 0..k {
            if i != j {
                ensure(ll[[i, j]].abs() < 1e-8 * scale, || {
                    format!("Λ'Λ off-diagonal {} (scale {scale})", ll[[i, j]])
                })?;
            }
        }
    }
    let xs = max_abs(&x).max(1.0);
    let rebuilt = dec.factors.dot(&dec.loadings.t()) + &dec.residuals;
    ensure(max_abs(&(rebuilt - &x)) < 1e-9 * xs, || {
        "FΛ' + U differs from X".into()
    })?;
    if low_rank {
        ensure(max_abs(&dec.residuals) < 1e-7 * xs, || {
            "rank-k block left residuals".into()
        })?;
    }
    Ok(())
}

/// Minimizer of `½(b − z)² + s·p(|b|)` by a dense grid on `[−|z|−1, |z|+1]`
/// refined with golden-section search around the best grid point.
pub fn grid_prox(pen: &Penalty<f64>, z: f64, s: f64) -> f64 {
    let obj = |b: f64| 0.5 * (b - z) * (b - z) + s * pen.value(b);
    let (lo, hi) = (-z.abs() - 1.0, z.abs() + 1.0);
    let steps = 20_000;
    let h = (hi - lo) / steps as f64;
    let mut best = 0.0;
    let mut best_obj = obj(0.0);
    for i in 0..=steps {
        let b = lo + h * i as f64;
        let o = obj(b);
        if o < best_obj {
            best = b;
            best_obj = o;
        }
    }
    let (mut a, mut c) = (best - h, best + h);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let x1 = c - g * (c - a);
        let x2 = a + g * (c - a);
        if obj(x1) <= obj(x2) {
            c = x2;
        } else {
            a = x1;
        }
    }
    let refined = 0.5 * (a + c);
    if obj(refined) < best_obj {
        refined
    } else {
        best
    }
}

/// `kind`: 0 Lasso, 1 SCAD (`a = 2 + extra`), 2 MCP (`γ = 1 + extra`).
pub fn prox_instance(kind: usize, lambda: f64, shape_extra: f64, z: f64, step: f64) -> Check {
    let kind = [PenaltyKind::Lasso, PenaltyKind::Scad, PenaltyKind::Mcp][kind];
    let shape = match kind {
        PenaltyKind::Lasso => 0.0,
        PenaltyKind::Scad => 2.0 + shape_extra,
        PenaltyKind::Mcp => 1.0 + shape_extra,
    };
    let pen = Penalty::with_mask(kind, lambda, shape, vec![true]).map_err(|e| e.to_string())?;
    let got = pen.prox(z, step).map_err(|e| e.to_string())?;
    let want = grid_prox(&pen, z, step);
    let obj = |b: f64| 0.5 * (b - z) * (b - z) + step * pen.value(b);
    let msg =
        || format!("{kind:?} λ={lambda} shape={shape} z={z} step={step}: prox {got}, grid {want}");
    ensure(obj(got) <= obj(want) + 1e-12, msg)?;
    // Two separated minimizers with equal objective are both correct.
    let tie = (obj(got) - obj(want)).abs() < 1e-9 && (got - want).abs() > 1e-3;
    ensure(tie || (got - want).abs() < 1e-6, msg)
}

pub fn dantzig_instance(seed: u64, q: usize, n: usize, lambda: f64) -> Check {
    let x = centered(gaussian(n, q, seed));
    let f = centered(gaussian(n, 1, seed + 1))
        + &(x.column(0).to_owned() * 0.7).insert_axis(ndarray::Axis(1));
    let est = solve_projection(x.view(), f.view(), lambda).map_err(|e| e.to_string())?;
    let oracle =
        dantzig_oracle(&x, &f.column(0).to_owned(), lambda).ok_or("oracle found no solution")?;
    ensure(est.feasible[0], || {
        "solver left the column infeasible".into()
    })?;
    ensure(
        (est.per_column_l1[0] - oracle).abs() <= 1e-6 * oracle.max(1.0),
        || {
            format!(
                "seed {seed}: solver {} oracle {oracle}",
                est.per_column_l1[0]
            )
        },
    )
}

/// The 20 `(df, λ)` pairs checked against simulation.
pub const CHI_SQUARE_PAIRS: [(usize, f64); 20] = [
    (1, 0.0),
    (1, 0.5),
    (1, 4.0),
    (1, 12.0),
    (2, 0.0),
    (2, 1.0),
    (2, 6.0),
    (3, 0.0),
    (3, 2.5),
    (3, 10.0),
    (4, 0.3),
    (4, 8.0),
    (5, 0.0),
    (5, 15.0),
    (6, 3.0),
    (8, 0.0),
    (8, 5.0),
    (10, 1.0),
    (10, 20.0),
    (15, 7.5),
];

/// CDF at four upper quantiles against the empirical CDF of `draws`
/// simulated `Σ (Z_i + μ_i)²` with `μ = (√λ, 0, …, 0)`.
pub fn chi_square_monte_carlo(df: usize, lambda: f64, draws: usize, seed: u64, tol: f64) -> Check {
    let dist = ChiSquare::new(df, lambda).map_err(|e| e.to_string())?;
    let points: Vec<f64> = [0.9, 0.5, 0.1, 0.01]
        .iter()
        .map(|&a| dist.quantile(a))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = lambda.sqrt();
    let mut below = vec![0usize; points.len()];
    for _ in 0..draws {
        let mut s = 0.0;
        for i in 0..df {
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = if i == 0 { z + shift } else { z };
            s += v * v;
        }
        for (c, &x) in below.iter_mut().zip(&points) {
            if s <= x {
                *c += 1;
            }
        }
    }
    for (x, c) in points.iter().zip(below) {
        let e = c as f64 / draws as f64;
        let cdf = dist.cdf(*x);
        ensure((cdf - e).abs() < tol, || {
            format!("df {df} λ {lambda} x {x}: cdf {cdf} vs empirical {e}")
        })?;
    }
    Ok(())
}

pub fn quantile_round_trip(df: usize, lambda: f64, alpha: f64) -> Check {
    let dist = ChiSquare::new(df, lambda).map_err(|e| e.to_string())?;
    let x = dist.quantile(alpha).map_err(|e| e.to_string())?;
    let sf = dist.sf(x);
    ensure((sf - alpha).abs() < 1e-9, || {
        format!("df {df} λ {lambda}: sf(quantile({alpha})) = {sf}")
    })
}

/// Random SPD block `G Gᵀ/q + d I`.
fn spd(q: usize, d: f64, seed: u64) -> Array2<f64> {
    let g = gaussian(q, q, seed);
    g.dot(&g.t()) / q as f64 + Array2::<f64>::eye(q) * d
}

pub fn schur_instance(seed: u64, p_m: usize, p_c: usize, k: usize, d: f64) -> Check {
    let p = p_m + p_c;
    let lambda = gaussian(p, k, seed);
    let mut sigma_u = Array2::<f64>::zeros((p, p));
    sigma_u
        .slice_mut(s![..p_m, ..p_m])
        .assign(&spd(p_m, d, seed + 1));
    sigma_u
        .slice_mut(s![p_m.., p_m..])
        .assign(&spd(p_c, d, seed + 2));
    let beta: Array1<f64> = gaussian(p_m, 1, seed + 3).column(0).to_owned();
    let closed = conditional_variance(
        beta.view(),
        lambda.slice(s![..p_m, ..]),
        sigma_u.slice(s![..p_m, ..p_m]),
        lambda.slice(s![p_m.., ..]),
        sigma_u.slice(s![p_m.., p_m..]),
    )
    .map_err(|e| e.to_string())?;
    let sigma = lambda.dot(&lambda.t()) + &sigma_u;
    let oracle =
        schur_conditional_variance(sigma.view(), p_m, beta.view()).map_err(|e| e.to_string())?;
    ensure(
        (closed - oracle).abs() <= 1e-8 * oracle.abs().max(1.0),
        || format!("seed {seed}: closed {closed} schur {oracle}"),
    )
}

fn wald_dataset(seed: u64) -> MultimodalDataset<f64> {
    let (n, p1, p2) = (60, 12, 10);
    let f = gaussian(n, 1, seed);
    let mut x = gaussian(n, p1 + p2, seed + 1);
    x += &f.dot(&(gaussian(1, p1 + p2, seed + 2) * 1.5));
    let x = centered(x);
    let beta = Array1::from_shape_fn(p1 + p2, |j| if j < 3 { 1.0 } else { 0.0 });
    let y = x.dot(&beta) + gaussian(n, 1, seed + 3).column(0);
    MultimodalDataset::new(y, x, ModalityPartition::new(vec![p1, p2]).unwrap())
        .unwrap()
        .center()
        .unwrap()
}

/// `T_w` for `(A, b)` equals `T_w` for `(GA, Gb)` with a well-conditioned
/// invertible `G`.
pub fn wald_instance(seed: u64, r: usize, gseed: u64) -> Check {
    let ds = wald_dataset(seed);
    let t = vec![0, 4, 13];
    let a = gaussian(r, t.len(), gseed);
    let b = gaussian(r, 1, gseed + 1).column(0).to_owned();
    let Ok(hyp) = LinearHypothesis::new(t, a, b) else {
        return Ok(());
    };
    let opts = WaldOptions {
        lambda_a: Some(0.1),
        lambda_eps: Some(0.1),
        k: Some(vec![1, 1]),
        ..WaldOptions::default()
    };
    let run = || -> intfactor::Result<(f64, f64)> {
        let decs = decompose_dataset(&ds, false, opts.k.as_deref(), &FactorOptions::default())?;
        let ws = fit_partially_penalized(&ds, &decs, &hyp, &opts)?;
        let base = wald_statistic(&ws, &hyp, 0.05)?.statistic;
        let g = Array2::<f64>::eye(r) * 2.0 + gaussian(r, r, gseed + 2) * 0.5;
        let moved = hyp.transformed(g.view())?;
        Ok((base, wald_statistic(&ws, &moved, 0.05)?.statistic))
    };
    let (base, other) = run().map_err(|e| e.to_string())?;
    ensure((base - other).abs() <= 1e-8 * base.abs().max(1.0), || {
        format!("seed {seed}: {base} vs {other}")
    })
}

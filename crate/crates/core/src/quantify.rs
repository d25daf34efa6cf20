//! High-level nonlocality analyses: negativity of a behavior by either
//! method, critical visibility scans, the scaling benchmark, and the
//! exponential/linear fits used to summarize it.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::behavior::{make_family, mix, Behavior, BehaviorError, Family, Scenario};
use crate::corrbasis::{z0_from_behavior, CorrError};
use crate::lp_baseline::{min_l1_quasiprob_lp, ns_distance, LpError};
use crate::sparse_solver::{negativity_unchecked, nesta_solve, SolverConfig};

/// Negativity below this, after convergence at the default smoothing, is
/// treated as "local" by the first-order method.
pub const LOCAL_NEG_TOL: f64 = 1e-5;
/// LP locality threshold on the ℓ1 distance.
pub const LOCAL_NS_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum QuantifyError {
    #[error("target behavior is already local")]
    TargetAlreadyLocal,
    #[error("noise behavior is not local")]
    NoiseNotLocal,
    #[error("need at least {needed} usable points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("exponential fit diverged")]
    FitDiverged,
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
    #[error(transparent)]
    Corr(#[from] CorrError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nesta,
    Lp,
}

impl Method {
    pub fn parse(s: &str) -> Option<Method> {
        match s.to_ascii_lowercase().as_str() {
            "nesta" => Some(Method::Nesta),
            "lp" => Some(Method::Lp),
            _ => None,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Nesta => write!(f, "nesta"),
            Method::Lp => write!(f, "lp"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisRecord {
    pub scenario: Scenario,
    pub behavior_id: String,
    pub method: Method,
    pub negativity: f64,
    pub ns_distance: Option<f64>,
    pub wall_time: f64,
    pub iterations: Option<usize>,
    pub converged: bool,
}

/// Minimal negativity of a behavior by the requested method. Timing covers
/// the solve call only.
pub fn neg_of_behavior(
    b: &Behavior,
    method: Method,
    config: &SolverConfig,
) -> Result<AnalysisRecord, QuantifyError> {
    let scenario = b.scenario();
    match method {
        Method::Nesta => {
            let fixed = z0_from_behavior(b)?;
            let result = nesta_solve(&fixed, config);
            Ok(AnalysisRecord {
                scenario,
                behavior_id: String::new(),
                method,
                negativity: result.negativity,
                ns_distance: None,
                wall_time: result.wall_time,
                iterations: Some(result.iterations),
                converged: result.converged,
            })
        }
        Method::Lp => {
            let start = Instant::now();
            let (q, _l1) = min_l1_quasiprob_lp(b)?;
            let wall_time = start.elapsed().as_secs_f64();
            Ok(AnalysisRecord {
                scenario,
                behavior_id: String::new(),
                method,
                negativity: negativity_unchecked(q.as_slice()),
                ns_distance: None,
                wall_time,
                iterations: None,
                converged: true,
            })
        }
    }
}

fn is_local_by(b: &Behavior, method: Method, config: &SolverConfig) -> Result<bool, QuantifyError> {
    match method {
        Method::Lp => Ok(ns_distance(b)? <= LOCAL_NS_TOL),
        Method::Nesta => Ok(neg_of_behavior(b, Method::Nesta, config)?.negativity <= LOCAL_NEG_TOL),
    }
}

/// Bisection for the visibility v* at which v·target + (1-v)·noise stops
/// being local. Requires a nonlocal target and a local noise behavior.
pub fn critical_visibility(
    target: &Behavior,
    noise: &Behavior,
    method: Method,
    tol: f64,
    config: &SolverConfig,
) -> Result<f64, QuantifyError> {
    if !is_local_by(noise, method, config)? {
        return Err(QuantifyError::NoiseNotLocal);
    }
    if is_local_by(target, method, config)? {
        return Err(QuantifyError::TargetAlreadyLocal);
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let blend = mix(
            &[target.clone(), noise.clone()],
            &[mid, 1.0 - mid],
        )?;
        if is_local_by(&blend, method, config)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One benchmark measurement; one CSV row.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRecord {
    pub n: usize,
    pub m: usize,
    pub sample: usize,
    pub seed: u64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub method: Method,
    /// NaN when the method could not run (e.g. over the LP cap).
    pub negativity: f64,
    pub ns_distance: Option<f64>,
    pub wall_time_s: f64,
    pub iterations: Option<usize>,
    pub converged: bool,
}

/// Uniform simplex point via sorted uniforms.
fn sample_simplex3(rng: &mut impl Rng) -> (f64, f64, f64) {
    let mut u1: f64 = rng.random();
    let mut u2: f64 = rng.random();
    if u1 > u2 {
        std::mem::swap(&mut u1, &mut u2);
    }
    (u1, u2 - u1, 1.0 - u2)
}

/// The benchmark mixture family at the given scenario and weights.
pub fn benchmark_behavior(
    scenario: Scenario,
    c: (f64, f64, f64),
) -> Result<Behavior, BehaviorError> {
    let wn = make_family(Family::WhiteNoise, scenario)?;
    let ld = make_family(Family::LocalDeterministic, scenario)?;
    let pr = make_family(Family::GeneralizedPr, scenario)?;
    mix(&[wn, ld, pr], &[c.0, c.1, c.2])
}

/// Deterministic weight draws for the benchmark; the stream is keyed by n
/// so records do not depend on which other n values are in the run.
pub fn benchmark_weights(n: usize, samples: usize, seed: u64) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n as u64);
    (0..samples).map(|_| sample_simplex3(&mut rng)).collect()
}

/// Random convex mixtures c₀·whitenoise + c₁·localdet + c₂·generalizedPR
/// for each n, solved by each requested method. ns_distance is computed
/// once per behavior (when within the vertex cap) and attached to every
/// record; it is not part of any method's timing.
pub fn benchmark_scaling(
    n_values: &[usize],
    m: usize,
    samples: usize,
    seed: u64,
    methods: &[Method],
    config: &SolverConfig,
) -> Result<Vec<BenchRecord>, QuantifyError> {
    let mut records = Vec::new();
    for &n in n_values {
        let scenario = Scenario::new(n, m)?;
        for (sample, c) in benchmark_weights(n, samples, seed).into_iter().enumerate() {
            let b = benchmark_behavior(scenario, c)?;
            let ns = ns_distance(&b).ok();
            for &method in methods {
                let record = match neg_of_behavior(&b, method, config) {
                    Ok(rec) => BenchRecord {
                        n,
                        m,
                        sample,
                        seed,
                        c0: c.0,
                        c1: c.1,
                        c2: c.2,
                        method,
                        negativity: rec.negativity,
                        ns_distance: ns,
                        wall_time_s: rec.wall_time,
                        iterations: rec.iterations,
                        converged: rec.converged,
                    },
                    Err(QuantifyError::Lp(LpError::ProblemTooLarge { .. })) => BenchRecord {
                        n,
                        m,
                        sample,
                        seed,
                        c0: c.0,
                        c1: c.1,
                        c2: c.2,
                        method,
                        negativity: f64::NAN,
                        ns_distance: ns,
                        wall_time_s: 0.0,
                        iterations: None,
                        converged: false,
                    },
                    Err(e) => return Err(e),
                };
                records.push(record);
            }
        }
    }
    Ok(records)
}

pub const BENCH_CSV_HEADER: &str =
    "n,m,sample,seed,c0,c1,c2,method,negativity,ns_distance,wall_time_s,iterations,converged";

pub fn records_to_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(BENCH_CSV_HEADER);
    out.push('\n');
    for r in records {
        let neg = if r.negativity.is_nan() {
            String::new()
        } else {
            format!("{:.12e}", r.negativity)
        };
        let ns = r
            .ns_distance
            .map(|v| format!("{v:.12e}"))
            .unwrap_or_default();
        let iters = r.iterations.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{:.12e},{:.12e},{:.12e},{},{},{},{:.6e},{},{}\n",
            r.n,
            r.m,
            r.sample,
            r.seed,
            r.c0,
            r.c1,
            r.c2,
            r.method,
            neg,
            ns,
            r.wall_time_s,
            iters,
            r.converged
        ));
    }
    out
}

/// Least-squares fit of f(n) = a·(exp(b·n) - 1).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExpFit {
    pub a: f64,
    pub b: f64,
    pub residual: f64,
}

/// Grid-seeded Gauss-Newton fit of the scaling model.
pub fn fit_exp(points: &[(f64, f64)]) -> Result<ExpFit, QuantifyError> {
    if points.len() < 3 {
        return Err(QuantifyError::InsufficientData {
            needed: 3,
            got: points.len(),
        });
    }
    if points.iter().any(|&(_, t)| t <= 0.0) {
        return Err(QuantifyError::FitDiverged);
    }
    // for a fixed b the optimal a is linear least squares
    let a_of_b = |b: f64| -> (f64, f64) {
        let mut num = 0.0;
        let mut den = 0.0;
        for &(n, t) in points {
            let g = (b * n).exp() - 1.0;
            num += t * g;
            den += g * g;
        }
        let a = if den > 0.0 { num / den } else { 0.0 };
        let residual: f64 = points
            .iter()
            .map(|&(n, t)| {
                let e = t - a * ((b * n).exp() - 1.0);
                e * e
            })
            .sum();
        (a, residual)
    };
    let mut best = (0.01, a_of_b(0.01));
    let mut b = 0.01;
    while b <= 3.0 {
        let cand = a_of_b(b);
        if cand.1 < best.1 .1 {
            best = (b, cand);
        }
        b += 0.01;
    }
    let (mut b, (mut a, mut residual)) = best;
    // Gauss-Newton refinement on (a, b)
    for _ in 0..100 {
        let mut jtj = [[0.0f64; 2]; 2];
        let mut jtr = [0.0f64; 2];
        for &(n, t) in points {
            let g = (b * n).exp() - 1.0;
            let da = g;
            let db = a * n * (b * n).exp();
            let r = t - a * g;
            jtj[0][0] += da * da;
            jtj[0][1] += da * db;
            jtj[1][0] += db * da;
            jtj[1][1] += db * db;
            jtr[0] += da * r;
            jtr[1] += db * r;
        }
        let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
        if det.abs() < 1e-30 {
            break;
        }
        let step_a = (jtj[1][1] * jtr[0] - jtj[0][1] * jtr[1]) / det;
        let step_b = (jtj[0][0] * jtr[1] - jtj[1][0] * jtr[0]) / det;
        a += step_a;
        b += step_b;
        if !a.is_finite() || !b.is_finite() || b.abs() > 10.0 {
            return Err(QuantifyError::FitDiverged);
        }
        let (_, new_residual) = a_of_b(b);
        residual = new_residual.min(residual);
        if step_a.abs() < 1e-12 && step_b.abs() < 1e-12 {
            break;
        }
    }
    let residual_final: f64 = points
        .iter()
        .map(|&(n, t)| {
            let e = t - a * ((b * n).exp() - 1.0);
            e * e
        })
        .sum();
    Ok(ExpFit {
        a,
        b,
        residual: residual_final.min(residual),
    })
}

/// Per-n least-squares line of negativity against ns_distance.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NegNsFit {
    pub n: usize,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn compare_neg_ns(records: &[BenchRecord]) -> Result<Vec<NegNsFit>, QuantifyError> {
    let mut ns: Vec<usize> = records.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut out = Vec::new();
    for n in ns {
        let points: Vec<(f64, f64)> = records
            .iter()
            .filter(|r| r.n == n && !r.negativity.is_nan())
            .filter_map(|r| r.ns_distance.map(|d| (d, r.negativity)))
            .collect();
        out.push(linear_fit(n, &points)?);
    }
    Ok(out)
}

fn linear_fit(n: usize, points: &[(f64, f64)]) -> Result<NegNsFit, QuantifyError> {
    if points.len() < 2 {
        return Err(QuantifyError::InsufficientData {
            needed: 2,
            got: points.len(),
        });
    }
    let len = points.len() as f64;
    let mean_x: f64 = points.iter().map(|p| p.0).sum::<f64>() / len;
    let mean_y: f64 = points.iter().map(|p| p.1).sum::<f64>() / len;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    if sxx < 1e-16 || syy < 1e-16 {
        // all-local sample sets have no spread to regress on
        return Err(QuantifyError::InsufficientData {
            needed: 2,
            got: 0,
        });
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r2 = (sxy * sxy) / (sxx * syy);
    Ok(NegNsFit {
        n,
        slope,
        intercept,
        r2,
    })
}

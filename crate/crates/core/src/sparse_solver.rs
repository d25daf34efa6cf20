//! First-order solver for min ‖𝓥z‖₁ subject to Πz = z₀, following the
//! Nesterov smoothing scheme with continuation. 𝓥 = R^⊗2m is applied
//! matrix-free, and the equality constraint is handled by exact coordinate
//! projection.

use std::collections::VecDeque;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::behavior::Scenario;
use crate::corrbasis::{from_correlation_basis, kron_apply, CorrVector, FixedCoords};
use crate::detcomp::{rotation_any, QuasiProb};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("quasi-probability sums to {sum}, expected 1 within 1e-6")]
    NotNormalized { sum: f64 },
    #[error("smoothing parameter must be positive, got {0}")]
    InvalidMu(f64),
}

/// Tunables of the smoothing/continuation scheme. The cited algorithm family
/// leaves these free; the defaults here follow its standard choices.
#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    /// Final smoothing parameter μ.
    pub mu_final: f64,
    /// Number of continuation stages.
    pub continuation_steps: usize,
    /// Iteration cap per stage.
    pub max_iters_per_stage: usize,
    /// Relative objective change, averaged over `stagnation_window`
    /// iterations, below which a stage stops.
    pub stop_tol: f64,
    pub stagnation_window: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mu_final: 1e-6,
            continuation_steps: 5,
            max_iters_per_stage: 10_000,
            stop_tol: 1e-7,
            stagnation_window: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub q: QuasiProb,
    pub z: CorrVector,
    pub negativity: f64,
    pub l1_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time: f64,
    /// ℓ1 norm of 𝓥z at the end of each continuation stage.
    pub stage_l1: Vec<f64>,
}

/// Huber-smoothed ℓ1 of w = 𝓥z and its gradient 𝓥ᵀ·clip(w/μ, -1, 1).
/// The gradient is 1/μ-Lipschitz since 𝓥 is orthogonal.
pub fn smoothed_l1_grad(
    scenario: Scenario,
    z: &[f64],
    mu: f64,
) -> Result<(f64, Vec<f64>), SolverError> {
    if mu <= 0.0 {
        return Err(SolverError::InvalidMu(mu));
    }
    let r = rotation_any(scenario.n);
    let w = kron_apply(&r, 2 * scenario.m, z, false).expect("shape fixed by scenario");
    let mut value = 0.0;
    let mut inner = vec![0.0; w.len()];
    for (g, &wi) in inner.iter_mut().zip(&w) {
        if wi.abs() <= mu {
            value += wi * wi / (2.0 * mu);
            *g = wi / mu;
        } else {
            value += wi.abs() - mu / 2.0;
            *g = wi.signum();
        }
    }
    let grad = kron_apply(&r, 2 * scenario.m, &inner, true).expect("shape fixed by scenario");
    Ok((value, grad))
}

/// Euclidean projection onto {z : Πz = z₀}: overwrite the fixed coordinates.
pub fn project_fixed(z: &mut [f64], fixed: &FixedCoords) {
    for (&i, &v) in fixed.indices().iter().zip(fixed.values()) {
        z[i] = v;
    }
}

/// Total magnitude of negative entries, Σ max(-q_i, 0).
pub fn negativity(q: &QuasiProb) -> Result<f64, SolverError> {
    let sum = q.sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(SolverError::NotNormalized { sum });
    }
    Ok(negativity_unchecked(q.as_slice()))
}

pub(crate) fn negativity_unchecked(q: &[f64]) -> f64 {
    q.iter().map(|&v| (-v).max(0.0)).sum()
}

/// Accelerated gradient scheme with smoothing continuation. Each stage
/// warm-starts from the previous iterate; the first stage starts from z₀
/// zero-filled on the free coordinates.
pub fn nesta_solve(fixed: &FixedCoords, config: &SolverConfig) -> SolverResult {
    let start = Instant::now();
    let scenario = fixed.scenario();
    let r = rotation_any(scenario.n);
    let l1_of = |z: &[f64]| -> f64 {
        kron_apply(&r, 2 * scenario.m, z, false)
            .expect("shape fixed by scenario")
            .iter()
            .map(|v| v.abs())
            .sum()
    };

    let mut x = fixed.to_full_vector();
    // μ₀ = 0.9·‖𝓥 z_init‖∞
    let w_init = kron_apply(&r, 2 * scenario.m, &x, false).expect("shape fixed by scenario");
    let mu0 = 0.9 * w_init.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mu_final = config.mu_final;
    let stages = config.continuation_steps.max(1);
    let mus: Vec<f64> = if mu0 <= mu_final {
        vec![mu_final]
    } else {
        (1..=stages)
            .map(|s| mu0 * (mu_final / mu0).powf(s as f64 / stages as f64))
            .collect()
    };

    let dim = scenario.quasi_len();
    let mut iterations = 0;
    let mut converged = true;
    let mut stage_l1 = Vec::with_capacity(mus.len());
    for &mu in &mus {
        let x0 = x.clone();
        let mut grad_accum = vec![0.0; dim];
        let mut window: VecDeque<f64> = VecDeque::with_capacity(config.stagnation_window);
        let mut prev_f = f64::NAN;
        let mut stage_converged = false;
        for k in 0..config.max_iters_per_stage {
            let (f, grad) =
                smoothed_l1_grad(scenario, &x, mu).expect("mu > 0 by construction");
            iterations += 1;

            // y_k = project(x_k - μ ∇f)
            let mut y: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - mu * gi).collect();
            project_fixed(&mut y, fixed);

            // z_k = project(x₀ - μ Σ (j+1)/2 ∇f(x_j))
            let alpha = (k as f64 + 1.0) / 2.0;
            for (acc, gi) in grad_accum.iter_mut().zip(&grad) {
                *acc += alpha * gi;
            }
            let mut zk: Vec<f64> = x0
                .iter()
                .zip(&grad_accum)
                .map(|(xi, gi)| xi - mu * gi)
                .collect();
            project_fixed(&mut zk, fixed);

            let tau = 2.0 / (k as f64 + 3.0);
            for ((xi, zi), yi) in x.iter_mut().zip(&zk).zip(&y) {
                *xi = tau * zi + (1.0 - tau) * yi;
            }

            if prev_f.is_finite() {
                let rel = (f - prev_f).abs() / f.abs().max(1e-16);
                if window.len() == config.stagnation_window {
                    window.pop_front();
                }
                window.push_back(rel);
                if window.len() == config.stagnation_window {
                    let mean: f64 = window.iter().sum::<f64>() / window.len() as f64;
                    if mean < config.stop_tol {
                        stage_converged = true;
                        break;
                    }
                }
            }
            prev_f = f;
        }
        converged &= stage_converged;
        stage_l1.push(l1_of(&x));
    }
    project_fixed(&mut x, fixed);

    let z = CorrVector::new(scenario, x).expect("shape fixed by scenario");
    let q = from_correlation_basis(&z);
    let l1_norm = q.as_slice().iter().map(|v| v.abs()).sum();
    let negativity = negativity_unchecked(q.as_slice());
    SolverResult {
        q,
        z,
        negativity,
        l1_norm,
        iterations,
        converged,
        wall_time: start.elapsed().as_secs_f64(),
        stage_l1,
    }
}

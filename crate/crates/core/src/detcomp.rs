//! The deterministic tensor D with entries δ_{a,a_x}, its closed-form SVD
//! factors, and the constructive decomposition of constant-column-sum
//! matrices into deterministic assignments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{Behavior, Scenario};
use crate::mat::{upow, Mat};

#[derive(Debug, Error)]
pub enum DetcompError {
    #[error("rotation dimension must be >= 2, got {0}")]
    InvalidDimension(usize),
    #[error("column sums are not constant: column {x} sums to {sum}, column 0 to {reference}")]
    NotConstantColumnSums { x: usize, sum: f64, reference: f64 },
    #[error("negative entry {value} at ({a}, {x})")]
    NegativeEntry { a: usize, x: usize, value: f64 },
    #[error("quasi-probability sums to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid quasi-probability JSON: {0}")]
    Json(String),
}

/// One output per input: the tuple (a_0, ..., a_{m-1}) with a_x < n.
/// The flat index is Σ_x a_x · n^(m-1-x), first input most significant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn from_flat(flat: usize, n: usize, m: usize) -> Self {
        let mut outputs = vec![0; m];
        let mut rem = flat;
        for x in (0..m).rev() {
            outputs[x] = rem % n;
            rem /= n;
        }
        Assignment(outputs)
    }

    pub fn to_flat(&self, n: usize) -> usize {
        self.0.iter().fold(0, |acc, &a| acc * n + a)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Digit t (0 = most significant) of a flat base-n index with `total` digits.
#[inline]
pub fn digit(flat: usize, t: usize, total: usize, n: usize) -> usize {
    (flat / upow(n, total - 1 - t)) % n
}

/// Hidden-variable quasi-probability over joint assignments, Alice major.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiProb {
    scenario: Scenario,
    q: Vec<f64>,
}

impl QuasiProb {
    pub fn new(scenario: Scenario, q: Vec<f64>) -> Result<Self, DetcompError> {
        if q.len() != scenario.quasi_len() {
            return Err(DetcompError::LengthMismatch {
                expected: scenario.quasi_len(),
                got: q.len(),
            });
        }
        let sum: f64 = q.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DetcompError::NotNormalized { sum });
        }
        Ok(QuasiProb { scenario, q })
    }

    /// Skips the normalization check (e.g. for intermediate solver iterates).
    pub fn from_raw(scenario: Scenario, q: Vec<f64>) -> Self {
        assert_eq!(q.len(), scenario.quasi_len());
        QuasiProb { scenario, q }
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    pub fn sum(&self) -> f64 {
        self.q.iter().sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.q.iter().map(|v| v.abs()).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&QuasiProbJson {
            n: self.scenario.n,
            m: self.scenario.m,
            q: self.q.clone(),
            basis: None,
        })
        .expect("serialization")
    }

    pub fn from_json(s: &str) -> Result<Self, DetcompError> {
        let parsed: QuasiProbJson =
            serde_json::from_str(s).map_err(|e| DetcompError::Json(e.to_string()))?;
        let scenario = Scenario::new(parsed.n, parsed.m)
            .map_err(|e| DetcompError::Json(e.to_string()))?;
        QuasiProb::new(scenario, parsed.q)
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct QuasiProbJson {
    pub n: usize,
    pub m: usize,
    pub q: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<String>,
}

/// The orthogonal rotation whose first column is the constant vector 1/√d
/// and whose remaining columns sum to zero.
pub fn rotation_matrix(d: usize) -> Result<Mat, DetcompError> {
    if d < 2 {
        return Err(DetcompError::InvalidDimension(d));
    }
    Ok(rotation_any(d))
}

/// Same construction, allowing the degenerate d = 1 case ([1]) that shows
/// up for single-input scenarios.
pub(crate) fn rotation_any(d: usize) -> Mat {
    Mat::from_fn(d, d, |a, b| {
        if b == 0 {
            1.0 / (d as f64).sqrt()
        } else if a < b {
            1.0 / ((b * (b + 1)) as f64).sqrt()
        } else if a == b {
            -(b as f64) / ((b * (b + 1)) as f64).sqrt()
        } else {
            0.0
        }
    })
}

/// The input-side rotation that only acts when the control output is 0.
#[derive(Debug, Clone)]
pub struct ControlledRotation {
    n: usize,
    r_input: Mat,
}

impl ControlledRotation {
    pub fn entry(&self, a: usize, x: usize, y: usize) -> f64 {
        if a == 0 {
            self.r_input.get(x, y)
        } else if x == y {
            1.0
        } else {
            0.0
        }
    }

    pub fn slice(&self, a: usize) -> Mat {
        let m = self.r_input.rows();
        Mat::from_fn(m, m, |x, y| self.entry(a, x, y))
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

pub fn controlled_rotation(n: usize, m: usize) -> ControlledRotation {
    ControlledRotation {
        n,
        r_input: rotation_any(m),
    }
}

/// P(ab|xy) = Σ δ_{a,a_x} δ_{b,b_y} q, computed by marginal summation
/// without materializing D⊗D.
pub fn apply_deterministic(q: &QuasiProb) -> Behavior {
    let Scenario { n, m } = q.scenario();
    let na = q.scenario().assignment_count();
    // digit table: assignment flat index -> outputs
    let digits: Vec<Vec<usize>> = (0..na)
        .map(|flat| Assignment::from_flat(flat, n, m).0)
        .collect();
    let mut p = vec![0.0; q.scenario().behavior_len()];
    for (idx, &qv) in q.as_slice().iter().enumerate() {
        if qv == 0.0 {
            continue;
        }
        let alice = &digits[idx / na];
        let bob = &digits[idx % na];
        for x in 0..m {
            let a = alice[x];
            for y in 0..m {
                let b = bob[y];
                p[((x * m + y) * n + a) * n + b] += qv;
            }
        }
    }
    Behavior::from_raw(q.scenario(), p)
}

/// Non-negative decomposition of a column-stochastic-like matrix into
/// deterministic assignments with non-negative weights.
#[derive(Debug, Clone)]
pub struct StochasticDecomposition {
    pub terms: Vec<(Assignment, f64)>,
}

impl StochasticDecomposition {
    pub fn total_weight(&self) -> f64 {
        self.terms.iter().map(|(_, w)| w).sum()
    }

    /// Σ_terms weight · δ_{a,a_x}, for reconstruction checks.
    pub fn reconstruct(&self, n: usize, m: usize) -> Mat {
        reconstruct(&self.terms, n, m)
    }
}

pub fn reconstruct(terms: &[(Assignment, f64)], n: usize, m: usize) -> Mat {
    let mut out = Mat::zeros(n, m);
    for (assignment, w) in terms {
        for (x, &a) in assignment.0.iter().enumerate() {
            out.set(a, x, out.get(a, x) + w);
        }
    }
    out
}

fn check_column_sums(mat: &Mat, tol: f64) -> Result<f64, DetcompError> {
    let (n, m) = (mat.rows(), mat.cols());
    let reference: f64 = (0..n).map(|a| mat.get(a, 0)).sum();
    for x in 1..m {
        let sum: f64 = (0..n).map(|a| mat.get(a, x)).sum();
        if (sum - reference).abs() > tol {
            return Err(DetcompError::NotConstantColumnSums { x, sum, reference });
        }
    }
    Ok(reference)
}

/// Greedy expansion of a non-negative matrix with constant column sums:
/// repeatedly subtract λ·δ_{a,a_x} where a_x picks the smallest strictly
/// positive entry of column x and λ is the minimum over those picks.
pub fn decompose_stochastic(
    mat: &Mat,
    tol: f64,
) -> Result<StochasticDecomposition, DetcompError> {
    let (n, m) = (mat.rows(), mat.cols());
    for x in 0..m {
        for a in 0..n {
            let value = mat.get(a, x);
            if value < -tol {
                return Err(DetcompError::NegativeEntry { a, x, value });
            }
        }
    }
    check_column_sums(mat, tol)?;
    let mut work = mat.clone();
    let mut terms = Vec::new();
    loop {
        // Smallest strictly positive entry per column, lowest row on ties.
        let mut picks = Vec::with_capacity(m);
        let mut lambda = f64::INFINITY;
        let mut complete = true;
        for x in 0..m {
            let mut best: Option<(usize, f64)> = None;
            for a in 0..n {
                let v = work.get(a, x);
                if v > tol && best.map_or(true, |(_, bv)| v < bv) {
                    best = Some((a, v));
                }
            }
            match best {
                Some((a, v)) => {
                    picks.push(a);
                    lambda = lambda.min(v);
                }
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if !complete {
            break;
        }
        for (x, &a) in picks.iter().enumerate() {
            work.set(a, x, work.get(a, x) - lambda);
        }
        terms.push((Assignment(picks), lambda));
    }
    Ok(StochasticDecomposition { terms })
}

/// Signed variant for matrices with constant column sums but negative
/// entries: transfer each negative onto a positive entry of the same column
/// via a pair of signed single-nonzero assignments, then expand the
/// non-negative remainder greedily.
pub fn decompose_signed(
    mat: &Mat,
    tol: f64,
) -> Result<Vec<(Assignment, f64)>, DetcompError> {
    let (n, m) = (mat.rows(), mat.cols());
    check_column_sums(mat, tol)?;
    let mut work = mat.clone();
    let mut terms: Vec<(Assignment, f64)> = Vec::new();
    loop {
        let mut negative = None;
        'scan: for x in 0..m {
            for a in 0..n {
                if work.get(a, x) < -tol {
                    negative = Some((a, x));
                    break 'scan;
                }
            }
        }
        let Some((a, x)) = negative else { break };
        let donor = (0..n)
            .filter(|&a2| work.get(a2, x) > tol)
            .max_by(|&p, &q| work.get(p, x).total_cmp(&work.get(q, x)))
            .expect("constant column sums guarantee a positive entry");
        let lambda = (-work.get(a, x)).min(work.get(donor, x));
        let mut neg_assignment = vec![0; m];
        neg_assignment[x] = a;
        let mut pos_assignment = vec![0; m];
        pos_assignment[x] = donor;
        terms.push((Assignment(neg_assignment), -lambda));
        terms.push((Assignment(pos_assignment), lambda));
        work.set(a, x, work.get(a, x) + lambda);
        work.set(donor, x, work.get(donor, x) - lambda);
    }
    let rest = decompose_stochastic(&work, tol)?;
    terms.extend(rest.terms);
    Ok(terms)
}

/// Closed-form SVD factors of the deterministic tensor D = U S Vᵀ.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    scenario: Scenario,
    r_output: Mat,
    ctrl: ControlledRotation,
}

pub fn svd_factors(scenario: Scenario) -> SvdFactors {
    SvdFactors {
        scenario,
        r_output: rotation_any(scenario.n),
        ctrl: controlled_rotation(scenario.n, scenario.m),
    }
}

impl SvdFactors {
    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    /// The n×n output rotation R.
    pub fn r_output(&self) -> &Mat {
        &self.r_output
    }

    /// The m×m input rotation (same construction with n replaced by m).
    pub fn r_input(&self) -> Mat {
        rotation_any(self.scenario.m)
    }

    /// U_{ax,a'x'} = R_{aa'} · 𝓡^{a'}_{xx'}; rows and columns indexed a·m + x.
    pub fn u_entry(&self, a: usize, x: usize, a2: usize, x2: usize) -> f64 {
        self.r_output.get(a, a2) * self.ctrl.entry(a2, x, x2)
    }

    pub fn u_matrix(&self) -> Mat {
        let Scenario { n, m } = self.scenario;
        Mat::from_fn(n * m, n * m, |row, col| {
            self.u_entry(row / m, row % m, col / m, col % m)
        })
    }

    /// The single nonzero entry of row (a, x) of S, as (assignment flat
    /// index, value). Rows (0, x) with x > 0 are zero.
    pub fn s_row(&self, a: usize, x: usize) -> Option<(usize, f64)> {
        let Scenario { n, m } = self.scenario;
        let base = (upow(n, m - 1) as f64).sqrt();
        if a == 0 {
            if x == 0 {
                // all-zero assignment, extra factor √m
                Some((0, base * (m as f64).sqrt()))
            } else {
                None
            }
        } else {
            // assignment with a_x = a, zero elsewhere
            let flat = a * upow(n, m - 1 - x);
            Some((flat, base))
        }
    }

    pub fn s_matrix(&self) -> Mat {
        let Scenario { n, m } = self.scenario;
        let mut s = Mat::zeros(n * m, scenario_assignments(self.scenario));
        for a in 0..n {
            for x in 0..m {
                if let Some((flat, value)) = self.s_row(a, x) {
                    s.set(a * m + x, flat, value);
                }
            }
        }
        s
    }

    /// V = R^⊗m over the output rotation.
    pub fn v_matrix(&self) -> Mat {
        let mut v = Mat::identity(1);
        for _ in 0..self.scenario.m {
            v = v.kron(&self.r_output);
        }
        v
    }

    /// Nonzero singular values of D, descending.
    pub fn singular_values(&self) -> Vec<f64> {
        let Scenario { n, m } = self.scenario;
        let base = (upow(n, m - 1) as f64).sqrt();
        let mut values = vec![base * (m as f64).sqrt()];
        values.extend(std::iter::repeat(base).take(m * (n - 1)));
        values
    }

    /// Rank of D, m(n-1) + 1.
    pub fn rank(&self) -> usize {
        self.scenario.m * (self.scenario.n - 1) + 1
    }

    /// The materialized deterministic tensor δ_{a,a_x} as an (n·m)×(n^m)
    /// matrix; intended for small scenarios and tests only.
    pub fn materialize_d(&self) -> Mat {
        let Scenario { n, m } = self.scenario;
        let na = scenario_assignments(self.scenario);
        Mat::from_fn(n * m, na, |row, col| {
            let (a, x) = (row / m, row % m);
            if digit(col, x, m, n) == a {
                1.0
            } else {
                0.0
            }
        })
    }

    /// U S Vᵀ, materialized for reconstruction checks.
    pub fn materialize_usvt(&self) -> Mat {
        self.u_matrix()
            .matmul(&self.s_matrix())
            .matmul(&self.v_matrix().transpose())
    }
}

fn scenario_assignments(s: Scenario) -> usize {
    s.assignment_count()
}

/// The worked PR-box quasi-probability, 1/16 · [[3,3,-1,-1], ...].
pub fn pr_quasiprob() -> QuasiProb {
    let rows: [[f64; 4]; 4] = [
        [3.0, 3.0, -1.0, -1.0],
        [3.0, -1.0, 3.0, -1.0],
        [-1.0, 3.0, -1.0, 3.0],
        [-1.0, -1.0, 3.0, 3.0],
    ];
    let mut q = Vec::with_capacity(16);
    for row in rows {
        for v in row {
            q.push(v / 16.0);
        }
    }
    QuasiProb::new(Scenario::new(2, 2).unwrap(), q).unwrap()
}

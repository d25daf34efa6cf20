//! Bipartite behaviors P(ab|xy): validation, no-signalling checks, generation
//! and JSON serialization.
//!
//! Indices are 0-based everywhere. The flat layout of a behavior tensor is
//! row-major in the order (x, y, a, b).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mat::upow;

/// Default tolerance used when a no-signalling check is implied by a
/// precondition rather than supplied by the caller.
pub const NS_TOL: f64 = 1e-9;

const NORM_TOL: f64 = 1e-9;
/// Parsed entries in [-1e-12, 0) are clamped to zero; anything lower is an error.
const ENTRY_CLAMP: f64 = -1e-12;

#[derive(Debug, Error)]
pub enum BehaviorError {
    #[error("unsupported scenario: n={n}, m={m}")]
    UnsupportedScenario { n: usize, m: usize },
    #[error("tensor has {got} entries, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("negative entry {value} at flat index {index}")]
    NegativeEntry { index: usize, value: f64 },
    #[error("column (x={x}, y={y}) sums to {sum}, expected 1")]
    NotNormalized { x: usize, y: usize, sum: f64 },
    #[error("{behaviors} behaviors but {weights} weights")]
    WeightMismatch { behaviors: usize, weights: usize },
    #[error("behaviors have mismatched scenarios")]
    ScenarioMismatch,
    #[error("weights must be non-negative and sum to 1 (sum = {sum})")]
    BadWeights { sum: f64 },
    #[error("setting {setting} out of range for m={m}")]
    SettingOutOfRange { setting: usize, m: usize },
    #[error("signalling input: marginal mismatch {violation}")]
    SignallingInput { violation: f64 },
    #[error("invalid behavior JSON: {0}")]
    Json(String),
}

/// Bipartite Bell scenario: n outputs and m inputs per party.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub n: usize,
    pub m: usize,
}

impl Scenario {
    pub fn new(n: usize, m: usize) -> Result<Self, BehaviorError> {
        if n < 2 || m < 1 {
            return Err(BehaviorError::UnsupportedScenario { n, m });
        }
        Ok(Scenario { n, m })
    }

    /// Number of entries of a behavior tensor, (n·m)².
    pub fn behavior_len(&self) -> usize {
        upow(self.n * self.m, 2)
    }

    /// Number of single-party deterministic assignments, n^m.
    pub fn assignment_count(&self) -> usize {
        upow(self.n, self.m)
    }

    /// Length of a hidden-variable quasi-probability vector, n^(2m).
    pub fn quasi_len(&self) -> usize {
        upow(self.n, 2 * self.m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Party {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    WhiteNoise,
    LocalDeterministic,
    GeneralizedPr,
}

/// Outcome of a no-signalling check at a given tolerance.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NoSignallingReport {
    pub is_ns: bool,
    pub max_violation: f64,
}

/// A validated conditional probability tensor P(ab|xy).
#[derive(Debug, Clone, PartialEq)]
pub struct Behavior {
    scenario: Scenario,
    p: Vec<f64>,
}

impl Behavior {
    pub fn new(scenario: Scenario, mut p: Vec<f64>) -> Result<Self, BehaviorError> {
        let expected = scenario.behavior_len();
        if p.len() != expected {
            return Err(BehaviorError::ShapeMismatch {
                expected,
                got: p.len(),
            });
        }
        for (index, v) in p.iter_mut().enumerate() {
            if *v < ENTRY_CLAMP {
                return Err(BehaviorError::NegativeEntry { index, value: *v });
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let b = Behavior { scenario, p };
        for x in 0..scenario.m {
            for y in 0..scenario.m {
                let sum: f64 = b.column(x, y).iter().sum();
                if (sum - 1.0).abs() > NORM_TOL {
                    return Err(BehaviorError::NotNormalized { x, y, sum });
                }
            }
        }
        Ok(b)
    }

    /// Builds a behavior without entry validation. Used where the tensor is
    /// produced by an operation whose output may legitimately step outside
    /// the probability simplex (e.g. applying D⊗D to a far-off quasi
    /// probability); callers validate downstream when needed.
    pub fn from_raw(scenario: Scenario, p: Vec<f64>) -> Self {
        assert_eq!(p.len(), scenario.behavior_len());
        Behavior { scenario, p }
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, a: usize, b: usize) -> usize {
        let n = self.scenario.n;
        let m = self.scenario.m;
        ((x * m + y) * n + a) * n + b
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        self.p[self.index(x, y, a, b)]
    }

    fn column(&self, x: usize, y: usize) -> &[f64] {
        let n = self.scenario.n;
        let start = self.index(x, y, 0, 0);
        &self.p[start..start + n * n]
    }

    /// Largest marginal mismatch over all partner-setting pairs, both sides.
    pub fn check_no_signalling(&self, tol: f64) -> NoSignallingReport {
        let Scenario { n, m } = self.scenario;
        let mut max_violation: f64 = 0.0;
        // Alice's marginal must not depend on y.
        for x in 0..m {
            for a in 0..n {
                let reference: f64 = (0..n).map(|b| self.get(x, 0, a, b)).sum();
                for y in 1..m {
                    let other: f64 = (0..n).map(|b| self.get(x, y, a, b)).sum();
                    max_violation = max_violation.max((reference - other).abs());
                }
            }
        }
        // Bob's marginal must not depend on x.
        for y in 0..m {
            for b in 0..n {
                let reference: f64 = (0..n).map(|a| self.get(0, y, a, b)).sum();
                for x in 1..m {
                    let other: f64 = (0..n).map(|a| self.get(x, y, a, b)).sum();
                    max_violation = max_violation.max((reference - other).abs());
                }
            }
        }
        NoSignallingReport {
            is_ns: max_violation <= tol,
            max_violation,
        }
    }

    /// Single-party marginal with the partner's setting fixed to 0 after
    /// validating consistency across all partner settings.
    pub fn marginal(&self, party: Party, setting: usize) -> Result<Vec<f64>, BehaviorError> {
        let Scenario { n, m } = self.scenario;
        if setting >= m {
            return Err(BehaviorError::SettingOutOfRange { setting, m });
        }
        let one = |partner: usize| -> Vec<f64> {
            match party {
                Party::A => (0..n)
                    .map(|a| (0..n).map(|b| self.get(setting, partner, a, b)).sum())
                    .collect(),
                Party::B => (0..n)
                    .map(|b| (0..n).map(|a| self.get(partner, setting, a, b)).sum())
                    .collect(),
            }
        };
        let reference = one(0);
        for partner in 1..m {
            let other = one(partner);
            let violation = reference
                .iter()
                .zip(&other)
                .map(|(r, o)| (r - o).abs())
                .fold(0.0, f64::max);
            if violation > NS_TOL {
                return Err(BehaviorError::SignallingInput { violation });
            }
        }
        Ok(reference)
    }

    pub fn to_json(&self) -> String {
        let Scenario { n, m } = self.scenario;
        let p: Vec<Vec<Vec<Vec<f64>>>> = (0..m)
            .map(|x| {
                (0..m)
                    .map(|y| {
                        (0..n)
                            .map(|a| (0..n).map(|b| self.get(x, y, a, b)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        serde_json::to_string_pretty(&BehaviorJson { n, m, p }).expect("serialization")
    }

    pub fn from_json(s: &str) -> Result<Self, BehaviorError> {
        let parsed: BehaviorJson =
            serde_json::from_str(s).map_err(|e| BehaviorError::Json(e.to_string()))?;
        let scenario = Scenario::new(parsed.n, parsed.m)?;
        let expected = scenario.behavior_len();
        let mut flat = Vec::with_capacity(expected);
        for x in &parsed.p {
            for y in x {
                for a in y {
                    flat.extend_from_slice(a);
                }
            }
        }
        // Nested ragged arrays collapse to a wrong flat length.
        if parsed.p.len() != parsed.m
            || parsed.p.iter().any(|x| {
                x.len() != parsed.m
                    || x.iter().any(|y| {
                        y.len() != parsed.n || y.iter().any(|a| a.len() != parsed.n)
                    })
            })
        {
            return Err(BehaviorError::ShapeMismatch {
                expected,
                got: flat.len(),
            });
        }
        Behavior::new(scenario, flat)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BehaviorJson {
    n: usize,
    m: usize,
    p: Vec<Vec<Vec<Vec<f64>>>>,
}

/// Standard behavior families used throughout the benchmarks.
pub fn make_family(kind: Family, scenario: Scenario) -> Result<Behavior, BehaviorError> {
    let Scenario { n, m } = scenario;
    let len = scenario.behavior_len();
    let mut p = vec![0.0; len];
    let idx = |x: usize, y: usize, a: usize, b: usize| ((x * m + y) * n + a) * n + b;
    match kind {
        Family::WhiteNoise => {
            let v = 1.0 / (n * n) as f64;
            p.iter_mut().for_each(|e| *e = v);
        }
        Family::LocalDeterministic => {
            for x in 0..m {
                for y in 0..m {
                    p[idx(x, y, 0, 0)] = 1.0;
                }
            }
        }
        Family::GeneralizedPr => {
            // n-outcome PR box: P(ab|xy) = 1/n iff b - a ≡ x·y (mod n).
            // Reduces to ½δ_{a⊕b,xy} at n = 2.
            if m != 2 {
                return Err(BehaviorError::UnsupportedScenario { n, m });
            }
            let v = 1.0 / n as f64;
            for x in 0..m {
                for y in 0..m {
                    for a in 0..n {
                        let b = (a + x * y) % n;
                        p[idx(x, y, a, b)] = v;
                    }
                }
            }
        }
    }
    Behavior::new(scenario, p)
}

/// Entrywise convex combination of behaviors over a common scenario.
pub fn mix(behaviors: &[Behavior], weights: &[f64]) -> Result<Behavior, BehaviorError> {
    if behaviors.is_empty() || behaviors.len() != weights.len() {
        return Err(BehaviorError::WeightMismatch {
            behaviors: behaviors.len(),
            weights: weights.len(),
        });
    }
    let scenario = behaviors[0].scenario();
    if behaviors.iter().any(|b| b.scenario() != scenario) {
        return Err(BehaviorError::ScenarioMismatch);
    }
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|w| *w < 0.0) || (sum - 1.0).abs() > 1e-12 {
        return Err(BehaviorError::BadWeights { sum });
    }
    let mut p = vec![0.0; scenario.behavior_len()];
    for (b, w) in behaviors.iter().zip(weights) {
        for (acc, v) in p.iter_mut().zip(b.as_slice()) {
            *acc += w * v;
        }
    }
    Behavior::new(scenario, p)
}

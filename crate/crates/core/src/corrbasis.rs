//! Correlation-basis transform z = (Rᵀ)^⊗2m q, fixed-coordinate extraction
//! from behaviors, the minimal-ℓ2 pseudo-inverse solution, and the CHSH
//! evaluator.
//!
//! Orientation convention, fixed project-wide: the forward transform applies
//! Rᵀ on every tensor axis, so z_{c'} = Σ_c Π R_{c c'} q_c and q = R^⊗2m z.
//! It is pinned by the z_{0...0} = n^(-m) test below.

use thiserror::Error;

use crate::behavior::{Behavior, Party, Scenario, NS_TOL};
use crate::detcomp::{digit, rotation_any, QuasiProb, QuasiProbJson};
use crate::mat::{upow, Mat};

#[derive(Debug, Error)]
pub enum CorrError {
    #[error("vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("matrix must be square")]
    NotSquare,
    #[error("signalling input: marginal mismatch {violation}")]
    SignallingInput { violation: f64 },
    #[error("operation requires n=m=2, got n={n}, m={m}")]
    UnsupportedScenario { n: usize, m: usize },
}

/// (M^⊗k) v, or its adjoint action, computed by k axis-wise passes without
/// materializing the Kronecker product.
pub fn kron_apply(m: &Mat, k: usize, v: &[f64], adjoint: bool) -> Result<Vec<f64>, CorrError> {
    if m.rows() != m.cols() {
        return Err(CorrError::NotSquare);
    }
    let d = m.rows();
    let expected = upow(d, k);
    if v.len() != expected {
        return Err(CorrError::LengthMismatch {
            expected,
            got: v.len(),
        });
    }
    let mut cur = v.to_vec();
    let mut next = vec![0.0; cur.len()];
    for axis in 0..k {
        let pre = upow(d, axis);
        let post = upow(d, k - 1 - axis);
        for p in 0..pre {
            for s in 0..post {
                let base = p * d * post + s;
                for i in 0..d {
                    let mut acc = 0.0;
                    for j in 0..d {
                        let coeff = if adjoint { m.get(j, i) } else { m.get(i, j) };
                        acc += coeff * cur[base + j * post];
                    }
                    next[base + i * post] = acc;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

/// A quasi-probability expressed in the correlation basis.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrVector {
    scenario: Scenario,
    z: Vec<f64>,
}

impl CorrVector {
    pub fn new(scenario: Scenario, z: Vec<f64>) -> Result<Self, CorrError> {
        if z.len() != scenario.quasi_len() {
            return Err(CorrError::LengthMismatch {
                expected: scenario.quasi_len(),
                got: z.len(),
            });
        }
        Ok(CorrVector { scenario, z })
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.z
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&QuasiProbJson {
            n: self.scenario.n,
            m: self.scenario.m,
            q: self.z.clone(),
            basis: Some("correlation".to_string()),
        })
        .expect("serialization")
    }
}

pub fn to_correlation_basis(q: &QuasiProb) -> CorrVector {
    let sc = q.scenario();
    let r = rotation_any(sc.n);
    let z = kron_apply(&r, 2 * sc.m, q.as_slice(), true).expect("shape fixed by scenario");
    CorrVector { scenario: sc, z }
}

pub fn from_correlation_basis(z: &CorrVector) -> QuasiProb {
    let sc = z.scenario();
    let r = rotation_any(sc.n);
    let q = kron_apply(&r, 2 * sc.m, z.as_slice(), false).expect("shape fixed by scenario");
    QuasiProb::from_raw(sc, q)
}

/// The correlation-basis coordinates fixed by an observed behavior
/// (the vector z₀ and the coordinate selector Π).
#[derive(Debug, Clone, PartialEq)]
pub struct FixedCoords {
    scenario: Scenario,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl FixedCoords {
    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, flat: usize) -> Option<f64> {
        self.indices
            .binary_search(&flat)
            .ok()
            .map(|pos| self.values[pos])
    }

    /// z₀ scattered into a full-length vector with free coordinates zero.
    pub fn to_full_vector(&self) -> Vec<f64> {
        let mut z = vec![0.0; self.scenario.quasi_len()];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            z[i] = v;
        }
        z
    }
}

/// Single-party assignment indices with at most one nonzero digit, sorted.
fn single_indices(n: usize, m: usize) -> Vec<usize> {
    let mut out = vec![0];
    for x in 0..m {
        for c in 1..n {
            out.push(c * upow(n, m - 1 - x));
        }
    }
    out.sort_unstable();
    out
}

/// Joint indices whose Alice part and Bob part each carry at most one
/// nonzero primed digit; count (1 + m(n-1))².
pub fn fixed_coordinate_indices(scenario: Scenario) -> Vec<usize> {
    let Scenario { n, m } = scenario;
    let na = scenario.assignment_count();
    let singles = single_indices(n, m);
    let mut out = Vec::with_capacity(singles.len() * singles.len());
    for &alice in &singles {
        for &bob in &singles {
            out.push(alice * na + bob);
        }
    }
    out
}

/// Position and digit of the single nonzero entry of a single-party index,
/// or None for the all-zero index.
fn single_digit(flat: usize, n: usize, m: usize) -> Option<(usize, usize)> {
    if flat == 0 {
        return None;
    }
    for x in 0..m {
        let c = digit(flat, x, m, n);
        if c != 0 {
            return Some((x, c));
        }
    }
    unreachable!()
}

/// The coordinates of z fixed by the observed behavior.
pub fn z0_from_behavior(b: &Behavior) -> Result<FixedCoords, CorrError> {
    let sc = b.scenario();
    let Scenario { n, m } = sc;
    let report = b.check_no_signalling(NS_TOL);
    if !report.is_ns {
        return Err(CorrError::SignallingInput {
            violation: report.max_violation,
        });
    }
    let r = rotation_any(n);
    let na = sc.assignment_count();
    let nf = n as f64;
    let mf = m as f64;
    let indices = fixed_coordinate_indices(sc);
    let marg_a: Vec<Vec<f64>> = (0..m)
        .map(|x| b.marginal(Party::A, x).expect("checked no-signalling"))
        .collect();
    let marg_b: Vec<Vec<f64>> = (0..m)
        .map(|y| b.marginal(Party::B, y).expect("checked no-signalling"))
        .collect();
    let values = indices
        .iter()
        .map(|&flat| {
            let alice = single_digit(flat / na, n, m);
            let bob = single_digit(flat % na, n, m);
            match (alice, bob) {
                (None, None) => nf.powf(-mf),
                (Some((x, c)), None) => {
                    let s: f64 = (0..n).map(|a| r.get(a, c) * marg_a[x][a]).sum();
                    nf.powf(0.5 - mf) * s
                }
                (None, Some((y, c))) => {
                    let s: f64 = (0..n).map(|bb| r.get(bb, c) * marg_b[y][bb]).sum();
                    nf.powf(0.5 - mf) * s
                }
                (Some((x, c)), Some((y, c2))) => {
                    let mut s = 0.0;
                    for a in 0..n {
                        for bb in 0..n {
                            s += r.get(a, c) * r.get(bb, c2) * b.get(x, y, a, bb);
                        }
                    }
                    nf.powf(1.0 - mf) * s
                }
            }
        })
        .collect();
    Ok(FixedCoords {
        scenario: sc,
        indices,
        values,
    })
}

/// P = (U S ⊗ U S) z, evaluated matrix-free. Only the fixed coordinates
/// carry nonzero singular values, so free coordinates never contribute.
pub fn behavior_from_fixed(fixed: &FixedCoords) -> Behavior {
    let sc = fixed.scenario;
    let Scenario { n, m } = sc;
    let na = sc.assignment_count();
    let r = rotation_any(n);
    let nf = n as f64;
    // weight of the all-zero column of U S, independent of (a, x)
    let w0 = nf.powf((m as f64 - 2.0) / 2.0);
    // weight of a single-nonzero column e(c, s): √(n^(m-1)) R_{ac} δ_{xs}
    let ws = nf.powf((m as f64 - 1.0) / 2.0);
    let mut p = vec![0.0; sc.behavior_len()];
    let idx = |x: usize, y: usize, a: usize, bb: usize| ((x * m + y) * n + a) * n + bb;
    for (&flat, &zv) in fixed.indices.iter().zip(&fixed.values) {
        if zv == 0.0 {
            continue;
        }
        let alice = single_digit(flat / na, n, m);
        let bob = single_digit(flat % na, n, m);
        match (alice, bob) {
            (None, None) => {
                let c = w0 * w0 * zv;
                p.iter_mut().for_each(|e| *e += c);
            }
            (Some((s, c)), None) => {
                for a in 0..n {
                    let w = ws * r.get(a, c) * w0 * zv;
                    for y in 0..m {
                        for bb in 0..n {
                            p[idx(s, y, a, bb)] += w;
                        }
                    }
                }
            }
            (None, Some((t, c2))) => {
                for bb in 0..n {
                    let w = w0 * ws * r.get(bb, c2) * zv;
                    for x in 0..m {
                        for a in 0..n {
                            p[idx(x, t, a, bb)] += w;
                        }
                    }
                }
            }
            (Some((s, c)), Some((t, c2))) => {
                for a in 0..n {
                    for bb in 0..n {
                        p[idx(s, t, a, bb)] += ws * r.get(a, c) * ws * r.get(bb, c2) * zv;
                    }
                }
            }
        }
    }
    Behavior::from_raw(sc, p)
}

/// Same map starting from a full correlation-basis vector; free coordinates
/// lie in the kernel of D⊗D and are ignored.
pub fn behavior_from_z(z: &CorrVector) -> Behavior {
    let indices = fixed_coordinate_indices(z.scenario());
    let values = indices.iter().map(|&i| z.as_slice()[i]).collect();
    behavior_from_fixed(&FixedCoords {
        scenario: z.scenario(),
        indices,
        values,
    })
}

/// Moore-Penrose solution of (D⊗D) q = P: z₀ zero-filled on the free
/// coordinates and rotated back.
pub fn min_l2_quasiprob(b: &Behavior) -> Result<QuasiProb, CorrError> {
    let fixed = z0_from_behavior(b)?;
    let z = CorrVector {
        scenario: fixed.scenario,
        z: fixed.to_full_vector(),
    };
    Ok(from_correlation_basis(&z))
}

// Flat z indices of the four CHSH correlator coordinates at n = m = 2,
// digits (a'_0 a'_1 b'_0 b'_1): 1010, 0110, 1001, 0101.
const CHSH_PLUS: [usize; 3] = [0b1010, 0b0110, 0b1001];
const CHSH_MINUS: usize = 0b0101;

fn require_22(sc: Scenario) -> Result<(), CorrError> {
    if sc.n != 2 || sc.m != 2 {
        return Err(CorrError::UnsupportedScenario { n: sc.n, m: sc.m });
    }
    Ok(())
}

/// |z_1010 + z_0110 + z_1001 - z_0101|; the local bound is 1/2.
pub fn chsh_correlation(z: &CorrVector) -> Result<f64, CorrError> {
    require_22(z.scenario())?;
    let zs = z.as_slice();
    Ok((CHSH_PLUS.iter().map(|&i| zs[i]).sum::<f64>() - zs[CHSH_MINUS]).abs())
}

/// CHSH from fixed coordinates only (all four are fixed coordinates).
pub fn chsh_from_fixed(fixed: &FixedCoords) -> Result<f64, CorrError> {
    require_22(fixed.scenario())?;
    let get = |i: usize| fixed.value_at(i).expect("CHSH coordinates are fixed");
    Ok((CHSH_PLUS.iter().map(|&i| get(i)).sum::<f64>() - get(CHSH_MINUS)).abs())
}

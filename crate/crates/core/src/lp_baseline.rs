//! Exact linear-programming reference: a dense revised simplex, the
//! basis-pursuit LP over quasi-probabilities, local-polytope vertex
//! enumeration, and the ℓ1 distance to the local polytope.

use thiserror::Error;

use crate::behavior::{Behavior, Scenario};
use crate::corrbasis::{fixed_coordinate_indices, z0_from_behavior};
use crate::detcomp::{digit, rotation_any, Assignment, QuasiProb};
use crate::mat::Mat;

/// Variable cap for the basis-pursuit LP (before sign splitting).
pub const DEFAULT_LP_VAR_CAP: usize = 4096;
/// Vertex cap for polytope enumeration.
pub const DEFAULT_VERTEX_CAP: usize = 10_000_000;

const PIVOT_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 200_000;
/// Degenerate pivots tolerated before switching to Bland's rule.
// last-resort switch to Bland's rule; the lexicographic ratio test should
// keep degenerate runs far below this
const STALL_LIMIT: usize = 2000;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("problem has {vars} variables, exceeding the cap {cap}")]
    ProblemTooLarge { vars: usize, cap: usize },
    #[error("LP infeasible (signalling or inconsistent input)")]
    Infeasible,
    #[error("{count} vertices exceed the cap {cap}")]
    TooManyVertices { count: usize, cap: usize },
    #[error("LP did not reach an optimum: {0:?}")]
    NotOptimal(LpStatus),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// min cᵀx subject to Ax = b, x ≥ lower_bounds (componentwise).
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub c: Vec<f64>,
    pub a: Mat,
    pub b: Vec<f64>,
    pub lower_bounds: Vec<f64>,
}

impl LinearProgram {
    /// Standard form with zero lower bounds.
    pub fn new(c: Vec<f64>, a: Mat, b: Vec<f64>) -> Self {
        let nvars = c.len();
        assert_eq!(a.cols(), nvars);
        assert_eq!(a.rows(), b.len());
        LinearProgram {
            c,
            a,
            b,
            lower_bounds: vec![0.0; nvars],
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective_value: f64,
    pub status: LpStatus,
}

struct SimplexState {
    /// Constraint matrix including artificial columns, stored transposed
    /// ((n + rows) × rows) so each column is a contiguous slice.
    at: Mat,
    b: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Mat,
    xb: Vec<f64>,
    n_orig: usize,
    degenerate_streak: usize,
}

impl SimplexState {
    fn refactorize(&mut self) {
        let rows = self.b.len();
        // Gauss-Jordan inverse of the basis matrix.
        let mut aug = Mat::zeros(rows, 2 * rows);
        for i in 0..rows {
            for (r, &j) in self.basis.iter().enumerate() {
                aug.set(i, r, self.at.get(j, i));
            }
            aug.set(i, rows + i, 1.0);
        }
        for col in 0..rows {
            let piv = (col..rows)
                .max_by(|&p, &q| aug.get(p, col).abs().total_cmp(&aug.get(q, col).abs()))
                .unwrap();
            if aug.get(piv, col).abs() < 1e-14 {
                continue; // singular basis should not happen; leave row as-is
            }
            if piv != col {
                for j in 0..2 * rows {
                    let tmp = aug.get(col, j);
                    aug.set(col, j, aug.get(piv, j));
                    aug.set(piv, j, tmp);
                }
            }
            let d = aug.get(col, col);
            for j in 0..2 * rows {
                aug.set(col, j, aug.get(col, j) / d);
            }
            for i in 0..rows {
                if i == col {
                    continue;
                }
                let f = aug.get(i, col);
                if f == 0.0 {
                    continue;
                }
                for j in 0..2 * rows {
                    aug.set(i, j, aug.get(i, j) - f * aug.get(col, j));
                }
            }
        }
        self.binv = Mat::from_fn(rows, rows, |i, j| aug.get(i, rows + j));
        self.xb = self.binv.matvec(&self.b);
    }

    fn column(&self, j: usize) -> &[f64] {
        self.at.row(j)
    }

    /// One phase of the revised simplex over the allowed column range.
    /// Dantzig pricing over rotating blocks of columns (partial pricing),
    /// with Bland's rule engaged after a long degeneracy streak.
    fn optimize(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool) -> LpStatus {
        let rows = self.b.len();
        let cols = self.at.rows();
        let block = 1024usize.max(rows);
        let mut scan_start = 0usize;
        for pivots in 0..MAX_PIVOTS {
            if pivots > 0 && pivots % 500 == 0 {
                self.refactorize();
            }
            // y = cBᵀ B⁻¹
            let mut y = vec![0.0; rows];
            for (r, &j) in self.basis.iter().enumerate() {
                let cb = cost[j];
                if cb == 0.0 {
                    continue;
                }
                for (yi, bi) in y.iter_mut().zip(self.binv.row(r)) {
                    *yi += cb * bi;
                }
            }
            let bland = self.degenerate_streak >= STALL_LIMIT;
            let mut entering = None;
            let mut best_rc = -PIVOT_TOL;
            let mut scanned = 0;
            let mut jpos = if bland { 0 } else { scan_start };
            'scan: while scanned < cols {
                for _ in 0..block.min(cols - scanned) {
                    let j = jpos;
                    jpos = (jpos + 1) % cols;
                    scanned += 1;
                    if self.in_basis[j] || !allowed(j) {
                        continue;
                    }
                    let col = self.at.row(j);
                    let mut rc = cost[j];
                    for (yi, aij) in y.iter().zip(col) {
                        rc -= yi * aij;
                    }
                    if rc < -PIVOT_TOL {
                        if bland {
                            entering = Some(j);
                            break 'scan;
                        }
                        if rc < best_rc {
                            best_rc = rc;
                            entering = Some(j);
                        }
                    }
                }
                // stop at the first block that produced a candidate
                if entering.is_some() {
                    scan_start = jpos;
                    break;
                }
            }
            let Some(e) = entering else {
                return LpStatus::Optimal;
            };
            let d = self.binv.matvec(self.column(e));
            // lexicographic ratio test: ties on xb/d are broken by comparing
            // the scaled rows of B⁻¹, which rules out cycling under Dantzig
            // pricing; final ties fall back to the smallest basis index
            let lex_less = |i: usize, li: usize| -> bool {
                for k in 0..rows {
                    let a = self.binv.get(i, k) / d[i];
                    let b = self.binv.get(li, k) / d[li];
                    if (a - b).abs() > 1e-12 {
                        return a < b;
                    }
                }
                self.basis[i] < self.basis[li]
            };
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..rows {
                if d[i] > PIVOT_TOL {
                    let ratio = self.xb[i] / d[i];
                    match leaving {
                        None => leaving = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12
                                || ((ratio - lr).abs() <= 1e-12 && lex_less(i, li))
                            {
                                leaving = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((li, step)) = leaving else {
                return LpStatus::Unbounded;
            };
            if step < 1e-12 {
                self.degenerate_streak += 1;
            } else {
                self.degenerate_streak = 0;
            }
            // pivot: update B⁻¹ and xB
            let pd = d[li];
            let pivot_row: Vec<f64> = self.binv.row(li).iter().map(|v| v / pd).collect();
            let pivot_x = self.xb[li] / pd;
            for i in 0..rows {
                if i == li {
                    continue;
                }
                let f = d[i];
                if f == 0.0 {
                    continue;
                }
                let row = self.binv.row_mut(i);
                for (ri, pi) in row.iter_mut().zip(&pivot_row) {
                    *ri -= f * pi;
                }
                self.xb[i] -= f * pivot_x;
            }
            self.binv.row_mut(li).copy_from_slice(&pivot_row);
            self.xb[li] = pivot_x;
            self.in_basis[self.basis[li]] = false;
            self.in_basis[e] = true;
            self.basis[li] = e;
        }
        LpStatus::IterationLimit
    }
}

/// Two-phase revised simplex. Deterministic pivoting; Bland's anti-cycling
/// rule engages on degeneracy.
pub fn lp_solve(lp: &LinearProgram) -> LpSolution {
    let rows = lp.b.len();
    let nvars = lp.c.len();
    // shift out the lower bounds: u = x - lb >= 0
    let mut b: Vec<f64> = lp.b.clone();
    for i in 0..rows {
        let mut shift = 0.0;
        for j in 0..nvars {
            shift += lp.a.get(i, j) * lp.lower_bounds[j];
        }
        b[i] -= shift;
    }
    // flip rows so b >= 0, then append artificial columns
    let mut at = Mat::zeros(nvars + rows, rows);
    for i in 0..rows {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        b[i] *= sign;
        for j in 0..nvars {
            at.set(j, i, sign * lp.a.get(i, j));
        }
        at.set(nvars + i, i, 1.0);
    }
    let mut in_basis = vec![false; nvars + rows];
    for f in in_basis.iter_mut().skip(nvars) {
        *f = true;
    }
    let mut state = SimplexState {
        at,
        b: b.clone(),
        basis: (nvars..nvars + rows).collect(),
        in_basis,
        binv: Mat::identity(rows),
        xb: b,
        n_orig: nvars,
        degenerate_streak: 0,
    };

    // phase 1: drive the artificials to zero
    let mut phase1_cost = vec![0.0; nvars + rows];
    for c in phase1_cost.iter_mut().skip(nvars) {
        *c = 1.0;
    }
    let status = state.optimize(&phase1_cost, &|_| true);
    if status != LpStatus::Optimal {
        return LpSolution {
            x: vec![],
            objective_value: f64::NAN,
            status,
        };
    }
    let phase1_obj: f64 = state
        .basis
        .iter()
        .zip(&state.xb)
        .filter(|(&j, _)| j >= nvars)
        .map(|(_, &v)| v)
        .sum();
    if phase1_obj > 1e-7 {
        return LpSolution {
            x: vec![],
            objective_value: f64::NAN,
            status: LpStatus::Infeasible,
        };
    }
    // pivot remaining zero-valued artificials out where possible
    for r in 0..rows {
        if state.basis[r] < nvars {
            continue;
        }
        let row: Vec<f64> = (0..rows).map(|i| state.binv.get(r, i)).collect();
        let replacement = (0..nvars).find(|&j| {
            if state.in_basis[j] {
                return false;
            }
            let col = state.column(j);
            let dr: f64 = row.iter().zip(col).map(|(a, b)| a * b).sum();
            dr.abs() > 1e-9
        });
        if let Some(j) = replacement {
            let d = state.binv.matvec(state.column(j));
            let pd = d[r];
            let pivot_row: Vec<f64> = state.binv.row(r).iter().map(|v| v / pd).collect();
            let pivot_x = state.xb[r] / pd;
            for i in 0..rows {
                if i == r {
                    continue;
                }
                let f = d[i];
                if f == 0.0 {
                    continue;
                }
                let brow = state.binv.row_mut(i);
                for (ri, pi) in brow.iter_mut().zip(&pivot_row) {
                    *ri -= f * pi;
                }
                state.xb[i] -= f * pivot_x;
            }
            state.binv.row_mut(r).copy_from_slice(&pivot_row);
            state.xb[r] = pivot_x;
            state.in_basis[state.basis[r]] = false;
            state.in_basis[j] = true;
            state.basis[r] = j;
        }
        // else: redundant row; the artificial stays basic at value 0
    }

    // phase 2: original objective, artificials barred from entering
    let mut phase2_cost = vec![0.0; nvars + rows];
    phase2_cost[..nvars].copy_from_slice(&lp.c);
    state.degenerate_streak = 0;
    let n_orig = state.n_orig;
    let status = state.optimize(&phase2_cost, &|j| j < n_orig);
    if status != LpStatus::Optimal {
        return LpSolution {
            x: vec![],
            objective_value: f64::NAN,
            status,
        };
    }
    state.refactorize();
    let mut x = lp.lower_bounds.clone();
    for (r, &j) in state.basis.iter().enumerate() {
        if j < nvars {
            x[j] += state.xb[r];
        }
    }
    let objective_value = lp.c.iter().zip(&x).map(|(c, v)| c * v).sum();
    LpSolution {
        x,
        objective_value,
        status: LpStatus::Optimal,
    }
}

/// Basis pursuit over the hidden-variable space: minimize ‖q‖₁ subject to
/// the fixed correlation-basis coordinates of the behavior, via the standard
/// split q = q⁺ - q⁻.
pub fn min_l1_quasiprob_lp(b: &Behavior) -> Result<(QuasiProb, f64), LpError> {
    min_l1_quasiprob_lp_capped(b, DEFAULT_LP_VAR_CAP)
}

pub fn min_l1_quasiprob_lp_capped(
    b: &Behavior,
    cap: usize,
) -> Result<(QuasiProb, f64), LpError> {
    let sc = b.scenario();
    let nq = sc.quasi_len();
    if nq > cap {
        return Err(LpError::ProblemTooLarge { vars: nq, cap });
    }
    let fixed = z0_from_behavior(b).map_err(|_| LpError::Infeasible)?;
    let indices = fixed_coordinate_indices(sc);
    let r = rotation_any(sc.n);
    let digits_total = 2 * sc.m;
    // rows: one per fixed coordinate j; T[j][i] = Π_t R_{i_t j_t}
    let rows = indices.len();
    let mut a = Mat::zeros(rows, 2 * nq);
    for (row, &j) in indices.iter().enumerate() {
        for i in 0..nq {
            let mut coeff = 1.0;
            for t in 0..digits_total {
                coeff *= r.get(
                    digit(i, t, digits_total, sc.n),
                    digit(j, t, digits_total, sc.n),
                );
                if coeff == 0.0 {
                    break;
                }
            }
            a.set(row, i, coeff);
            a.set(row, nq + i, -coeff);
        }
    }
    let lp = LinearProgram::new(vec![1.0; 2 * nq], a, fixed.values().to_vec());
    let solution = lp_solve(&lp);
    match solution.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(LpError::Infeasible),
        other => return Err(LpError::NotOptimal(other)),
    }
    let q: Vec<f64> = (0..nq)
        .map(|i| solution.x[i] - solution.x[nq + i])
        .collect();
    Ok((QuasiProb::from_raw(sc, q), solution.objective_value))
}

/// All n^(2m) deterministic behaviors, streamed in flat-index order.
pub fn local_vertices(
    scenario: Scenario,
) -> Result<impl Iterator<Item = Behavior>, LpError> {
    local_vertices_capped(scenario, DEFAULT_VERTEX_CAP)
}

pub fn local_vertices_capped(
    scenario: Scenario,
    cap: usize,
) -> Result<impl Iterator<Item = Behavior>, LpError> {
    let count = scenario.quasi_len();
    if count > cap {
        return Err(LpError::TooManyVertices { count, cap });
    }
    let na = scenario.assignment_count();
    let Scenario { n, m } = scenario;
    Ok((0..count).map(move |flat| {
        let alice = Assignment::from_flat(flat / na, n, m).0;
        let bob = Assignment::from_flat(flat % na, n, m).0;
        let mut p = vec![0.0; scenario.behavior_len()];
        for x in 0..m {
            for y in 0..m {
                p[((x * m + y) * n + alice[x]) * n + bob[y]] = 1.0;
            }
        }
        Behavior::from_raw(scenario, p)
    }))
}

/// ℓ1 distance of a behavior to the local polytope,
/// min_{w ≥ 0, Σw = 1} ‖P - Σ_λ w_λ D_λ‖₁, zero iff local.
pub fn ns_distance(b: &Behavior) -> Result<f64, LpError> {
    ns_distance_capped(b, DEFAULT_VERTEX_CAP)
}

pub fn ns_distance_capped(b: &Behavior, cap: usize) -> Result<f64, LpError> {
    let sc = b.scenario();
    let nv = sc.quasi_len();
    let entries = sc.behavior_len();
    let vertices = local_vertices_capped(sc, cap)?;
    // columns: w (nv), s⁺ (entries), s⁻ (entries)
    // rows: one per behavior entry plus the normalization Σw = 1
    let rows = entries + 1;
    let cols = nv + 2 * entries;
    let mut a = Mat::zeros(rows, cols);
    for (lam, vertex) in vertices.enumerate() {
        for (row, &v) in vertex.as_slice().iter().enumerate() {
            if v != 0.0 {
                a.set(row, lam, v);
            }
        }
        a.set(entries, lam, 1.0);
    }
    for row in 0..entries {
        a.set(row, nv + row, 1.0);
        a.set(row, nv + entries + row, -1.0);
    }
    let mut rhs = b.as_slice().to_vec();
    rhs.push(1.0);
    let mut c = vec![0.0; cols];
    for ci in c.iter_mut().skip(nv) {
        *ci = 1.0;
    }
    let solution = lp_solve(&LinearProgram::new(c, a, rhs));
    match solution.status {
        LpStatus::Optimal => Ok(solution.objective_value.max(0.0)),
        LpStatus::Infeasible => Err(LpError::Infeasible),
        other => Err(LpError::NotOptimal(other)),
    }
}

pub fn is_local(b: &Behavior, tol: f64) -> Result<bool, LpError> {
    Ok(ns_distance(b)? <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::{make_family, mix, Family};
    use crate::sparse_solver::negativity_unchecked;

    fn s22() -> Scenario {
        Scenario::new(2, 2).unwrap()
    }

    #[test]
    fn lp_fixed_variable() {
        // min x s.t. x = 3, x >= 0
        let lp = LinearProgram::new(vec![1.0], Mat::from_fn(1, 1, |_, _| 1.0), vec![3.0]);
        let sol = lp_solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] - 3.0).abs() < 1e-12);
        assert!((sol.objective_value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn lp_unbounded() {
        // min -x, x >= 0, one vacuous constraint 0·x = 0
        let lp = LinearProgram::new(vec![-1.0], Mat::zeros(1, 1), vec![0.0]);
        assert_eq!(lp_solve(&lp).status, LpStatus::Unbounded);
    }

    #[test]
    fn lp_two_variable() {
        // min x1 + x2 s.t. x1 + 2 x2 = 4, x >= 0 -> (0, 2)
        let a = Mat::from_fn(1, 2, |_, j| if j == 0 { 1.0 } else { 2.0 });
        let sol = lp_solve(&LinearProgram::new(vec![1.0, 1.0], a, vec![4.0]));
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value - 2.0).abs() < 1e-12);
        assert!(sol.x[0].abs() < 1e-12);
        assert!((sol.x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lp_infeasible() {
        // x1 + x2 = 1 and x1 + x2 = 2
        let a = Mat::from_fn(2, 2, |_, _| 1.0);
        let sol = lp_solve(&LinearProgram::new(vec![1.0, 1.0], a, vec![1.0, 2.0]));
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn lp_lower_bounds() {
        // min x s.t. x + y = 3, x >= 1, y >= 0
        let a = Mat::from_fn(1, 2, |_, _| 1.0);
        let lp = LinearProgram {
            c: vec![1.0, 0.0],
            a,
            b: vec![3.0],
            lower_bounds: vec![1.0, 0.0],
        };
        let sol = lp_solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn basis_pursuit_local_cases() {
        let wn = make_family(Family::WhiteNoise, s22()).unwrap();
        let (q, l1) = min_l1_quasiprob_lp(&wn).unwrap();
        assert!((l1 - 1.0).abs() < 1e-9);
        assert!(negativity_unchecked(q.as_slice()) < 1e-9);

        let ld = make_family(Family::LocalDeterministic, s22()).unwrap();
        let (q, l1) = min_l1_quasiprob_lp(&ld).unwrap();
        assert!((l1 - 1.0).abs() < 1e-9);
        assert!(negativity_unchecked(q.as_slice()) < 1e-9);
    }

    #[test]
    fn basis_pursuit_pr_box() {
        let pr = make_family(Family::GeneralizedPr, s22()).unwrap();
        let (q, l1) = min_l1_quasiprob_lp(&pr).unwrap();
        let neg = negativity_unchecked(q.as_slice());
        assert!((l1 - (1.0 + 2.0 * neg)).abs() < 1e-9);
        // the recovered q reproduces the PR box
        let back = crate::detcomp::apply_deterministic(&q);
        for (a, e) in back.as_slice().iter().zip(pr.as_slice()) {
            assert!((a - e).abs() < 1e-9);
        }
        // the PR box sits strictly outside the local polytope
        assert!(neg > 0.4);
    }

    #[test]
    fn vertex_enumeration() {
        let vertices: Vec<_> = local_vertices(s22()).unwrap().collect();
        assert_eq!(vertices.len(), 16);
        let ld = make_family(Family::LocalDeterministic, s22()).unwrap();
        assert_eq!(vertices[0].as_slice(), ld.as_slice());
        assert_eq!(
            local_vertices(Scenario::new(3, 2).unwrap()).unwrap().count(),
            81
        );
        for v in &vertices {
            assert!(v.check_no_signalling(1e-12).is_ns);
        }
    }

    #[test]
    fn ns_distance_cases() {
        let ld = make_family(Family::LocalDeterministic, s22()).unwrap();
        assert!(ns_distance(&ld).unwrap() < 1e-9);
        let wn = make_family(Family::WhiteNoise, s22()).unwrap();
        assert!(ns_distance(&wn).unwrap() < 1e-9);
        let pr = make_family(Family::GeneralizedPr, s22()).unwrap();
        assert!(ns_distance(&pr).unwrap() > 0.4);
    }

    #[test]
    fn is_local_mixture_boundary() {
        let sc = s22();
        let pr = make_family(Family::GeneralizedPr, sc).unwrap();
        let wn = make_family(Family::WhiteNoise, sc).unwrap();
        let local = mix(&[pr.clone(), wn.clone()], &[0.4, 0.6]).unwrap();
        assert!(is_local(&local, 1e-9).unwrap());
        let nonlocal = mix(&[pr.clone(), wn], &[0.6, 0.4]).unwrap();
        assert!(!is_local(&nonlocal, 1e-9).unwrap());
        assert!(!is_local(&pr, 1e-9).unwrap());
    }

    #[test]
    fn locality_characterizations_agree() {
        // ns_distance = 0 iff basis-pursuit l1 = 1, on all 16 vertices
        for vertex in local_vertices(s22()).unwrap() {
            let d = ns_distance(&vertex).unwrap();
            let (_, l1) = min_l1_quasiprob_lp(&vertex).unwrap();
            assert!(d < 1e-9);
            assert!((l1 - 1.0).abs() < 1e-9);
        }
    }
}

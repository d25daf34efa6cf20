//! Acceptance gate: one test per criterion, each printing a single
//! pass/fail line (visible with `--nocapture`). Tolerances are part of the
//! contract; loosen nothing here.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bellns::behavior::{make_family, Family, Scenario};
use bellns::corrbasis::{
    chsh_from_fixed, kron_apply, min_l2_quasiprob, to_correlation_basis, z0_from_behavior,
};
use bellns::detcomp::{
    apply_deterministic, decompose_signed, decompose_stochastic, pr_quasiprob, reconstruct,
    svd_factors, QuasiProb,
};
use bellns::lp_baseline::{local_vertices, ns_distance};
use bellns::mat::Mat;
use bellns::quantify::{
    benchmark_behavior, benchmark_scaling, benchmark_weights, critical_visibility, fit_exp,
    neg_of_behavior, Method,
};
use bellns::sparse_solver::SolverConfig;

fn pass(criterion: usize, msg: &str) {
    println!("criterion {criterion}: PASS — {msg}");
}

/// Jacobi eigenvalue iteration for small symmetric matrices; the dense
/// oracle against which the closed-form singular values are checked.
fn symmetric_eigenvalues(g: &Mat) -> Vec<f64> {
    let d = g.rows();
    let mut a = g.clone();
    for _ in 0..100 {
        // largest off-diagonal element
        let (mut p, mut q, mut max) = (0, 1, 0.0f64);
        for i in 0..d {
            for j in (i + 1)..d {
                if a.get(i, j).abs() > max {
                    max = a.get(i, j).abs();
                    p = i;
                    q = j;
                }
            }
        }
        if max < 1e-14 {
            break;
        }
        let theta = 0.5 * (a.get(q, q) - a.get(p, p)) / a.get(p, q);
        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
        let c = 1.0 / (t * t + 1.0).sqrt();
        let s = t * c;
        let mut next = a.clone();
        for k in 0..d {
            next.set(k, p, c * a.get(k, p) - s * a.get(k, q));
            next.set(k, q, s * a.get(k, p) + c * a.get(k, q));
        }
        let b = next.clone();
        for k in 0..d {
            next.set(p, k, c * b.get(p, k) - s * b.get(q, k));
            next.set(q, k, s * b.get(p, k) + c * b.get(q, k));
        }
        a = next;
    }
    let mut eig: Vec<f64> = (0..d).map(|i| a.get(i, i)).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    eig
}

#[test]
fn criterion_01_pr_box_reconstruction() {
    let q = pr_quasiprob();
    // warm-up, then timed run
    let _ = warm_up(&q);
    let start = Instant::now();
    let behavior = apply_deterministic(&q);
    let elapsed = start.elapsed();
    let pr = make_family(Family::GeneralizedPr, Scenario::new(2, 2).unwrap()).unwrap();
    let max_err = behavior
        .as_slice()
        .iter()
        .zip(pr.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(max_err <= 1e-12, "max deviation {max_err}");
    assert!(
        elapsed.as_secs_f64() < 1e-3,
        "took {:.3} ms",
        elapsed.as_secs_f64() * 1e3
    );
    pass(
        1,
        &format!(
            "PR box recovered from its quasi-probability, max err {max_err:.1e}, {:.0} µs",
            elapsed.as_secs_f64() * 1e6
        ),
    );
}

// separate fn so the warm-up call is not optimized away
fn warm_up(q: &QuasiProb) -> f64 {
    apply_deterministic(q).as_slice().iter().sum()
}

#[test]
fn criterion_02_closed_form_svd() {
    let start = Instant::now();
    for n in [2usize, 3] {
        for m in [1usize, 2, 3] {
            let sc = Scenario::new(n, m).unwrap();
            let f = svd_factors(sc);
            let d = f.materialize_d();
            let usvt = f.materialize_usvt();
            let err = d.max_abs_diff(&usvt);
            assert!(err <= 1e-12, "n={n} m={m}: USVᵀ differs by {err}");
            // dense oracle: rank of D from the eigenvalues of D Dᵀ
            let g = d.matmul(&d.transpose());
            let eig = symmetric_eigenvalues(&g);
            let rank = eig.iter().filter(|&&v| v > 1e-9 * eig[0]).count();
            assert_eq!(rank, m * (n - 1) + 1, "n={n} m={m} rank");
            assert_eq!(f.rank(), rank);
            // closed-form singular values against the oracle
            let mut sv = f.singular_values();
            sv.sort_by(|a, b| b.total_cmp(a));
            for (s, &lambda) in sv.iter().zip(&eig) {
                assert!((s * s - lambda).abs() <= 1e-9, "σ²={} λ={lambda}", s * s);
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "took {elapsed:.2} s");
    pass(
        2,
        &format!("U S Vᵀ = D and rank m(n−1)+1 for (n,m) ∈ {{2,3}}×{{1,2,3}}, {elapsed:.2} s"),
    );
}

#[test]
fn criterion_03_decomposition_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let n = rng.random_range(2..=5);
        let m = rng.random_range(1..=5);
        // column-stochastic
        let mut mat = Mat::from_fn(n, m, |_, _| rng.random::<f64>());
        for x in 0..m {
            let sum: f64 = (0..n).map(|a| mat.get(a, x)).sum();
            for a in 0..n {
                mat.set(a, x, mat.get(a, x) / sum);
            }
        }
        let dec = decompose_stochastic(&mat, 1e-12).unwrap();
        worst = worst.max(dec.reconstruct(n, m).max_abs_diff(&mat));
        // signed with constant column sums
        let mut signed = Mat::from_fn(n, m, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        for x in 0..m {
            let sum: f64 = (0..n).map(|a| signed.get(a, x)).sum();
            for a in 0..n {
                signed.set(a, x, signed.get(a, x) + (1.0 - sum) / n as f64);
            }
        }
        let terms = decompose_signed(&signed, 1e-12).unwrap();
        let err = reconstruct(&terms, n, m).max_abs_diff(&signed);
        worst = worst.max(err);
        assert!(worst <= 1e-10, "trial {trial}: worst {worst}");
    }
    pass(
        3,
        &format!("100+100 random decompositions reconstruct within {worst:.1e}"),
    );
}

#[test]
fn criterion_04_min_l2_deterministic() {
    // deterministic behavior: both parties always output 0
    let sc = Scenario::new(2, 2).unwrap();
    let det = make_family(Family::LocalDeterministic, sc).unwrap();
    let q = min_l2_quasiprob(&det).unwrap();
    let expected = [
        [9.0, 3.0, 3.0, -3.0],
        [3.0, 1.0, 1.0, -1.0],
        [3.0, 1.0, 1.0, -1.0],
        [-3.0, -1.0, -1.0, 1.0],
    ];
    let mut max_err = 0.0f64;
    for alice in 0..4 {
        for bob in 0..4 {
            let got = q.as_slice()[alice * 4 + bob];
            max_err = max_err.max((got - expected[alice][bob] / 16.0).abs());
        }
    }
    assert!(max_err <= 1e-12, "max deviation {max_err}");
    pass(
        4,
        &format!("min-ℓ2 pseudo-inverse solution matches the known matrix, err {max_err:.1e}"),
    );
}

#[test]
fn criterion_05_chsh_bounds() {
    let sc = Scenario::new(2, 2).unwrap();
    let mut max_local = 0.0f64;
    for vertex in local_vertices(sc).unwrap() {
        let fixed = z0_from_behavior(&vertex).unwrap();
        let value = chsh_from_fixed(&fixed).unwrap();
        assert!(value.abs() <= 0.5 + 1e-12, "vertex at {value}");
        max_local = max_local.max(value.abs());
    }
    assert!((max_local - 0.5).abs() <= 1e-12, "local bound {max_local}");
    let pr = make_family(Family::GeneralizedPr, sc).unwrap();
    let pr_value = chsh_from_fixed(&z0_from_behavior(&pr).unwrap()).unwrap();
    assert!((pr_value - 1.0).abs() <= 1e-12, "PR gives {pr_value}");
    pass(
        5,
        &format!("all 16 vertices obey |CHSH| ≤ 1/2 (max {max_local}), PR reaches {pr_value}"),
    );
}

#[test]
fn criterion_06_solver_agreement() {
    let start = Instant::now();
    let config = SolverConfig::default();
    let mut worst_gap = 0.0f64;
    let mut local_checked = 0usize;
    for (n, count) in [(2usize, 50usize), (3, 20)] {
        let sc = Scenario::new(n, 2).unwrap();
        for c in benchmark_weights(n, count, 106) {
            let b = benchmark_behavior(sc, c).unwrap();
            let lp = neg_of_behavior(&b, Method::Lp, &config).unwrap();
            let nesta = neg_of_behavior(&b, Method::Nesta, &config).unwrap();
            let gap = (lp.negativity - nesta.negativity).abs();
            assert!(
                gap <= 1e-4,
                "n={n}: lp {} vs nesta {}",
                lp.negativity,
                nesta.negativity
            );
            worst_gap = worst_gap.max(gap);
            if ns_distance(&b).unwrap() <= 1e-9 {
                assert!(
                    nesta.negativity <= 1e-5,
                    "false nonlocality {} on a local behavior",
                    nesta.negativity
                );
                local_checked += 1;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "took {elapsed:.1} s");
    pass(
        6,
        &format!(
            "70 mixtures: methods agree within {worst_gap:.1e}; {local_checked} local cases, none flagged nonlocal; {elapsed:.1} s"
        ),
    );
}

/// NEG equals NS up to this pinned global factor at even n: the distance is
/// measured as an ℓ1 norm over all m² = 4 contexts of the full table, while
/// the negativity normalizes per context.
const NEG_NS_FACTOR: f64 = 0.25;

#[test]
fn criterion_07_even_n_equality() {
    let config = SolverConfig::default();
    for n in [2usize, 4] {
        let sc = Scenario::new(n, 2).unwrap();
        for c in benchmark_weights(n, 30, 107) {
            let b = benchmark_behavior(sc, c).unwrap();
            let neg = neg_of_behavior(&b, Method::Lp, &config).unwrap().negativity;
            let ns = ns_distance(&b).unwrap();
            assert!(
                (neg - NEG_NS_FACTOR * ns).abs() <= 1e-4,
                "n={n}: NEG {neg} vs NS {ns}"
            );
        }
    }
    // n = 3: linear relation
    let sc = Scenario::new(3, 2).unwrap();
    let mut points = Vec::new();
    for c in benchmark_weights(3, 30, 107) {
        let b = benchmark_behavior(sc, c).unwrap();
        let neg = neg_of_behavior(&b, Method::Lp, &config).unwrap().negativity;
        points.push((ns_distance(&b).unwrap(), neg));
    }
    let len = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / len;
    let my = points.iter().map(|p| p.1).sum::<f64>() / len;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    assert!(r2 >= 0.999, "n=3 R² = {r2}");
    pass(
        7,
        &format!("NEG = NS/4 at n ∈ {{2,4}} within 1e-4 (factor 1/4 pinned); n=3 linear, R² = {r2:.6}"),
    );
}

#[test]
fn criterion_08_scaling_trend() {
    let start = Instant::now();
    let config = SolverConfig::default();
    let n_values: Vec<usize> = (2..=8).collect();
    let methods = [Method::Nesta, Method::Lp];
    let records = benchmark_scaling(&n_values, 2, 10, 108, &methods, &config).unwrap();
    let mut fits = Vec::new();
    for method in methods {
        let points: Vec<(f64, f64)> = n_values
            .iter()
            .map(|&n| {
                let times: Vec<f64> = records
                    .iter()
                    .filter(|r| r.n == n && r.method == method)
                    .map(|r| r.wall_time_s)
                    .collect();
                (n as f64, times.iter().sum::<f64>() / times.len() as f64)
            })
            .collect();
        fits.push(fit_exp(&points).unwrap());
    }
    let (b_nesta, b_lp) = (fits[0].b, fits[1].b);
    assert!(
        b_nesta < b_lp,
        "expected the first-order method to scale better: {b_nesta} vs {b_lp}"
    );
    assert!(
        (0.7..=1.4).contains(&b_lp),
        "LP exponent {b_lp} outside [0.7, 1.4]"
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 1800.0, "took {elapsed:.0} s");
    pass(
        8,
        &format!(
            "fitted exponents b_nesta = {b_nesta:.3} < b_lp = {b_lp:.3} ∈ [0.7, 1.4]; {elapsed:.0} s"
        ),
    );
}

#[test]
fn criterion_09_negativity_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let len = rng.random_range(2..64);
        let mut q: Vec<f64> = (0..len).map(|_| rng.random::<f64>() * 2.0 - 0.8).collect();
        let sum: f64 = q.iter().sum();
        q[0] += 1.0 - sum;
        let l1: f64 = q.iter().map(|v| v.abs()).sum();
        let neg: f64 = q.iter().map(|&v| (-v).max(0.0)).sum();
        worst = worst.max(((l1 - 1.0) / 2.0 - neg).abs());
    }
    assert!(worst <= 1e-12, "identity violated by {worst}");
    let pr_neg: f64 = pr_quasiprob()
        .as_slice()
        .iter()
        .map(|&v| (-v).max(0.0))
        .sum();
    assert!((pr_neg - 0.5).abs() <= 1e-12, "PR negativity {pr_neg}");
    pass(
        9,
        &format!("(‖q‖₁−1)/2 = Σ max(−q,0) on 1000 vectors within {worst:.1e}; PR gives {pr_neg}"),
    );
}

#[test]
fn criterion_10_critical_visibility() {
    let sc = Scenario::new(2, 2).unwrap();
    let pr = make_family(Family::GeneralizedPr, sc).unwrap();
    let wn = make_family(Family::WhiteNoise, sc).unwrap();
    let config = SolverConfig::default();
    let v_lp = critical_visibility(&pr, &wn, Method::Lp, 1e-4, &config).unwrap();
    assert!((v_lp - 0.5).abs() <= 1e-3, "LP v* = {v_lp}");
    let v_nesta = critical_visibility(&pr, &wn, Method::Nesta, 1e-4, &config).unwrap();
    assert!((v_nesta - v_lp).abs() <= 2e-3, "NESTA v* = {v_nesta}");
    pass(
        10,
        &format!("v*(PR, white noise): LP {v_lp:.5}, first-order {v_nesta:.5}, both at 0.5"),
    );
}

#[test]
fn criterion_11_kronecker_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let mut worst = 0.0f64;
    // dense oracle up to total dimension 2^8 = 256
    for k in 1..=8usize {
        let m = Mat::from_fn(2, 2, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let dim = 1usize << k;
        let v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let mut dense = m.clone();
        for _ in 1..k {
            dense = dense.kron(&m);
        }
        for adjoint in [false, true] {
            let fast = kron_apply(&m, k, &v, adjoint).unwrap();
            let slow = if adjoint {
                dense.transpose().matvec(&v)
            } else {
                dense.matvec(&v)
            };
            for (f, s) in fast.iter().zip(&slow) {
                worst = worst.max((f - s).abs());
            }
        }
    }
    assert!(worst <= 1e-12, "kron_apply deviates by {worst}");
    // at 4096 coordinates the kernel touches only the 2×2 factor and the
    // vector itself; a 4096² matrix (128 MiB) is never formed
    let sc = Scenario::new(2, 6).unwrap();
    let q = QuasiProb::from_raw(sc, {
        let mut q = vec![0.0; sc.quasi_len()];
        q[0] = 1.0;
        q
    });
    assert_eq!(sc.quasi_len(), 4096);
    let z = to_correlation_basis(&q);
    assert!((z.as_slice()[0] - (1.0f64 / 64.0)).abs() <= 1e-12);
    pass(
        11,
        &format!("matrix-free Kronecker matvec matches dense oracle within {worst:.1e}; runs at 4096 coordinates without the 4096² matrix"),
    );
}

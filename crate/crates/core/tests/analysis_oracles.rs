//! Second, independently written evaluations of the analysis formulas, plus
//! property checks of the bounds on random graphs.

use nalgebra::{DMatrix, Matrix3, Vector3};
use proptest::prelude::*;
use saddopt::analysis::*;
use saddopt::digraph::{build_exponential_digraph, build_geometric_digraph, column_stochastic_weights, WeightMatrix};
use saddopt::engine::Problem;
use saddopt::objective::Objective;
use saddopt::spectral::{graph_constants, perron, GraphConstants, PerronData, CONSTANTS_TOL};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn two_node_b() -> WeightMatrix {
    WeightMatrix::new(DMatrix::from_row_slice(2, 2, &[0.5, 2.0 / 3.0, 0.5, 1.0 / 3.0])).unwrap()
}

fn setup(b: &WeightMatrix) -> (PerronData, GraphConstants) {
    let pd = perron(b).unwrap();
    let gc = graph_constants(&pd, b, CONSTANTS_TOL);
    (pd, gc)
}

/// Inputs shared by the oracles, unpacked once.
struct Env {
    sb: f64,
    n: f64,
    mu: f64,
    l: f64,
    var: f64,
    y: f64,
    ym: f64,
    h: f64,
    beta: f64,
    pbar: f64,
    pund: f64,
}

impl Env {
    fn new(pd: &PerronData, gc: &GraphConstants, sc: &Scalars) -> Self {
        Env {
            sb: pd.sigma_b,
            n: pd.n() as f64,
            mu: sc.mu,
            l: sc.ell,
            var: sc.sigma2,
            y: gc.y_sup,
            ym: gc.y_minus,
            h: gc.h,
            beta: gc.beta,
            pbar: pd.pi_max,
            pund: pd.pi_min,
        }
    }
}

/// Constants block, transcribed entry by entry.
fn oracle_lti(e: &Env, alpha: f64) -> (Matrix3<f64>, Vector3<f64>, [f64; 3]) {
    let sig2 = e.sb.powi(2);
    let q = (1.0 + sig2) / (1.0 - sig2);
    let k1 = (1.0 - sig2) / 3.0;
    let k2 = 6.0 * e.l.powi(2) * q * e.ym.powi(2) * e.h;
    let k3 = (2.0 * k1 - 3.0 * k2 * alpha.powi(2)) / (k1 - 2.0 * k2 * alpha.powi(2));
    let g1 = (e.l.powi(2) * e.ym.powi(2) / e.n) * (1.0 + e.beta * e.sb) * e.pbar;
    let g2 = (e.l.powi(2) * e.ym.powi(2) / (e.n * e.mu)) * (1.0 + e.beta * e.sb) * e.pbar;
    let g3 = 4.0 * k2;
    let g4 = 2.0 * e.l.powi(2) * e.y.powi(2) * k2 * k3 * (1.0 + e.beta * e.sb);
    let g5 = 18.0 * e.l.powi(4) * q * e.ym.powi(4) * e.y.powi(2) * e.pund.recip();
    let c1 = 4.0 * q * e.n * e.pund.recip();
    let c2 = 12.0 * e.l.powi(2) * q * e.ym.powi(4) * e.y.powi(2) * k3 * e.pund.recip();
    let cs = e.var * (c1 + alpha.powi(2) * c2);
    let h1 = e.ym.powi(2) * e.beta * (alpha * e.l.powi(2) / e.mu + alpha.powi(2) * e.l.powi(2)) * (e.beta + 1.0);
    let h2 = 24.0 * e.l.powi(2) * q * e.ym.powi(4) * e.beta.powi(2) * e.pund.recip();
    let h3 = 12.0 * e.l.powi(4) * q * e.ym.powi(6) * e.y.powi(2) * k3 * e.beta * e.pund.recip() * (e.beta + 1.0);
    let mut a = Matrix3::zeros();
    a[(0, 0)] = (1.0 + sig2) / 2.0;
    a[(0, 2)] = alpha.powi(2) * (1.0 + sig2) / (1.0 - sig2);
    a[(1, 0)] = alpha.powi(2) * g1 + alpha * g2;
    a[(1, 1)] = 1.0 - alpha * e.mu;
    a[(2, 0)] = g3 + alpha.powi(2) * g4;
    a[(2, 1)] = alpha.powi(2) * g5;
    a[(2, 2)] = (5.0 + sig2) / 6.0;
    (a, Vector3::new(0.0, alpha.powi(2) * e.var / e.n, cs), [h1, h2, h3])
}

/// Residual terms in their unsimplified form (before collecting powers).
fn oracle_residual(e: &Env, alpha: f64) -> (f64, f64, f64) {
    let sig2 = e.sb.powi(2);
    let q = (1.0 + sig2) / (1.0 - sig2);
    let pre = 12.0 * alpha * (1.0 + sig2) / (e.mu * (1.0 - sig2).powi(3));
    let u1 = pre
        * (18.0 * alpha.powi(4) * e.l.powi(4) * e.ym.powi(4) * e.y.powi(2) / e.pund * q * (e.var / e.n)
            + alpha * e.mu * (4.0 * e.var * e.n / e.pund) * q);
    let w = e.l.powi(2) * e.ym.powi(2) * (1.0 + e.beta * e.sb) * e.pbar;
    let u2 = alpha * e.var / (e.n * e.mu)
        + 12.0 * alpha * (1.0 + sig2).powi(2) * (alpha.powi(2) * w + alpha * w / e.mu) * (4.0 * e.var * e.n / e.pund)
            / (e.n * e.mu * (1.0 - sig2).powi(4));
    let einf = (3.0 * e.ym.powi(2) * e.pbar / e.n) * u1 + 3.0 * e.ym.powi(2) * e.y.powi(2) * u2;
    (u1, u2, einf)
}

/// Decaying-schedule constants as printed, with `||xbar_0 - z*||^2 = q0`.
#[allow(non_snake_case)]
fn oracle_theorem2(e: &Env, theta: f64, m: f64, b: f64, init: &InitialErrors) -> Vec<(&'static str, f64)> {
    let sig2 = e.sb.powi(2);
    let q = (1.0 + sig2) / (1.0 - sig2);
    let k1 = (1.0 - sig2) / 3.0;
    let k2 = 6.0 * e.l.powi(2) * q * e.ym.powi(2) * e.h;
    let frac = (2.0 * m.powi(2) * k1 - 3.0 * k2 * theta.powi(2)) / (m.powi(2) * k1 - 2.0 * k2 * theta.powi(2));
    let tm = theta * e.mu - 1.0;
    let C0 = 4.0 * e.var * q / e.pund
        * (e.n + 3.0 * (theta.powi(2) * e.l.powi(2) * e.ym.powi(4) * e.y.powi(2) / m.powi(2)) * frac);
    let E1 = (1.0 + e.beta * e.sb) * e.ym.powi(2) * e.pbar;
    let E2 = 4.0 * k2 + (2.0 * e.l.powi(2) * e.y.powi(2) * k2 * theta.powi(2) / m.powi(2)) * frac * (1.0 + e.beta * e.sb);
    let E3 = 18.0 * q * e.ym.powi(4) * e.y.powi(2) / e.pund;
    let K3 = e.ym.powi(2) * e.beta * (e.beta + 1.0);
    let K1 = K3 * (theta * e.l.powi(2) / (e.mu * m) + theta.powi(2) * e.l.powi(2) / m.powi(2));
    let K2 = 12.0 * e.l.powi(2) * q * e.ym.powi(4) * e.beta / e.pbar
        * (2.0 * e.beta + theta.powi(2) * e.l.powi(2) * e.ym.powi(2) * e.y.powi(2) * (e.beta + 1.0) / m.powi(2) * frac);
    let D1 = ((1.0 - sig2) / (theta.powi(2) * (1.0 + sig2))) * ((1.0 - sig2) / 2.0 - (2.0 * m + 1.0) / (m + 1.0).powi(2));
    let D2 = 6.0 * E2 / (m.powi(2) * (1.0 - sig2));
    let six = 6.0 / (1.0 - sig2);
    let D3 = six * ((theta.powi(2) * e.l.powi(4) * E3 / m.powi(3)) * init.q0 + C0 + K2 * b);
    let D4 = (6.0 * E1 / (1.0 - sig2)) * (theta.powi(3) * e.l.powi(6) * E3 / (m.powi(4) * e.n * tm)) * (theta / m + 1.0 / e.mu)
        + D2;
    let D5 = six
        * ((theta.powi(2) * e.l.powi(4) * E3 / (m.powi(3) * e.n * tm)) * (theta.powi(2) * e.var + e.n * m.powi(2) * K1 * b)
            + C0
            + K2 * b);
    let mut P = m.powi(2) * init.p0;
    for cand in [init.r0 / D1, D3 / (D1 - D2), D5 / (D1 - D4)] {
        if cand > P {
            P = cand;
        }
    }
    let D6 = (1.0 / (e.n * tm))
        * ((theta / m + 1.0 / e.mu) * (theta * e.l.powi(2) * E1 / m) * P
            + theta.powi(2) * e.var
            + e.n * m.powi(2) * K1 * b);
    let Q = if m * init.q0 > D6 { m * init.q0 } else { D6 };
    let R_needed = six * ((E2 / m.powi(2)) * P + (theta.powi(2) * e.l.powi(4) * E3 / m.powi(3)) * Q + K2 * b + C0);
    let R = if init.r0 > R_needed { init.r0 } else { R_needed };
    vec![
        ("C0", C0),
        ("D1", D1),
        ("D2", D2),
        ("D3", D3),
        ("D4", D4),
        ("D5", D5),
        ("D6", D6),
        ("E1", E1),
        ("E2", E2),
        ("E3", E3),
        ("K1", K1),
        ("K2", K2),
        ("K3", K3),
        ("P_tilde", P),
        ("Q_tilde", Q),
        ("R_tilde", R),
    ]
}

fn table_values(t: &Theorem2Table) -> Vec<(&'static str, f64)> {
    vec![
        ("C0", t.C0),
        ("D1", t.D1),
        ("D2", t.D2),
        ("D3", t.D3),
        ("D4", t.D4),
        ("D5", t.D5),
        ("D6", t.D6),
        ("E1", t.E1),
        ("E2", t.E2),
        ("E3", t.E3),
        ("K1", t.K1),
        ("K2", t.K2),
        ("K3", t.K3),
        ("P_tilde", t.P_tilde),
        ("Q_tilde", t.Q_tilde),
        ("R_tilde", t.R_tilde),
    ]
}

fn assert_lti_matches(pd: &PerronData, gc: &GraphConstants, sc: &Scalars, alpha: f64) {
    let lti = build_lti_system(alpha, gc, pd, sc).unwrap();
    let (a, c, hs) = oracle_lti(&Env::new(pd, gc, sc), alpha);
    for i in 0..3 {
        assert!(close(lti.c[i], c[i], 1e-12), "c[{i}]: {} vs {}", lti.c[i], c[i]);
        for j in 0..3 {
            assert!(close(lti.a[(i, j)], a[(i, j)], 1e-12), "A[{i},{j}]: {} vs {}", lti.a[(i, j)], a[(i, j)]);
        }
    }
    let k = &lti.constants;
    for (got, want) in [(k.h1, hs[0]), (k.h2, hs[1]), (k.h3, hs[2])] {
        assert!(close(got, want, 1e-12), "{got} vs {want}");
    }
    let hk = lti.h(3);
    let decay = pd.sigma_b.powi(3);
    assert!(close(hk[(1, 0)], hs[0] * decay, 1e-12));
    assert!(close(hk[(2, 0)], (hs[1] + alpha * alpha * hs[2]) * decay, 1e-12));
}

#[test]
fn lti_constants_match_duplicate_two_node() {
    let (pd, gc) = setup(&two_node_b());
    for sc in [Scalars::new(1.0, 1.0, 1.0).unwrap(), Scalars::new(0.5, 3.0, 0.01).unwrap()] {
        let bound = theorem1_step_bound(&gc, &pd, sc.mu, sc.ell);
        for alpha in [0.001, bound / 2.0, bound] {
            assert_lti_matches(&pd, &gc, &sc, alpha);
        }
    }
}

#[test]
fn lti_constants_match_duplicate_geometric() {
    let g = build_geometric_digraph(12, 0.5, 0.2, 7).unwrap();
    let (pd, gc) = setup(&column_stochastic_weights(&g).unwrap());
    let sc = Scalars::new(1.0, 4.0, 0.2).unwrap();
    assert_lti_matches(&pd, &gc, &sc, theorem1_step_bound(&gc, &pd, 1.0, 4.0));
}

#[test]
fn residual_ball_matches_duplicate_two_node() {
    let (pd, gc) = setup(&two_node_b());
    let sc = Scalars::new(1.0, 1.0, 1.0).unwrap();
    let ball = residual_ball_estimate(0.001, &gc, &pd, &sc).unwrap();
    let (u1, u2, einf) = oracle_residual(&Env::new(&pd, &gc, &sc), 0.001);
    assert!(close(ball.u1, u1, 1e-12), "{} vs {u1}", ball.u1);
    assert!(close(ball.u2, u2, 1e-12), "{} vs {u2}", ball.u2);
    assert!(close(ball.e_inf, einf, 1e-12), "{} vs {einf}", ball.e_inf);
    let report = bound_report(0.001, &gc, &pd, &sc).unwrap();
    assert_eq!(report.e_inf_bound, Some(ball.e_inf));
    assert!(report.rho_a < 1.0);
}

#[test]
fn residual_leading_term_halves() {
    let (pd, gc) = setup(&two_node_b());
    let sc = Scalars::new(1.0, 1.0, 0.5).unwrap();
    let lead = |a: f64| 3.0 * gc.y_minus.powi(2) * gc.y_sup.powi(2) * a * sc.sigma2 / (pd.n() as f64 * sc.mu);
    assert_eq!(lead(0.002) / lead(0.001), 2.0);
    let zero = residual_ball_estimate(0.001, &gc, &pd, &Scalars::new(1.0, 1.0, 0.0).unwrap()).unwrap();
    assert_eq!(zero.e_inf, 0.0);
}

#[test]
fn theorem2_table_matches_duplicate() {
    let cases: Vec<(WeightMatrix, Scalars)> = vec![
        (two_node_b(), Scalars::new(1.0, 1.0, 1.0).unwrap()),
        (two_node_b(), Scalars::new(0.5, 2.0, 0.3).unwrap()),
        (
            column_stochastic_weights(&build_geometric_digraph(10, 0.6, 0.1, 3).unwrap()).unwrap(),
            Scalars::new(1.0, 2.0, 0.1).unwrap(),
        ),
    ];
    let init = InitialErrors {
        p0: 0.7,
        q0: 2.5,
        r0: 1.3,
    };
    for (b, sc) in cases {
        let (pd, gc) = setup(&b);
        let theta = 2.0 / sc.mu;
        let m = min_valid_m(theta, &gc, &pd, &sc).unwrap();
        for mm in [m, 2.0 * m] {
            let t = theorem2_table(theta, mm, &gc, &pd, &sc, 4.0, &init).unwrap();
            assert!(t.valid());
            let want = oracle_theorem2(&Env::new(&pd, &gc, &sc), theta, mm, 4.0, &init);
            for ((name, got), (_, w)) in table_values(&t).into_iter().zip(want) {
                assert!(close(got, w, 1e-12), "{name}: {got} vs {w}");
            }
            let n = pd.n() as f64;
            assert!(close(t.leading_coefficient, 2.0 * theta * theta * sc.sigma2 / (n * (theta * sc.mu - 1.0)), 1e-15));
        }
    }
}

#[test]
fn theorem2_balanced_graph_constants() {
    let (pd, gc) = setup(&column_stochastic_weights(&build_exponential_digraph(8).unwrap()).unwrap());
    let sc = Scalars::new(1.0, 1.0, 0.1).unwrap();
    let m = min_valid_m(2.0, &gc, &pd, &sc).unwrap();
    let t = theorem2_table(2.0, m, &gc, &pd, &sc, 10.0, &InitialErrors { p0: 1.0, q0: 1.0, r0: 1.0 }).unwrap();
    assert!(t.K1.abs() < 1e-12 && t.K2.abs() < 1e-12 && t.K3.abs() < 1e-12);
    assert!(close(t.E1, pd.pi_max, 1e-9));
}

/// Perron root of a non-negative 3x3 matrix by power iteration, bracketed by
/// the Collatz-Wielandt quotients.
fn perron_root(a: &Matrix3<f64>) -> f64 {
    // a shift keeps the iteration aperiodic without moving the eigenvectors
    let shifted = a + Matrix3::identity();
    let mut v = Vector3::new(1.0, 1.0, 1.0);
    for _ in 0..200_000 {
        let w = shifted * v;
        let s = w.sum();
        v = w / s;
        let av = a * v;
        let lo = (0..3).map(|i| av[i] / v[i]).fold(f64::INFINITY, f64::min);
        let hi = (0..3).map(|i| av[i] / v[i]).fold(0.0, f64::max);
        if hi - lo <= 1e-15 * hi.max(1e-300) {
            return hi;
        }
    }
    let av = a * v;
    (0..3).map(|i| av[i] / v[i]).fold(0.0, f64::max)
}

#[test]
fn perron_root_oracle_agrees_with_eigenvalues() {
    let (pd, gc) = setup(&two_node_b());
    let sc = Scalars::new(1.0, 1.0, 1.0).unwrap();
    let alpha = theorem1_step_bound(&gc, &pd, 1.0, 1.0) / 2.0;
    let lti = build_lti_system(alpha, &gc, &pd, &sc).unwrap();
    let rho = spectral_radius(&lti.a);
    assert!(rho < 1.0);
    assert!((rho - perron_root(&lti.a)).abs() < 1e-12);
    assert_eq!(spectral_radius(&Matrix3::identity()), 1.0);
    assert!((spectral_radius(&Matrix3::from_diagonal(&Vector3::new(0.5, 0.9, 0.8))) - 0.9).abs() < 1e-15);
}

fn random_graph(n: usize, radius: f64, drop: f64, seed: u64) -> Option<(PerronData, GraphConstants)> {
    let g = build_geometric_digraph(n, radius, drop, seed).ok()?;
    Some(setup(&column_stochastic_weights(&g).ok()?))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn feasible_steps_contract(
        n in 2usize..=16,
        radius in 0.4f64..0.9,
        drop in 0.0f64..0.3,
        seed in 0u64..1_000_000,
        mu in 0.1f64..2.0,
        kappa in 1.0f64..10.0,
        frac in 0.0f64..1.0,
    ) {
        let graph = random_graph(n, radius, drop, seed);
        prop_assume!(graph.is_some());
        let (pd, gc) = graph.unwrap();
        let sc = Scalars::new(mu, mu * kappa, 1.0).unwrap();
        let bound = theorem1_step_bound(&gc, &pd, sc.mu, sc.ell);
        let alpha = bound * (1.0 - frac).max(1e-6);
        let lti = build_lti_system(alpha, &gc, &pd, &sc).unwrap();
        let rho = spectral_radius(&lti.a);
        prop_assert!(rho < 1.0, "rho = {rho}");
        prop_assert!((rho - perron_root(&lti.a)).abs() < 1e-9);
        if alpha <= corollary1_step_bound(sc.mu, pd.sigma_b) {
            prop_assert!(rho <= 1.0 - alpha * sc.mu / 3.0 + 1e-12, "rho = {rho}");
        }
    }

    #[test]
    fn lti_constants_agree_on_random_graphs(
        n in 2usize..=12,
        seed in 0u64..1_000_000,
        mu in 0.1f64..2.0,
        kappa in 1.0f64..10.0,
        var in 0.0f64..2.0,
        frac in 0.01f64..1.0,
    ) {
        let graph = random_graph(n, 0.7, 0.1, seed);
        prop_assume!(graph.is_some());
        let (pd, gc) = graph.unwrap();
        let sc = Scalars::new(mu, mu * kappa, var).unwrap();
        let alpha = frac * theorem1_step_bound(&gc, &pd, sc.mu, sc.ell);
        assert_lti_matches(&pd, &gc, &sc, alpha);
    }

    #[test]
    fn residual_ball_scaling(
        n in 2usize..=12,
        seed in 0u64..1_000_000,
        mu in 0.1f64..2.0,
        kappa in 1.0f64..10.0,
        var in 0.001f64..2.0,
        frac in 0.01f64..0.5,
    ) {
        let graph = random_graph(n, 0.7, 0.1, seed);
        prop_assume!(graph.is_some());
        let (pd, gc) = graph.unwrap();
        let sc = Scalars::new(mu, mu * kappa, var).unwrap();
        let alpha = frac * theorem1_step_bound(&gc, &pd, sc.mu, sc.ell);
        let r1 = residual_ball_estimate(alpha, &gc, &pd, &sc).unwrap();
        let r2 = residual_ball_estimate(2.0 * alpha, &gc, &pd, &sc).unwrap();
        let ratio = r2.e_inf / r1.e_inf;
        prop_assert!(ratio > 1.0 && ratio < 32.0, "ratio {ratio}");
        let louder = residual_ball_estimate(alpha, &gc, &pd, &Scalars::new(mu, mu * kappa, 2.0 * var).unwrap()).unwrap();
        prop_assert!(louder.e_inf > r1.e_inf);

        let (u1, u2, e) = oracle_residual(&Env::new(&pd, &gc, &sc), alpha);
        prop_assert!(close(r1.u1, u1, 1e-12) && close(r1.u2, u2, 1e-12) && close(r1.e_inf, e, 1e-12));
    }
}

fn quadratic_problem(b: WeightMatrix, centers: &[f64], sigma: f64) -> Problem {
    let n = centers.len();
    let obj = Objective::quadratic_1d(&vec![1.0; n], centers, sigma).unwrap();
    Problem::new(b, obj).unwrap()
}

#[test]
fn mc_verify_two_node() {
    let p = quadratic_problem(two_node_b(), &[1.0, 3.0], 0.1);
    let sc = Scalars::new(1.0, 1.0, 0.01).unwrap();
    let alpha = theorem1_step_bound(&p.constants, &p.perron, 1.0, 1.0) / 2.0;
    let lti = build_lti_system(alpha, &p.constants, &p.perron, &sc).unwrap();
    let x0 = DMatrix::from_row_slice(2, 1, &[-1.0, 4.0]);
    let v = mc_verify_lti(&lti, &p, &x0, 11, 1000, &[1, 5, 10, 50]).unwrap();
    assert_eq!(v.checks.len(), 12);
    for c in &v.checks {
        assert!(c.pass, "{c:?}");
    }
    assert!(v.pass);
}

#[test]
fn mc_verify_noise_free_at_optimum_is_zero() {
    let b = column_stochastic_weights(&build_exponential_digraph(4).unwrap()).unwrap();
    let p = quadratic_problem(b, &[2.0; 4], 0.0);
    let sc = Scalars::new(1.0, 1.0, 0.0).unwrap();
    let lti = build_lti_system(0.001, &p.constants, &p.perron, &sc).unwrap();
    let x0 = DMatrix::from_element(4, 1, p.reference.z_star[0]);
    let v = mc_verify_lti(&lti, &p, &x0, 0, 2, &[0, 3]).unwrap();
    for c in &v.checks {
        assert!(c.lhs.abs() < 1e-20, "{c:?}");
        assert!(c.pass);
    }
    assert_eq!(lti.c, Vector3::zeros());
}

#[test]
fn mc_verify_single_node() {
    let b = WeightMatrix::new(DMatrix::from_element(1, 1, 1.0)).unwrap();
    let p = quadratic_problem(b, &[1.0], 0.3);
    let sc = Scalars::new(1.0, 1.0, 0.09).unwrap();
    let lti = build_lti_system(0.05, &p.constants, &p.perron, &sc).unwrap();
    let v = mc_verify_lti(&lti, &p, &DMatrix::from_element(1, 1, 5.0), 3, 400, &[0, 2, 10]).unwrap();
    for c in &v.checks {
        if c.component != 1 {
            assert!(c.lhs.abs() < 1e-20);
        }
    }
    assert!(v.pass);
}

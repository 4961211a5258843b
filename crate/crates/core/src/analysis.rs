//! Convergence theory made executable: the three-state linear error system,
//! step-size and rate bounds, residual-ball estimates, decaying-schedule
//! constants and a Monte-Carlo check of the error system.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{init_states, replica_rng, step_in_place, Algorithm, Problem};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, MetricsRow};
use crate::spectral::{GraphConstants, PerronData};

/// Split parameter of the determinant argument; 2 maximizes the step bound.
pub const GAMMA: f64 = 2.0;

/// Problem scalars shared by the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scalars {
    pub mu: f64,
    pub ell: f64,
    /// Variance bound of the stochastic gradients.
    pub sigma2: f64,
}

impl Scalars {
    pub fn new(mu: f64, ell: f64, sigma2: f64) -> Result<Self> {
        if !(mu > 0.0 && ell >= mu && ell.is_finite()) {
            return Err(Error::InvalidObjective(format!("need 0 < mu <= ell, got mu = {mu}, ell = {ell}")));
        }
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidObjective(format!("variance must be non-negative, got {sigma2}")));
        }
        Ok(Scalars { mu, ell, sigma2 })
    }

    pub fn kappa(&self) -> f64 {
        self.ell / self.mu
    }
}

fn contractive(pd: &PerronData) -> Result<f64> {
    let s = pd.sigma_b;
    if (0.0..1.0).contains(&s) {
        Ok(s)
    } else {
        Err(Error::NotContractive(s))
    }
}

/// Largest constant step with a linear rate:
/// `(1 / (ell sqrt(kappa))) (1 - sigma_B^2)^2 / (51 sqrt(tau))`.
pub fn theorem1_step_bound(gc: &GraphConstants, pd: &PerronData, mu: f64, ell: f64) -> f64 {
    let s2 = pd.sigma_b * pd.sigma_b;
    (1.0 - s2).powi(2) / (51.0 * gc.tau.sqrt() * ell * (ell / mu).sqrt())
}

/// Step limit under which the linear rate is at most `1 - alpha mu / 3`.
pub fn corollary1_step_bound(mu: f64, sigma_b: f64) -> f64 {
    0.075 * (1.0 - sigma_b * sigma_b) / mu
}

/// `1 - alpha mu / 3`, valid for `alpha <= (3/40)(1 - sigma_B^2)/mu`.
pub fn corollary1_rate(alpha: f64, mu: f64, sigma_b: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidStep(format!("alpha must be non-negative, got {alpha}")));
    }
    let bound = corollary1_step_bound(mu, sigma_b);
    if alpha > bound {
        return Err(Error::StepBoundViolated {
            which: "linear-rate",
            alpha,
            bound,
        });
    }
    Ok(1.0 - alpha * mu / 3.0)
}

/// Step limit under which the error-system inequality is derived:
/// `(1 - sigma_B^2) / (9 ell y_- sqrt(h))`.
pub fn lti_step_limit(gc: &GraphConstants, pd: &PerronData, ell: f64) -> f64 {
    (1.0 - pd.sigma_b * pd.sigma_b) / (9.0 * ell * gc.y_minus * gc.h.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LtiConstants {
    pub q: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    pub g4: f64,
    pub g5: f64,
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    pub c1: f64,
    pub c2: f64,
    pub c_sigma: f64,
}

/// `t_{k+1} <= A t_k + H_k s_k + c` with `t = (agreement, optimality gap,
/// tracking error)` and `s_k = (E||x_k||^2, 0, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LtiSystem {
    pub alpha: f64,
    pub sigma_b: f64,
    pub a: Matrix3<f64>,
    pub c: Vector3<f64>,
    pub constants: LtiConstants,
    /// `alpha` is within the range where the inequality is derived.
    pub valid: bool,
}

impl LtiSystem {
    /// Only entries (2,1) and (3,1) are nonzero, decaying like `sigma_B^k`.
    pub fn h(&self, k: usize) -> Matrix3<f64> {
        let decay = self.sigma_b.powf(k as f64);
        let c = &self.constants;
        let mut h = Matrix3::zeros();
        h[(1, 0)] = c.h1 * decay;
        h[(2, 0)] = (c.h2 + self.alpha * self.alpha * c.h3) * decay;
        h
    }

    /// `A t + H_k s + c` for `s = (s0, 0, 0)`.
    pub fn predict(&self, k: usize, t: &Vector3<f64>, s0: f64) -> Vector3<f64> {
        self.a * t + self.h(k) * Vector3::new(s0, 0.0, 0.0) + self.c
    }
}

pub fn build_lti_system(alpha: f64, gc: &GraphConstants, pd: &PerronData, sc: &Scalars) -> Result<LtiSystem> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidStep(format!("alpha must be positive, got {alpha}")));
    }
    let sb = contractive(pd)?;
    let s2 = sb * sb;
    let n = pd.n() as f64;
    let (mu, ell, var) = (sc.mu, sc.ell, sc.sigma2);
    let (y, ym, h, beta) = (gc.y_sup, gc.y_minus, gc.h, gc.beta);
    let (pmax, pmin) = (pd.pi_max, pd.pi_min);
    let a2 = alpha * alpha;

    let q = (1.0 + s2) / (1.0 - s2);
    let k1 = (1.0 - s2) / 3.0;
    let k2 = 6.0 * ell * ell * q * ym * ym * h;
    let limit = k1 / (2.0 * k2);
    if a2 >= limit {
        return Err(Error::InfeasibleStep { alpha, limit });
    }
    let k3 = (2.0 * k1 - 3.0 * k2 * a2) / (k1 - 2.0 * k2 * a2);
    let mix = 1.0 + beta * sb;
    let g1 = ell * ell * ym * ym / n * mix * pmax;
    let g2 = g1 / mu;
    let g3 = 4.0 * k2;
    let g4 = 2.0 * ell * ell * y * y * k2 * k3 * mix;
    let g5 = 18.0 * ell.powi(4) * q * ym.powi(4) * y * y / pmin;
    let c1 = 4.0 * q * n / pmin;
    let c2 = 12.0 * ell * ell * q * ym.powi(4) * y * y * k3 / pmin;
    let c_sigma = var * (c1 + a2 * c2);
    let h1 = ym * ym * beta * (alpha * ell * ell / mu + a2 * ell * ell) * (beta + 1.0);
    let h2 = 24.0 * ell * ell * q * ym.powi(4) * beta * beta / pmin;
    let h3 = 12.0 * ell.powi(4) * q * ym.powi(6) * y * y * k3 * beta / pmin * (beta + 1.0);

    #[rustfmt::skip]
    let a = Matrix3::new(
        (1.0 + s2) / 2.0,      0.0,              a2 * q,
        a2 * g1 + alpha * g2,  1.0 - alpha * mu, 0.0,
        g3 + a2 * g4,          a2 * g5,          (5.0 + s2) / 6.0,
    );
    Ok(LtiSystem {
        alpha,
        sigma_b: sb,
        a,
        c: Vector3::new(0.0, a2 * var / n, c_sigma),
        constants: LtiConstants {
            q,
            k1,
            k2,
            k3,
            g1,
            g2,
            g3,
            g4,
            g5,
            h1,
            h2,
            h3,
            c1,
            c2,
            c_sigma,
        },
        valid: alpha <= lti_step_limit(gc, pd, ell),
    })
}

/// Largest eigenvalue modulus of a 3x3 matrix.
pub fn spectral_radius(a: &Matrix3<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualBall {
    pub u1: f64,
    pub u2: f64,
    /// Asymptotic bound on `limsup e_k`.
    pub e_inf: f64,
}

/// Steady-state bounds on the agreement error (`u1`), the optimality gap
/// (`u2`) and the mean network error, keeping the leading powers of alpha.
pub fn residual_ball_estimate(alpha: f64, gc: &GraphConstants, pd: &PerronData, sc: &Scalars) -> Result<ResidualBall> {
    let sb = contractive(pd)?;
    let bound = theorem1_step_bound(gc, pd, sc.mu, sc.ell);
    if !(alpha > 0.0) {
        return Err(Error::InvalidStep(format!("alpha must be positive, got {alpha}")));
    }
    if alpha > bound {
        return Err(Error::StepBoundViolated {
            which: "linear-convergence",
            alpha,
            bound,
        });
    }
    let s2 = sb * sb;
    let n = pd.n() as f64;
    let (mu, ell, var) = (sc.mu, sc.ell, sc.sigma2);
    let (y, ym) = (gc.y_sup, gc.y_minus);
    let (pmax, pmin) = (pd.pi_max, pd.pi_min);
    let spread = (1.0 + s2).powi(2) / (1.0 - s2).powi(4);
    let mix = 1.0 + gc.beta * sb;

    let u1 = alpha.powi(5) * (ell.powi(4) * var / (n * mu)) * 216.0 * ym.powi(4) * y * y / pmin * spread
        + alpha * alpha * n * var * 48.0 / pmin * spread;
    let coupling = alpha * alpha * ell * ell * ym * ym * mix * pmax + alpha * ell * ell * ym * ym * mix * pmax / mu;
    let u2 = alpha * var / (n * mu) + 12.0 * alpha * coupling * 4.0 * var * n / pmin * spread / (n * mu);
    let e_inf = 3.0 * ym * ym * pmax / n * u1 + 3.0 * ym * ym * y * y * u2;
    Ok(ResidualBall { u1, u2, e_inf })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub alpha_max_thm1: f64,
    pub alpha_max_cor1: f64,
    /// Rate bound `1 - alpha mu / 3`, absent when alpha exceeds its limit.
    pub gamma_bound: Option<f64>,
    pub rho_a: f64,
    pub lti_valid: bool,
    pub residual_u1: Option<f64>,
    pub residual_u2: Option<f64>,
    pub e_inf_bound: Option<f64>,
}

/// Every constant-step bound at once. Residual terms are only reported for
/// steps inside the linear-convergence bound.
pub fn bound_report(alpha: f64, gc: &GraphConstants, pd: &PerronData, sc: &Scalars) -> Result<BoundReport> {
    let lti = build_lti_system(alpha, gc, pd, sc)?;
    let ball = residual_ball_estimate(alpha, gc, pd, sc).ok();
    Ok(BoundReport {
        alpha_max_thm1: theorem1_step_bound(gc, pd, sc.mu, sc.ell),
        alpha_max_cor1: corollary1_step_bound(sc.mu, pd.sigma_b),
        gamma_bound: corollary1_rate(alpha, sc.mu, pd.sigma_b).ok(),
        rho_a: spectral_radius(&lti.a),
        lti_valid: lti.valid,
        residual_u1: ball.map(|b| b.u1),
        residual_u2: ball.map(|b| b.u2),
        e_inf_bound: ball.map(|b| b.e_inf),
    })
}

/// One component of the error-system inequality at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LtiCheck {
    pub k: usize,
    /// 0: agreement, 1: optimality gap, 2: tracking error.
    pub component: usize,
    /// Replica mean of `t_{k+1}`.
    pub lhs: f64,
    /// `A t_k + H_k s_k + c` at replica means.
    pub rhs: f64,
    /// Standard error of the per-replica difference `lhs - rhs`.
    pub stderr: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LtiVerification {
    pub replicas: usize,
    pub checks: Vec<LtiCheck>,
    pub pass: bool,
}

/// Number of standard errors allowed above the predicted bound.
pub const LTI_STDERR_FACTOR: f64 = 3.0;

fn coords(m: &MetricsRow) -> Vector3<f64> {
    Vector3::new(m.agreement_pi2, m.opt_gap2, m.track_pi2)
}

/// Runs `replicas` independent S-ADDOPT trajectories with constant step
/// `lti.alpha` and checks `E t_{k+1} <= A E t_k + H_k E s_k + c` at each
/// checkpoint, allowing three standard errors of Monte-Carlo noise.
/// Replicas run in parallel; reduction is in replica order.
pub fn mc_verify_lti(
    lti: &LtiSystem,
    problem: &Problem,
    x0: &DMatrix<f64>,
    seed: u64,
    replicas: usize,
    checkpoints: &[usize],
) -> Result<LtiVerification> {
    if replicas < 2 {
        return Err(Error::config("replicas", "need at least 2 replicas"));
    }
    let mut ks: Vec<usize> = checkpoints.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let k_last = ks.last().copied().unwrap_or(0) + 1;

    let per_replica: Vec<Result<Vec<(MetricsRow, MetricsRow)>>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, r);
            let mut s = init_states(Algorithm::Saddopt, problem, x0, &mut rng)?;
            let mut out = Vec::with_capacity(ks.len());
            let mut before = None;
            let mut next_check = 0;
            while s.k < k_last && next_check < ks.len() {
                if s.k == ks[next_check] {
                    before = Some(compute_metrics(&s, &problem.perron, &problem.reference, &problem.objective));
                }
                step_in_place(Algorithm::Saddopt, &mut s, &problem.weights, lti.alpha, &problem.objective, &mut rng)?;
                if let Some(b) = before.take() {
                    let after = compute_metrics(&s, &problem.perron, &problem.reference, &problem.objective);
                    out.push((b, after));
                    next_check += 1;
                }
            }
            Ok(out)
        })
        .collect();
    let per_replica = per_replica.into_iter().collect::<Result<Vec<_>>>()?;

    let rn = replicas as f64;
    let mut checks = Vec::with_capacity(3 * ks.len());
    for (idx, &k) in ks.iter().enumerate() {
        let mut t_k = Vector3::zeros();
        let mut t_next = Vector3::zeros();
        let mut s_k = 0.0;
        for rep in &per_replica {
            let (b, a) = &rep[idx];
            t_k += coords(b);
            t_next += coords(a);
            s_k += b.x_norm2;
        }
        t_k /= rn;
        t_next /= rn;
        s_k /= rn;
        let rhs = lti.predict(k, &t_k, s_k);
        let diff_mean = t_next - rhs;
        let mut var = Vector3::zeros();
        for rep in &per_replica {
            let (b, a) = &rep[idx];
            let d = coords(a) - lti.predict(k, &coords(b), b.x_norm2);
            var += (d - diff_mean).component_mul(&(d - diff_mean));
        }
        var /= rn - 1.0;
        for c in 0..3 {
            let stderr = (var[c] / rn).sqrt();
            let slack = LTI_STDERR_FACTOR * stderr + 1e-12 * rhs[c].abs().max(1e-300);
            checks.push(LtiCheck {
                k,
                component: c,
                lhs: t_next[c],
                rhs: rhs[c],
                stderr,
                pass: diff_mean[c] <= slack,
            });
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(LtiVerification { replicas, checks, pass })
}

/// Errors of the starting state that enter the decaying-schedule constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialErrors {
    pub p0: f64,
    pub q0: f64,
    pub r0: f64,
}

impl From<&MetricsRow> for InitialErrors {
    fn from(m: &MetricsRow) -> Self {
        InitialErrors {
            p0: m.agreement_pi2,
            q0: m.opt_gap2,
            r0: m.track_pi2,
        }
    }
}

/// Constants of the `theta / (m + k)` schedule analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct Theorem2Table {
    pub theta: f64,
    pub m: f64,
    pub C0: f64,
    pub D1: f64,
    pub D2: f64,
    pub D3: f64,
    pub D4: f64,
    pub D5: f64,
    pub D6: f64,
    pub E1: f64,
    pub E2: f64,
    pub E3: f64,
    pub K1: f64,
    pub K2: f64,
    pub K3: f64,
    /// `m > max{theta (ell + mu) / 2, 6 ell theta y_- sqrt((1 + sigma_B^2) h) / (1 - sigma_B^2)}`
    pub m_ok: bool,
    pub determinant_condition_ok: bool,
    pub S_tilde: usize,
    pub P_tilde: f64,
    pub Q_tilde: f64,
    pub R_tilde: f64,
    /// `R_tilde` also satisfies the upper constraint `R_tilde <= D1 P_tilde`.
    pub R_feasible: bool,
    /// `2 theta^2 sigma^2 / (n (theta mu - 1))`, the network-independent
    /// coefficient of the `1/(m + k)` optimality-gap term.
    pub leading_coefficient: f64,
}

impl Theorem2Table {
    pub fn valid(&self) -> bool {
        self.m_ok && self.determinant_condition_ok
    }
}

/// Lower bound on `m` from the first schedule condition.
pub fn m_lower_bound(theta: f64, gc: &GraphConstants, pd: &PerronData, sc: &Scalars) -> f64 {
    let s2 = pd.sigma_b * pd.sigma_b;
    let a = theta * (sc.ell + sc.mu) / 2.0;
    let b = 6.0 * sc.ell * theta * gc.y_minus * ((1.0 + s2) * gc.h).sqrt() / (1.0 - s2);
    a.max(b)
}

#[allow(non_snake_case)]
pub fn theorem2_table(
    theta: f64,
    m: f64,
    gc: &GraphConstants,
    pd: &PerronData,
    sc: &Scalars,
    b: f64,
    init: &InitialErrors,
) -> Result<Theorem2Table> {
    let sb = contractive(pd)?;
    if !(theta * sc.mu > 1.0) {
        return Err(Error::ThetaTooSmall(theta * sc.mu));
    }
    if !(m >= 1.0 && m.is_finite()) {
        return Err(Error::InvalidStep(format!("m must be at least 1, got {m}")));
    }
    let s2 = sb * sb;
    let n = pd.n() as f64;
    let (mu, ell, var) = (sc.mu, sc.ell, sc.sigma2);
    let (y, ym, h, beta) = (gc.y_sup, gc.y_minus, gc.h, gc.beta);
    let (pmax, pmin) = (pd.pi_max, pd.pi_min);
    let (t2, m2) = (theta * theta, m * m);
    let l2 = ell * ell;

    let q = (1.0 + s2) / (1.0 - s2);
    let k1 = (1.0 - s2) / 3.0;
    let k2 = 6.0 * l2 * q * ym * ym * h;
    let ratio = (2.0 * m2 * k1 - 3.0 * k2 * t2) / (m2 * k1 - 2.0 * k2 * t2);
    let gap = theta * mu - 1.0;
    let both = theta / m + 1.0 / mu;
    let six = 6.0 / (1.0 - s2);

    let C0 = 4.0 * var * q / pmin * (n + 3.0 * (t2 * l2 * ym.powi(4) * y * y / m2) * ratio);
    let E1 = (1.0 + beta * sb) * ym * ym * pmax;
    let E2 = 4.0 * k2 + (2.0 * l2 * y * y * k2 * t2 / m2) * ratio * (1.0 + beta * sb);
    let E3 = 18.0 * q * ym.powi(4) * y * y / pmin;
    let K3 = ym * ym * beta * (beta + 1.0);
    let K1 = K3 * (theta * l2 / (mu * m) + t2 * l2 / m2);
    let K2 = 12.0 * l2 * q * ym.powi(4) * beta / pmax
        * (2.0 * beta + t2 * l2 * ym * ym * y * y * (beta + 1.0) / m2 * ratio);

    let D1 = (1.0 - s2) / (t2 * (1.0 + s2)) * ((1.0 - s2) / 2.0 - (2.0 * m + 1.0) / ((m + 1.0) * (m + 1.0)));
    let D2 = 6.0 * E2 / (m2 * (1.0 - s2));
    let D3 = six * (t2 * ell.powi(4) * E3 / m.powi(3) * init.q0 + C0 + K2 * b);
    let D4 = six * E1 * (theta.powi(3) * ell.powi(6) * E3 / (m.powi(4) * n * gap)) * both + D2;
    let D5 = six * (t2 * ell.powi(4) * E3 / (m.powi(3) * n * gap) * (t2 * var + n * m2 * K1 * b) + C0 + K2 * b);

    let m_ok = m > m_lower_bound(theta, gc, pd, sc);
    let det_lhs = (1.0 - s2).powi(2) / (6.0 * t2 * (1.0 + s2)) * ((1.0 - s2) / 2.0 - (2.0 * m + 1.0) / ((m + 1.0) * (m + 1.0)));
    let det_rhs = E2 / m2 + theta.powi(3) * ell.powi(6) * E1 * E3 / (m.powi(4) * n * gap) * both;
    let determinant_condition_ok = det_lhs > det_rhs;

    let P_tilde = [m2 * init.p0, init.r0 / D1, D3 / (D1 - D2), D5 / (D1 - D4)]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let D6 = (both * theta * l2 * E1 / m * P_tilde + t2 * var + n * m2 * K1 * b) / (n * gap);
    let Q_tilde = (m * init.q0).max(D6);
    let R_tilde = init
        .r0
        .max(six * (E2 * P_tilde / m2 + t2 * ell.powi(4) * E3 * Q_tilde / m.powi(3) + K2 * b + C0));

    Ok(Theorem2Table {
        theta,
        m,
        C0,
        D1,
        D2,
        D3,
        D4,
        D5,
        D6,
        E1,
        E2,
        E3,
        K1,
        K2,
        K3,
        m_ok,
        determinant_condition_ok,
        S_tilde: find_s_tilde(sb, pd.n(), m),
        P_tilde,
        Q_tilde,
        R_tilde,
        R_feasible: R_tilde <= D1 * P_tilde,
        leading_coefficient: 2.0 * t2 * var / (n * gap),
    })
}

/// Smallest integer `m` satisfying both schedule conditions for `theta`.
pub fn min_valid_m(theta: f64, gc: &GraphConstants, pd: &PerronData, sc: &Scalars) -> Result<f64> {
    let zero = InitialErrors {
        p0: 0.0,
        q0: 0.0,
        r0: 0.0,
    };
    let ok = |m: f64| -> Result<bool> { Ok(theorem2_table(theta, m, gc, pd, sc, 0.0, &zero)?.valid()) };
    let mut lo = m_lower_bound(theta, gc, pd, sc).floor().max(0.0) + 1.0;
    if ok(lo)? {
        return Ok(lo);
    }
    let mut hi = lo * 2.0;
    while !ok(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e15 {
            return Err(Error::InvalidStep(format!("no valid m found for theta = {theta}")));
        }
    }
    // lo fails, hi passes
    while hi - lo > 1.0 {
        let mid = ((lo + hi) / 2.0).floor();
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Smallest `S` with `sigma_B^k <= 1 / (n (m + k)^2)` for every `k >= S`.
/// `k log(sigma_B) + 2 log(m + k)` is concave in `k`, so once the condition
/// holds on the decreasing side it holds for good.
pub fn find_s_tilde(sigma_b: f64, n: usize, m: f64) -> usize {
    if sigma_b <= 0.0 {
        return 0;
    }
    let ls = sigma_b.ln();
    let ln_n = (n as f64).ln();
    let lhs = |k: usize| k as f64 * ls + ln_n + 2.0 * (m + k as f64).ln();
    let mut start = None;
    let mut k = 0usize;
    loop {
        let v = lhs(k);
        if v <= 0.0 {
            let s = *start.get_or_insert(k);
            if lhs(k + 1) <= v {
                return s;
            }
        } else {
            start = None;
        }
        k += 1;
    }
}

//! Error coordinates of a network state and estimators for rates and
//! plateaus on recorded traces.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::engine::{NodeStates, RunTrace};
use crate::error::{Error, Result};
use crate::objective::{Objective, ReferenceSolution};
use crate::spectral::{pi_norm2_rows, GraphConstants, PerronData};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsRow {
    /// `||x_k - B_inf x_k||_pi^2`
    pub agreement_pi2: f64,
    /// `||xbar_k - z*||_2^2`
    pub opt_gap2: f64,
    /// `||w_k - B_inf w_k||_pi^2`
    pub track_pi2: f64,
    /// `(1/n) ||z_k - 1 z*||_2^2`
    pub e_k: f64,
    /// `F(xbar_k) - F(z*)`
    #[serde(rename = "F_bar_gap")]
    pub f_bar_gap: f64,
    /// `||x_k||_2^2`
    pub x_norm2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    AgreementPi2,
    OptGap2,
    TrackPi2,
    EK,
    FBarGap,
    XNorm2,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::AgreementPi2,
        Metric::OptGap2,
        Metric::TrackPi2,
        Metric::EK,
        Metric::FBarGap,
        Metric::XNorm2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::AgreementPi2 => "agreement_pi2",
            Metric::OptGap2 => "opt_gap2",
            Metric::TrackPi2 => "track_pi2",
            Metric::EK => "e_k",
            Metric::FBarGap => "F_bar_gap",
            Metric::XNorm2 => "x_norm2",
        }
    }

    pub fn parse(name: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name() == name)
    }
}

impl MetricsRow {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::AgreementPi2 => self.agreement_pi2,
            Metric::OptGap2 => self.opt_gap2,
            Metric::TrackPi2 => self.track_pi2,
            Metric::EK => self.e_k,
            Metric::FBarGap => self.f_bar_gap,
            Metric::XNorm2 => self.x_norm2,
        }
    }

    pub fn is_finite(&self) -> bool {
        Metric::ALL.iter().all(|&m| self.get(m).is_finite())
    }
}

/// `||v - B_inf v||_pi^2` for an `n x p` stack, with `B_inf v` row `i` equal
/// to `pi_i * sum_j v_j`.
pub fn disagreement_pi2(v: &DMatrix<f64>, pi: &DVector<f64>) -> f64 {
    let total = v.row_sum();
    v.row_iter()
        .zip(pi.iter())
        .map(|(row, &p)| (row - &total * p).norm_squared() / p)
        .sum()
}

pub fn mean_row(v: &DMatrix<f64>) -> DVector<f64> {
    v.row_mean().transpose()
}

pub fn compute_metrics(s: &NodeStates, pd: &PerronData, reference: &ReferenceSolution, obj: &Objective) -> MetricsRow {
    let z_star = &reference.z_star;
    let n = s.n() as f64;
    let xbar = mean_row(&s.x);
    let e_k = s
        .z
        .row_iter()
        .map(|row| (row.transpose() - z_star).norm_squared())
        .sum::<f64>()
        / n;
    MetricsRow {
        agreement_pi2: disagreement_pi2(&s.x, &pd.pi),
        opt_gap2: (&xbar - z_star).norm_squared(),
        track_pi2: disagreement_pi2(&s.w, &pd.pi),
        e_k,
        // rounding can push the difference a hair below zero near the optimum
        f_bar_gap: (obj.global_value(xbar.as_slice()) - reference.f_star).max(0.0),
        x_norm2: s.x.norm_squared(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSplitReport {
    pub pass: bool,
    /// Right-hand side minus left-hand side.
    pub slack: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Checks, on one realization,
/// `e_k <= psi ||x - x_hat||_pi^2 + psi beta sigma_B^k ||x||_pi^2 + 2 ||xbar - z*||^2`
/// with `psi = 2 y_-^2 pi_max (1 + beta) / n`.
pub fn lemma2_check(s: &NodeStates, pd: &PerronData, gc: &GraphConstants, reference: &ReferenceSolution) -> ErrorSplitReport {
    let n = s.n() as f64;
    let z_star = &reference.z_star;
    let lhs = s
        .z
        .row_iter()
        .map(|row| (row.transpose() - z_star).norm_squared())
        .sum::<f64>()
        / n;
    let psi = 2.0 * gc.y_minus * gc.y_minus * pd.pi_max * (1.0 + gc.beta) / n;
    let decay = pd.sigma_b.powi(s.k.min(i32::MAX as usize) as i32);
    let rhs = psi * disagreement_pi2(&s.x, &pd.pi)
        + psi * gc.beta * decay * pi_norm2_rows(&s.x, &pd.pi)
        + 2.0 * (mean_row(&s.x) - z_star).norm_squared();
    ErrorSplitReport {
        pass: lhs <= rhs + 1e-9 * (1.0 + rhs),
        slack: rhs - lhs,
        lhs,
        rhs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Least-squares fit of `ln(value)` against `ln(offset + k)`.
pub fn loglog_slope(points: &[(f64, f64)], offset: f64) -> Result<SlopeFit> {
    if points.len() < 2 {
        return Err(Error::InvalidTrace(format!("need at least 2 points, got {}", points.len())));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(k, v) in points {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidTrace(format!("non-positive value {v} at k = {k}")));
        }
        if offset + k <= 0.0 {
            return Err(Error::InvalidTrace(format!("offset + k must be positive at k = {k}")));
        }
        xs.push((offset + k).ln());
        ys.push(v.ln());
    }
    Ok(linear_fit(&xs, &ys))
}

pub(crate) fn linear_fit(xs: &[f64], ys: &[f64]) -> SlopeFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 && sxx > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    SlopeFit {
        slope,
        intercept: my - slope * mx,
        r2,
        points: xs.len(),
    }
}

/// Log-log slope of `metric` over rows with `k_lo <= k <= k_hi`, using the
/// trace's step-size offset (`m` for decaying schedules, 0 otherwise).
pub fn fit_loglog_slope(trace: &RunTrace, metric: Metric, k_lo: usize, k_hi: usize) -> Result<SlopeFit> {
    if k_lo < 1 || k_hi <= k_lo {
        return Err(Error::InvalidTrace(format!("window [{k_lo}, {k_hi}] needs 1 <= k_lo < k_hi")));
    }
    let points: Vec<(f64, f64)> = trace
        .rows
        .iter()
        .filter(|r| (k_lo..=k_hi).contains(&r.k))
        .map(|r| (r.k as f64, r.metrics.get(metric)))
        .collect();
    loglog_slope(&points, trace.schedule.offset())
}

/// Batches used for the plateau standard error when the tail is long enough.
pub const PLATEAU_BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Plateau {
    pub mean: f64,
    /// Batch-means standard error of `mean`.
    pub stderr: f64,
    pub count: usize,
    /// Set when the tail still drifts: the linear trend across the tail
    /// moves by more than a quarter of the mean and more than three
    /// standard errors.
    pub drifting: bool,
}

impl Plateau {
    pub fn from_series(ks: &[f64], values: &[f64]) -> Plateau {
        let count = values.len();
        if count == 0 {
            return Plateau {
                mean: f64::NAN,
                stderr: f64::NAN,
                count,
                drifting: false,
            };
        }
        let n = count as f64;
        let mean = values.iter().sum::<f64>() / n;
        // batch means absorb the autocorrelation of a stochastic tail
        let batch_means: Vec<f64> = if count >= 2 * PLATEAU_BATCHES {
            let size = count / PLATEAU_BATCHES;
            values.chunks(size).take(PLATEAU_BATCHES).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
        } else {
            values.to_vec()
        };
        let b = batch_means.len() as f64;
        let var = if batch_means.len() > 1 {
            let bm = batch_means.iter().sum::<f64>() / b;
            batch_means.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (b - 1.0)
        } else {
            0.0
        };
        let stderr = (var / b).sqrt();
        let drifting = if count > 2 {
            let fit = linear_fit(ks, values);
            let span = ks[count - 1] - ks[0];
            let change = (fit.slope * span).abs();
            change > 0.25 * mean.abs() && change > 3.0 * stderr
        } else {
            false
        };
        Plateau {
            mean,
            stderr,
            count,
            drifting,
        }
    }
}

/// Mean and standard error of `metric` over the final `tail_fraction` of rows.
pub fn plateau_estimate(trace: &RunTrace, metric: Metric, tail_fraction: f64) -> Plateau {
    let rows = &trace.rows;
    let take = ((rows.len() as f64 * tail_fraction.clamp(0.0, 1.0)).ceil() as usize).clamp(1, rows.len().max(1));
    let tail = &rows[rows.len().saturating_sub(take)..];
    let ks: Vec<f64> = tail.iter().map(|r| r.k as f64).collect();
    let values: Vec<f64> = tail.iter().map(|r| r.metrics.get(metric)).collect();
    Plateau::from_series(&ks, &values)
}

/// Row-wise average of replicated traces that share their recording grid.
pub fn average_traces(traces: &[RunTrace]) -> Result<RunTrace> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InvalidTrace("no traces to average".into()))?;
    let mut out = first.clone();
    for t in &traces[1..] {
        if t.rows.len() != first.rows.len() || t.rows.iter().zip(&first.rows).any(|(a, b)| a.k != b.k) {
            return Err(Error::InvalidTrace("traces have different recording grids".into()));
        }
    }
    let r = traces.len() as f64;
    for (idx, row) in out.rows.iter_mut().enumerate() {
        let mut acc = MetricsRow::default();
        for t in traces {
            let m = &t.rows[idx].metrics;
            acc.agreement_pi2 += m.agreement_pi2;
            acc.opt_gap2 += m.opt_gap2;
            acc.track_pi2 += m.track_pi2;
            acc.e_k += m.e_k;
            acc.f_bar_gap += m.f_bar_gap;
            acc.x_norm2 += m.x_norm2;
        }
        row.metrics = MetricsRow {
            agreement_pi2: acc.agreement_pi2 / r,
            opt_gap2: acc.opt_gap2 / r,
            track_pi2: acc.track_pi2 / r,
            e_k: acc.e_k / r,
            f_bar_gap: acc.f_bar_gap / r,
            x_norm2: acc.x_norm2 / r,
        };
    }
    out.replica = None;
    Ok(out)
}

//! Iteration engines: S-ADDOPT, ADDOPT, SGP and GP over a column-stochastic
//! weight matrix, plus step-size schedules and trajectory recording.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::digraph::{column_stochastic_weights, Digraph, WeightMatrix};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, lemma2_check, MetricsRow};
use crate::objective::{Objective, ReferenceSolution, REFERENCE_TOL};
use crate::spectral::{graph_constants, perron, GraphConstants, PerronData, CONSTANTS_TOL};

/// Accumulated tolerance for the exact sum invariants.
pub const INVARIANT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Saddopt,
    Addopt,
    Sgp,
    Gp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Saddopt, Algorithm::Addopt, Algorithm::Sgp, Algorithm::Gp];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Saddopt => "saddopt",
            Algorithm::Addopt => "addopt",
            Algorithm::Sgp => "sgp",
            Algorithm::Gp => "gp",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Algorithm::Saddopt | Algorithm::Sgp)
    }

    pub fn tracks_gradient(self) -> bool {
        matches!(self, Algorithm::Saddopt | Algorithm::Addopt)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config("algorithm", format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant { alpha: f64 },
    /// `alpha_k = theta / (m + k)`
    Decaying { theta: f64, m: f64 },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::Constant { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                Err(Error::InvalidStep(format!("alpha must be positive, got {alpha}")))
            }
            StepSchedule::Decaying { theta, .. } if !(theta > 0.0 && theta.is_finite()) => {
                Err(Error::InvalidStep(format!("theta must be positive, got {theta}")))
            }
            StepSchedule::Decaying { m, .. } if !(m >= 1.0 && m.is_finite()) => {
                Err(Error::InvalidStep(format!("m must be at least 1, got {m}")))
            }
            _ => Ok(()),
        }
    }

    pub fn alpha(&self, k: usize) -> f64 {
        match *self {
            StepSchedule::Constant { alpha } => alpha,
            StepSchedule::Decaying { theta, m } => theta / (m + k as f64),
        }
    }

    /// Shift applied to `k` on log-log rate plots.
    pub fn offset(&self) -> f64 {
        match *self {
            StepSchedule::Constant { .. } => 0.0,
            StepSchedule::Decaying { m, .. } => m,
        }
    }
}

/// A weight matrix, its stationary data and an objective with its minimizer.
#[derive(Debug, Clone)]
pub struct Problem {
    pub weights: WeightMatrix,
    pub perron: PerronData,
    pub constants: GraphConstants,
    pub objective: Objective,
    pub reference: ReferenceSolution,
}

impl Problem {
    pub fn new(weights: WeightMatrix, objective: Objective) -> Result<Self> {
        if weights.n() != objective.n() {
            return Err(Error::DimensionMismatch {
                expected: weights.n(),
                got: objective.n(),
            });
        }
        let perron = perron(&weights)?;
        let constants = graph_constants(&perron, &weights, CONSTANTS_TOL);
        let reference = objective.reference_solution(REFERENCE_TOL)?;
        Ok(Problem {
            weights,
            perron,
            constants,
            objective,
            reference,
        })
    }

    pub fn from_graph(graph: &Digraph, objective: Objective) -> Result<Self> {
        Problem::new(column_stochastic_weights(graph)?, objective)
    }

    pub fn n(&self) -> usize {
        self.weights.n()
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    /// Component gradients per node in one pass over the local data.
    pub fn samples_per_node(&self) -> f64 {
        if self.objective.is_finite_sum() {
            self.objective.total_samples() as f64 / self.n() as f64
        } else {
            1.0
        }
    }
}

/// Stacked node states; row `i` belongs to node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStates {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub z: DMatrix<f64>,
    /// Gradient tracker. For SGP and GP it holds the current gradients.
    pub w: DMatrix<f64>,
    /// Gradient draws at the current `z`, reused by the next tracking update.
    pub grads: DMatrix<f64>,
    pub k: usize,
    /// Component-gradient evaluations so far, averaged over nodes.
    pub oracle_calls: f64,
}

impl NodeStates {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.y.iter()).chain(self.w.iter()).all(|v| v.is_finite())
    }
}

/// Per-step deviations from the exact sum identities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepReport {
    /// `|sum_i y_i - n|`
    pub y_sum_err: f64,
    /// `max_c |sum_i w_ic - sum_i g_ic|` (tracking engines only)
    pub tracking_err: f64,
    /// `max_c |xbar+ - (xbar - alpha wbar)|`
    pub mean_dynamics_err: f64,
}

fn gradients(
    obj: &Objective,
    z: &DMatrix<f64>,
    stochastic: bool,
    rng: &mut dyn RngCore,
    out: &mut DMatrix<f64>,
) -> f64 {
    let (n, p) = z.shape();
    let mut zi = vec![0.0; p];
    let mut gi = vec![0.0; p];
    let mut calls = 0.0;
    for i in 0..n {
        for (c, v) in zi.iter_mut().enumerate() {
            *v = z[(i, c)];
        }
        if stochastic {
            obj.sfo_gradient_into(i, &zi, rng, &mut gi);
            calls += 1.0;
        } else {
            obj.exact_gradient_into(i, &zi, &mut gi);
            calls += if obj.is_finite_sum() { obj.local_size(i) as f64 } else { 1.0 };
        }
        for (c, v) in gi.iter().enumerate() {
            out[(i, c)] = *v;
        }
    }
    calls / n as f64
}

fn divide_rows(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DMatrix<f64>> {
    if let Some(node) = y.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::NonPositiveWeight { node });
    }
    Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, c| x[(i, c)] / y[i]))
}

/// Stacked states with `x = x0`, `y = 1`, `z = x0` and `w` the gradients at `z`.
pub fn init_states(
    alg: Algorithm,
    problem: &Problem,
    x0: &DMatrix<f64>,
    rng: &mut dyn RngCore,
) -> Result<NodeStates> {
    let (n, p) = (problem.n(), problem.dim());
    if x0.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x0.nrows(),
        });
    }
    if x0.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: x0.ncols(),
        });
    }
    let mut grads = DMatrix::zeros(n, p);
    let calls = gradients(&problem.objective, x0, alg.is_stochastic(), rng, &mut grads);
    Ok(NodeStates {
        x: x0.clone(),
        y: DVector::from_element(n, 1.0),
        z: x0.clone(),
        w: grads.clone(),
        grads,
        k: 0,
        oracle_calls: calls,
    })
}

/// Advances `s` by one iteration of `alg` in place.
pub fn step_in_place(
    alg: Algorithm,
    s: &mut NodeStates,
    b: &WeightMatrix,
    alpha: f64,
    obj: &Objective,
    rng: &mut dyn RngCore,
) -> Result<StepReport> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidStep(format!("alpha must be positive, got {alpha}")));
    }
    let bm = b.matrix();
    let n = s.n();
    let xbar_pred = (s.x.row_sum() - s.w.row_sum() * alpha) / n as f64;

    let x_new = bm * &s.x - &s.w * alpha;
    let y_new = bm * &s.y;
    let z_new = divide_rows(&x_new, &y_new)?;
    let mut g_new = DMatrix::zeros(n, s.dim());
    let calls = gradients(obj, &z_new, alg.is_stochastic(), rng, &mut g_new);

    let w_new = if alg.tracks_gradient() {
        // (Bw - g) + g_new keeps B = [1] identical to plain SGD
        (bm * &s.w - &s.grads) + &g_new
    } else {
        g_new.clone()
    };

    let tracking_err = if alg.tracks_gradient() {
        (w_new.row_sum() - g_new.row_sum()).amax()
    } else {
        0.0
    };
    let mean_dynamics_err = (x_new.row_sum() / n as f64 - xbar_pred).amax();
    let y_sum_err = (y_new.sum() - n as f64).abs();

    s.x = x_new;
    s.y = y_new;
    s.z = z_new;
    s.w = w_new;
    s.grads = g_new;
    s.k += 1;
    s.oracle_calls += calls;
    Ok(StepReport {
        y_sum_err,
        tracking_err,
        mean_dynamics_err,
    })
}

fn step_owned(
    alg: Algorithm,
    s: &NodeStates,
    b: &WeightMatrix,
    alpha: f64,
    obj: &Objective,
    rng: &mut dyn RngCore,
) -> Result<NodeStates> {
    let mut next = s.clone();
    step_in_place(alg, &mut next, b, alpha, obj, rng)?;
    Ok(next)
}

/// `x+ = Bx - alpha w`, `y+ = By`, `z+ = x+ / y+`, `w+ = Bw + g(z+) - g(z)`
/// with one fresh stochastic draw per node and the previous draw reused.
pub fn saddopt_step(s: &NodeStates, b: &WeightMatrix, alpha: f64, obj: &Objective, rng: &mut dyn RngCore) -> Result<NodeStates> {
    step_owned(Algorithm::Saddopt, s, b, alpha, obj, rng)
}

/// The tracking update with exact local gradients.
pub fn addopt_step(s: &NodeStates, b: &WeightMatrix, alpha: f64, obj: &Objective) -> Result<NodeStates> {
    step_owned(Algorithm::Addopt, s, b, alpha, obj, &mut replica_rng(0, 0))
}

/// Push-sum SGD: `x+ = Bx - alpha g(z)` with no tracking.
pub fn sgp_step(s: &NodeStates, b: &WeightMatrix, alpha: f64, obj: &Objective, rng: &mut dyn RngCore) -> Result<NodeStates> {
    step_owned(Algorithm::Sgp, s, b, alpha, obj, rng)
}

/// Push-sum gradient descent with exact local gradients.
pub fn gp_step(s: &NodeStates, b: &WeightMatrix, alpha: f64, obj: &Objective) -> Result<NodeStates> {
    step_owned(Algorithm::Gp, s, b, alpha, obj, &mut replica_rng(0, 0))
}

/// Random stream for one replica of a seeded experiment.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub alpha: f64,
    pub metrics: MetricsRow,
    pub oracle_calls: f64,
}

/// Worst deviations seen over a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantSummary {
    pub max_y_sum_err: f64,
    pub max_tracking_err: f64,
    pub max_mean_dynamics_err: f64,
    /// Smallest slack of the pathwise mean-error split over recorded rows.
    pub min_error_split_slack: f64,
    pub error_split_violations: usize,
}

impl Default for InvariantSummary {
    fn default() -> Self {
        InvariantSummary {
            max_y_sum_err: 0.0,
            max_tracking_err: 0.0,
            max_mean_dynamics_err: 0.0,
            min_error_split_slack: f64::INFINITY,
            error_split_violations: 0,
        }
    }
}

impl InvariantSummary {
    fn absorb(&mut self, r: &StepReport) {
        self.max_y_sum_err = self.max_y_sum_err.max(r.y_sum_err);
        self.max_tracking_err = self.max_tracking_err.max(r.tracking_err);
        self.max_mean_dynamics_err = self.max_mean_dynamics_err.max(r.mean_dynamics_err);
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max_y_sum_err <= tol && self.max_tracking_err <= tol && self.max_mean_dynamics_err <= tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub algorithm: Algorithm,
    pub schedule: StepSchedule,
    pub seed: u64,
    pub replica: Option<u64>,
    pub rows: Vec<TraceRow>,
    pub invariants: InvariantSummary,
    /// Iteration at which a non-finite iterate stopped the run.
    pub aborted_at: Option<usize>,
    /// Component gradients per node in one epoch.
    pub samples_per_node: f64,
}

impl RunTrace {
    pub fn epochs(&self, row: &TraceRow) -> f64 {
        row.oracle_calls / self.samples_per_node
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub k_max: usize,
    pub record_every: usize,
    /// Evaluate the pathwise mean-error split on every recorded row.
    pub check_error_split: bool,
}

impl RunOptions {
    pub fn new(k_max: usize, record_every: usize) -> Self {
        RunOptions {
            k_max,
            record_every,
            check_error_split: true,
        }
    }
}

/// Runs one trajectory on the stream `replica_rng(seed, replica)`.
/// Rows are recorded at `k = 0`, every `record_every` iterations and at `k_max`.
pub fn run(
    alg: Algorithm,
    problem: &Problem,
    schedule: StepSchedule,
    x0: &DMatrix<f64>,
    seed: u64,
    replica: u64,
    opts: RunOptions,
) -> Result<RunTrace> {
    schedule.validate()?;
    if opts.record_every == 0 {
        return Err(Error::config("record_every", "must be at least 1"));
    }
    let mut rng = replica_rng(seed, replica);
    let mut s = init_states(alg, problem, x0, &mut rng)?;
    let mut trace = RunTrace {
        algorithm: alg,
        schedule,
        seed,
        replica: Some(replica),
        rows: Vec::with_capacity(opts.k_max / opts.record_every + 2),
        invariants: InvariantSummary::default(),
        aborted_at: None,
        samples_per_node: problem.samples_per_node(),
    };
    record(&mut trace, &s, problem, &schedule, opts.check_error_split);
    while s.k < opts.k_max {
        let alpha = schedule.alpha(s.k);
        let report = step_in_place(alg, &mut s, &problem.weights, alpha, &problem.objective, &mut rng)?;
        trace.invariants.absorb(&report);
        if !s.is_finite() {
            trace.aborted_at = Some(s.k);
            record(&mut trace, &s, problem, &schedule, false);
            return Ok(trace);
        }
        if s.k % opts.record_every == 0 || s.k == opts.k_max {
            record(&mut trace, &s, problem, &schedule, opts.check_error_split);
        }
    }
    Ok(trace)
}

fn record(trace: &mut RunTrace, s: &NodeStates, problem: &Problem, schedule: &StepSchedule, check: bool) {
    let metrics = compute_metrics(s, &problem.perron, &problem.reference, &problem.objective);
    if check {
        let rep = lemma2_check(s, &problem.perron, &problem.constants, &problem.reference);
        let inv = &mut trace.invariants;
        inv.min_error_split_slack = inv.min_error_split_slack.min(rep.slack);
        if !rep.pass {
            inv.error_split_violations += 1;
        }
    }
    trace.rows.push(TraceRow {
        k: s.k,
        alpha: schedule.alpha(s.k),
        metrics,
        oracle_calls: s.oracle_calls,
    });
}

//! Experiment configuration, replicated runs, sweeps, algorithm comparisons
//! and their on-disk artifacts (one CSV trace per replica plus a JSON summary).

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    bound_report, theorem1_step_bound, theorem2_table, BoundReport, InitialErrors, Scalars, Theorem2Table,
};
use crate::digraph::{build_exponential_digraph, build_geometric_digraph, Digraph};
use crate::engine::{run, Algorithm, InvariantSummary, Problem, RunOptions, RunTrace, StepSchedule, TraceRow};
use crate::error::{Error, Result};
use crate::metrics::{average_traces, fit_loglog_slope, plateau_estimate, Metric, MetricsRow, Plateau, SlopeFit};
use crate::objective::{
    load_csv_dataset, partition_dataset, synthetic_logistic_samples, Objective, PartitionScheme, QuadraticCost,
};
use crate::spectral::{lemma1_envelope_check, EnvelopeReport};

/// Column order of every trace CSV.
pub const TRACE_COLUMNS: [&str; 8] = [
    "k",
    "alpha",
    "agreement_pi2",
    "opt_gap2",
    "track_pi2",
    "e_k",
    "F_bar_gap",
    "oracle_calls",
];

/// Fraction of recorded rows used for plateau and tail-slope estimates.
pub const TAIL_FRACTION: f64 = 0.5;
/// Margin applied to the largest observed `||x_k||^2` when it stands in for
/// the iterate bound `b`.
pub const ITERATE_BOUND_MARGIN: f64 = 1.5;
/// Iterations of the eigenvector-estimate envelope check per run.
pub const ENVELOPE_HORIZON: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSpec {
    Exponential { n: usize },
    Geometric { n: usize, radius: f64, drop_prob: f64, seed: u64 },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSpec {
    Csv { path: PathBuf },
    Synthetic { samples: usize, dim: usize, separation: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    /// `f_i(z) = q_i (z - a_i)^2 / 2`; single-element lists are broadcast.
    Quadratic {
        curvatures: Vec<f64>,
        centers: Vec<f64>,
        #[serde(default)]
        noise_sigma: f64,
    },
    /// Curvatures and centers drawn uniformly from the given ranges.
    RandomQuadratic {
        curvature_range: [f64; 2],
        center_range: [f64; 2],
        #[serde(default)]
        noise_sigma: f64,
        seed: u64,
    },
    Logistic {
        data: DataSpec,
        lambda: f64,
        #[serde(default = "balanced")]
        partition: PartitionScheme,
        #[serde(default)]
        partition_seed: u64,
    },
}

fn balanced() -> PartitionScheme {
    PartitionScheme::Balanced
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialPoint {
    #[default]
    Zeros,
    /// Every node starts at the minimizer.
    Optimum,
    /// Every node starts at `value`.
    Point { value: Vec<f64> },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    pub objective: ObjectiveSpec,
    pub algorithm: Algorithm,
    pub schedule: StepSchedule,
    pub k_max: usize,
    #[serde(default = "one")]
    pub record_every: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub replicas: usize,
    #[serde(default)]
    pub x0: InitialPoint,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            Error::config(field, e.into_inner().to_string())
        })
    }

    /// Reads a config; relative file paths inside it resolve against the
    /// config's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let GraphSpec::File { path } = &mut self.graph {
            fix(path);
        }
        if let ObjectiveSpec::Logistic {
            data: DataSpec::Csv { path },
            ..
        } = &mut self.objective
        {
            fix(path);
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Structural checks that need no file access.
    pub fn validate(&self) -> Result<()> {
        if self.record_every == 0 {
            return Err(Error::config("record_every", "must be at least 1"));
        }
        if self.replicas == 0 {
            return Err(Error::config("replicas", "must be at least 1"));
        }
        self.schedule
            .validate()
            .map_err(|e| Error::config("schedule", e.to_string()))?;
        match &self.graph {
            GraphSpec::Exponential { n } | GraphSpec::Geometric { n, .. } if *n == 0 => {
                return Err(Error::config("graph.n", "must be at least 1"));
            }
            GraphSpec::Geometric { radius, drop_prob, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::config("graph.radius", "must be positive"));
                }
                if !(0.0..1.0).contains(drop_prob) {
                    return Err(Error::config("graph.drop_prob", "must lie in [0, 1)"));
                }
            }
            GraphSpec::File { path } if !path.exists() => {
                return Err(Error::config("graph.path", format!("{} does not exist", path.display())));
            }
            _ => {}
        }
        match &self.objective {
            ObjectiveSpec::Quadratic {
                curvatures,
                centers,
                noise_sigma,
            } => {
                if curvatures.is_empty() {
                    return Err(Error::config("objective.curvatures", "must not be empty"));
                }
                if centers.is_empty() {
                    return Err(Error::config("objective.centers", "must not be empty"));
                }
                if !(*noise_sigma >= 0.0) {
                    return Err(Error::config("objective.noise_sigma", "must be non-negative"));
                }
            }
            ObjectiveSpec::RandomQuadratic {
                curvature_range,
                center_range,
                noise_sigma,
                ..
            } => {
                if !(curvature_range[0] > 0.0 && curvature_range[0] <= curvature_range[1]) {
                    return Err(Error::config("objective.curvature_range", "need 0 < lo <= hi"));
                }
                if !(center_range[0] <= center_range[1]) {
                    return Err(Error::config("objective.center_range", "need lo <= hi"));
                }
                if !(*noise_sigma >= 0.0) {
                    return Err(Error::config("objective.noise_sigma", "must be non-negative"));
                }
            }
            ObjectiveSpec::Logistic { data, lambda, .. } => {
                if !(*lambda > 0.0) {
                    return Err(Error::config("objective.lambda", "must be positive"));
                }
                if let DataSpec::Csv { path } = data {
                    if !path.exists() {
                        return Err(Error::config(
                            "objective.data.path",
                            format!("{} does not exist", path.display()),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn build_graph(spec: &GraphSpec) -> Result<Digraph> {
    match spec {
        GraphSpec::Exponential { n } => build_exponential_digraph(*n),
        GraphSpec::Geometric {
            n,
            radius,
            drop_prob,
            seed,
        } => build_geometric_digraph(*n, *radius, *drop_prob, *seed),
        GraphSpec::File { path } => Digraph::load(path),
    }
}

fn broadcast(field: &str, values: &[f64], n: usize) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; n]),
        len if len == n => Ok(values.to_vec()),
        len => Err(Error::config(field, format!("expected 1 or {n} entries, got {len}"))),
    }
}

pub fn build_objective(spec: &ObjectiveSpec, n: usize) -> Result<Objective> {
    match spec {
        ObjectiveSpec::Quadratic {
            curvatures,
            centers,
            noise_sigma,
        } => {
            let q = broadcast("objective.curvatures", curvatures, n)?;
            let a = broadcast("objective.centers", centers, n)?;
            Objective::quadratic_1d(&q, &a, *noise_sigma)
        }
        ObjectiveSpec::RandomQuadratic {
            curvature_range,
            center_range,
            noise_sigma,
            seed,
        } => {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let draw = |r: &[f64; 2], rng: &mut ChaCha8Rng| {
                if r[0] == r[1] {
                    r[0]
                } else {
                    rng.random_range(r[0]..r[1])
                }
            };
            let q: Vec<f64> = (0..n).map(|_| draw(curvature_range, &mut rng)).collect();
            let a: Vec<f64> = (0..n).map(|_| draw(center_range, &mut rng)).collect();
            Objective::quadratic(
                q.iter()
                    .zip(&a)
                    .map(|(&q, &a)| QuadraticCost {
                        q: DMatrix::from_element(1, 1, q),
                        a: nalgebra::DVector::from_element(1, a),
                    })
                    .collect(),
                *noise_sigma,
            )
        }
        ObjectiveSpec::Logistic {
            data,
            lambda,
            partition,
            partition_seed,
        } => {
            let samples = match data {
                DataSpec::Csv { path } => load_csv_dataset(path)?,
                DataSpec::Synthetic {
                    samples,
                    dim,
                    separation,
                    seed,
                } => synthetic_logistic_samples(*samples, *dim, *separation, &mut ChaCha8Rng::seed_from_u64(*seed)),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(*partition_seed);
            let parts = partition_dataset(&samples, n, *partition, &mut rng)?;
            Objective::logistic(parts, *lambda)
        }
    }
}

/// A validated configuration with its graph, objective and derived constants.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub problem: Problem,
    pub scalars: Scalars,
    pub x0: DMatrix<f64>,
}

fn as_config(field: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config { .. } => e,
        other => Error::config(field, other.to_string()),
    }
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let graph = build_graph(&config.graph).map_err(as_config("graph"))?;
    let objective = build_objective(&config.objective, graph.n()).map_err(as_config("objective"))?;
    let problem = Problem::from_graph(&graph, objective).map_err(as_config("graph"))?;
    let curv = problem.objective.curvature_constants().map_err(as_config("objective"))?;
    let sigma2 = problem.objective.sfo_variance(problem.reference.z_star.as_slice());
    let scalars = Scalars::new(curv.mu, curv.ell, sigma2).map_err(as_config("objective"))?;
    let (n, p) = (problem.n(), problem.dim());
    let x0 = match &config.x0 {
        InitialPoint::Zeros => DMatrix::zeros(n, p),
        InitialPoint::Optimum => DMatrix::from_fn(n, p, |_, c| problem.reference.z_star[c]),
        InitialPoint::Point { value } => {
            if value.len() != p {
                return Err(Error::config("x0.value", format!("expected {p} entries, got {}", value.len())));
            }
            DMatrix::from_fn(n, p, |_, c| value[c])
        }
    };
    Ok(Prepared {
        config: config.clone(),
        problem,
        scalars,
        x0,
    })
}

/// Rejects schedules outside the analysed step-size ranges.
pub fn enforce_bounds(prep: &Prepared) -> Result<()> {
    let (pd, gc, sc) = (&prep.problem.perron, &prep.problem.constants, &prep.scalars);
    match prep.config.schedule {
        StepSchedule::Constant { alpha } => {
            let bound = theorem1_step_bound(gc, pd, sc.mu, sc.ell);
            if alpha > bound {
                return Err(Error::config(
                    "schedule.alpha",
                    format!("{alpha} exceeds the linear-convergence bound {bound}"),
                ));
            }
        }
        StepSchedule::Decaying { theta, m } => {
            let init = InitialErrors {
                p0: 0.0,
                q0: 0.0,
                r0: 0.0,
            };
            let table = theorem2_table(theta, m, gc, pd, sc, 0.0, &init).map_err(as_config("schedule.theta"))?;
            if !table.m_ok {
                return Err(Error::config("schedule.m", format!("m = {m} is below the schedule lower bound")));
            }
            if !table.determinant_condition_ok {
                return Err(Error::config("schedule.m", format!("m = {m} fails the determinant condition")));
            }
        }
    }
    Ok(())
}

/// Runs every replica of `alg` in parallel; traces come back in replica order.
pub fn run_replicas(prep: &Prepared, alg: Algorithm) -> Result<Vec<RunTrace>> {
    let c = &prep.config;
    let opts = RunOptions::new(c.k_max, c.record_every);
    (0..c.replicas as u64)
        .into_par_iter()
        .map(|r| run(alg, &prep.problem, c.schedule, &prep.x0, c.seed, r, opts))
        .collect()
}

fn fmt_f64(v: f64) -> String {
    // Debug gives the shortest round-trip form and switches to exponent
    // notation for very large or small magnitudes.
    format!("{v:?}")
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for r in rows {
        let m = &r.metrics;
        w.write_record([
            r.k.to_string(),
            fmt_f64(r.alpha),
            fmt_f64(m.agreement_pi2),
            fmt_f64(m.opt_gap2),
            fmt_f64(m.track_pi2),
            fmt_f64(m.e_k),
            fmt_f64(m.f_bar_gap),
            fmt_f64(r.oracle_calls),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn trace_csv_bytes(rows: &[TraceRow]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_trace_csv(rows, &mut buf).expect("writing to memory cannot fail");
    buf
}

/// Parses a trace CSV. `x_norm2` is not stored and comes back as NaN.
pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(TRACE_COLUMNS) {
        return Err(Error::InvalidTrace(format!(
            "unexpected header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| Error::InvalidTrace(format!("row {}: column {}: {e}", line + 2, TRACE_COLUMNS[i])))
        };
        let k = rec[0]
            .parse::<usize>()
            .map_err(|e| Error::InvalidTrace(format!("row {}: column k: {e}", line + 2)))?;
        rows.push(TraceRow {
            k,
            alpha: num(1)?,
            metrics: MetricsRow {
                agreement_pi2: num(2)?,
                opt_gap2: num(3)?,
                track_pi2: num(4)?,
                e_k: num(5)?,
                f_bar_gap: num(6)?,
                x_norm2: f64::NAN,
            },
            oracle_calls: num(7)?,
        });
    }
    if rows.windows(2).any(|w| w[0].k >= w[1].k) {
        return Err(Error::InvalidTrace("rows are not strictly increasing in k".into()));
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GraphSummary {
    pub n: usize,
    pub sigma_b: f64,
    pub pi_min: f64,
    pub pi_max: f64,
    pub h: f64,
    pub beta: f64,
    pub y_sup: f64,
    pub y_minus: f64,
    pub tau: f64,
}

impl GraphSummary {
    pub fn of(problem: &Problem) -> Self {
        let (pd, gc) = (&problem.perron, &problem.constants);
        GraphSummary {
            n: problem.n(),
            sigma_b: pd.sigma_b,
            pi_min: pd.pi_min,
            pi_max: pd.pi_max,
            h: gc.h,
            beta: gc.beta,
            y_sup: gc.y_sup,
            y_minus: gc.y_minus,
            tau: gc.tau,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterateBound {
    pub max_x_norm2: f64,
    /// Log-log slope of the replica-mean `||x_k||^2` over the tail.
    pub tail_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub algorithm: Algorithm,
    pub config_digest: String,
    pub graph: GraphSummary,
    pub scalars: Scalars,
    pub samples_per_node: f64,
    pub bounds: Option<BoundReport>,
    pub theorem2: Option<Theorem2Table>,
    /// Replica-mean tail plateaus keyed by metric name.
    pub plateaus: BTreeMap<String, Plateau>,
    /// Tail log-log slopes of the replica means (decaying schedules).
    pub slopes: BTreeMap<String, SlopeFit>,
    /// Replica-mean metrics at the last recorded iteration.
    pub terminal: Option<MetricsRow>,
    pub iterate_bound: IterateBound,
    pub invariants: InvariantSummary,
    pub envelope: EnvelopeReport,
    pub aborted_replicas: Vec<u64>,
    pub trace_digests: Vec<String>,
    pub notes: Vec<String>,
    /// SHA-256 over the config digest and every trace digest.
    pub digest: String,
}

fn worst(a: InvariantSummary, b: &InvariantSummary) -> InvariantSummary {
    InvariantSummary {
        max_y_sum_err: a.max_y_sum_err.max(b.max_y_sum_err),
        max_tracking_err: a.max_tracking_err.max(b.max_tracking_err),
        max_mean_dynamics_err: a.max_mean_dynamics_err.max(b.max_mean_dynamics_err),
        min_error_split_slack: a.min_error_split_slack.min(b.min_error_split_slack),
        error_split_violations: a.error_split_violations + b.error_split_violations,
    }
}

pub fn summarize(prep: &Prepared, alg: Algorithm, traces: &[RunTrace]) -> ExperimentSummary {
    let problem = &prep.problem;
    let (pd, gc, sc) = (&problem.perron, &problem.constants, &prep.scalars);
    let config_digest = prep.config.digest();
    let mut notes = Vec::new();

    let trace_digests: Vec<String> = traces
        .iter()
        .map(|t| hex::encode(Sha256::digest(trace_csv_bytes(&t.rows))))
        .collect();
    let mut h = Sha256::new();
    h.update(config_digest.as_bytes());
    for d in &trace_digests {
        h.update(d.as_bytes());
    }
    let digest = hex::encode(h.finalize());

    let aborted_replicas: Vec<u64> = traces
        .iter()
        .filter(|t| t.aborted_at.is_some())
        .filter_map(|t| t.replica)
        .collect();
    let invariants = traces.iter().fold(InvariantSummary::default(), |acc, t| worst(acc, &t.invariants));
    let max_x_norm2 = traces
        .iter()
        .flat_map(|t| t.rows.iter().map(|r| r.metrics.x_norm2))
        .fold(0.0, f64::max);

    let mean = if aborted_replicas.is_empty() {
        average_traces(traces).ok()
    } else {
        notes.push(format!("{} replica(s) aborted on non-finite iterates", aborted_replicas.len()));
        None
    };

    let mut plateaus = BTreeMap::new();
    let mut slopes = BTreeMap::new();
    let mut tail_slope = None;
    if let Some(mean) = &mean {
        for m in Metric::ALL {
            plateaus.insert(m.name().to_string(), plateau_estimate(mean, m, TAIL_FRACTION));
        }
        let k_hi = mean.last().map_or(0, |r| r.k);
        let k_lo = ((k_hi as f64 * (1.0 - TAIL_FRACTION)) as usize).max(1);
        if k_hi > k_lo {
            if let Ok(fit) = fit_loglog_slope(mean, Metric::XNorm2, k_lo, k_hi) {
                tail_slope = Some(fit.slope);
            }
            if matches!(prep.config.schedule, StepSchedule::Decaying { .. }) {
                for m in [Metric::AgreementPi2, Metric::OptGap2, Metric::TrackPi2, Metric::EK] {
                    if let Ok(fit) = fit_loglog_slope(mean, m, k_lo, k_hi) {
                        slopes.insert(m.name().to_string(), fit);
                    }
                }
            }
        }
    }

    let bounds = match prep.config.schedule {
        StepSchedule::Constant { alpha } => match bound_report(alpha, gc, pd, sc) {
            Ok(b) => Some(b),
            Err(e) => {
                notes.push(format!("no error-system bounds: {e}"));
                None
            }
        },
        StepSchedule::Decaying { .. } => None,
    };
    let theorem2 = match (prep.config.schedule, &mean) {
        (StepSchedule::Decaying { theta, m }, Some(mean)) => {
            let init = InitialErrors::from(&mean.rows[0].metrics);
            let b = ITERATE_BOUND_MARGIN * max_x_norm2;
            match theorem2_table(theta, m, gc, pd, sc, b, &init) {
                Ok(t) => Some(t),
                Err(e) => {
                    notes.push(format!("no decaying-schedule constants: {e}"));
                    None
                }
            }
        }
        _ => None,
    };

    ExperimentSummary {
        algorithm: alg,
        config_digest,
        graph: GraphSummary::of(problem),
        scalars: *sc,
        samples_per_node: problem.samples_per_node(),
        bounds,
        theorem2,
        plateaus,
        slopes,
        terminal: mean.as_ref().and_then(|m| m.last()).map(|r| r.metrics),
        iterate_bound: IterateBound {
            max_x_norm2,
            tail_slope,
        },
        invariants,
        envelope: lemma1_envelope_check(&problem.weights, pd, gc, prep.config.k_max.min(ENVELOPE_HORIZON)),
        aborted_replicas,
        trace_digests,
        notes,
        digest,
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub summary: ExperimentSummary,
    pub traces: Vec<RunTrace>,
}

impl ExperimentReport {
    pub fn aborted(&self) -> bool {
        !self.summary.aborted_replicas.is_empty()
    }
}

fn write_outputs(dir: &Path, report: &ExperimentReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, t) in report.traces.iter().enumerate() {
        let name = format!("trace_r{}.csv", t.replica.unwrap_or(i as u64));
        fs::write(dir.join(name), trace_csv_bytes(&t.rows))?;
    }
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&report.summary)?)?;
    Ok(())
}

fn execute(prep: &Prepared, alg: Algorithm, out_dir: Option<&Path>) -> Result<ExperimentReport> {
    let traces = run_replicas(prep, alg)?;
    let summary = summarize(prep, alg, &traces);
    let report = ExperimentReport { summary, traces };
    if let Some(dir) = out_dir {
        write_outputs(dir, &report)?;
    }
    Ok(report)
}

/// Runs all replicas of the configured algorithm. With `out_dir`, writes
/// `trace_r<replica>.csv` files and `summary.json` there.
pub fn run_experiment(config: &ExperimentConfig, out_dir: Option<&Path>, enforce: bool) -> Result<ExperimentReport> {
    let prep = prepare(config)?;
    if enforce {
        enforce_bounds(&prep)?;
    }
    execute(&prep, config.algorithm, out_dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Alpha,
    Theta,
    Sigma2,
    N,
}

impl std::str::FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepParameter::Alpha),
            "theta" => Ok(SweepParameter::Theta),
            "sigma2" => Ok(SweepParameter::Sigma2),
            "n" => Ok(SweepParameter::N),
            _ => Err(Error::config("parameter", format!("unknown sweep parameter `{s}`"))),
        }
    }
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Alpha => "alpha",
            SweepParameter::Theta => "theta",
            SweepParameter::Sigma2 => "sigma2",
            SweepParameter::N => "n",
        }
    }

    /// A copy of `config` with this parameter set to `value`.
    pub fn apply(self, config: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = config.clone();
        match self {
            SweepParameter::Alpha => match &mut c.schedule {
                StepSchedule::Constant { alpha } => *alpha = value,
                _ => return Err(Error::config("schedule", "alpha sweeps need a constant schedule")),
            },
            SweepParameter::Theta => match &mut c.schedule {
                StepSchedule::Decaying { theta, .. } => *theta = value,
                _ => return Err(Error::config("schedule", "theta sweeps need a decaying schedule")),
            },
            SweepParameter::Sigma2 => match &mut c.objective {
                ObjectiveSpec::Quadratic { noise_sigma, .. } | ObjectiveSpec::RandomQuadratic { noise_sigma, .. } => {
                    if !(value >= 0.0) {
                        return Err(Error::config("values", "variances must be non-negative"));
                    }
                    *noise_sigma = value.sqrt();
                }
                ObjectiveSpec::Logistic { .. } => {
                    return Err(Error::config("objective", "sigma2 sweeps need a quadratic objective"))
                }
            },
            SweepParameter::N => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::config("values", format!("node count must be a positive integer, got {value}")));
                }
                match &mut c.graph {
                    GraphSpec::Exponential { n } | GraphSpec::Geometric { n, .. } => *n = value as usize,
                    GraphSpec::File { .. } => return Err(Error::config("graph", "n sweeps need a generated graph")),
                }
            }
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub value: f64,
    pub summary: ExperimentSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub parameter: SweepParameter,
    pub entries: Vec<SweepEntry>,
}

/// One experiment per value. With `out_dir`, value `i` writes into
/// `<parameter>_<i>/` and the table goes to `sweep.json`.
pub fn sweep(
    config: &ExperimentConfig,
    parameter: SweepParameter,
    values: &[f64],
    out_dir: Option<&Path>,
    enforce: bool,
) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(Error::config("values", "sweep needs at least one value"));
    }
    let mut entries = Vec::with_capacity(values.len());
    for (i, &value) in values.iter().enumerate() {
        let cfg = parameter.apply(config, value)?;
        let dir = out_dir.map(|d| d.join(format!("{}_{i}", parameter.name())));
        let report = run_experiment(&cfg, dir.as_deref(), enforce)?;
        entries.push(SweepEntry {
            value,
            summary: report.summary,
        });
    }
    let report = SweepReport { parameter, entries };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonEntry {
    pub algorithm: Algorithm,
    /// Replica-mean tail plateau of `e_k`.
    pub plateau_e_k: Option<f64>,
    pub terminal_e_k: Option<f64>,
    pub summary: ExperimentSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub entries: Vec<ComparisonEntry>,
    /// Algorithms ordered by plateau of `e_k`, then terminal `e_k`.
    pub ranking: Vec<Algorithm>,
}

/// Runs each algorithm on the same graph, objective, schedule and seed.
/// Traces share their recording grid; with `out_dir` each algorithm writes
/// into `<alg>/` and the table goes to `comparison.json`.
pub fn compare_algorithms(
    config: &ExperimentConfig,
    algs: &[Algorithm],
    out_dir: Option<&Path>,
    enforce: bool,
) -> Result<(Comparison, Vec<ExperimentReport>)> {
    if algs.is_empty() {
        return Err(Error::config("algorithms", "need at least one algorithm"));
    }
    let prep = prepare(config)?;
    if enforce {
        enforce_bounds(&prep)?;
    }
    let mut reports = Vec::with_capacity(algs.len());
    let mut entries = Vec::with_capacity(algs.len());
    for &alg in algs {
        let dir = out_dir.map(|d| d.join(alg.name()));
        let report = execute(&prep, alg, dir.as_deref())?;
        let s = &report.summary;
        entries.push(ComparisonEntry {
            algorithm: alg,
            plateau_e_k: s.plateaus.get(Metric::EK.name()).map(|p| p.mean),
            terminal_e_k: s.terminal.map(|t| t.e_k),
            summary: s.clone(),
        });
        reports.push(report);
    }
    let key = |e: &ComparisonEntry| {
        (
            e.plateau_e_k.filter(|v| v.is_finite()).unwrap_or(f64::INFINITY),
            e.terminal_e_k.filter(|v| v.is_finite()).unwrap_or(f64::INFINITY),
        )
    };
    let mut order: Vec<&ComparisonEntry> = entries.iter().collect();
    order.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap_or(std::cmp::Ordering::Equal));
    let ranking = order.iter().map(|e| e.algorithm).collect();
    let comparison = Comparison { entries, ranking };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("comparison.json"), serde_json::to_string_pretty(&comparison)?)?;
    }
    Ok((comparison, reports))
}

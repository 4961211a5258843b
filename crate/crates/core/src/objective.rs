//! Local costs `f_i`, their exact and stochastic gradient oracles, curvature
//! constants and reference minimizers.
//!
//! Two families are supported:
//!
//! * quadratics `f_i(z) = 1/2 (z - a_i)^T Q_i (z - a_i)` whose stochastic
//!   oracle adds isotropic Gaussian noise of known total variance `sigma^2`;
//! * regularized logistic regression over a local dataset, whose stochastic
//!   oracle samples one data point uniformly.
//!
//! The global cost is `F(z) = (1/n) sum_i f_i(z)`. For logistic costs the
//! parameter vector is `z = (b, c)` with the intercept `c` stored last and
//! left out of the `lambda/2 ||b||^2` regularizer.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Budget for the full-gradient descent used as the logistic `z*` oracle.
pub const REFERENCE_MAX_ITER: usize = 2_000_000;
pub const REFERENCE_TOL: f64 = 1e-12;

/// One labelled example. `label` is `+1` or `-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: f64,
}

#[derive(Debug, Clone)]
pub struct QuadraticCost {
    pub q: DMatrix<f64>,
    pub a: DVector<f64>,
}

#[derive(Debug, Clone)]
pub enum Objective {
    Quadratic {
        locals: Vec<QuadraticCost>,
        /// Standard deviation of the additive oracle noise (total over coordinates).
        noise_sigma: f64,
    },
    Logistic {
        locals: Vec<Vec<Sample>>,
        lambda: f64,
    },
}

/// Which randomness produced a stochastic gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Draw {
    /// Index of the sampled local data point.
    Component(usize),
    /// Additive Gaussian noise.
    Gaussian,
    /// No randomness (noise-free quadratic or single-sample dataset).
    Exact,
}

#[derive(Debug, Clone)]
pub struct SfoSample {
    pub gradient: DVector<f64>,
    pub node: usize,
    pub draw: Draw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Curvature {
    pub mu: f64,
    pub ell: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub z_star: DVector<f64>,
    pub f_star: f64,
    /// `||grad F(z*)||_2`.
    pub residual: f64,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

impl Objective {
    /// Quadratics with explicit matrices. Every `Q_i` must be symmetric
    /// positive definite and all dimensions must agree.
    pub fn quadratic(locals: Vec<QuadraticCost>, noise_sigma: f64) -> Result<Self> {
        if locals.is_empty() {
            return Err(Error::InvalidObjective("no local costs".into()));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::InvalidObjective(format!("noise sigma {noise_sigma} must be finite and >= 0")));
        }
        let p = locals[0].a.len();
        for (i, c) in locals.iter().enumerate() {
            if c.a.len() != p || c.q.nrows() != p || c.q.ncols() != p {
                return Err(Error::InvalidObjective(format!("node {i}: inconsistent dimensions")));
            }
            if (&c.q - c.q.transpose()).amax() > 1e-12 {
                return Err(Error::InvalidObjective(format!("node {i}: Q is not symmetric")));
            }
            if SymmetricEigen::new(c.q.clone()).eigenvalues.min() <= 0.0 {
                return Err(Error::InvalidObjective(format!("node {i}: Q is not positive definite")));
            }
        }
        Ok(Objective::Quadratic { locals, noise_sigma })
    }

    /// One-dimensional quadratics `f_i(z) = q_i/2 (z - a_i)^2`.
    pub fn quadratic_1d(curvatures: &[f64], centers: &[f64], noise_sigma: f64) -> Result<Self> {
        if curvatures.len() != centers.len() {
            return Err(Error::DimensionMismatch {
                expected: curvatures.len(),
                got: centers.len(),
            });
        }
        let locals = curvatures
            .iter()
            .zip(centers)
            .map(|(&q, &a)| QuadraticCost {
                q: DMatrix::from_element(1, 1, q),
                a: DVector::from_element(1, a),
            })
            .collect();
        Objective::quadratic(locals, noise_sigma)
    }

    /// Regularized logistic regression. `lambda` must be positive.
    pub fn logistic(locals: Vec<Vec<Sample>>, lambda: f64) -> Result<Self> {
        if locals.is_empty() {
            return Err(Error::InvalidObjective("no local datasets".into()));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidObjective(format!(
                "lambda = {lambda}: the logistic cost is only strongly convex for lambda > 0"
            )));
        }
        let mut width = None;
        for (i, data) in locals.iter().enumerate() {
            if data.is_empty() {
                return Err(Error::EmptyLocalDataset(i));
            }
            for s in data {
                if s.label != 1.0 && s.label != -1.0 {
                    return Err(Error::InvalidObjective(format!("node {i}: label {} is not +1/-1", s.label)));
                }
                match width {
                    None => width = Some(s.features.len()),
                    Some(w) if w != s.features.len() => {
                        return Err(Error::InvalidObjective(format!("node {i}: inconsistent feature width")))
                    }
                    _ => {}
                }
            }
        }
        Ok(Objective::Logistic { locals, lambda })
    }

    pub fn n(&self) -> usize {
        match self {
            Objective::Quadratic { locals, .. } => locals.len(),
            Objective::Logistic { locals, .. } => locals.len(),
        }
    }

    /// Dimension `p` of the decision variable.
    pub fn dim(&self) -> usize {
        match self {
            Objective::Quadratic { locals, .. } => locals[0].a.len(),
            Objective::Logistic { locals, .. } => locals[0][0].features.len() + 1,
        }
    }

    /// Number of local data points at `node` (1 for quadratics).
    pub fn local_size(&self, node: usize) -> usize {
        match self {
            Objective::Quadratic { .. } => 1,
            Objective::Logistic { locals, .. } => locals[node].len(),
        }
    }

    pub fn total_samples(&self) -> usize {
        (0..self.n()).map(|i| self.local_size(i)).sum()
    }

    pub fn is_finite_sum(&self) -> bool {
        matches!(self, Objective::Logistic { .. })
    }

    pub fn local_value(&self, node: usize, z: &[f64]) -> f64 {
        match self {
            Objective::Quadratic { locals, .. } => {
                let c = &locals[node];
                let d = DVector::from_column_slice(z) - &c.a;
                0.5 * d.dot(&(&c.q * &d))
            }
            Objective::Logistic { locals, lambda } => {
                let data = &locals[node];
                let (b, c) = z.split_at(z.len() - 1);
                let loss: f64 = data
                    .iter()
                    .map(|s| softplus(-s.label * (dot(b, &s.features) + c[0])))
                    .sum();
                loss / data.len() as f64 + 0.5 * lambda * dot(b, b)
            }
        }
    }

    /// `F(z) = (1/n) sum_i f_i(z)`.
    pub fn global_value(&self, z: &[f64]) -> f64 {
        (0..self.n()).map(|i| self.local_value(i, z)).sum::<f64>() / self.n() as f64
    }

    /// Writes `grad f_node(z)` into `out`.
    pub fn exact_gradient_into(&self, node: usize, z: &[f64], out: &mut [f64]) {
        match self {
            Objective::Quadratic { locals, .. } => {
                let c = &locals[node];
                let p = z.len();
                for (r, o) in out.iter_mut().enumerate() {
                    *o = (0..p).map(|k| c.q[(r, k)] * (z[k] - c.a[k])).sum();
                }
            }
            Objective::Logistic { locals, lambda } => {
                out.fill(0.0);
                let data = &locals[node];
                for s in data {
                    accumulate_component(z, s, out);
                }
                let m = data.len() as f64;
                out.iter_mut().for_each(|o| *o /= m);
                add_regularizer(*lambda, z, out);
            }
        }
    }

    pub fn exact_gradient(&self, node: usize, z: &DVector<f64>) -> DVector<f64> {
        let mut out = vec![0.0; z.len()];
        self.exact_gradient_into(node, z.as_slice(), &mut out);
        DVector::from_vec(out)
    }

    /// Writes one stochastic gradient of `f_node` at `z` into `out`.
    pub fn sfo_gradient_into<R: Rng + ?Sized>(&self, node: usize, z: &[f64], rng: &mut R, out: &mut [f64]) -> Draw {
        match self {
            Objective::Quadratic { noise_sigma, .. } => {
                self.exact_gradient_into(node, z, out);
                if *noise_sigma == 0.0 {
                    return Draw::Exact;
                }
                let scale = noise_sigma / (z.len() as f64).sqrt();
                for o in out.iter_mut() {
                    let e: f64 = rng.sample(StandardNormal);
                    *o += scale * e;
                }
                Draw::Gaussian
            }
            Objective::Logistic { locals, lambda } => {
                let data = &locals[node];
                let j = rng.random_range(0..data.len());
                out.fill(0.0);
                accumulate_component(z, &data[j], out);
                add_regularizer(*lambda, z, out);
                Draw::Component(j)
            }
        }
    }

    pub fn sfo_gradient<R: Rng + ?Sized>(&self, node: usize, z: &DVector<f64>, rng: &mut R) -> SfoSample {
        let mut out = vec![0.0; z.len()];
        let draw = self.sfo_gradient_into(node, z.as_slice(), rng, &mut out);
        SfoSample {
            gradient: DVector::from_vec(out),
            node,
            draw,
        }
    }

    /// `grad F(z)`.
    pub fn global_gradient(&self, z: &[f64]) -> DVector<f64> {
        let mut total = DVector::zeros(z.len());
        let mut buf = vec![0.0; z.len()];
        for i in 0..self.n() {
            self.exact_gradient_into(i, z, &mut buf);
            total += DVector::from_column_slice(&buf);
        }
        total / self.n() as f64
    }

    /// Strong convexity `mu`, smoothness `ell` and `kappa = ell / mu`.
    pub fn curvature_constants(&self) -> Result<Curvature> {
        let (mu, ell) = match self {
            Objective::Quadratic { locals, .. } => {
                let mut mu = f64::INFINITY;
                let mut ell = 0.0f64;
                for c in locals {
                    let ev = SymmetricEigen::new(c.q.clone()).eigenvalues;
                    mu = mu.min(ev.min());
                    ell = ell.max(ev.max());
                }
                (mu, ell)
            }
            Objective::Logistic { locals, lambda } => {
                if *lambda <= 0.0 {
                    return Err(Error::InvalidObjective("lambda must be positive".into()));
                }
                let mut worst = 0.0f64;
                for data in locals {
                    let gram = augmented_gram(data);
                    let top = SymmetricEigen::new(gram).eigenvalues.max();
                    worst = worst.max(top / (4.0 * data.len() as f64));
                }
                (*lambda, lambda + worst)
            }
        };
        Ok(Curvature {
            mu,
            ell,
            kappa: ell / mu,
        })
    }

    /// Exact `z*`: a direct solve for quadratics, full-gradient descent with
    /// step `1/ell` for logistic costs.
    pub fn reference_solution(&self, tol: f64) -> Result<ReferenceSolution> {
        let z_star = match self {
            Objective::Quadratic { locals, .. } => {
                let p = self.dim();
                let mut q_sum = DMatrix::zeros(p, p);
                let mut rhs = DVector::zeros(p);
                for c in locals {
                    q_sum += &c.q;
                    rhs += &c.q * &c.a;
                }
                q_sum
                    .cholesky()
                    .ok_or_else(|| Error::InvalidObjective("sum of Q_i is not positive definite".into()))?
                    .solve(&rhs)
            }
            Objective::Logistic { .. } => {
                let step = 1.0 / self.curvature_constants()?.ell;
                let mut z = DVector::zeros(self.dim());
                let mut g = self.global_gradient(z.as_slice());
                let mut iterations = 0;
                while g.norm() > tol {
                    if iterations == REFERENCE_MAX_ITER {
                        return Err(Error::SolverNotConverged {
                            iterations,
                            grad_norm: g.norm(),
                        });
                    }
                    z -= &g * step;
                    g = self.global_gradient(z.as_slice());
                    iterations += 1;
                }
                z
            }
        };
        let residual = self.global_gradient(z_star.as_slice()).norm();
        Ok(ReferenceSolution {
            f_star: self.global_value(z_star.as_slice()),
            z_star,
            residual,
        })
    }

    /// Variance bound `sigma^2` of the stochastic oracle.
    ///
    /// Quadratics report the configured noise variance. Logistic costs report
    /// the largest per-node variance of the sampled component gradient at
    /// `at` (typically `z*`), computed exactly over the local dataset.
    pub fn sfo_variance(&self, at: &[f64]) -> f64 {
        match self {
            Objective::Quadratic { noise_sigma, .. } => noise_sigma * noise_sigma,
            Objective::Logistic { locals, .. } => {
                let p = at.len();
                let mut worst = 0.0f64;
                for data in locals {
                    let mut comps = Vec::with_capacity(data.len());
                    let mut mean = vec![0.0; p];
                    for s in data {
                        let mut g = vec![0.0; p];
                        accumulate_component(at, s, &mut g);
                        mean.iter_mut().zip(&g).for_each(|(m, v)| *m += v);
                        comps.push(g);
                    }
                    let m = data.len() as f64;
                    mean.iter_mut().for_each(|v| *v /= m);
                    let var = comps
                        .iter()
                        .map(|g| g.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                        .sum::<f64>()
                        / m;
                    worst = worst.max(var);
                }
                worst
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// Adds the unregularized loss gradient of one sample.
fn accumulate_component(z: &[f64], s: &Sample, out: &mut [f64]) {
    let (b, c) = z.split_at(z.len() - 1);
    let t = s.label * (dot(b, &s.features) + c[0]);
    let coef = -s.label * sigmoid(-t);
    let d = s.features.len();
    for (o, x) in out[..d].iter_mut().zip(&s.features) {
        *o += coef * x;
    }
    out[d] += coef;
}

fn add_regularizer(lambda: f64, z: &[f64], out: &mut [f64]) {
    let d = z.len() - 1;
    for (o, b) in out[..d].iter_mut().zip(&z[..d]) {
        *o += lambda * b;
    }
}

fn augmented_gram(data: &[Sample]) -> DMatrix<f64> {
    let p = data[0].features.len() + 1;
    let x = DMatrix::from_fn(data.len(), p, |r, c| {
        if c + 1 == p {
            1.0
        } else {
            data[r].features[c]
        }
    });
    x.transpose() * x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionScheme {
    Balanced,
    /// Node shares drawn from a symmetric Dirichlet with this concentration.
    Unbalanced { concentration: f64 },
}

/// Splits `samples` over `n` nodes.
///
/// Samples are shuffled first. `Balanced` gives every node `N / n` points and
/// the first `N mod n` nodes one extra. `Unbalanced` gives each node one point
/// and distributes the rest multinomially with Dirichlet-drawn shares.
pub fn partition_dataset<R: Rng + ?Sized>(
    samples: &[Sample],
    n: usize,
    scheme: PartitionScheme,
    rng: &mut R,
) -> Result<Vec<Vec<Sample>>> {
    let total = samples.len();
    if n == 0 || total < n {
        return Err(Error::TooFewSamples { samples: total, nodes: n });
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(rng);

    let sizes: Vec<usize> = match scheme {
        PartitionScheme::Balanced => (0..n).map(|i| total / n + usize::from(i < total % n)).collect(),
        PartitionScheme::Unbalanced { concentration } => {
            if !(concentration > 0.0 && concentration.is_finite()) {
                return Err(Error::InvalidObjective(format!("concentration {concentration} must be positive")));
            }
            let gamma = Gamma::new(concentration, 1.0)
                .map_err(|e| Error::InvalidObjective(format!("concentration: {e}")))?;
            let weights: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
            let mut remaining_weight: f64 = weights.iter().sum();
            let mut remaining = total - n;
            let mut sizes = vec![1usize; n];
            for (i, w) in weights.iter().enumerate() {
                if remaining == 0 {
                    break;
                }
                let extra = if i + 1 == n || remaining_weight <= 0.0 {
                    remaining
                } else {
                    let p = (w / remaining_weight).clamp(0.0, 1.0);
                    Binomial::new(remaining as u64, p)
                        .map_err(|e| Error::InvalidObjective(format!("multinomial draw: {e}")))?
                        .sample(rng) as usize
                };
                sizes[i] += extra;
                remaining -= extra;
                remaining_weight -= w;
            }
            sizes
        }
    };

    let mut out = Vec::with_capacity(n);
    let mut cursor = 0;
    for size in sizes {
        out.push(order[cursor..cursor + size].iter().map(|&k| samples[k].clone()).collect());
        cursor += size;
    }
    Ok(out)
}

/// Two Gaussian classes in `dim` dimensions with means `+/- separation/2`
/// along the first axis. Used for desk-scale logistic experiments.
pub fn synthetic_logistic_samples<R: Rng + ?Sized>(count: usize, dim: usize, separation: f64, rng: &mut R) -> Vec<Sample> {
    (0..count)
        .map(|k| {
            let label = if k % 2 == 0 { 1.0 } else { -1.0 };
            let features = (0..dim)
                .map(|d| {
                    let e: f64 = rng.sample(StandardNormal);
                    if d == 0 {
                        e + label * separation / 2.0
                    } else {
                        e
                    }
                })
                .collect();
            Sample { features, label }
        })
        .collect()
}

/// Reads `label,f1,...,f{p-1}` rows. Labels must be `+1` or `-1`.
pub fn load_csv_dataset(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let fail = |message: String| Error::Dataset {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    if header.get(0) != Some("label") {
        return Err(fail("header must start with `label`".into()));
    }
    let width = header.len() - 1;
    let mut samples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        // header is line 1
        let line = row + 2;
        let record = record.map_err(|e| fail(format!("line {line}: {e}")))?;
        if record.len() != width + 1 {
            return Err(fail(format!(
                "line {line}: expected {} fields, found {}",
                width + 1,
                record.len()
            )));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| fail(format!("line {line}: `{s}` is not a number")))
        };
        let label = parse(&record[0])?;
        if label != 1.0 && label != -1.0 {
            return Err(fail(format!("line {line}: label {label} is not +1 or -1")));
        }
        let features = record.iter().skip(1).map(parse).collect::<Result<Vec<f64>>>()?;
        samples.push(Sample { features, label });
    }
    if samples.is_empty() {
        return Err(fail("no data rows".into()));
    }
    Ok(samples)
}

//! Maximum-likelihood estimation of isoform abundances.
//!
//! The objective is the Poisson log-likelihood
//!
//! ```text
//! ℓ(θ) = Σ_k n_k log(a^(k)·θ) − W·θ,     θ ≥ 0
//! ```
//!
//! which covers the raw form (one category per read type, `W = Σ_j a_j`),
//! the collapsed form (maximal collapsing, same `W`) and the reduced form
//! (observed categories only, closed-form `W`). It is concave, so any
//! stationary point satisfying the KKT conditions is a global maximum.
//!
//! Internally the solvers work in the scaled variable `u_i = θ_i W_i / N`
//! (`N = Σ_k n_k`) in which every isoform has unit total rate; the KKT
//! residual reported is `∂ℓ/∂θ_i / W_i`, which is invariant to rescaling
//! the rates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::collapse::CategorySet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    InteriorPoint,
    #[default]
    ProjectedNewton,
    Multiplicative,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interior-point" => Ok(Method::InteriorPoint),
            "projected-newton" => Ok(Method::ProjectedNewton),
            "multiplicative" => Ok(Method::Multiplicative),
            other => Err(Error::InvalidArgument(format!("unknown solver method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative objective change below which a stalled line search stops.
    pub objective_tol: f64,
    pub kkt_tol: f64,
    pub max_iters: usize,
    pub method: Method,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { objective_tol: 1e-12, kkt_tol: 1e-8, max_iters: 10_000, method: Method::ProjectedNewton }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub theta: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub method: Method,
}

impl ThetaEstimate {
    pub fn rpkm(&self) -> Vec<f64> {
        rpkm_scale(&self.theta)
    }
}

/// θ in RPKM-compatible units.
pub fn rpkm_scale(theta: &[f64]) -> Vec<f64> {
    theta.iter().map(|t| t * 1e9).collect()
}

fn check_dims(theta: &[f64], cats: &CategorySet, w: &[f64]) -> Result<()> {
    let i = cats.num_isoforms();
    for len in [theta.len(), w.len()] {
        if len != i {
            return Err(Error::Dimension { expected: i, got: len });
        }
    }
    if theta.iter().any(|&t| !(t >= 0.0)) {
        return Err(Error::InvalidArgument("θ must be nonnegative".into()));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ_k n_k log(a^(k)·θ) − W·θ`, dropping the `log n_k!` constants.
pub fn log_likelihood(theta: &[f64], cats: &CategorySet, w: &[f64]) -> Result<f64> {
    check_dims(theta, cats, w)?;
    let mut total = 0.0;
    for (k, (a, count)) in cats.rates().iter().zip(cats.counts()).enumerate() {
        if count == 0 {
            continue;
        }
        let mean = dot(a, theta);
        if mean <= 0.0 {
            return Err(Error::Infeasible { category: k, count });
        }
        total += count as f64 * mean.ln();
    }
    Ok(total - dot(w, theta))
}

/// `∂ℓ/∂θ_i = Σ_k n_k a^(k)_i / (a^(k)·θ) − W_i`.
pub fn gradient(theta: &[f64], cats: &CategorySet, w: &[f64]) -> Result<Vec<f64>> {
    check_dims(theta, cats, w)?;
    let mut g: Vec<f64> = w.iter().map(|x| -x).collect();
    for (k, (a, count)) in cats.rates().iter().zip(cats.counts()).enumerate() {
        if count == 0 {
            continue;
        }
        let mean = dot(a, theta);
        if mean <= 0.0 {
            return Err(Error::Infeasible { category: k, count });
        }
        let c = count as f64 / mean;
        for (gi, ai) in g.iter_mut().zip(a) {
            *gi += c * ai;
        }
    }
    Ok(g)
}

/// Largest KKT violation, each coordinate scaled by `W_i`: `|∂ℓ/∂θ_i|` where
/// `θ_i > 0`, and the positive part of `∂ℓ/∂θ_i` where `θ_i = 0`.
pub fn kkt_residual(theta: &[f64], cats: &CategorySet, w: &[f64]) -> Result<f64> {
    let g = gradient(theta, cats, w)?;
    Ok(strict_residual(theta, &g.iter().zip(w).map(|(g, w)| g / w).collect::<Vec<_>>()))
}

fn strict_residual(x: &[f64], g: &[f64]) -> f64 {
    x.iter().zip(g).map(|(&x, &g)| if x > 0.0 { g.abs() } else { g.max(0.0) }).fold(0.0, f64::max)
}

/// The likelihood in scaled coordinates, normalized by the total count:
/// `f(u) = Σ_k w_k log(b_k·u) − Σ_i u_i` with `Σ_k w_k = 1`.
struct Scaled {
    rows: Vec<Vec<f64>>,
    weights: Vec<f64>,
    /// θ_i = tau_i u_i
    tau: Vec<f64>,
    dim: usize,
}

struct Eval {
    f: f64,
    g: Vec<f64>,
    means: Vec<f64>,
}

impl Scaled {
    fn new(cats: &CategorySet, w: &[f64], total: f64) -> Self {
        let tau: Vec<f64> = w.iter().map(|wi| total / wi).collect();
        let mut rows = Vec::new();
        let mut weights = Vec::new();
        for (a, count) in cats.rates().into_iter().zip(cats.counts()) {
            if count == 0 {
                continue;
            }
            rows.push(a.iter().zip(&tau).map(|(a, t)| a * t).collect());
            weights.push(count as f64 / total);
        }
        Scaled { rows, weights, tau, dim: w.len() }
    }

    fn value(&self, u: &[f64]) -> f64 {
        let mut f = -u.iter().sum::<f64>();
        for (b, wk) in self.rows.iter().zip(&self.weights) {
            let m = dot(b, u);
            if m <= 0.0 {
                return f64::NEG_INFINITY;
            }
            f += wk * m.ln();
        }
        f
    }

    fn eval(&self, u: &[f64]) -> Option<Eval> {
        let mut f = -u.iter().sum::<f64>();
        let mut g = vec![-1.0; self.dim];
        let mut means = Vec::with_capacity(self.rows.len());
        for (b, wk) in self.rows.iter().zip(&self.weights) {
            let m = dot(b, u);
            if m <= 0.0 {
                return None;
            }
            f += wk * m.ln();
            for (gi, bi) in g.iter_mut().zip(b) {
                *gi += wk * bi / m;
            }
            means.push(m);
        }
        Some(Eval { f, g, means })
    }

    /// Negated Hessian restricted to `free`.
    fn neg_hessian(&self, means: &[f64], free: &[usize]) -> DMatrix<f64> {
        let nf = free.len();
        let mut h = DMatrix::zeros(nf, nf);
        for ((b, wk), m) in self.rows.iter().zip(&self.weights).zip(means) {
            let c = wk / (m * m);
            for (p, &i) in free.iter().enumerate() {
                if b[i] == 0.0 {
                    continue;
                }
                for (q, &j) in free.iter().enumerate().skip(p) {
                    h[(p, q)] += c * b[i] * b[j];
                }
            }
        }
        for p in 0..nf {
            for q in 0..p {
                h[(p, q)] = h[(q, p)];
            }
        }
        h
    }

    fn unscale(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.tau).map(|(u, t)| u * t).collect()
    }
}

/// Solves `M d = g` for symmetric positive semidefinite `M`, adding a ridge
/// when `M` is singular.
fn solve_psd(m: DMatrix<f64>, g: &[f64]) -> Option<Vec<f64>> {
    let rhs = DVector::from_column_slice(g);
    let scale = (0..m.nrows()).map(|i| m[(i, i)]).fold(0.0, f64::max).max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..12 {
        let mut shifted = m.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += ridge;
        }
        if let Some(chol) = shifted.cholesky() {
            let d = chol.solve(&rhs);
            if d.iter().all(|x| x.is_finite()) {
                return Some(d.iter().copied().collect());
            }
        }
        ridge = if ridge == 0.0 { scale * 1e-12 } else { ridge * 100.0 };
    }
    None
}

struct Outcome {
    u: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Pins tiny coordinates with nonpositive gradient to exactly zero.
fn pin(prob: &Scaled, u: &mut [f64], g: &[f64]) -> bool {
    let total: f64 = u.iter().sum();
    let mut changed = false;
    for i in 0..u.len() {
        if u[i] > 0.0 && u[i] < 1e-15 * total && g[i] <= 0.0 {
            let keep = u[i];
            u[i] = 0.0;
            if prob.value(u) == f64::NEG_INFINITY {
                u[i] = keep;
            } else {
                changed = true;
            }
        }
    }
    changed
}

fn projected_newton(prob: &Scaled, mut u: Vec<f64>, opts: &SolverOptions, start_iter: usize) -> Outcome {
    let mut iter = start_iter;
    let mut idle = 0;
    while iter < opts.max_iters {
        let mut ev = prob.eval(&u).expect("iterate stays feasible");
        if pin(prob, &mut u, &ev.g) {
            ev = prob.eval(&u).expect("pinning keeps feasibility");
        }
        let res = strict_residual(&u, &ev.g);
        if res <= opts.kkt_tol {
            return Outcome { u, iterations: iter, converged: true };
        }
        iter += 1;

        let eps = res.min(1e-3);
        let (active, free): (Vec<usize>, Vec<usize>) = (0..prob.dim).partition(|&i| u[i] <= eps && ev.g[i] <= 0.0);
        let mut dir = vec![0.0; prob.dim];
        for &i in &active {
            dir[i] = -u[i];
        }
        let mut newton_ok = false;
        if !free.is_empty() {
            let gf: Vec<f64> = free.iter().map(|&i| ev.g[i]).collect();
            if let Some(d) = solve_psd(prob.neg_hessian(&ev.means, &free), &gf) {
                for (&i, di) in free.iter().zip(d) {
                    dir[i] = di;
                }
                newton_ok = true;
            }
        }

        let project = |t: f64| -> Vec<f64> { u.iter().zip(&dir).map(|(x, d)| (x + t * d).max(0.0)).collect() };
        let mut accepted = None;
        if newton_ok || !active.is_empty() {
            // Close to the optimum the objective gain drops below rounding
            // error, so a full step is also taken when it halves the residual.
            let full = project(1.0);
            let fc = prob.value(&full);
            let rounding = 1e-14 * ev.f.abs().max(1.0);
            if fc.is_finite() && fc >= ev.f - rounding {
                if let Some(evc) = prob.eval(&full) {
                    if strict_residual(&full, &evc.g) <= 0.5 * res {
                        accepted = Some((full, fc));
                    }
                }
            }
            let mut t = 1.0;
            while accepted.is_none() && t > 1e-12 {
                let cand = project(t);
                let fc = prob.value(&cand);
                let pred: f64 = ev.g.iter().zip(cand.iter().zip(&u)).map(|(g, (c, x))| g * (c - x)).sum();
                if fc.is_finite() && fc >= ev.f + 1e-4 * pred.max(0.0) && fc >= ev.f {
                    accepted = Some((cand, fc));
                }
                t *= 0.5;
            }
        }
        // Fall back to a multiplicative step, which never decreases f.
        let (cand, fc) = accepted.unwrap_or_else(|| {
            let cand: Vec<f64> = u.iter().zip(&ev.g).map(|(x, g)| x * (1.0 + g)).collect();
            let fc = prob.value(&cand);
            (cand, fc)
        });
        let moved = cand.iter().zip(&u).any(|(a, b)| a != b);
        let stalled = (fc - ev.f).abs() <= opts.objective_tol * ev.f.abs().max(1.0);
        let new_res = prob.eval(&cand).map_or(f64::INFINITY, |e| strict_residual(&cand, &e.g));
        u = cand;
        idle = if stalled && new_res >= res { idle + 1 } else { 0 };
        if !moved || idle >= 5 {
            return Outcome { u, iterations: iter, converged: new_res <= opts.kkt_tol };
        }
    }
    let converged = prob.eval(&u).is_some_and(|ev| strict_residual(&u, &ev.g) <= opts.kkt_tol);
    Outcome { u, iterations: iter, converged }
}

fn multiplicative(prob: &Scaled, mut u: Vec<f64>, opts: &SolverOptions) -> Outcome {
    let floor = opts.kkt_tol * 1e-2;
    for iter in 0..opts.max_iters {
        let ev = prob.eval(&u).expect("multiplicative updates stay feasible");
        // zero coordinates that are tiny and pushed down; revive any zero
        // coordinate whose gradient turned positive
        for i in 0..prob.dim {
            if u[i] > 0.0 && u[i] < floor && ev.g[i] < 0.0 {
                let keep = u[i];
                u[i] = 0.0;
                if prob.value(&u) == f64::NEG_INFINITY {
                    u[i] = keep;
                }
            } else if u[i] == 0.0 && ev.g[i] > opts.kkt_tol {
                u[i] = floor;
            }
        }
        let ev = prob.eval(&u).expect("feasible");
        if strict_residual(&u, &ev.g) <= opts.kkt_tol {
            return Outcome { u, iterations: iter, converged: true };
        }
        for (x, g) in u.iter_mut().zip(&ev.g) {
            *x *= 1.0 + g;
        }
    }
    let converged = prob.eval(&u).is_some_and(|ev| strict_residual(&u, &ev.g) <= opts.kkt_tol);
    Outcome { u, iterations: opts.max_iters, converged }
}

/// Log-barrier path following, finished by projected-Newton polishing so the
/// zero coordinates land exactly on the boundary.
fn interior_point(prob: &Scaled, mut u: Vec<f64>, opts: &SolverOptions) -> Outcome {
    let all: Vec<usize> = (0..prob.dim).collect();
    let mut mu = 1e-1;
    let mut iter = 0;
    let barrier = |u: &[f64], mu: f64| prob.value(u) + mu * u.iter().map(|x| x.ln()).sum::<f64>();
    while mu > opts.kkt_tol * 1e-2 && iter < opts.max_iters {
        for _ in 0..50 {
            if iter >= opts.max_iters {
                break;
            }
            iter += 1;
            let ev = prob.eval(&u).expect("interior iterate is feasible");
            let grad: Vec<f64> = ev.g.iter().zip(&u).map(|(g, x)| g + mu / x).collect();
            let mut h = prob.neg_hessian(&ev.means, &all);
            for i in 0..prob.dim {
                h[(i, i)] += mu / (u[i] * u[i]);
            }
            let Some(d) = solve_psd(h, &grad) else { break };
            let decrement: f64 = grad.iter().zip(&d).map(|(g, d)| g * d).sum();
            if decrement < 1e-3 * mu {
                break;
            }
            // fraction to the boundary
            let mut t: f64 = 1.0;
            for (x, di) in u.iter().zip(&d) {
                if *di < 0.0 {
                    t = t.min(-0.99 * x / di);
                }
            }
            let phi = barrier(&u, mu);
            loop {
                let cand: Vec<f64> = u.iter().zip(&d).map(|(x, di)| x + t * di).collect();
                let pc = barrier(&cand, mu);
                if pc.is_finite() && pc >= phi + 1e-4 * t * decrement {
                    u = cand;
                    break;
                }
                t *= 0.5;
                if t < 1e-14 {
                    break;
                }
            }
        }
        mu *= 0.1;
    }
    projected_newton(prob, u, opts, iter)
}

/// Maximizes the log-likelihood over θ ≥ 0.
///
/// Returns an estimate with `converged = false` when the iteration budget
/// runs out before the KKT residual drops below `kkt_tol`.
/// An empty category set (no observed reads in the reduced form) is the
/// all-zero case: the objective is `-W·θ` and the estimate is 0.
pub fn solve_mle(cats: &CategorySet, w: &[f64], opts: &SolverOptions) -> Result<ThetaEstimate> {
    let dim = cats.num_isoforms();
    if w.len() != dim {
        return Err(Error::Dimension { expected: dim, got: w.len() });
    }
    if w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidArgument("W must be positive and finite".into()));
    }
    if !(opts.kkt_tol > 0.0 && opts.objective_tol > 0.0) {
        return Err(Error::InvalidArgument("solver tolerances must be positive".into()));
    }
    let total = cats.total_count() as f64;
    if total == 0.0 {
        return Ok(ThetaEstimate {
            theta: vec![0.0; dim],
            objective: 0.0,
            kkt_residual: 0.0,
            iterations: 0,
            converged: true,
            method: opts.method,
        });
    }
    let prob = Scaled::new(cats, w, total);
    let start = vec![1.0 / dim as f64; dim];
    let out = match opts.method {
        Method::ProjectedNewton => projected_newton(&prob, start, opts, 0),
        Method::Multiplicative => multiplicative(&prob, start, opts),
        Method::InteriorPoint => interior_point(&prob, start, opts),
    };
    let theta = prob.unscale(&out.u);
    Ok(ThetaEstimate {
        objective: log_likelihood(&theta, cats, w)?,
        kkt_residual: kkt_residual(&theta, cats, w)?,
        theta,
        iterations: out.iterations,
        converged: out.converged,
        method: opts.method,
    })
}

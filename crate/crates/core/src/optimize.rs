//! Derivative-free maximization with a Nelder–Mead simplex.
//!
//! Objectives may refuse a point by returning [`Evaluation::Rejected`]; a
//! rejected point ranks below every finite value, so the simplex retreats from
//! inadmissible regions instead of failing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

const REFLECTION: f64 = 1.0;
const EXPANSION: f64 = 2.0;
const CONTRACTION: f64 = 0.5;
const SHRINK: f64 = 0.5;
const MAX_INITIAL_PERTURBATIONS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluation {
    Value(f64),
    Rejected,
}

impl Evaluation {
    /// The value, with rejected and NaN points mapped to `-inf`.
    #[inline]
    pub fn score(self) -> f64 {
        match self {
            Evaluation::Value(v) if !v.is_nan() => v,
            _ => f64::NEG_INFINITY,
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Evaluation::Value(v) if v.is_finite() => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub initial: ModelParams,
    /// Absolute step added to each coordinate to build the initial simplex.
    pub initial_simplex_scale: f64,
    pub tol_f: f64,
    pub tol_x: f64,
    pub max_evals: usize,
    pub restarts: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self::for_dim(1)
    }
}

impl SearchConfig {
    pub fn for_dim(dim: usize) -> Self {
        SearchConfig {
            initial: ModelParams::zeros(dim),
            initial_simplex_scale: 0.1,
            tol_f: 1e-10,
            tol_x: 1e-8,
            max_evals: 2000 * dim.max(1),
            restarts: 2,
        }
    }

    pub fn with_initial(mut self, initial: ModelParams) -> Self {
        self.initial = initial;
        self
    }

    /// Adapts the starting point and budget to a new dimension, keeping the
    /// tolerances. Used when a configuration written for one model is applied
    /// to another.
    pub fn fitted_to(&self, dim: usize) -> Self {
        if self.initial.dim() == dim {
            return self.clone();
        }
        SearchConfig {
            initial: ModelParams::zeros(dim),
            max_evals: self.max_evals.max(dim + 1),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.initial.dim();
        if p == 0 {
            return Err(Error::InvalidConfig("search needs at least one parameter".into()));
        }
        if !(self.tol_f > 0.0 && self.tol_x > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if !(self.initial_simplex_scale > 0.0 && self.initial_simplex_scale.is_finite()) {
            return Err(Error::InvalidConfig("initial simplex scale must be positive".into()));
        }
        if self.max_evals < p + 1 {
            return Err(Error::InvalidConfig(format!("max_evals must be at least {}", p + 1)));
        }
        if self.initial.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("initial point must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub argmax: ModelParams,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
    pub rejected_fraction: f64,
}

struct Counter<F> {
    f: F,
    evals: usize,
    rejected: usize,
    budget: usize,
    best: f64,
}

impl<F: Fn(&[f64]) -> Evaluation> Counter<F> {
    /// `None` once the budget is spent.
    fn eval(&mut self, x: &[f64]) -> Option<f64> {
        if self.evals >= self.budget {
            return None;
        }
        self.evals += 1;
        let v = (self.f)(x).score();
        if v == f64::NEG_INFINITY {
            self.rejected += 1;
        }
        if v > self.best {
            self.best = v;
        }
        Some(v)
    }
}

#[derive(Clone)]
struct Vertex {
    x: Vec<f64>,
    v: f64,
}

enum RunEnd {
    Converged,
    Budget,
}

fn sort_simplex(simplex: &mut [Vertex]) {
    // descending by value; stable so ties keep their positions
    simplex.sort_by(|a, b| b.v.total_cmp(&a.v));
}

fn has_converged(simplex: &[Vertex], tol_x: f64, tol_f: f64) -> bool {
    let best = &simplex[0];
    simplex[1..].iter().all(|vx| {
        (best.v - vx.v).abs() <= tol_f
            && vx.x.iter().zip(&best.x).all(|(a, b)| (a - b).abs() <= tol_x)
    })
}

fn run_simplex<F: Fn(&[f64]) -> Evaluation>(
    counter: &mut Counter<F>,
    start: Vertex,
    config: &SearchConfig,
) -> (Vertex, RunEnd) {
    let n = start.x.len();
    let mut simplex = Vec::with_capacity(n + 1);
    simplex.push(start.clone());
    for i in 0..n {
        let mut x = start.x.clone();
        x[i] += config.initial_simplex_scale;
        match counter.eval(&x) {
            Some(v) => simplex.push(Vertex { x, v }),
            None => return (start, RunEnd::Budget),
        }
    }
    sort_simplex(&mut simplex);

    let mut centroid = vec![0.0; n];
    let point = |c: &[f64], toward: &[f64], t: f64| -> Vec<f64> {
        c.iter().zip(toward).map(|(ci, ti)| ci + t * (ti - ci)).collect()
    };
    loop {
        if has_converged(&simplex, config.tol_x, config.tol_f) {
            return (simplex[0].clone(), RunEnd::Converged);
        }
        centroid.iter_mut().for_each(|c| *c = 0.0);
        for vx in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(&vx.x) {
                *c += xi / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let reflected = point(&centroid, &worst.x, -REFLECTION);
        let Some(vr) = counter.eval(&reflected) else {
            return (simplex[0].clone(), RunEnd::Budget);
        };
        let mut replacement = None;
        if vr > simplex[0].v {
            let expanded = point(&centroid, &reflected, EXPANSION);
            let Some(ve) = counter.eval(&expanded) else {
                return (simplex[0].clone(), RunEnd::Budget);
            };
            replacement = Some(if ve > vr {
                Vertex { x: expanded, v: ve }
            } else {
                Vertex { x: reflected, v: vr }
            });
        } else if vr > simplex[n - 1].v {
            replacement = Some(Vertex { x: reflected, v: vr });
        } else if vr > worst.v {
            let outside = point(&centroid, &reflected, CONTRACTION);
            let Some(vc) = counter.eval(&outside) else {
                return (simplex[0].clone(), RunEnd::Budget);
            };
            if vc >= vr {
                replacement = Some(Vertex { x: outside, v: vc });
            }
        } else {
            let inside = point(&centroid, &worst.x, CONTRACTION);
            let Some(vcc) = counter.eval(&inside) else {
                return (simplex[0].clone(), RunEnd::Budget);
            };
            if vcc > worst.v {
                replacement = Some(Vertex { x: inside, v: vcc });
            }
        }
        match replacement {
            Some(vx) => simplex[n] = vx,
            None => {
                let best = simplex[0].x.clone();
                for vx in simplex[1..].iter_mut() {
                    let x = point(&best, &vx.x, SHRINK);
                    let Some(v) = counter.eval(&x) else {
                        sort_simplex(&mut simplex);
                        return (simplex[0].clone(), RunEnd::Budget);
                    };
                    *vx = Vertex { x, v };
                }
            }
        }
        sort_simplex(&mut simplex);
    }
}

/// Maximizes `f` from `config.initial`.
///
/// If the initial point is rejected it is perturbed along `±(1, …, 1)` with
/// doubling step sizes, up to 32 times. After a run converges the simplex is
/// re-seeded at the incumbent up to `config.restarts` times; restarting stops
/// early once a run fails to improve the incumbent by more than `tol_f`.
/// Running out of budget is reported through `converged = false`.
pub fn maximize<F>(f: F, config: &SearchConfig) -> Result<SearchResult>
where
    F: Fn(&[f64]) -> Evaluation,
{
    config.validate()?;
    let mut counter =
        Counter { f, evals: 0, rejected: 0, budget: config.max_evals, best: f64::NEG_INFINITY };
    let x0 = config.initial.as_slice().to_vec();
    let mut start = None;
    for k in 0..=MAX_INITIAL_PERTURBATIONS {
        let x = if k == 0 {
            x0.clone()
        } else {
            let step = config.initial_simplex_scale * 2f64.powi(((k - 1) / 2) as i32);
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            x0.iter().map(|v| v + sign * step).collect()
        };
        match counter.eval(&x) {
            Some(v) if v > f64::NEG_INFINITY => {
                start = Some(Vertex { x, v });
                break;
            }
            Some(_) => {}
            None => break,
        }
    }
    let Some(mut incumbent) = start else {
        return Err(Error::InitialPointRejected);
    };

    let (best, mut end) = run_simplex(&mut counter, incumbent.clone(), config);
    incumbent = best;
    for _ in 0..config.restarts {
        if matches!(end, RunEnd::Budget) {
            break;
        }
        let previous = incumbent.v;
        let (best, e) = run_simplex(&mut counter, incumbent.clone(), config);
        end = e;
        if best.v > incumbent.v {
            incumbent = best;
        }
        if !(incumbent.v - previous > config.tol_f) {
            break;
        }
    }
    debug_assert!(counter.best >= incumbent.v);
    Ok(SearchResult {
        argmax: ModelParams(incumbent.x),
        value: incumbent.v,
        evals: counter.evals,
        converged: matches!(end, RunEnd::Converged),
        rejected_fraction: counter.rejected as f64 / counter.evals as f64,
    })
}

/// Exhaustive search over `lo + k·step ≤ hi`, returning the best point and value.
pub fn grid_search<F: Fn(f64) -> Evaluation>(f: F, lo: f64, hi: f64, step: f64) -> (f64, f64) {
    let count = ((hi - lo) / step).round() as usize;
    let mut best = (lo, f64::NEG_INFINITY);
    for k in 0..=count {
        let x = lo + k as f64 * step;
        let v = f(x).score();
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::cell::RefCell;

    fn config(initial: Vec<f64>) -> SearchConfig {
        SearchConfig::for_dim(initial.len()).with_initial(ModelParams(initial))
    }

    #[test]
    fn scalar_quadratic() {
        let r = maximize(|b| Evaluation::Value(-(b[0] - 1.0).powi(2)), &config(vec![0.0])).unwrap();
        assert!(r.converged);
        assert!((r.argmax.0[0] - 1.0).abs() < 1e-6);
        assert_eq!(r.rejected_fraction, 0.0);
    }

    #[test]
    fn guarded_bowl() {
        let f = |b: &[f64]| {
            let r2 = b[0] * b[0] + b[1] * b[1];
            if r2.sqrt() > 10.0 {
                Evaluation::Rejected
            } else {
                Evaluation::Value(-r2)
            }
        };
        let r = maximize(f, &config(vec![3.0, 4.0])).unwrap();
        assert!(r.converged);
        assert!(r.argmax.0.iter().all(|v| v.abs() < 1e-6), "{:?}", r.argmax);
    }

    #[test]
    fn rejected_start_is_perturbed() {
        // admissible only for b > 0.25
        let f = |b: &[f64]| {
            if b[0] <= 0.25 {
                Evaluation::Rejected
            } else {
                Evaluation::Value(-(b[0] - 2.0).powi(2))
            }
        };
        let r = maximize(f, &config(vec![0.0])).unwrap();
        assert!((r.argmax.0[0] - 2.0).abs() < 1e-6);
        assert!(r.rejected_fraction > 0.0);

        let never = maximize(|_| Evaluation::Rejected, &config(vec![0.0]));
        assert!(matches!(never, Err(Error::InitialPointRejected)));
    }

    #[test]
    fn budget_exhaustion_is_not_an_error() {
        let mut c = config(vec![0.0, 0.0]);
        c.max_evals = 10;
        let r = maximize(|b| Evaluation::Value(-(b[0] - 5.0).powi(2) - b[1].powi(2)), &c).unwrap();
        assert!(!r.converged);
        assert_eq!(r.evals, 10);
        assert!(r.value.is_finite());
    }

    #[test]
    fn flat_objective_converges() {
        let r = maximize(|_| Evaluation::Value(0.0), &config(vec![0.3])).unwrap();
        assert!(r.converged);
        assert!((r.argmax.0[0] - 0.3).abs() <= 0.1);
    }

    #[test]
    fn invalid_configs() {
        let mut c = config(vec![0.0]);
        c.tol_x = 0.0;
        assert!(matches!(maximize(|_| Evaluation::Value(0.0), &c), Err(Error::InvalidConfig(_))));
        let mut c = config(vec![0.0, 0.0]);
        c.max_evals = 2;
        assert!(matches!(maximize(|_| Evaluation::Value(0.0), &c), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn incumbent_never_decreases() {
        let trace = RefCell::new(Vec::new());
        let f = |b: &[f64]| {
            let v = -(b[0] - 0.7).powi(2) - 3.0 * (b[1] + 0.2).powi(4) + (3.0 * b[0]).sin() * 0.01;
            trace.borrow_mut().push(v);
            Evaluation::Value(v)
        };
        let r = maximize(f, &config(vec![0.0, 0.0])).unwrap();
        let trace = trace.into_inner();
        let mut best = f64::NEG_INFINITY;
        let mut bests = Vec::new();
        for v in &trace {
            best = best.max(*v);
            bests.push(best);
        }
        assert!(bests.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(r.value, best);
        assert_eq!(trace.len(), r.evals);
    }

    #[test]
    fn deterministic() {
        let f = |b: &[f64]| Evaluation::Value(-(b[0] - 0.123).powi(2) - (b[0] * b[1] - 1.0).powi(2));
        let a = maximize(f, &config(vec![0.5, 0.5])).unwrap();
        let b = maximize(f, &config(vec![0.5, 0.5])).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn grid() {
        let (x, v) = grid_search(|b| Evaluation::Value(-(b + 0.4).powi(2)), -1.0, 0.0, 1e-4);
        assert!((x + 0.4).abs() < 1e-9);
        assert!(v > -1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn translation_equivariance(c0 in -5.0f64..5.0, c1 in -5.0f64..5.0) {
            let f = |b: &[f64]| Evaluation::Value(-(b[0] - 0.5).powi(2) - 2.0 * (b[1] + 0.25).powi(2) - 0.5 * b[0] * b[1]);
            let base = maximize(f, &config(vec![0.0, 0.0])).unwrap();
            let g = |b: &[f64]| f(&[b[0] - c0, b[1] - c1]);
            let shifted = maximize(g, &config(vec![c0, c1])).unwrap();
            prop_assert!((shifted.argmax.0[0] - c0 - base.argmax.0[0]).abs() <= 1e-8);
            prop_assert!((shifted.argmax.0[1] - c1 - base.argmax.0[1]).abs() <= 1e-8);
        }
    }
}

//! Nelder–Mead with box constraints.
//!
//! Bounds are enforced by reparameterization: the simplex moves in
//! unconstrained coordinates `y` and every trial point is mapped back through
//! `x = lb + (ub - lb) sin^2(y)`, so the objective only ever sees feasible
//! points and no clipping distorts the landscape.
//!
//! A single run is sequential. The objective is an `FnMut`, so concurrent
//! multi-start runs need independent objective instances (or a `Fn` that is
//! safe to share); this module never invokes one objective from two threads.

use crate::error::{invalid, Result};

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOptions {
    /// Total evaluation budget over all restarts; `None` means `400 d`.
    pub max_evals: Option<usize>,
    /// Simplex diameter (max-norm, in `x`) below which a run stops.
    pub x_tol: f64,
    /// Spread of vertex values below which a run stops.
    pub f_tol: f64,
    /// Initial edge length as a fraction of each box width.
    pub initial_step: f64,
    /// Additional runs from the best point with a fresh simplex.
    pub restarts: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { max_evals: None, x_tol: 1e-8, f_tol: 1e-8, initial_step: 0.05, restarts: 0 }
    }
}

impl SimplexOptions {
    pub fn budget(&self, dim: usize) -> usize {
        self.max_evals.unwrap_or(400 * dim.max(1))
    }
}

/// Box-constrained objective.
pub struct BoundedObjective<F> {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective: F,
}

impl<F: FnMut(&[f64]) -> f64> BoundedObjective<F> {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, objective: F) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(invalid("bound vectors differ in length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(invalid("every lower bound must be finite and below its upper bound"));
        }
        Ok(Self { lower, upper, objective })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn to_box(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(i, &yi)| {
                let s = yi.sin();
                (self.lower[i] + (self.upper[i] - self.lower[i]) * s * s).clamp(self.lower[i], self.upper[i])
            })
            .collect()
    }

    pub fn from_box(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &xi)| {
                let t = ((xi - self.lower[i]) / (self.upper[i] - self.lower[i])).clamp(0.0, 1.0);
                t.sqrt().asin()
            })
            .collect()
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        let v = (self.objective)(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    /// The last run met both tolerances before the budget ran out.
    pub converged: bool,
    /// `x0` was outside the box and had to be clamped.
    pub clamped_start: bool,
    /// Best value after each iteration of every run.
    pub best_trace: Vec<f64>,
    /// Best value at the end of each run (first run, then restarts).
    pub run_values: Vec<f64>,
}

struct Vertex {
    y: Vec<f64>,
    x: Vec<f64>,
    f: f64,
    id: u64,
}

pub fn minimize_bounded<F: FnMut(&[f64]) -> f64>(
    obj: &mut BoundedObjective<F>,
    x0: &[f64],
    opts: &SimplexOptions,
) -> Result<SimplexResult> {
    let d = obj.dim();
    if x0.len() != d {
        return Err(invalid("start point has the wrong dimension"));
    }
    if !(opts.x_tol > 0.0 && opts.f_tol > 0.0) {
        return Err(invalid("tolerances must be positive"));
    }
    if !(opts.initial_step > 0.0) {
        return Err(invalid("initial step must be positive"));
    }
    let budget = opts.budget(d);
    if budget < d + 1 {
        return Err(invalid(format!("evaluation budget {budget} is below d + 1 = {}", d + 1)));
    }

    let clamped: Vec<f64> = x0.iter().enumerate().map(|(i, &v)| v.clamp(obj.lower[i], obj.upper[i])).collect();
    let clamped_start = clamped.iter().zip(x0).any(|(a, b)| a != b);

    let mut result = SimplexResult {
        x: clamped.clone(),
        f: f64::INFINITY,
        evals: 0,
        converged: false,
        clamped_start,
        best_trace: Vec::new(),
        run_values: Vec::new(),
    };
    let mut start = clamped;
    for _run in 0..=opts.restarts {
        if result.evals + d + 1 > budget {
            break;
        }
        let converged = single_run(obj, &start, opts, budget, &mut result);
        result.converged = converged;
        result.run_values.push(result.f);
        start = result.x.clone();
        if !converged {
            break;
        }
    }
    Ok(result)
}

fn single_run<F: FnMut(&[f64]) -> f64>(
    obj: &mut BoundedObjective<F>,
    x0: &[f64],
    opts: &SimplexOptions,
    budget: usize,
    out: &mut SimplexResult,
) -> bool {
    let d = obj.dim();
    let mut next_id = 0u64;
    let mut evaluate = |obj: &mut BoundedObjective<F>, y: Vec<f64>, out: &mut SimplexResult| -> Vertex {
        let x = obj.to_box(&y);
        let f = obj.eval(&x);
        out.evals += 1;
        if f < out.f {
            out.f = f;
            out.x = x.clone();
        }
        next_id += 1;
        Vertex { y, x, f, id: next_id }
    };

    let y0 = obj.from_box(x0);
    let mut simplex = Vec::with_capacity(d + 1);
    simplex.push(evaluate(obj, y0.clone(), out));
    for i in 0..d {
        let width = obj.upper[i] - obj.lower[i];
        let step = opts.initial_step * width;
        let mut xi = x0.to_vec();
        xi[i] = if x0[i] + step <= obj.upper[i] { x0[i] + step } else { x0[i] - step };
        let mut yi = y0.clone();
        yi[i] = obj.from_box(&xi)[i];
        if yi[i] == y0[i] {
            yi[i] += 0.1;
        }
        simplex.push(evaluate(obj, yi, out));
    }

    let order = |s: &mut Vec<Vertex>| s.sort_by(|a, b| a.f.total_cmp(&b.f).then(a.id.cmp(&b.id)));
    loop {
        order(&mut simplex);
        out.best_trace.push(out.f);
        let best = &simplex[0];
        let f_spread = simplex.iter().map(|v| (v.f - best.f).abs()).fold(0.0, f64::max);
        let x_spread = simplex
            .iter()
            .flat_map(|v| v.x.iter().zip(&best.x).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if x_spread <= opts.x_tol && (f_spread <= opts.f_tol || !best.f.is_finite()) {
            return true;
        }
        if out.evals >= budget {
            return false;
        }

        let mut centroid = vec![0.0; d];
        for v in &simplex[..d] {
            for (c, y) in centroid.iter_mut().zip(&v.y) {
                *c += y / d as f64;
            }
        }
        let worst_y = simplex[d].y.clone();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&worst_y).map(|(c, w)| c + t * (c - w)).collect() };

        let reflected = evaluate(obj, along(REFLECT), out);
        if reflected.f < simplex[0].f {
            if out.evals >= budget {
                simplex[d] = reflected;
                continue;
            }
            let expanded = evaluate(obj, along(REFLECT * EXPAND), out);
            simplex[d] = if expanded.f < reflected.f { expanded } else { reflected };
        } else if reflected.f < simplex[d - 1].f {
            simplex[d] = reflected;
        } else {
            if out.evals >= budget {
                continue;
            }
            let outside = reflected.f < simplex[d].f;
            let contracted =
                if outside { evaluate(obj, along(REFLECT * CONTRACT), out) } else { evaluate(obj, along(-CONTRACT), out) };
            let accept = if outside { contracted.f <= reflected.f } else { contracted.f < simplex[d].f };
            if accept {
                simplex[d] = contracted;
            } else {
                let best_y = simplex[0].y.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    if out.evals >= budget {
                        break;
                    }
                    let y: Vec<f64> = best_y.iter().zip(&vertex.y).map(|(b, v)| b + SHRINK * (v - b)).collect();
                    *vertex = evaluate(obj, y, out);
                }
            }
        }
    }
}

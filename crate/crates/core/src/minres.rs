//! Residual minimization over the free-knot ReLU set.
//!
//! For a trial function `u_h` the residual step finds
//! `r_n = argmin_{v in M_n} 1/2 ||v||_V^2 - <f - B u_h, v>`.
//! With the knots fixed this is a linear problem: the minimizer over the span
//! of `{phi_i}` solves `G c = l - B u_h`, and its value is `-1/2 ||r_n||_V^2`.
//! In the default variable-projection mode the simplex optimizer only moves
//! the knots and the coefficients are always eliminated exactly.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{gram_unchecked, knot_residual_vector, LoadFunctional, TrialMoments};
use crate::error::{invalid, Error, Result};
use crate::linalg::{condition_estimate, spd_factor};
use crate::model::{Domain1D, ProblemData, ReluResidual, TrialFunction};
use crate::optimizer::{minimize_bounded, BoundedObjective, SimplexOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerMode {
    /// Optimize knots only; coefficients by an exact Gram solve.
    VariableProjection,
    /// Optimize knots and coefficients together.
    Joint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerConfig {
    /// Number of breakpoints `M`.
    pub m: usize,
    pub mode: InnerMode,
    /// Knots are kept in `[a + margin_fraction (b - a), b]`.
    pub margin_fraction: f64,
    pub warm_start: bool,
    /// Number of cold starts: the equispaced layout plus `multistart - 1`
    /// jittered copies.
    pub multistart: usize,
    pub seed: u64,
    /// Add the constant `c_0`; only meaningful when the outflow condition is
    /// not enforced.
    pub include_constant: bool,
    pub optimizer: SimplexOptions,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            m: 4,
            mode: InnerMode::VariableProjection,
            margin_fraction: 1e-3,
            warm_start: true,
            multistart: 1,
            seed: 0,
            include_constant: false,
            optimizer: SimplexOptions::default(),
        }
    }
}

impl InnerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(invalid("at least one breakpoint is required"));
        }
        if !(0.0..1.0).contains(&self.margin_fraction) {
            return Err(invalid("margin must be a fraction of the domain in [0, 1)"));
        }
        if self.multistart == 0 {
            return Err(invalid("multistart must be at least 1"));
        }
        Ok(())
    }

    pub fn knot_bounds(&self, domain: &Domain1D) -> (f64, f64) {
        (domain.a + self.margin_fraction * domain.length(), domain.b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    pub residual: ReluResidual,
    /// Objective value `1/2 ||r_n||_V^2 - <f - B u_h, r_n>`.
    pub j: f64,
    pub dual_norm: f64,
    pub evals: usize,
    pub converged: bool,
    /// Index of the winning start (warm start first when present).
    pub best_start: usize,
    /// Condition estimate of the winning knot Gram matrix.
    pub gram_condition: f64,
}

/// Exact coefficients on fixed knots.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotSolution {
    /// Coefficients in basis order `[c_0 if present, c_1, ..., c_M]`.
    pub coeffs: DVector<f64>,
    pub j: f64,
    pub gram: DMatrix<f64>,
    /// `l(phi_i) - b(u_h, phi_i)`.
    pub rhs: DVector<f64>,
}

impl KnotSolution {
    pub fn into_residual(self, domain: Domain1D, breaks: &[f64], include_constant: bool) -> Result<ReluResidual> {
        let c = self.coeffs.as_slice();
        let (c0, tail) = if include_constant { (Some(c[0]), c[1..].to_vec()) } else { (None, c.to_vec()) };
        ReluResidual::new(domain, breaks.to_vec(), tail, c0)
    }
}

/// Precomputed pieces of the residual functional `f - B u_h`.
pub struct ResidualFunctional<'a> {
    data: &'a ProblemData,
    load: LoadFunctional,
    moments: TrialMoments<'a>,
    include_constant: bool,
}

impl<'a> ResidualFunctional<'a> {
    pub fn new(u_h: &'a TrialFunction, data: &'a ProblemData, include_constant: bool) -> Self {
        Self { data, load: LoadFunctional::new(data), moments: TrialMoments::new(u_h), include_constant }
    }

    pub fn domain(&self) -> Domain1D {
        self.data.domain
    }

    pub fn system(&self, breaks: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let d = self.data;
        let g = gram_unchecked(breaks, self.include_constant, d.beta, &d.domain);
        let rhs = knot_residual_vector(breaks, self.include_constant, &self.load, &self.moments, d.beta, d.gamma);
        (g, rhs)
    }

    /// Solves on sorted, distinct knots.
    pub fn solve(&self, breaks: &[f64]) -> Result<KnotSolution> {
        let (g, rhs) = self.system(breaks);
        let chol = spd_factor(g.clone(), "knot Gram matrix").map_err(|e| match e {
            Error::Factorization { condition, .. } => {
                Error::SingularBasis(format!("knot Gram matrix is singular (condition {condition:e})"))
            }
            other => other,
        })?;
        let coeffs = chol.solve(&rhs);
        let j = -0.5 * coeffs.dot(&(&g * &coeffs));
        Ok(KnotSolution { coeffs, j, gram: g, rhs })
    }

    /// `1/2 c^T G c - c^T rhs` for arbitrary coefficients.
    pub fn objective_at(&self, breaks: &[f64], coeffs: &DVector<f64>) -> f64 {
        let (g, rhs) = self.system(breaks);
        0.5 * coeffs.dot(&(&g * coeffs)) - coeffs.dot(&rhs)
    }

    /// Variable-projection value for unsorted knots, `+inf` when the basis
    /// stays singular after one perturbation of colliding knots.
    fn reduced_value(&self, knots: &[f64]) -> f64 {
        match prepare_knots(knots, &self.domain()) {
            Some(sorted) => self.solve(&sorted).map_or(f64::INFINITY, |s| s.j),
            None => f64::INFINITY,
        }
    }
}

/// Sorts knots and moves any that collide (within the dedup tolerance) by ten
/// times that tolerance, once. Returns `None` if collisions remain.
pub fn prepare_knots(knots: &[f64], domain: &Domain1D) -> Option<Vec<f64>> {
    let tol = domain.dedup_tol();
    let mut k = knots.to_vec();
    k.sort_by(f64::total_cmp);
    let collides = |k: &[f64]| k.windows(2).any(|w| w[1] - w[0] <= tol);
    if collides(&k) {
        for i in 1..k.len() {
            if k[i] - k[i - 1] <= tol {
                let up = k[i - 1] + 10.0 * tol;
                if up <= domain.b {
                    k[i] = up;
                } else {
                    k[i - 1] = k[i] - 10.0 * tol;
                }
            }
        }
        k.sort_by(f64::total_cmp);
        if collides(&k) {
            return None;
        }
    }
    if k.iter().any(|&t| !(t > domain.a && t <= domain.b)) {
        return None;
    }
    Some(k)
}

/// Exact minimizer over the span of the knot basis and its value
/// `J = -1/2 c^T G c`.
pub fn solve_coeffs_given_breaks(
    breaks: &[f64],
    u_h: &TrialFunction,
    data: &ProblemData,
    include_constant: bool,
) -> Result<KnotSolution> {
    crate::assembly::gram_matrix_v(breaks, include_constant, data.beta, &data.domain)?;
    ResidualFunctional::new(u_h, data, include_constant).solve(breaks)
}

/// Equispaced knots over `[lo, hi]`, the last one at `hi`.
pub fn equispaced_knots(m: usize, lo: f64, hi: f64) -> Vec<f64> {
    (1..=m).map(|i| lo + i as f64 * (hi - lo) / m as f64).collect()
}

fn start_points(cfg: &InnerConfig, domain: &Domain1D, warm: Option<&ReluResidual>) -> Vec<Vec<f64>> {
    let (lo, hi) = cfg.knot_bounds(domain);
    let mut starts = Vec::new();
    if cfg.warm_start {
        if let Some(w) = warm.filter(|w| w.len() == cfg.m) {
            starts.push(w.breakpoints().iter().map(|t| t.clamp(lo, hi)).collect());
        }
    }
    let base = equispaced_knots(cfg.m, lo, hi);
    starts.push(base.clone());
    let spacing = (hi - lo) / cfg.m as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 1..cfg.multistart {
        let mut k: Vec<f64> =
            base.iter().map(|t| (t + spacing * (rng.random::<f64>() - 0.5)).clamp(lo, hi)).collect();
        k.sort_by(f64::total_cmp);
        starts.push(k);
    }
    starts
}

struct StartOutcome {
    residual: ReluResidual,
    j: f64,
    evals: usize,
    converged: bool,
}

pub fn minimize_residual(
    u_h: &TrialFunction,
    data: &ProblemData,
    cfg: &InnerConfig,
    warm: Option<&ReluResidual>,
) -> Result<InnerResult> {
    cfg.validate()?;
    let domain = data.domain;
    let functional = ResidualFunctional::new(u_h, data, cfg.include_constant);
    let starts = start_points(cfg, &domain, warm);

    let mut best: Option<(usize, StartOutcome)> = None;
    let mut total_evals = 0;
    for (idx, start) in starts.iter().enumerate() {
        let outcome = match cfg.mode {
            InnerMode::VariableProjection => run_variable_projection(&functional, cfg, start)?,
            InnerMode::Joint => run_joint(&functional, cfg, start)?,
        };
        total_evals += outcome.as_ref().map_or(0, |o| o.evals);
        if let Some(o) = outcome {
            if best.as_ref().is_none_or(|(_, b)| o.j < b.j) {
                best = Some((idx, o));
            }
        }
    }
    let (best_start, outcome) = best.ok_or(Error::DegenerateResidual)?;
    let dual_norm = crate::assembly::vnorm(&outcome.residual, data.beta);
    let (g, _) = functional.system(outcome.residual.breakpoints());
    Ok(InnerResult {
        gram_condition: condition_estimate(&g),
        residual: outcome.residual,
        j: outcome.j,
        dual_norm,
        evals: total_evals,
        converged: outcome.converged,
        best_start,
    })
}

fn run_variable_projection(f: &ResidualFunctional<'_>, cfg: &InnerConfig, start: &[f64]) -> Result<Option<StartOutcome>> {
    let domain = f.domain();
    let (lo, hi) = cfg.knot_bounds(&domain);
    let mut obj = BoundedObjective::new(vec![lo; cfg.m], vec![hi; cfg.m], |k: &[f64]| f.reduced_value(k))?;
    let res = minimize_bounded(&mut obj, start, &cfg.optimizer)?;
    if !res.f.is_finite() {
        return Ok(None);
    }
    let Some(knots) = prepare_knots(&res.x, &domain) else { return Ok(None) };
    let sol = f.solve(&knots)?;
    let j = sol.j;
    let residual = sol.into_residual(domain, &knots, cfg.include_constant)?;
    Ok(Some(StartOutcome { residual, j, evals: res.evals, converged: res.converged }))
}

fn run_joint(f: &ResidualFunctional<'_>, cfg: &InnerConfig, start: &[f64]) -> Result<Option<StartOutcome>> {
    let domain = f.domain();
    let (lo, hi) = cfg.knot_bounds(&domain);
    let Some(knots0) = prepare_knots(start, &domain) else { return Ok(None) };
    let Ok(init) = f.solve(&knots0) else { return Ok(None) };
    let m = cfg.m;
    let nc = init.coeffs.len();
    let bound = (10.0 * init.coeffs.amax()).max(1.0);

    let mut lower = vec![lo; m];
    let mut upper = vec![hi; m];
    lower.extend(std::iter::repeat_n(-bound, nc));
    upper.extend(std::iter::repeat_n(bound, nc));
    let mut x0 = knots0.clone();
    x0.extend(init.coeffs.iter().map(|c| 0.5 * c));

    let split = |x: &[f64]| -> Option<(Vec<f64>, DVector<f64>, Option<f64>)> {
        let (knots, coeffs) = x.split_at(m);
        let (c0, tail) = if cfg.include_constant { (Some(coeffs[0]), &coeffs[1..]) } else { (None, coeffs) };
        let r = ReluResidual::from_pairs(domain, knots.iter().copied().zip(tail.iter().copied()).collect(), c0).ok()?;
        let c = DVector::from_vec(r.basis_coeffs());
        Some((r.breakpoints().to_vec(), c, c0))
    };
    let value = |x: &[f64]| split(x).map_or(f64::INFINITY, |(k, c, _)| f.objective_at(&k, &c));
    let mut obj = BoundedObjective::new(lower, upper, value)?;
    let res = minimize_bounded(&mut obj, &x0, &cfg.optimizer)?;
    let Some((knots, c, _)) = split(&res.x) else { return Ok(None) };
    let (c0, tail) = if cfg.include_constant { (Some(c[0]), c.as_slice()[1..].to_vec()) } else { (None, c.as_slice().to_vec()) };
    let residual = ReluResidual::new(domain, knots, tail, c0)?;
    Ok(Some(StartOutcome { residual, j: res.f, evals: res.evals, converged: res.converged }))
}

/// `||r_n||_V`, the achieved supremum of `<f - B u_h, v> / ||v||_V` over the
/// residual set.
pub fn dual_norm_estimate(res: &InnerResult) -> f64 {
    res.dual_norm
}

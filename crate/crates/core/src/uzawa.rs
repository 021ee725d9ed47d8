//! The outer inexact Uzawa loop: residual minimization over the ReLU set
//! alternating with a relaxed `L^2` update of the trial function.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::analysis::FineTestSpace;
use crate::assembly::{assemble_b_vector, mass_matrix_u};
use crate::error::{invalid, Error, Result};
use crate::linalg::spd_factor;
use crate::minres::{minimize_residual, InnerConfig};
use crate::model::{Mesh1D, ProblemData, ReluResidual, TrialFunction, TrialSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepNorm {
    /// `sqrt(d^T M d)`.
    L2Mass,
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialGuess {
    Zero,
    /// The constant `u_in`.
    InflowConstant,
}

/// Inner optimizer tolerances start at `initial` and shrink by `factor` per
/// outer iteration, never below `floor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceSchedule {
    pub initial: f64,
    pub factor: f64,
    pub floor: f64,
}

impl Default for ToleranceSchedule {
    fn default() -> Self {
        Self { initial: 1e-4, factor: 0.5, floor: 1e-10 }
    }
}

impl ToleranceSchedule {
    pub fn at(&self, k: usize) -> f64 {
        let exp = i32::try_from(k).unwrap_or(i32::MAX);
        (self.initial * self.factor.powi(exp)).max(self.floor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UzawaConfig {
    pub rho: f64,
    pub eps: f64,
    pub max_iters: usize,
    pub inner: InnerConfig,
    pub tol_schedule: ToleranceSchedule,
    pub step_norm: StepNorm,
    pub initial: InitialGuess,
}

impl UzawaConfig {
    pub fn new(rho: f64, inner: InnerConfig) -> Self {
        Self {
            rho,
            eps: 1e-8,
            max_iters: 200,
            inner,
            tol_schedule: ToleranceSchedule::default(),
            step_norm: StepNorm::L2Mass,
            initial: InitialGuess::Zero,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(invalid(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.eps > 0.0) {
            return Err(invalid(format!("eps must be positive, got {}", self.eps)));
        }
        let s = &self.tol_schedule;
        if !(s.factor > 0.0 && s.factor <= 1.0) || !(s.initial > 0.0) || !(s.floor > 0.0) {
            return Err(invalid("tolerance schedule needs initial, floor > 0 and factor in (0, 1]"));
        }
        self.inner.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub k: usize,
    pub dual_norm: f64,
    pub j: f64,
    pub step_norm: f64,
    pub inner_evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UzawaState {
    pub k: usize,
    pub u: TrialFunction,
    pub r: ReluResidual,
    pub history: Vec<HistoryEntry>,
    pub converged: bool,
    /// Condition estimate of the last knot Gram matrix.
    pub gram_condition: f64,
}

/// Mass matrix of a trial space with its factorization.
struct MassSolver {
    mass: nalgebra::DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl MassSolver {
    fn new(space: &TrialSpace) -> Result<Self> {
        let mass = mass_matrix_u(space);
        let chol = spd_factor(mass.clone(), "trial mass matrix")?;
        Ok(Self { mass, chol })
    }

    fn update(&self, u: &TrialFunction, r: &ReluResidual, rho: f64, data: &ProblemData) -> TrialFunction {
        let g = assemble_b_vector(&u.space, r, data.beta, data.gamma);
        let delta = self.chol.solve(&g) * rho;
        let coeffs = u.coeffs.iter().zip(delta.iter()).map(|(c, d)| c + d).collect();
        TrialFunction { space: u.space.clone(), coeffs }
    }

    fn step_norm(&self, prev: &TrialFunction, next: &TrialFunction, mode: StepNorm) -> f64 {
        let d = DVector::from_iterator(prev.coeffs.len(), next.coeffs.iter().zip(&prev.coeffs).map(|(n, p)| n - p));
        match mode {
            StepNorm::Euclidean => d.norm(),
            StepNorm::L2Mass => d.dot(&(&self.mass * &d)).max(0.0).sqrt(),
        }
    }
}

/// `M u_new = M u + rho b(., r)`.
pub fn primal_update(u: &TrialFunction, r: &ReluResidual, rho: f64, data: &ProblemData) -> Result<TrialFunction> {
    Ok(MassSolver::new(&u.space)?.update(u, r, rho, data))
}

pub fn check_convergence(prev: &TrialFunction, next: &TrialFunction, cfg: &UzawaConfig) -> (f64, bool) {
    let step = match cfg.step_norm {
        StepNorm::Euclidean => prev.coeffs.iter().zip(&next.coeffs).map(|(p, n)| (n - p) * (n - p)).sum::<f64>().sqrt(),
        StepNorm::L2Mass => {
            let m = mass_matrix_u(&prev.space);
            let d = DVector::from_iterator(prev.coeffs.len(), next.coeffs.iter().zip(&prev.coeffs).map(|(n, p)| n - p));
            d.dot(&(&m * &d)).max(0.0).sqrt()
        }
    };
    (step, step < cfg.eps)
}

fn initial_state(data: &ProblemData, space: &TrialSpace, cfg: &UzawaConfig) -> UzawaState {
    let u = match cfg.initial {
        InitialGuess::Zero => space.zero(),
        InitialGuess::InflowConstant => space.constant(data.u_in),
    };
    UzawaState { k: 0, u, r: ReluResidual::zero(data.domain), history: Vec::new(), converged: false, gram_condition: 1.0 }
}

pub fn run_uzawa(data: &ProblemData, mesh: &Mesh1D, p: usize, cfg: &UzawaConfig) -> Result<UzawaState> {
    cfg.validate()?;
    if mesh.domain() != data.domain {
        return Err(invalid("mesh does not cover the problem domain"));
    }
    let space = TrialSpace::new(mesh.clone(), p);
    let mass = MassSolver::new(&space)?;
    let mut state = initial_state(data, &space, cfg);
    let mut inner = cfg.inner.clone();
    let mut warm: Option<ReluResidual> = None;

    while state.k < cfg.max_iters {
        let tol = cfg.tol_schedule.at(state.k);
        inner.optimizer.x_tol = tol;
        inner.optimizer.f_tol = tol;
        let res = minimize_residual(&state.u, data, &inner, warm.as_ref())
            .map_err(|e| Error::Iteration { k: state.k, source: Box::new(e) })?;
        let next = mass.update(&state.u, &res.residual, cfg.rho, data);
        let step = mass.step_norm(&state.u, &next, cfg.step_norm);
        state.history.push(HistoryEntry {
            k: state.k,
            dual_norm: res.dual_norm,
            j: res.j,
            step_norm: step,
            inner_evals: res.evals,
        });
        state.k += 1;
        state.u = next;
        state.gram_condition = res.gram_condition;
        warm = Some(res.residual.clone());
        state.r = res.residual;
        if step < cfg.eps {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

/// Injected relative perturbation of the oracle residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub delta: f64,
    pub seed: u64,
}

/// Iterates of the Uzawa loop driven by the fine-space Riesz representer.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun {
    pub u: TrialFunction,
    /// `||u^k - u*||_M` for `k = 0..=iters`.
    pub errors_u: Vec<f64>,
    /// `||r^k - r*||_V` for `k = 0..iters`, with `r^k` the unperturbed representer.
    pub errors_r: Vec<f64>,
}

impl OracleRun {
    pub fn ratios(&self) -> Vec<f64> {
        self.errors_u.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

/// Exact-residual Uzawa iteration with the fine test space standing in for
/// `V`, optionally with the residual perturbed by `delta ||r^k||_V` in a
/// random direction of unit `V`-norm.
pub fn run_oracle_uzawa(
    fine: &FineTestSpace,
    u0: &TrialFunction,
    rho: f64,
    iters: usize,
    perturbation: Option<Perturbation>,
) -> Result<OracleRun> {
    if !(rho > 0.0) {
        return Err(invalid("rho must be positive"));
    }
    let ustar = DVector::from_column_slice(&fine.discrete_solution()?.coeffs);
    let rstar = fine.riesz(&ustar);
    let mass = mass_matrix_u(fine.trial_space());
    let m_norm = |e: &DVector<f64>| e.dot(&(&mass * e)).max(0.0).sqrt();
    let mut rng = perturbation.map(|p| ChaCha8Rng::seed_from_u64(p.seed));

    let mut u = DVector::from_column_slice(&u0.coeffs);
    let mut errors_u = vec![m_norm(&(&u - &ustar))];
    let mut errors_r = Vec::with_capacity(iters);
    for _ in 0..iters {
        let mut r = fine.riesz(&u);
        errors_r.push(fine.vnorm_coeffs(&(&r - &rstar)));
        if let (Some(p), Some(rng)) = (perturbation, rng.as_mut()) {
            let noise = DVector::from_fn(fine.dim(), |_, _| StandardNormal.sample(rng));
            let scale = p.delta * fine.vnorm_coeffs(&r) / fine.vnorm_coeffs(&noise);
            r += noise * scale;
        }
        u += fine.mass_factor().solve(&(fine.b_matrix().transpose() * r)) * rho;
        errors_u.push(m_norm(&(&u - &ustar)));
    }
    Ok(OracleRun { u: TrialFunction::new(fine.trial_space().clone(), u.as_slice().to_vec())?, errors_u, errors_r })
}

//! Problem data and the two function families: the discontinuous trial space
//! `U_h` and the free-knot ReLU residual set.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};

/// Relative tolerance under which two partition points or breakpoints are
/// considered the same point.
pub const DEDUP_RELATIVE_TOL: f64 = 1e-14;

/// An interval `(a, b)`. With positive advection speed the inflow end is `a`
/// and the outflow end is `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain1D {
    pub a: f64,
    pub b: f64,
}

impl Domain1D {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(invalid(format!("domain requires a < b, got ({a}, {b})")));
        }
        Ok(Self { a, b })
    }

    pub fn unit() -> Self {
        Self { a: 0.0, b: 1.0 }
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn inflow(&self) -> f64 {
        self.a
    }

    pub fn outflow(&self) -> f64 {
        self.b
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.a && x <= self.b
    }

    pub fn dedup_tol(&self) -> f64 {
        DEDUP_RELATIVE_TOL * self.length()
    }

    pub(crate) fn check(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutOfDomain { x, a: self.a, b: self.b })
        }
    }
}

/// How a point source enters the load functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiracMode {
    /// `l(v) = v(x0)`; valid because every test function is continuous.
    PointEvaluation,
    /// Gaussian of standard deviation `width` centred at `x0`.
    Mollified { width: f64 },
}

pub type Density = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum SourceTerm {
    Smooth(Density),
    PiecewiseConstant { breaks: Vec<f64>, values: Vec<f64> },
    Dirac { location: f64, mode: DiracMode },
}

impl fmt::Debug for SourceTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceTerm::Smooth(_) => f.write_str("Smooth(<fn>)"),
            SourceTerm::PiecewiseConstant { breaks, values } => f
                .debug_struct("PiecewiseConstant")
                .field("breaks", breaks)
                .field("values", values)
                .finish(),
            SourceTerm::Dirac { location, mode } => f
                .debug_struct("Dirac")
                .field("location", location)
                .field("mode", mode)
                .finish(),
        }
    }
}

impl SourceTerm {
    pub fn constant(value: f64) -> Self {
        SourceTerm::PiecewiseConstant { breaks: Vec::new(), values: vec![value] }
    }

    pub fn dirac(location: f64) -> Self {
        SourceTerm::Dirac { location, mode: DiracMode::PointEvaluation }
    }

    pub fn smooth(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        SourceTerm::Smooth(Arc::new(f))
    }

    pub fn validate(&self, domain: &Domain1D) -> Result<()> {
        match self {
            SourceTerm::Smooth(_) => Ok(()),
            SourceTerm::PiecewiseConstant { breaks, values } => {
                if values.len() != breaks.len() + 1 {
                    return Err(invalid(format!(
                        "piecewise source needs {} values for {} breaks, got {}",
                        breaks.len() + 1,
                        breaks.len(),
                        values.len()
                    )));
                }
                if breaks.iter().any(|&x| !(x > domain.a && x < domain.b)) {
                    return Err(invalid("piecewise source breaks must lie strictly inside the domain"));
                }
                if breaks.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(invalid("piecewise source breaks must be strictly increasing"));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("piecewise source values must be finite"));
                }
                Ok(())
            }
            SourceTerm::Dirac { location, mode } => {
                if !(*location > domain.a && *location < domain.b) {
                    return Err(invalid(format!("Dirac location {location} must lie inside the domain")));
                }
                if let DiracMode::Mollified { width } = mode {
                    if !(*width > 0.0) {
                        return Err(invalid("mollifier width must be positive"));
                    }
                }
                Ok(())
            }
        }
    }

    /// Locations where the source (or the solution it drives) is not smooth.
    pub fn singular_points(&self) -> Vec<f64> {
        match self {
            SourceTerm::Smooth(_) => Vec::new(),
            SourceTerm::PiecewiseConstant { breaks, .. } => breaks.clone(),
            SourceTerm::Dirac { location, .. } => vec![*location],
        }
    }

    /// Pointwise value of the regular part of the source. Point sources have
    /// no regular part and return 0.
    pub fn regular_part(&self, x: f64) -> f64 {
        match self {
            SourceTerm::Smooth(f) => f(x),
            SourceTerm::PiecewiseConstant { breaks, values } => {
                // left-closed pieces (lo, hi]
                let k = breaks.partition_point(|&t| t < x);
                values[k]
            }
            SourceTerm::Dirac { .. } => 0.0,
        }
    }
}

/// Coefficients of `beta u' + gamma u = f` with `u = u_in` at the inflow end.
#[derive(Debug, Clone)]
pub struct ProblemData {
    pub domain: Domain1D,
    pub beta: f64,
    pub gamma: f64,
    pub source: SourceTerm,
    pub u_in: f64,
}

impl ProblemData {
    pub fn new(domain: Domain1D, beta: f64, gamma: f64, source: SourceTerm, u_in: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid(format!("advection speed must be positive, got {beta}")));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(invalid(format!("reaction coefficient must be non-negative, got {gamma}")));
        }
        if !u_in.is_finite() {
            return Err(invalid("inflow value must be finite"));
        }
        source.validate(&domain)?;
        Ok(Self { domain, beta, gamma, source, u_in })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    nodes: Vec<f64>,
}

impl Mesh1D {
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(invalid("a mesh needs at least one element"));
        }
        if nodes.iter().any(|x| !x.is_finite()) || nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("mesh nodes must be finite and strictly increasing"));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn num_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn domain(&self) -> Domain1D {
        Domain1D { a: self.nodes[0], b: self.nodes[self.nodes.len() - 1] }
    }

    pub fn element(&self, k: usize) -> (f64, f64) {
        (self.nodes[k], self.nodes[k + 1])
    }

    /// Index of the element containing `x`. Interior nodes belong to the
    /// element on their left.
    pub fn locate(&self, x: f64) -> Result<usize> {
        self.domain().check(x)?;
        let k = self.nodes.partition_point(|&t| t < x);
        Ok(k.saturating_sub(1).min(self.num_elements() - 1))
    }

    pub fn max_h(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Uniform refinement: every element split into `factor` equal pieces.
    pub fn refine(&self, factor: usize) -> Mesh1D {
        let mut nodes = Vec::with_capacity(self.num_elements() * factor + 1);
        for w in self.nodes.windows(2) {
            let h = (w[1] - w[0]) / factor as f64;
            for j in 0..factor {
                nodes.push(w[0] + j as f64 * h);
            }
        }
        nodes.push(*self.nodes.last().unwrap());
        Mesh1D { nodes }
    }
}

pub fn build_uniform_mesh(domain: &Domain1D, n: usize) -> Result<Mesh1D> {
    if n == 0 {
        return Err(invalid("element count must be at least 1"));
    }
    let h = domain.length() / n as f64;
    let mut nodes: Vec<f64> = (0..n).map(|k| domain.a + k as f64 * h).collect();
    nodes.push(domain.b);
    Ok(Mesh1D { nodes })
}

/// Discontinuous piecewise polynomials of degree `degree` on `mesh`.
///
/// Each element carries a Lagrange basis on `degree + 1` equispaced local
/// nodes (endpoints included when `degree >= 1`). Degrees of freedom are
/// numbered element by element.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpace {
    pub mesh: Mesh1D,
    pub degree: usize,
}

impl TrialSpace {
    pub fn new(mesh: Mesh1D, degree: usize) -> Self {
        Self { mesh, degree }
    }

    pub fn local_dim(&self) -> usize {
        self.degree + 1
    }

    pub fn dim(&self) -> usize {
        self.mesh.num_elements() * self.local_dim()
    }

    /// Local basis values at reference coordinate `t in [0, 1]`.
    pub fn local_basis(&self, t: f64, out: &mut [f64]) {
        let p = self.degree;
        if p == 0 {
            out[0] = 1.0;
            return;
        }
        for (k, o) in out.iter_mut().enumerate().take(p + 1) {
            let tk = k as f64 / p as f64;
            let mut v = 1.0;
            for m in 0..=p {
                if m != k {
                    let tm = m as f64 / p as f64;
                    v *= (t - tm) / (tk - tm);
                }
            }
            *o = v;
        }
    }

    pub fn zero(&self) -> TrialFunction {
        TrialFunction { space: self.clone(), coeffs: vec![0.0; self.dim()] }
    }

    pub fn constant(&self, value: f64) -> TrialFunction {
        // Lagrange bases form a partition of unity.
        TrialFunction { space: self.clone(), coeffs: vec![value; self.dim()] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFunction {
    pub space: TrialSpace,
    pub coeffs: Vec<f64>,
}

impl TrialFunction {
    pub fn new(space: TrialSpace, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return Err(invalid(format!(
                "trial function needs {} coefficients, got {}",
                space.dim(),
                coeffs.len()
            )));
        }
        Ok(Self { space, coeffs })
    }

    /// Value of the polynomial on element `k` at `x` (no domain check).
    pub fn eval_on_element(&self, k: usize, x: f64) -> f64 {
        let (lo, hi) = self.space.mesh.element(k);
        let t = (x - lo) / (hi - lo);
        let n = self.space.local_dim();
        let mut basis = [0.0; 16];
        let mut heap;
        let buf: &mut [f64] = if n <= 16 {
            &mut basis[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        self.space.local_basis(t, buf);
        let c = &self.coeffs[k * n..(k + 1) * n];
        buf.iter().zip(c).map(|(b, c)| b * c).sum()
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let k = self.space.mesh.locate(x)?;
        Ok(self.eval_on_element(k, x))
    }
}

pub fn eval_trial(u: &TrialFunction, x: f64) -> Result<f64> {
    u.eval(x)
}

/// `c_0 + sum_i c_i ReLU(b_i - x)` with sorted, distinct breakpoints in `(a, b]`.
///
/// Without the constant term every member vanishes at the outflow end `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluResidual {
    domain: Domain1D,
    breakpoints: Vec<f64>,
    coeffs: Vec<f64>,
    c0: Option<f64>,
}

impl ReluResidual {
    pub fn new(domain: Domain1D, breakpoints: Vec<f64>, coeffs: Vec<f64>, c0: Option<f64>) -> Result<Self> {
        if breakpoints.len() != coeffs.len() {
            return Err(invalid("breakpoints and coefficients differ in length"));
        }
        if breakpoints.iter().any(|&t| !(t > domain.a && t <= domain.b)) {
            return Err(invalid("breakpoints must lie in (a, b]"));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("breakpoints must be sorted and distinct"));
        }
        if coeffs.iter().chain(c0.iter()).any(|c| !c.is_finite()) {
            return Err(invalid("coefficients must be finite"));
        }
        Ok(Self { domain, breakpoints, coeffs, c0 })
    }

    /// Builds from unsorted knot/coefficient pairs; duplicate knots (within the
    /// dedup tolerance) have their coefficients merged.
    pub fn from_pairs(domain: Domain1D, mut pairs: Vec<(f64, f64)>, c0: Option<f64>) -> Result<Self> {
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        let tol = domain.dedup_tol();
        let mut breaks: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut coeffs: Vec<f64> = Vec::with_capacity(pairs.len());
        for (t, c) in pairs {
            match breaks.last() {
                Some(&last) if (t - last).abs() <= tol => *coeffs.last_mut().unwrap() += c,
                _ => {
                    breaks.push(t);
                    coeffs.push(c);
                }
            }
        }
        Self::new(domain, breaks, coeffs, c0)
    }

    pub fn zero(domain: Domain1D) -> Self {
        Self { domain, breakpoints: Vec::new(), coeffs: Vec::new(), c0: None }
    }

    pub fn domain(&self) -> &Domain1D {
        &self.domain
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn c0(&self) -> Option<f64> {
        self.c0
    }

    pub fn include_constant(&self) -> bool {
        self.c0.is_some()
    }

    pub fn len(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.breakpoints.is_empty()
    }

    /// Coefficients in basis order: `[c_0 if present, c_1, ..., c_M]`.
    pub fn basis_coeffs(&self) -> Vec<f64> {
        self.c0.iter().copied().chain(self.coeffs.iter().copied()).collect()
    }

    /// Value without the domain check.
    pub fn value_unchecked(&self, x: f64) -> f64 {
        let tail: f64 = self
            .breakpoints
            .iter()
            .zip(&self.coeffs)
            .map(|(&b, &c)| c * (b - x).max(0.0))
            .sum();
        self.c0.unwrap_or(0.0) + tail
    }

    /// Right-continuous derivative without the domain check.
    pub fn derivative_unchecked(&self, x: f64) -> f64 {
        -self
            .breakpoints
            .iter()
            .zip(&self.coeffs)
            .filter(|(&b, _)| b > x)
            .map(|(_, &c)| c)
            .sum::<f64>()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            domain: self.domain,
            breakpoints: self.breakpoints.clone(),
            coeffs: self.coeffs.iter().map(|c| alpha * c).collect(),
            c0: self.c0.map(|c| alpha * c),
        }
    }

    /// `self + other` written on the union of both knot sets.
    pub fn add(&self, other: &Self) -> Result<Self> {
        let pairs = self
            .breakpoints
            .iter()
            .copied()
            .zip(self.coeffs.iter().copied())
            .chain(other.breakpoints.iter().copied().zip(other.coeffs.iter().copied()))
            .collect();
        let c0 = match (self.c0, other.c0) {
            (None, None) => None,
            (a, b) => Some(a.unwrap_or(0.0) + b.unwrap_or(0.0)),
        };
        Self::from_pairs(self.domain, pairs, c0)
    }
}

pub fn eval_relu(v: &ReluResidual, x: f64) -> Result<f64> {
    v.domain.check(x)?;
    Ok(v.value_unchecked(x))
}

pub fn eval_relu_deriv(v: &ReluResidual, x: f64) -> Result<f64> {
    v.domain.check(x)?;
    Ok(v.derivative_unchecked(x))
}

/// Discrete operator constants and the Uzawa rates they imply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorConstants {
    /// Discrete inf-sup constant (smallest normalized singular value).
    pub mu: f64,
    /// Continuity constant (largest normalized singular value).
    pub cb: f64,
    /// Relaxation parameter the rates below were computed for.
    pub rho: f64,
    pub omega: f64,
    pub delta_star: f64,
}

impl OperatorConstants {
    /// Below this ratio `mu / cb` the trial space counts as rank deficient.
    pub const RANK_TOL: f64 = 1e-10;

    pub fn from_bounds(mu: f64, cb: f64, rho: f64) -> Self {
        let omega = if mu > Self::RANK_TOL * cb {
            (1.0 - rho * mu * mu).abs().max((1.0 - rho * cb * cb).abs())
        } else {
            1.0
        };
        let delta_star = if omega < 1.0 { (1.0 - omega) / (2.0 * cb * cb) } else { 0.0 };
        Self { mu, cb, rho, omega, delta_star }
    }

    pub fn is_rank_deficient(&self) -> bool {
        !(self.mu > Self::RANK_TOL * self.cb)
    }

    pub fn is_contractive(&self) -> bool {
        self.omega < 1.0
    }

    /// Largest relaxation parameter that keeps the exact iteration contractive.
    pub fn rho_limit(&self) -> f64 {
        2.0 / (self.cb * self.cb)
    }
}

/// Closed-form solution of `beta u' + gamma u = f`, `u(a) = u_in`, for
/// constant coefficients.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    data: ProblemData,
}

impl ExactSolution {
    pub fn eval(&self, x: f64) -> f64 {
        let d = &self.data;
        let a = d.domain.a;
        let kappa = d.gamma / d.beta;
        let decay = |len: f64| (-kappa * len).exp();
        // (1/beta) int_lo^hi exp(-kappa (x - s)) ds for lo <= hi <= x
        let kernel = |lo: f64, hi: f64| -> f64 {
            if hi <= lo {
                return 0.0;
            }
            if kappa == 0.0 {
                (hi - lo) / d.beta
            } else {
                -decay(x - hi) * (-kappa * (hi - lo)).exp_m1() / (kappa * d.beta)
            }
        };
        let homogeneous = d.u_in * decay(x - a);
        let forced = match &d.source {
            SourceTerm::PiecewiseConstant { breaks, values } => {
                let mut lo = a;
                let mut acc = 0.0;
                for (k, &v) in values.iter().enumerate() {
                    let hi = breaks.get(k).copied().unwrap_or(d.domain.b);
                    if lo >= x {
                        break;
                    }
                    acc += v * kernel(lo, hi.min(x));
                    lo = hi;
                }
                acc
            }
            SourceTerm::Dirac { location, mode: DiracMode::PointEvaluation } => {
                if x > *location {
                    decay(x - location) / d.beta
                } else {
                    0.0
                }
            }
            SourceTerm::Dirac { location, mode: DiracMode::Mollified { width } } => {
                let z = |s: f64| (s - location) / width - kappa * width;
                let mass = normal_cdf(z(x)) - normal_cdf(z(a));
                if mass <= 0.0 {
                    0.0
                } else {
                    let expo = -kappa * (x - location) + 0.5 * (kappa * width).powi(2) + mass.ln();
                    expo.exp() / d.beta
                }
            }
            SourceTerm::Smooth(_) => unreachable!("checked at construction"),
        };
        homogeneous + forced
    }

    pub fn data(&self) -> &ProblemData {
        &self.data
    }
}

pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub(crate) fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn exact_solution(data: &ProblemData) -> Result<ExactSolution> {
    match data.source {
        SourceTerm::Smooth(_) => Err(Error::Unavailable(
            "smooth sources have no closed form; use ReferenceSolution::from_ode".into(),
        )),
        _ => Ok(ExactSolution { data: data.clone() }),
    }
}

/// Fine-grid RK4 solution of the transport ODE, linearly interpolated.
/// Used as the reference when no closed form is available.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    a: f64,
    h: f64,
    values: Vec<f64>,
}

impl ReferenceSolution {
    pub fn from_ode(data: &ProblemData, cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(invalid("reference grid needs at least one cell"));
        }
        let dom = data.domain;
        let h = dom.length() / cells as f64;
        let rhs = |x: f64, u: f64| (data.source.regular_part(x) - data.gamma * u) / data.beta;
        let mut values = Vec::with_capacity(cells + 1);
        let mut u = data.u_in;
        values.push(u);
        for k in 0..cells {
            let x = dom.a + k as f64 * h;
            let k1 = rhs(x, u);
            let k2 = rhs(x + 0.5 * h, u + 0.5 * h * k1);
            let k3 = rhs(x + 0.5 * h, u + 0.5 * h * k2);
            let k4 = rhs(x + h, u + h * k3);
            u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            values.push(u);
        }
        Ok(Self { a: dom.a, h, values })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let s = ((x - self.a) / self.h).max(0.0);
        let k = (s.floor() as usize).min(self.values.len() - 2);
        let t = s - k as f64;
        (1.0 - t) * self.values[k] + t * self.values[k + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Domain1D {
        Domain1D::unit()
    }

    #[test]
    fn uniform_mesh_examples() {
        let m = build_uniform_mesh(&unit(), 1).unwrap();
        assert_eq!(m.nodes(), &[0.0, 1.0]);
        let m = build_uniform_mesh(&unit(), 2).unwrap();
        assert_eq!(m.nodes(), &[0.0, 0.5, 1.0]);
        let m = build_uniform_mesh(&unit(), 4).unwrap();
        assert_eq!(m.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(matches!(build_uniform_mesh(&unit(), 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn eval_trial_examples() {
        let mesh = build_uniform_mesh(&unit(), 1).unwrap();
        let p0 = TrialSpace::new(mesh.clone(), 0);
        assert_eq!(p0.constant(1.0).eval(0.3).unwrap(), 1.0);

        let p1 = TrialSpace::new(mesh, 1);
        let u = TrialFunction::new(p1, vec![0.0, 1.0]).unwrap();
        assert!((u.eval(0.25).unwrap() - 0.25).abs() < 1e-15);

        let two = TrialSpace::new(build_uniform_mesh(&unit(), 2).unwrap(), 0);
        let u = TrialFunction::new(two, vec![2.0, 5.0]).unwrap();
        assert_eq!(u.eval(0.75).unwrap(), 5.0);
        // interior node takes the left element
        assert_eq!(u.eval(0.5).unwrap(), 2.0);
        assert_eq!(u.eval(0.0).unwrap(), 2.0);
        assert_eq!(u.eval(1.0).unwrap(), 5.0);
        assert!(matches!(u.eval(1.5), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn relu_examples() {
        let v = ReluResidual::new(unit(), vec![0.5], vec![2.0], None).unwrap();
        assert!((eval_relu(&v, 0.25).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(eval_relu(&v, 0.75).unwrap(), 0.0);
        assert_eq!(eval_relu_deriv(&v, 0.25).unwrap(), -2.0);
        assert_eq!(eval_relu_deriv(&v, 0.75).unwrap(), 0.0);
        // right-continuous at the kink
        assert_eq!(eval_relu_deriv(&v, 0.5).unwrap(), 0.0);
        assert!(eval_relu(&v, -0.1).is_err());
    }

    #[test]
    fn relu_rejects_bad_breakpoints() {
        assert!(ReluResidual::new(unit(), vec![0.5, 0.5], vec![1.0, 1.0], None).is_err());
        assert!(ReluResidual::new(unit(), vec![0.7, 0.5], vec![1.0, 1.0], None).is_err());
        assert!(ReluResidual::new(unit(), vec![0.0], vec![1.0], None).is_err());
        assert!(ReluResidual::new(unit(), vec![1.0], vec![1.0], None).is_ok());
    }

    #[test]
    fn relu_vanishes_at_outflow() {
        let v = ReluResidual::new(unit(), vec![0.1, 0.4, 1.0], vec![3.0, -2.0, 7.5], None).unwrap();
        assert_eq!(eval_relu(&v, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn from_pairs_merges_duplicates() {
        let v = ReluResidual::from_pairs(unit(), vec![(0.5, 1.0), (0.2, 2.0), (0.5 + 1e-17, 3.0)], None).unwrap();
        assert_eq!(v.breakpoints(), &[0.2, 0.5]);
        assert_eq!(v.coeffs(), &[2.0, 4.0]);
    }

    #[test]
    fn exact_solution_examples() {
        let d = ProblemData::new(unit(), 1.0, 0.0, SourceTerm::dirac(0.5), 0.0).unwrap();
        let u = exact_solution(&d).unwrap();
        assert_eq!(u.eval(0.25), 0.0);
        assert!((u.eval(0.75) - 1.0).abs() < 1e-15);

        let d = ProblemData::new(unit(), 1.0, 0.0, SourceTerm::dirac(2.0 / 3.0), 0.0).unwrap();
        let u = exact_solution(&d).unwrap();
        assert_eq!(u.eval(0.6), 0.0);
        assert!((u.eval(0.7) - 1.0).abs() < 1e-15);

        let d = ProblemData::new(unit(), 1.0, 1.0, SourceTerm::constant(0.0), 1.0).unwrap();
        let u = exact_solution(&d).unwrap();
        for x in [0.0, 0.3, 0.9, 1.0] {
            assert!((u.eval(x) - (-x).exp()).abs() < 1e-15);
        }

        let smooth = ProblemData::new(unit(), 1.0, 0.0, SourceTerm::smooth(|x| x), 0.0).unwrap();
        assert!(matches!(exact_solution(&smooth), Err(Error::Unavailable(_))));
    }

    /// Central-difference check of beta u' + gamma u = f away from jumps.
    #[test]
    fn exact_solution_satisfies_ode() {
        let cases = [
            (0.001, 1.0, SourceTerm::PiecewiseConstant { breaks: vec![0.5], values: vec![1.0, 0.0] }, 0.0),
            (1.0, 0.0, SourceTerm::PiecewiseConstant { breaks: vec![0.3, 0.6], values: vec![1.0, -2.0, 0.5] }, 0.7),
            (0.5, 2.0, SourceTerm::constant(3.0), -1.0),
            (1.0, 1.0, SourceTerm::dirac(0.4), 0.2),
        ];
        for (beta, gamma, src, u_in) in cases {
            let d = ProblemData::new(unit(), beta, gamma, src.clone(), u_in).unwrap();
            let u = exact_solution(&d).unwrap();
            let h = 1e-6;
            for i in 1..40 {
                let x = i as f64 / 40.0 + 0.003;
                if src.singular_points().iter().any(|s| (s - x).abs() < 1e-2) {
                    continue;
                }
                let du = (u.eval(x + h) - u.eval(x - h)) / (2.0 * h);
                let res = beta * du + gamma * u.eval(x) - src.regular_part(x);
                // central differences limit the attainable accuracy
                assert!(res.abs() < 1e-6, "beta={beta} x={x} res={res}");
            }
            assert!((u.eval(0.0) - u_in).abs() < 1e-14);
        }
    }

    #[test]
    fn mollified_solution_approaches_step() {
        let src = SourceTerm::Dirac { location: 0.5, mode: DiracMode::Mollified { width: 1e-3 } };
        let d = ProblemData::new(unit(), 1.0, 0.0, src, 0.0).unwrap();
        let u = exact_solution(&d).unwrap();
        assert!(u.eval(0.4).abs() < 1e-12);
        assert!((u.eval(0.6) - 1.0).abs() < 1e-12);
        assert!((u.eval(0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ode_reference_matches_closed_form() {
        let d = ProblemData::new(unit(), 1.0, 1.0, SourceTerm::constant(0.0), 1.0).unwrap();
        let r = ReferenceSolution::from_ode(&d, 1000).unwrap();
        for x in [0.0, 0.123, 0.5, 1.0] {
            assert!((r.eval(x) - (-x).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn operator_constants_formulas() {
        let c = OperatorConstants::from_bounds(1.0, 1.0, 1.0);
        assert_eq!(c.omega, 0.0);
        assert_eq!(c.delta_star, 0.5);
        let c = OperatorConstants::from_bounds(0.5, 1.0, 1.0);
        assert_eq!(c.omega, 0.75);
        assert_eq!(c.delta_star, 0.125);
        let c = OperatorConstants::from_bounds(0.5, 1.0, 2.0);
        assert!(!c.is_contractive());
        assert_eq!(c.delta_star, 0.0);
    }

    #[test]
    fn lagrange_basis_is_partition_of_unity() {
        let mesh = build_uniform_mesh(&unit(), 1).unwrap();
        for p in 0..5 {
            let s = TrialSpace::new(mesh.clone(), p);
            let mut out = vec![0.0; p + 1];
            for t in [0.0, 0.17, 0.5, 0.99] {
                s.local_basis(t, &mut out);
                assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-13);
            }
        }
    }
}

//! Quadrature on merged partitions and assembly of the bilinear form
//! `b(w, v) = int w (gamma v - beta v')`, the load `l(v) = int f v`, the
//! `V`-Gram matrix and the `L^2` mass matrix of the trial space.
//!
//! On every cell of the merged partition (mesh nodes together with ReLU
//! breakpoints) both the trial function and the ReLU function are single
//! polynomials, so a Gauss rule of order `p + 3` is exact.
//!
//! The load carries the inflow boundary term `beta u_in v(a)`, which vanishes
//! for homogeneous inflow data.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::linalg::{mirror_upper, DenseSymMatrix, DenseVector};
use crate::model::{normal_cdf, normal_pdf, DiracMode, Domain1D, Mesh1D, ProblemData, ReluResidual, SourceTerm, TrialFunction, TrialSpace};
use crate::quadrature::GaussRule;

#[derive(Debug, Clone, PartialEq)]
pub struct MergedPartition {
    pub points: Vec<f64>,
    /// Gauss points per cell.
    pub order: usize,
}

impl MergedPartition {
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn num_cells(&self) -> usize {
        self.points.len() - 1
    }
}

/// Sorted union of `base` and `extra`, with points closer than
/// `1e-14 (b - a)` collapsed onto the first one.
pub fn merge_points(domain: &Domain1D, base: &[f64], extra: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = base.iter().chain(extra).copied().collect();
    all.sort_by(f64::total_cmp);
    let tol = domain.dedup_tol();
    let mut out: Vec<f64> = Vec::with_capacity(all.len());
    for x in all {
        match out.last() {
            Some(&last) if x - last <= tol => {}
            _ => out.push(x),
        }
    }
    out
}

pub fn merged_partition(mesh: &Mesh1D, breakpoints: &[f64], order: usize) -> MergedPartition {
    MergedPartition { points: merge_points(&mesh.domain(), mesh.nodes(), breakpoints), order }
}

/// Gauss order used for trial degree `p`.
pub fn quadrature_order(p: usize) -> usize {
    p + 3
}

/// The load functional of a problem, with cumulative moments
/// `M0(t) = int_a^t f` and `M1(t) = int_a^t (x - a) f` of the source.
///
/// Moments are exact for piecewise-constant and point sources and for the
/// Gaussian mollifier; smooth densities use a tabulated composite Gauss rule.
#[derive(Debug, Clone)]
pub struct LoadFunctional {
    domain: Domain1D,
    inflow_weight: f64,
    kind: LoadKind,
}

#[derive(Debug, Clone)]
enum LoadKind {
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
    Point { location: f64 },
    Gaussian { location: f64, width: f64 },
    Tabulated(SmoothTable),
}

#[derive(Clone)]
struct SmoothTable {
    f: crate::model::Density,
    h: f64,
    cum0: Vec<f64>,
    cum1: Vec<f64>,
    rule: GaussRule,
}

impl std::fmt::Debug for SmoothTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothTable").field("cells", &self.cum0.len()).finish()
    }
}

const SMOOTH_TABLE_CELLS: usize = 2048;

impl LoadFunctional {
    pub fn new(data: &ProblemData) -> Self {
        let domain = data.domain;
        let kind = match &data.source {
            SourceTerm::PiecewiseConstant { breaks, values } => {
                LoadKind::Piecewise { breaks: breaks.clone(), values: values.clone() }
            }
            SourceTerm::Dirac { location, mode: DiracMode::PointEvaluation } => LoadKind::Point { location: *location },
            SourceTerm::Dirac { location, mode: DiracMode::Mollified { width } } => {
                LoadKind::Gaussian { location: *location, width: *width }
            }
            SourceTerm::Smooth(f) => {
                let rule = GaussRule::new(8);
                let h = domain.length() / SMOOTH_TABLE_CELLS as f64;
                let mut cum0 = vec![0.0; SMOOTH_TABLE_CELLS + 1];
                let mut cum1 = vec![0.0; SMOOTH_TABLE_CELLS + 1];
                for k in 0..SMOOTH_TABLE_CELLS {
                    let lo = domain.a + k as f64 * h;
                    let (mut s0, mut s1) = (0.0, 0.0);
                    for (x, w) in rule.mapped(lo, lo + h) {
                        let fx = f(x);
                        s0 += w * fx;
                        s1 += w * (x - domain.a) * fx;
                    }
                    cum0[k + 1] = cum0[k] + s0;
                    cum1[k + 1] = cum1[k] + s1;
                }
                LoadKind::Tabulated(SmoothTable { f: f.clone(), h, cum0, cum1, rule })
            }
        };
        Self { domain, inflow_weight: data.beta * data.u_in, kind }
    }

    pub fn domain(&self) -> &Domain1D {
        &self.domain
    }

    /// `(int_a^t f, int_a^t (x - a) f)`. Point sources count as inside
    /// `(a, t]`.
    pub fn moments(&self, t: f64) -> (f64, f64) {
        let a = self.domain.a;
        match &self.kind {
            LoadKind::Piecewise { breaks, values } => {
                let mut lo = a;
                let (mut m0, mut m1) = (0.0, 0.0);
                for (k, &v) in values.iter().enumerate() {
                    if lo >= t {
                        break;
                    }
                    let hi = breaks.get(k).copied().unwrap_or(self.domain.b).min(t);
                    let (s, e) = (lo - a, hi - a);
                    m0 += v * (e - s);
                    m1 += v * 0.5 * (e - s) * (e + s);
                    lo = hi;
                }
                (m0, m1)
            }
            LoadKind::Point { location } => {
                if *location <= t {
                    (1.0, location - a)
                } else {
                    (0.0, 0.0)
                }
            }
            LoadKind::Gaussian { location, width } => {
                let z = |s: f64| (s - location) / width;
                let m0 = normal_cdf(z(t)) - normal_cdf(z(a));
                // int (x - x0) g = -width^2 [g]
                let g = |s: f64| normal_pdf(z(s)) / width;
                let centred = -width * width * (g(t) - g(a));
                (m0, centred + (location - a) * m0)
            }
            LoadKind::Tabulated(tab) => {
                let s = ((t - a) / tab.h).max(0.0);
                let k = (s.floor() as usize).min(tab.cum0.len() - 1);
                let lo = a + k as f64 * tab.h;
                let (mut m0, mut m1) = (tab.cum0[k], tab.cum1[k]);
                if t > lo {
                    for (x, w) in tab.rule.mapped(lo, t) {
                        let fx = (tab.f)(x);
                        m0 += w * fx;
                        m1 += w * (x - a) * fx;
                    }
                }
                (m0, m1)
            }
        }
    }

    /// `int_s^t f v` for `v` linear on `[s, t]` with end values `vs`, `vt`.
    pub fn integrate_linear(&self, s: f64, t: f64, vs: f64, vt: f64) -> f64 {
        if t <= s {
            return 0.0;
        }
        let (a0, a1) = self.moments(s);
        let (b0, b1) = self.moments(t);
        let slope = (vt - vs) / (t - s);
        // v(x) = vs + slope ((x - a) - (s - a))
        let shift = s - self.domain.a;
        (vs - slope * shift) * (b0 - a0) + slope * (b1 - a1)
    }

    /// Boundary contribution `beta u_in v(a)`.
    pub fn inflow_term(&self, v_at_inflow: f64) -> f64 {
        self.inflow_weight * v_at_inflow
    }

    /// `l(ReLU(b_i - .))`.
    pub fn relu(&self, knot: f64) -> f64 {
        let (m0, m1) = self.moments(knot);
        let d = knot - self.domain.a;
        d * m0 - m1 + self.inflow_term(d)
    }

    /// `l(1)`.
    pub fn constant(&self) -> f64 {
        self.moments(self.domain.b).0 + self.inflow_term(1.0)
    }

    pub fn apply(&self, v: &ReluResidual) -> f64 {
        let tail: f64 = v.breakpoints().iter().zip(v.coeffs()).map(|(&t, &c)| c * self.relu(t)).sum();
        tail + v.c0().map_or(0.0, |c| c * self.constant())
    }
}

pub fn assemble_load(v: &ReluResidual, data: &ProblemData) -> f64 {
    LoadFunctional::new(data).apply(v)
}

/// Entry `j` is `b(psi_j, v)` for the trial basis function `psi_j`.
pub fn assemble_b_vector(space: &TrialSpace, v: &ReluResidual, beta: f64, gamma: f64) -> DenseVector {
    let n = space.local_dim();
    let part = merged_partition(&space.mesh, v.breakpoints(), quadrature_order(space.degree));
    let rule = GaussRule::new(part.order);
    let mut out = DVector::zeros(space.dim());
    let mut basis = vec![0.0; n];
    let mut k = 0;
    for (lo, hi) in part.cells() {
        let mid = 0.5 * (lo + hi);
        while space.mesh.element(k).1 < mid {
            k += 1;
        }
        let (elo, ehi) = space.mesh.element(k);
        for (x, w) in rule.mapped(lo, hi) {
            let g = gamma * v.value_unchecked(x) - beta * v.derivative_unchecked(x);
            space.local_basis((x - elo) / (ehi - elo), &mut basis);
            for (i, b) in basis.iter().enumerate() {
                out[k * n + i] += w * b * g;
            }
        }
    }
    out
}

/// `b(w, v)` for a trial function `w`.
pub fn bilinear_form(w: &TrialFunction, v: &ReluResidual, beta: f64, gamma: f64) -> f64 {
    assemble_b_vector(&w.space, v, beta, gamma).as_slice().iter().zip(&w.coeffs).map(|(g, c)| g * c).sum()
}

fn check_breaks(breaks: &[f64], domain: &Domain1D) -> Result<()> {
    if breaks.iter().any(|&t| !(t > domain.a && t <= domain.b)) {
        return Err(invalid("breakpoints must lie in (a, b]"));
    }
    let tol = domain.dedup_tol();
    if let Some(w) = breaks.windows(2).find(|w| w[1] - w[0] <= tol) {
        if w[1] < w[0] {
            return Err(invalid("breakpoints must be sorted"));
        }
        return Err(Error::SingularBasis(format!("breakpoints {} and {} coincide", w[0], w[1])));
    }
    Ok(())
}

/// `V`-Gram matrix of `{1 (if c0_included), ReLU(b_1 - x), ..., ReLU(b_M - x)}`
/// with `(r, v)_V = int r v + beta^2 int r' v'`.
///
/// The product of two basis functions is one polynomial on `[a, min(b_i, b_j)]`
/// and vanishes beyond, so a two-point rule on that interval is exact.
pub fn gram_matrix_v(breaks: &[f64], c0_included: bool, beta: f64, domain: &Domain1D) -> Result<DenseSymMatrix> {
    check_breaks(breaks, domain)?;
    Ok(gram_unchecked(breaks, c0_included, beta, domain))
}

pub(crate) fn gram_unchecked(breaks: &[f64], c0_included: bool, beta: f64, domain: &Domain1D) -> DenseSymMatrix {
    let off = usize::from(c0_included);
    let m = breaks.len();
    let a = domain.a;
    let beta2 = beta * beta;
    let mut g = DMatrix::zeros(m + off, m + off);
    // two-point Gauss on [a, a + len]
    let z = 0.5 / 3f64.sqrt();
    let (t1, t2) = (0.5 - z, 0.5 + z);
    for i in 0..m {
        let bi = breaks[i] - a;
        for j in i..m {
            let bj = breaks[j] - a;
            let len = bi.min(bj);
            let (x1, x2) = (t1 * len, t2 * len);
            let l2 = 0.5 * len * ((bi - x1) * (bj - x1) + (bi - x2) * (bj - x2));
            g[(i + off, j + off)] = l2 + beta2 * len;
        }
    }
    if c0_included {
        g[(0, 0)] = domain.length();
        for j in 0..m {
            let bj = breaks[j] - a;
            g[(0, j + 1)] = 0.5 * bj * bj;
        }
    }
    mirror_upper(&mut g);
    g
}

/// Block-diagonal `L^2` mass matrix of the trial space.
pub fn mass_matrix_u(space: &TrialSpace) -> DenseSymMatrix {
    let n = space.local_dim();
    let rule = GaussRule::new(space.degree + 2);
    let mut reference = DMatrix::zeros(n, n);
    let mut basis = vec![0.0; n];
    for (t, w) in rule.mapped(0.0, 1.0) {
        space.local_basis(t, &mut basis);
        for i in 0..n {
            for j in i..n {
                reference[(i, j)] += w * basis[i] * basis[j];
            }
        }
    }
    mirror_upper(&mut reference);
    let ne = space.mesh.num_elements();
    let mut m = DMatrix::zeros(ne * n, ne * n);
    for k in 0..ne {
        let (lo, hi) = space.mesh.element(k);
        m.view_mut((k * n, k * n), (n, n)).copy_from(&(&reference * (hi - lo)));
    }
    m
}

/// `||v||_V`.
pub fn vnorm(v: &ReluResidual, beta: f64) -> f64 {
    let g = gram_unchecked(v.breakpoints(), v.include_constant(), beta, v.domain());
    let c = DVector::from_vec(v.basis_coeffs());
    c.dot(&(&g * &c)).max(0.0).sqrt()
}

/// `(r, v)_V` for two ReLU functions with possibly different knots, by Gauss
/// quadrature on the merged knot partition.
pub fn v_inner(r: &ReluResidual, v: &ReluResidual, beta: f64) -> f64 {
    let dom = *r.domain();
    let pts = merge_points(&dom, &[dom.a, dom.b], &[r.breakpoints(), v.breakpoints()].concat());
    let rule = GaussRule::new(3);
    let beta2 = beta * beta;
    pts.windows(2)
        .map(|w| {
            rule.integrate(w[0], w[1], |x| {
                r.value_unchecked(x) * v.value_unchecked(x)
                    + beta2 * r.derivative_unchecked(x) * v.derivative_unchecked(x)
            })
        })
        .sum()
}

/// Cumulative moments `int_a^t u_h` and `int_a^t (x - a) u_h` of a trial function.
#[derive(Debug, Clone)]
pub struct TrialMoments<'a> {
    u: &'a TrialFunction,
    cum0: Vec<f64>,
    cum1: Vec<f64>,
    rule: GaussRule,
}

impl<'a> TrialMoments<'a> {
    pub fn new(u: &'a TrialFunction) -> Self {
        let mesh = &u.space.mesh;
        let a = mesh.nodes()[0];
        let rule = GaussRule::new(u.space.degree + 2);
        let ne = mesh.num_elements();
        let mut cum0 = vec![0.0; ne + 1];
        let mut cum1 = vec![0.0; ne + 1];
        for k in 0..ne {
            let (lo, hi) = mesh.element(k);
            let (mut s0, mut s1) = (0.0, 0.0);
            for (x, w) in rule.mapped(lo, hi) {
                let ux = u.eval_on_element(k, x);
                s0 += w * ux;
                s1 += w * (x - a) * ux;
            }
            cum0[k + 1] = cum0[k] + s0;
            cum1[k + 1] = cum1[k] + s1;
        }
        Self { u, cum0, cum1, rule }
    }

    pub fn moments(&self, t: f64) -> (f64, f64) {
        let mesh = &self.u.space.mesh;
        let a = mesh.nodes()[0];
        let k = mesh.nodes().partition_point(|&x| x <= t).saturating_sub(1).min(mesh.num_elements() - 1);
        let lo = mesh.nodes()[k];
        let (mut m0, mut m1) = (self.cum0[k], self.cum1[k]);
        if t > lo {
            for (x, w) in self.rule.mapped(lo, t) {
                let ux = self.u.eval_on_element(k, x);
                m0 += w * ux;
                m1 += w * (x - a) * ux;
            }
        }
        (m0, m1)
    }

    /// `b(u_h, ReLU(knot - .)) = int_a^knot u_h (gamma (knot - x) + beta)`.
    pub fn b_relu(&self, knot: f64, beta: f64, gamma: f64) -> f64 {
        let a = self.u.space.mesh.nodes()[0];
        let (m0, m1) = self.moments(knot);
        gamma * ((knot - a) * m0 - m1) + beta * m0
    }

    /// `b(u_h, 1)`.
    pub fn b_constant(&self, gamma: f64) -> f64 {
        let b = *self.u.space.mesh.nodes().last().unwrap();
        gamma * self.moments(b).0
    }
}

/// Right-hand side `l(phi_i) - b(u_h, phi_i)` over the knot basis, in basis
/// order `[1 if c0_included, phi_1, ..., phi_M]`.
pub fn knot_residual_vector(
    breaks: &[f64],
    c0_included: bool,
    load: &LoadFunctional,
    moments: &TrialMoments<'_>,
    beta: f64,
    gamma: f64,
) -> DenseVector {
    let head = c0_included.then(|| load.constant() - moments.b_constant(gamma));
    let tail = breaks.iter().map(|&t| load.relu(t) - moments.b_relu(t, beta, gamma));
    DVector::from_iterator(breaks.len() + usize::from(c0_included), head.into_iter().chain(tail))
}

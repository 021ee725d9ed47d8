//! Oracles and theory checks: a conforming fine test space standing in for
//! `V`, the Riesz representer of the residual in it, discrete operator
//! constants, and error norms.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::assembly::{merge_points, quadrature_order, LoadFunctional};
use crate::error::{invalid, Error, Result};
use crate::linalg::{spd_factor, SymTridiagonal};
use crate::minres::{KnotSolution, ResidualFunctional};
use crate::model::{Domain1D, Mesh1D, OperatorConstants, ProblemData, ReluResidual, TrialFunction, TrialSpace};
use crate::quadrature::{composite, GaussRule};

pub const DEFAULT_REFINEMENT: usize = 64;

/// Continuous piecewise-linear functions on the trial mesh refined `R`
/// times, vanishing at the outflow end. Basis function `i` is the hat at
/// fine node `i`, so the space has one dof per fine node except the last.
#[derive(Debug, Clone)]
pub struct FineTestSpace {
    space: TrialSpace,
    refinement: usize,
    nodes: Vec<f64>,
    beta: f64,
    gram: SymTridiagonal,
    /// Rows: fine hats. Columns: trial basis. Entry `b(psi_j, v_i)`.
    b: DMatrix<f64>,
    /// `l(v_i)`.
    load: DVector<f64>,
    mass_u: Cholesky<f64, Dyn>,
}

impl FineTestSpace {
    pub fn new(space: &TrialSpace, refinement: usize, data: &ProblemData) -> Result<Self> {
        if refinement == 0 {
            return Err(invalid("refinement factor must be at least 1"));
        }
        if space.mesh.domain() != data.domain {
            return Err(invalid("trial mesh does not cover the problem domain"));
        }
        let fine = space.mesh.refine(refinement);
        let nodes = fine.nodes().to_vec();
        let nf = nodes.len() - 1;
        let (beta, gamma) = (data.beta, data.gamma);

        let mut diag = vec![0.0; nf];
        let mut off = vec![0.0; nf.saturating_sub(1)];
        for c in 0..nf {
            let h = nodes[c + 1] - nodes[c];
            let d = h / 3.0 + beta * beta / h;
            diag[c] += d;
            if c + 1 < nf {
                diag[c + 1] += d;
                off[c] += h / 6.0 - beta * beta / h;
            }
        }
        let gram = SymTridiagonal::new(diag, off, "fine V Gram")?;

        let nl = space.local_dim();
        let rule = GaussRule::new(quadrature_order(space.degree));
        let mut b = DMatrix::zeros(nf, space.dim());
        let mut basis = vec![0.0; nl];
        for c in 0..nf {
            let (lo, hi) = (nodes[c], nodes[c + 1]);
            let h = hi - lo;
            let k = c / refinement;
            let (elo, ehi) = space.mesh.element(k);
            for (x, w) in rule.mapped(lo, hi) {
                space.local_basis((x - elo) / (ehi - elo), &mut basis);
                // left hat: (hi - x)/h, slope -1/h; right hat: (x - lo)/h, slope 1/h
                let gl = gamma * (hi - x) / h + beta / h;
                let gr = gamma * (x - lo) / h - beta / h;
                for (i, psi) in basis.iter().enumerate() {
                    b[(c, k * nl + i)] += w * psi * gl;
                    if c + 1 < nf {
                        b[(c + 1, k * nl + i)] += w * psi * gr;
                    }
                }
            }
        }

        let lf = LoadFunctional::new(data);
        let mut load = DVector::zeros(nf);
        for c in 0..nf {
            let (lo, hi) = (nodes[c], nodes[c + 1]);
            load[c] += lf.integrate_linear(lo, hi, 1.0, 0.0);
            if c + 1 < nf {
                load[c + 1] += lf.integrate_linear(lo, hi, 0.0, 1.0);
            }
        }
        if nf > 0 {
            load[0] += lf.inflow_term(1.0);
        }

        let mass_u = spd_factor(crate::assembly::mass_matrix_u(space), "trial mass matrix")?;
        Ok(Self { space: space.clone(), refinement, nodes, beta, gram, b, load, mass_u })
    }

    pub fn trial_space(&self) -> &TrialSpace {
        &self.space
    }

    pub fn refinement(&self) -> usize {
        self.refinement
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn gram(&self) -> &SymTridiagonal {
        &self.gram
    }

    pub fn b_matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn load(&self) -> &DVector<f64> {
        &self.load
    }

    pub fn mass_factor(&self) -> &Cholesky<f64, Dyn> {
        &self.mass_u
    }

    pub fn fine_mesh(&self) -> Mesh1D {
        self.space.mesh.refine(self.refinement)
    }

    /// Riesz representer of `l - b(u, .)` for a coefficient vector `u`.
    pub fn riesz(&self, u: &DVector<f64>) -> DVector<f64> {
        self.gram.solve(&(&self.load - &self.b * u))
    }

    pub fn vnorm_coeffs(&self, c: &DVector<f64>) -> f64 {
        self.gram.quad_form(c).max(0.0).sqrt()
    }

    pub fn function(&self, coeffs: DVector<f64>) -> FineFunction {
        let norm = self.vnorm_coeffs(&coeffs);
        FineFunction { nodes: self.nodes.clone(), coeffs, norm }
    }

    /// `L_G^{-1} B`, the trial-to-test map in orthonormal test coordinates.
    fn whitened_b(&self) -> DMatrix<f64> {
        let mut x = self.b.clone();
        self.gram.solve_lower_in_place(&mut x);
        x
    }

    /// Minimizer of `||l - B u||_{G^{-1}}` over the trial space: the
    /// discrete mixed solution with the fine space as test space.
    pub fn discrete_solution(&self) -> Result<TrialFunction> {
        let x = self.whitened_b();
        let mut y = DMatrix::from_column_slice(self.dim(), 1, self.load.as_slice());
        self.gram.solve_lower_in_place(&mut y);
        let svd = x.svd(true, true);
        let tol = 1e-14 * svd.singular_values.max();
        let u = svd.solve(&y, tol).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        TrialFunction::new(self.space.clone(), u.as_slice().to_vec())
    }
}

/// An element of the fine test space.
#[derive(Debug, Clone, PartialEq)]
pub struct FineFunction {
    nodes: Vec<f64>,
    /// Nodal values at all fine nodes except the outflow node.
    pub coeffs: DVector<f64>,
    norm: f64,
}

impl FineFunction {
    pub fn vnorm(&self) -> f64 {
        self.norm
    }

    fn node_value(&self, i: usize) -> f64 {
        if i < self.coeffs.len() {
            self.coeffs[i]
        } else {
            0.0
        }
    }

    fn cell(&self, x: f64) -> usize {
        let n = self.nodes.len() - 1;
        self.nodes.partition_point(|&t| t < x).saturating_sub(1).min(n - 1)
    }

    pub fn value(&self, x: f64) -> f64 {
        let c = self.cell(x);
        let (lo, hi) = (self.nodes[c], self.nodes[c + 1]);
        let t = (x - lo) / (hi - lo);
        (1.0 - t) * self.node_value(c) + t * self.node_value(c + 1)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let c = self.cell(x);
        (self.node_value(c + 1) - self.node_value(c)) / (self.nodes[c + 1] - self.nodes[c])
    }
}

pub fn oracle_residual(u_h: &TrialFunction, fine: &FineTestSpace) -> FineFunction {
    let u = DVector::from_column_slice(&u_h.coeffs);
    fine.function(fine.riesz(&u))
}

/// `||rbar - r_n||_V`, integrated exactly on the union of fine nodes and knots.
pub fn fine_relu_gap(rbar: &FineFunction, r_n: &ReluResidual, beta: f64) -> f64 {
    let dom = Domain1D { a: rbar.nodes[0], b: rbar.nodes[rbar.nodes.len() - 1] };
    let pts = merge_points(&dom, &rbar.nodes, r_n.breakpoints());
    let rule = GaussRule::new(2);
    let b2 = beta * beta;
    let total: f64 = pts
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let c = rbar.cell(mid);
            let (lo, hi) = (rbar.nodes[c], rbar.nodes[c + 1]);
            let (vl, vr) = (rbar.node_value(c), rbar.node_value(c + 1));
            let slope = (vr - vl) / (hi - lo);
            let dd = slope - r_n.derivative_unchecked(mid);
            let lin = rule.integrate(w[0], w[1], |x| {
                let d = vl + slope * (x - lo) - r_n.value_unchecked(x);
                d * d
            });
            lin + b2 * dd * dd * (w[1] - w[0])
        })
        .sum();
    total.max(0.0).sqrt()
}

/// Singular values of `G^{-1/2} B M^{-1/2}`, ascending.
pub fn normalized_singular_values(fine: &FineTestSpace) -> DVector<f64> {
    // Z = L_M^{-1} B^T, so Z^T = B L_M^{-T}.
    let mut z = fine.b.transpose();
    fine.mass_u.l_dirty().solve_lower_triangular_mut(&mut z);
    let mut s = z.transpose();
    fine.gram.solve_lower_in_place(&mut s);
    let mut sv = s.singular_values();
    sv.as_mut_slice().sort_by(f64::total_cmp);
    sv
}

pub fn operator_constants(fine: &FineTestSpace, rho: f64) -> Result<OperatorConstants> {
    if !(rho > 0.0) {
        return Err(invalid(format!("relaxation parameter must be positive, got {rho}")));
    }
    let sv = normalized_singular_values(fine);
    if sv.is_empty() {
        return Err(invalid("empty trial space"));
    }
    Ok(OperatorConstants::from_bounds(sv[0], sv[sv.len() - 1], rho))
}

/// `1 / C_b^2`, the default relaxation parameter.
pub fn default_rho(fine: &FineTestSpace) -> f64 {
    let sv = normalized_singular_values(fine);
    let cb = sv[sv.len() - 1];
    1.0 / (cb * cb)
}

/// The exact-residual Uzawa error map `e -> e - rho M^{-1} B^T G^{-1} B e`,
/// built column by column from its action on basis vectors.
pub fn error_map(fine: &FineTestSpace, rho: f64) -> DMatrix<f64> {
    let n = fine.space.dim();
    let mut e = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut ej = DVector::zeros(n);
        ej[j] = 1.0;
        let r = fine.gram.solve(&(&fine.b * &ej));
        let step = fine.mass_u.solve(&(fine.b.transpose() * r));
        e.set_column(j, &(ej - step * rho));
    }
    e
}

/// Largest eigenvalue modulus of [`error_map`].
pub fn error_map_spectral_radius(fine: &FineTestSpace, rho: f64) -> f64 {
    error_map(fine, rho).complex_eigenvalues().iter().fold(0.0_f64, |m, z| m.max(z.norm()))
}

/// `(||r_n||_V + gap) / mu`.
pub fn aposteriori_indicator(residual_norm: f64, oracle_gap: f64, mu: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(invalid(format!("inf-sup constant must be positive, got {mu}")));
    }
    Ok((residual_norm + oracle_gap) / mu)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub l2_error_u: f64,
    /// `L^2` distance between `-beta r_n' + gamma r_n` and the regular part of
    /// the source, outside the exclusion windows.
    pub residual_expr_error: f64,
    pub dual_norm: f64,
    pub dofs_u: usize,
    pub dofs_r: usize,
}

const ERROR_SUBCELLS: usize = 1024;

fn error_rule() -> GaussRule {
    GaussRule::new(10)
}

/// `||u_h - exact||_{L^2}` on a partition containing the mesh nodes and `extra`.
pub fn l2_error(u_h: &TrialFunction, exact: &dyn Fn(f64) -> f64, extra: &[f64]) -> f64 {
    let mesh = &u_h.space.mesh;
    let pts = merge_points(&mesh.domain(), mesh.nodes(), extra);
    let rule = error_rule();
    let mut k = 0;
    let mut total = 0.0;
    for w in pts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        while mesh.element(k).1 < mid {
            k += 1;
        }
        total += composite(&rule, w[0], w[1], ERROR_SUBCELLS, |x| {
            let d = u_h.eval_on_element(k, x) - exact(x);
            d * d
        });
    }
    total.max(0.0).sqrt()
}

pub fn error_report(
    u_h: &TrialFunction,
    r_n: &ReluResidual,
    data: &ProblemData,
    exact: &dyn Fn(f64) -> f64,
    w_excl: f64,
) -> ErrorReport {
    let singular = data.source.singular_points();
    let extra: Vec<f64> = singular.iter().chain(r_n.breakpoints()).copied().collect();
    let l2_error_u = l2_error(u_h, exact, &extra);

    let dom = data.domain;
    let is_dirac = matches!(data.source, crate::model::SourceTerm::Dirac { .. });
    let mut cuts = extra.clone();
    if is_dirac {
        for &x0 in &singular {
            cuts.push((x0 - 0.5 * w_excl).max(dom.a));
            cuts.push((x0 + 0.5 * w_excl).min(dom.b));
        }
    }
    let pts = merge_points(&dom, &[dom.a, dom.b], &cuts);
    let rule = error_rule();
    let excluded = |mid: f64| is_dirac && singular.iter().any(|&x0| (mid - x0).abs() < 0.5 * w_excl);
    let mut total = 0.0;
    for w in pts.windows(2) {
        if excluded(0.5 * (w[0] + w[1])) {
            continue;
        }
        total += composite(&rule, w[0], w[1], 16, |x| {
            let expr = -data.beta * r_n.derivative_unchecked(x) + data.gamma * r_n.value_unchecked(x);
            let d = expr - data.source.regular_part(x);
            d * d
        });
    }
    ErrorReport {
        l2_error_u,
        residual_expr_error: total.max(0.0).sqrt(),
        dual_norm: crate::assembly::vnorm(r_n, data.beta),
        dofs_u: u_h.space.dim(),
        dofs_r: r_n.len() + usize::from(r_n.include_constant()),
    }
}

/// Best `L^2` approximation of `exact` in the trial space. `breaks` lists
/// points where `exact` is not smooth.
pub fn l2_projection(space: &TrialSpace, exact: &dyn Fn(f64) -> f64, breaks: &[f64]) -> Result<TrialFunction> {
    let n = space.local_dim();
    let rule = error_rule();
    let mut coeffs = vec![0.0; space.dim()];
    let mut basis = vec![0.0; n];
    for k in 0..space.mesh.num_elements() {
        let (lo, hi) = space.mesh.element(k);
        let inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > lo && x < hi).collect();
        let pts = merge_points(&Domain1D { a: lo, b: hi }, &[lo, hi], &inner);
        let mut m = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for w in pts.windows(2) {
            let h = (w[1] - w[0]) / ERROR_SUBCELLS as f64;
            for s in 0..ERROR_SUBCELLS {
                let s0 = w[0] + s as f64 * h;
                for (x, wt) in rule.mapped(s0, s0 + h) {
                    space.local_basis((x - lo) / (hi - lo), &mut basis);
                    let fx = exact(x);
                    for i in 0..n {
                        rhs[i] += wt * basis[i] * fx;
                        for j in 0..n {
                            m[(i, j)] += wt * basis[i] * basis[j];
                        }
                    }
                }
            }
        }
        let c = spd_factor(m, "element mass matrix")?.solve(&rhs);
        coeffs[k * n..(k + 1) * n].copy_from_slice(c.as_slice());
    }
    TrialFunction::new(space.clone(), coeffs)
}

/// Exhaustive search over all `m`-subsets of the sorted `grid` for the knots
/// minimizing the residual objective at fixed `u_h`.
pub fn knot_grid_oracle(
    u_h: &TrialFunction,
    data: &ProblemData,
    m: usize,
    grid: &[f64],
    include_constant: bool,
) -> Result<(Vec<f64>, KnotSolution)> {
    if m == 0 || m > grid.len() {
        return Err(invalid(format!("cannot choose {m} knots from a grid of {}", grid.len())));
    }
    let functional = ResidualFunctional::new(u_h, data, include_constant);
    let mut idx: Vec<usize> = (0..m).collect();
    let mut best: Option<(Vec<f64>, KnotSolution)> = None;
    let mut knots = vec![0.0; m];
    loop {
        for (k, &i) in knots.iter_mut().zip(&idx) {
            *k = grid[i];
        }
        if let Ok(sol) = functional.solve(&knots) {
            if best.as_ref().is_none_or(|(_, b)| sol.j < b.j) {
                best = Some((knots.clone(), sol));
            }
        }
        // next combination in lexicographic order
        let Some(pos) = (0..m).rev().find(|&i| idx[i] < grid.len() - m + i) else { break };
        idx[pos] += 1;
        for i in pos + 1..m {
            idx[i] = idx[i - 1] + 1;
        }
    }
    best.ok_or(Error::DegenerateResidual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_load, bilinear_form, gram_matrix_v};
    use crate::model::{build_uniform_mesh, exact_solution, SourceTerm};

    fn case2() -> ProblemData {
        ProblemData::new(Domain1D::unit(), 1.0, 0.0, SourceTerm::dirac(0.5), 0.0).unwrap()
    }

    fn space(n: usize, p: usize) -> TrialSpace {
        TrialSpace::new(build_uniform_mesh(&Domain1D::unit(), n).unwrap(), p)
    }

    fn hat(fine: &FineTestSpace, i: usize) -> FineFunction {
        let mut c = DVector::zeros(fine.dim());
        c[i] = 1.0;
        fine.function(c)
    }

    #[test]
    fn riesz_identity_on_fine_basis() {
        let data = ProblemData::new(Domain1D::unit(), 0.7, 0.3, SourceTerm::constant(1.5), 0.2).unwrap();
        let s = space(3, 1);
        let fine = FineTestSpace::new(&s, 8, &data).unwrap();
        let u = TrialFunction::new(s.clone(), (0..s.dim()).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let rbar = oracle_residual(&u, &fine);
        let gr = fine.gram().mul_vec(&rbar.coeffs);
        let rhs = fine.load() - fine.b_matrix() * DVector::from_column_slice(&u.coeffs);
        assert!((gr - rhs).amax() < 1e-10);
    }

    #[test]
    fn fine_matrices_match_relu_assembly() {
        // Interior fine hats are differences of ReLUs with knots on fine nodes.
        let data = ProblemData::new(Domain1D::unit(), 0.9, 0.4, SourceTerm::constant(2.0), 0.0).unwrap();
        let s = space(2, 2);
        let fine = FineTestSpace::new(&s, 4, &data).unwrap();
        let x = fine.nodes().to_vec();
        let h = x[1] - x[0];
        let i = 3;
        let v = ReluResidual::new(
            data.domain,
            vec![x[i - 1], x[i], x[i + 1]],
            vec![1.0 / h, -2.0 / h, 1.0 / h],
            None,
        )
        .unwrap();
        let u = TrialFunction::new(s.clone(), vec![0.3, -1.0, 0.5, 2.0, 0.1, -0.4]).unwrap();
        let bu = (fine.b_matrix() * DVector::from_column_slice(&u.coeffs))[i];
        assert!((bu - bilinear_form(&u, &v, data.beta, data.gamma)).abs() < 1e-12);
        assert!((fine.load()[i] - assemble_load(&v, &data)).abs() < 1e-12);
        let hv = hat(&fine, i);
        assert!((hv.value(x[i]) - v.value_unchecked(x[i])).abs() < 1e-14);
        assert!(fine_relu_gap(&hv, &v, data.beta) < 1e-7);
    }

    #[test]
    fn grid_oracle_beats_every_subset() {
        let data = case2();
        let s = space(2, 0);
        let u = TrialFunction::new(s, vec![0.2, 0.7]).unwrap();
        let grid: Vec<f64> = (1..=12).map(|i| i as f64 / 12.0).collect();
        let (knots, best) = knot_grid_oracle(&u, &data, 2, &grid, false).unwrap();
        assert_eq!(knots.len(), 2);
        let f = ResidualFunctional::new(&u, &data, false);
        for i in 0..grid.len() {
            for j in i + 1..grid.len() {
                assert!(best.j <= f.solve(&[grid[i], grid[j]]).unwrap().j + 1e-15);
            }
        }
    }

    #[test]
    fn zero_residual_gives_zero_representer() {
        let data = case2();
        let s = space(4, 0);
        let fine = FineTestSpace::new(&s, 8, &data).unwrap();
        let u = TrialFunction::new(s, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(oracle_residual(&u, &fine).vnorm() < 1e-12);
    }

    #[test]
    fn fine_space_dominates_relu_members() {
        let data = case2();
        let s = space(3, 1);
        let fine = FineTestSpace::new(&s, 16, &data).unwrap();
        let u = s.zero();
        let rbar = oracle_residual(&u, &fine);
        let knots: Vec<f64> = fine.nodes()[1..].iter().step_by(5).copied().collect();
        let sol = crate::minres::solve_coeffs_given_breaks(&knots, &u, &data, false).unwrap();
        let r_n = sol.into_residual(data.domain, &knots, false).unwrap();
        let dn = crate::assembly::vnorm(&r_n, data.beta);
        assert!(rbar.vnorm() >= dn - 1e-12);
        // quasi-optimality in the same inner product
        let gap = fine_relu_gap(&rbar, &r_n, data.beta);
        assert!((gap * gap - (rbar.vnorm().powi(2) - dn * dn)).abs() < 1e-9);
    }

    #[test]
    fn mesh_independence_of_dual_norm() {
        let data = ProblemData::new(Domain1D::unit(), 1.0, 0.5, SourceTerm::smooth(|x| (3.0 * x).cos()), 0.0).unwrap();
        let s = space(2, 1);
        let u = s.constant(0.3);
        let n64 = oracle_residual(&u, &FineTestSpace::new(&s, 64, &data).unwrap()).vnorm();
        let n128 = oracle_residual(&u, &FineTestSpace::new(&s, 128, &data).unwrap()).vnorm();
        assert!((n64 - n128).abs() < 0.01 * n128);
    }

    #[test]
    fn identity_and_hand_constants() {
        let c = OperatorConstants::from_bounds(1.0, 1.0, 1.0);
        assert_eq!((c.mu, c.cb, c.omega, c.delta_star), (1.0, 1.0, 0.0, 0.5));
        let c = OperatorConstants::from_bounds(0.5, 1.0, 1.0);
        assert!((c.omega - 0.75).abs() < 1e-15 && (c.delta_star - 0.125).abs() < 1e-15);
        assert!(!OperatorConstants::from_bounds(0.5, 1.0, 2.0).is_contractive());
    }

    #[test]
    fn spectral_radius_matches_omega() {
        let data = case2();
        let s = space(3, 1);
        let fine = FineTestSpace::new(&s, 16, &data).unwrap();
        for rho in [0.5 * default_rho(&fine), default_rho(&fine), 1.7 * default_rho(&fine)] {
            let c = operator_constants(&fine, rho).unwrap();
            assert!(c.mu > 0.0 && c.mu <= c.cb);
            assert!((error_map_spectral_radius(&fine, rho) - c.omega).abs() < 1e-8);
        }
    }

    #[test]
    fn constants_stable_under_refinement() {
        let data = case2();
        let s = space(4, 1);
        let c1 = operator_constants(&FineTestSpace::new(&s, 32, &data).unwrap(), 1.0).unwrap();
        let c2 = operator_constants(&FineTestSpace::new(&s, 64, &data).unwrap(), 1.0).unwrap();
        assert!((c1.mu - c2.mu).abs() < 0.05 * c2.mu);
        assert!((c1.cb - c2.cb).abs() < 0.05 * c2.cb);
    }

    #[test]
    fn singular_values_survive_gram_cross_check() {
        // Same constants through the dense ReLU Gram on fine-node knots.
        let data = case2();
        let s = space(2, 0);
        let fine = FineTestSpace::new(&s, 4, &data).unwrap();
        let knots: Vec<f64> = fine.nodes()[1..].to_vec();
        assert!(gram_matrix_v(&knots, false, 1.0, &data.domain).is_ok());
        let sv = normalized_singular_values(&fine);
        assert_eq!(sv.len(), 2);
        assert!(sv[0] > 0.0);
    }

    #[test]
    fn rank_deficient_operator_has_unit_omega() {
        let c = OperatorConstants::from_bounds(0.0, 2.0, 0.25);
        assert!(c.is_rank_deficient() && c.omega == 1.0 && c.delta_star == 0.0);
    }

    #[test]
    fn indicator_arithmetic() {
        assert_eq!(aposteriori_indicator(0.0, 0.0, 0.3).unwrap(), 0.0);
        assert!((aposteriori_indicator(0.4, 0.1, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(aposteriori_indicator(0.4, 0.1, 0.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn zero_against_heaviside() {
        let data = case2();
        let exact = exact_solution(&data).unwrap();
        let s = space(3, 0);
        let rep = error_report(&s.zero(), &ReluResidual::zero(data.domain), &data, &|x| exact.eval(x), 0.01);
        assert!((rep.l2_error_u - 0.5_f64.sqrt()).abs() < 1e-12);
        assert_eq!(rep.dual_norm, 0.0);
        assert_eq!(rep.dofs_u, 3);
    }

    #[test]
    fn representable_exact_has_no_error() {
        let data = case2();
        let exact = exact_solution(&data).unwrap();
        let s = space(4, 1);
        let u = l2_projection(&s, &|x| exact.eval(x), &[0.5]).unwrap();
        assert!(l2_error(&u, &|x| exact.eval(x), &[0.5]) < 1e-12);
        let fine = FineTestSpace::new(&s, 8, &data).unwrap();
        let ud = fine.discrete_solution().unwrap();
        assert!(l2_error(&ud, &|x| exact.eval(x), &[0.5]) < 1e-10);
    }

    #[test]
    fn projection_error_decreases_with_aligned_refinement() {
        let data = case2();
        let exact = exact_solution(&data).unwrap();
        let f = |x: f64| exact.eval(x) + (2.0 * x).sin();
        let mut last = f64::INFINITY;
        for n in [2, 4, 8] {
            let u = l2_projection(&space(n, 0), &f, &[0.5]).unwrap();
            let e = l2_error(&u, &f, &[0.5]);
            assert!(e < last);
            last = e;
        }
    }
}

//! Shallow 2D ReLU fit of the residual for constant vertical advection
//! `beta = (0, 1)` on the unit square with `u_h = 1/2` and `u` the indicator
//! of `x > 1/2`.
//!
//! The quadratic objective `1/2 ||d_y r||^2 - int (u_h - u) d_y r` equals
//! `1/2 ||d_y r - (u_h - u)||^2` up to a constant. It is collocated at cell
//! centres, and the outflow condition `r(x, 1) = 0` is added as least-squares
//! rows on the top edge. Network:
//! `r = c_0 + sum_i c_i ReLU(cos(t_i) x + sin(t_i) y + d_i)`.

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relu_minres::optimizer::{minimize_bounded, BoundedObjective, SimplexOptions};

use crate::args::DemoArgs;
use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, num, render_svg, write_text, Chart, Series, Table};

/// Closed-form residual target.
pub fn target(x: f64, y: f64) -> f64 {
    if x > 0.5 {
        0.5 * (1.0 - y)
    } else {
        0.5 * (y - 1.0)
    }
}

/// `u_h - u`, the `y`-derivative of [`target`].
pub fn target_dy(x: f64) -> f64 {
    if x > 0.5 {
        -0.5
    } else {
        0.5
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSpec {
    pub neurons: usize,
    pub nx: usize,
    pub ny: usize,
    /// Horizontal extent of the fitted region.
    pub x_range: (f64, f64),
    pub seed: u64,
    pub draws: usize,
    pub optimizer: SimplexOptions,
}

impl DemoSpec {
    pub fn new(neurons: usize, nx: usize, ny: usize) -> Self {
        Self {
            neurons,
            nx,
            ny,
            x_range: (0.0, 1.0),
            seed: 0,
            draws: 200,
            optimizer: SimplexOptions { restarts: 2, ..SimplexOptions::default() },
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.neurons < 1 || self.nx < 8 || self.ny < 8 {
            return Err(CliError::Usage("2D demo needs at least one neuron and an 8x8 grid".into()));
        }
        if !(self.x_range.0 < self.x_range.1) {
            return Err(CliError::Usage("empty x range".into()));
        }
        Ok(())
    }

    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = Vec::with_capacity(2 * self.neurons);
        let mut hi = Vec::with_capacity(2 * self.neurons);
        for _ in 0..self.neurons {
            lo.extend([0.0, -SQRT_2]);
            hi.extend([2.0 * PI, SQRT_2]);
        }
        (lo, hi)
    }
}

/// Collocation points and weights.
pub struct Collocation {
    pub interior: Vec<(f64, f64)>,
    pub w_interior: f64,
    pub top: Vec<f64>,
    pub w_top: f64,
}

impl Collocation {
    pub fn new(spec: &DemoSpec) -> Self {
        let (x0, x1) = spec.x_range;
        let hx = (x1 - x0) / spec.nx as f64;
        let hy = 1.0 / spec.ny as f64;
        let xs: Vec<f64> = (0..spec.nx).map(|i| x0 + (i as f64 + 0.5) * hx).collect();
        let interior =
            xs.iter().flat_map(|&x| (0..spec.ny).map(move |j| (x, (j as f64 + 0.5) * hy))).collect();
        Self { interior, w_interior: hx * hy, top: xs, w_top: hx }
    }
}

/// Linear least-squares fit of `c` for fixed angles and offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    /// `[c_0, c_1, ..., c_n]`.
    pub coeffs: Vec<f64>,
    /// Half the weighted squared misfit.
    pub objective: f64,
}

fn neuron(params: &[f64], i: usize, x: f64, y: f64) -> (f64, f64) {
    let (t, d) = (params[2 * i], params[2 * i + 1]);
    let z = t.cos() * x + t.sin() * y + d;
    if z > 0.0 {
        (z, t.sin())
    } else {
        (0.0, 0.0)
    }
}

pub fn fit_coefficients(col: &Collocation, params: &[f64]) -> LinearFit {
    let n = params.len() / 2;
    let rows = col.interior.len() + col.top.len();
    let mut a = DMatrix::zeros(rows, n + 1);
    let mut b = DVector::zeros(rows);
    let si = col.w_interior.sqrt();
    for (k, &(x, y)) in col.interior.iter().enumerate() {
        for i in 0..n {
            a[(k, i + 1)] = si * neuron(params, i, x, y).1;
        }
        b[k] = si * target_dy(x);
    }
    let st = col.w_top.sqrt();
    let off = col.interior.len();
    for (k, &x) in col.top.iter().enumerate() {
        a[(off + k, 0)] = st;
        for i in 0..n {
            a[(off + k, i + 1)] = st * neuron(params, i, x, 1.0).0;
        }
    }
    let svd = a.clone().svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(1e-300);
    let c = svd.solve(&b, tol).unwrap_or_else(|_| DVector::zeros(n + 1));
    let misfit = (&a * &c - &b).norm_squared();
    LinearFit { coeffs: c.as_slice().to_vec(), objective: 0.5 * misfit }
}

pub fn eval_network(params: &[f64], coeffs: &[f64], x: f64, y: f64) -> (f64, f64) {
    let mut r = coeffs[0];
    let mut dy = 0.0;
    for i in 0..params.len() / 2 {
        let (v, d) = neuron(params, i, x, y);
        r += coeffs[i + 1] * v;
        dy += coeffs[i + 1] * d;
    }
    (r, dy)
}

/// Relative discrete `L^2` errors of `r` against the target and of `d_y r`
/// against `u_h - u` on the interior collocation points.
pub fn relative_errors(col: &Collocation, params: &[f64], coeffs: &[f64]) -> (f64, f64) {
    let (mut er, mut nr, mut ed, mut nd) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in &col.interior {
        let (r, dy) = eval_network(params, coeffs, x, y);
        let (f, g) = (target(x, y), target_dy(x));
        er += (r - f).powi(2);
        nr += f * f;
        ed += (dy - g).powi(2);
        nd += g * g;
    }
    ((er / nr).sqrt(), (ed / nd).sqrt())
}

fn random_params(spec: &DemoSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (lo, hi) = spec.bounds();
    lo.iter().zip(&hi).map(|(l, h)| l + (h - l) * rng.random::<f64>()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub params: Vec<f64>,
    pub fit: LinearFit,
    pub rel_l2_r: f64,
}

/// Best of `draws` uniform random parameter vectors.
pub fn random_search(spec: &DemoSpec, draws: usize, seed: u64) -> SearchResult {
    let col = Collocation::new(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<f64>, LinearFit)> = None;
    for _ in 0..draws.max(1) {
        let p = random_params(spec, &mut rng);
        let fit = fit_coefficients(&col, &p);
        if best.as_ref().is_none_or(|(_, b)| fit.objective < b.objective) {
            best = Some((p, fit));
        }
    }
    let (params, fit) = best.expect("at least one draw");
    let rel_l2_r = relative_errors(&col, &params, &fit.coeffs).0;
    SearchResult { params, fit, rel_l2_r }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoFit {
    pub params: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub objective: f64,
    pub rel_l2_r: f64,
    pub rel_l2_dy: f64,
    pub converged: bool,
    pub evals: usize,
    /// Objective at the start point, then after each optimizer run.
    pub run_values: Vec<f64>,
}

pub fn fit_demo(spec: &DemoSpec) -> CliResult<DemoFit> {
    spec.validate()?;
    let col = Collocation::new(spec);
    let start = random_search(spec, spec.draws, spec.seed);
    let (lo, hi) = spec.bounds();
    let mut obj = BoundedObjective::new(lo, hi, |p: &[f64]| fit_coefficients(&col, p).objective)?;
    let res = minimize_bounded(&mut obj, &start.params, &spec.optimizer)?;
    let (params, fit) = if res.f <= start.fit.objective {
        let fit = fit_coefficients(&col, &res.x);
        (res.x.clone(), fit)
    } else {
        (start.params.clone(), start.fit.clone())
    };
    let (rel_l2_r, rel_l2_dy) = relative_errors(&col, &params, &fit.coeffs);
    let mut run_values = vec![start.fit.objective];
    run_values.extend(&res.run_values);
    Ok(DemoFit {
        params,
        coeffs: fit.coeffs,
        objective: fit.objective,
        rel_l2_r,
        rel_l2_dy,
        converged: res.converged,
        evals: res.evals,
        run_values,
    })
}

/// Relative `L^2` error of `r` against the target for the best of
/// [`ORACLE_DRAWS`] random parameter draws (seed [`ORACLE_SEED`]), with 8
/// neurons on the 32x32 grid.
pub const RANDOM_SEARCH_ORACLE_REL_L2: f64 = 2.215_990_088_874_455_5e-1;
pub const ORACLE_DRAWS: usize = 10_000;
pub const ORACLE_SEED: u64 = 2024;

pub const RESIDUAL2D_HEADER: [&str; 4] = ["x", "y", "r", "f"];
pub const FIT_REPORT_HEADER: [&str; 8] =
    ["neurons", "nx", "ny", "objective", "rel_l2_r", "rel_l2_dy", "converged", "evals"];
pub const RUNS_HEADER: [&str; 2] = ["run", "objective"];

pub fn spec_from_args(a: &DemoArgs) -> DemoSpec {
    let mut spec = DemoSpec::new(a.neurons, a.grid.nx, a.grid.ny);
    spec.seed = a.seed;
    spec.draws = a.draws;
    spec.optimizer.restarts = a.restarts;
    spec.optimizer.max_evals = a.max_evals;
    spec
}

pub fn write_demo(spec: &DemoSpec, fit: &DemoFit, out: &Path, svg: bool) -> CliResult<()> {
    ensure_dir(out)?;
    let col = Collocation::new(spec);
    let mut grid = Table::new(&RESIDUAL2D_HEADER);
    for &(x, y) in &col.interior {
        let (r, _) = eval_network(&fit.params, &fit.coeffs, x, y);
        grid.push(vec![num(x), num(y), num(r), num(target(x, y))]);
    }
    grid.write(&out.join("residual2d.csv"))?;

    let mut rep = Table::new(&FIT_REPORT_HEADER);
    rep.push(vec![
        spec.neurons.to_string(),
        spec.nx.to_string(),
        spec.ny.to_string(),
        num(fit.objective),
        num(fit.rel_l2_r),
        num(fit.rel_l2_dy),
        fit.converged.to_string(),
        fit.evals.to_string(),
    ]);
    rep.write(&out.join("fit_report.csv"))?;

    let mut runs = Table::new(&RUNS_HEADER);
    for (i, v) in fit.run_values.iter().enumerate() {
        runs.push(vec![i.to_string(), num(*v)]);
    }
    runs.write(&out.join("fit_runs.csv"))?;

    if svg {
        // vertical profiles on either side of the interface
        let mut charts = Vec::new();
        for &x in &[0.25, 0.75] {
            let ys: Vec<f64> = (0..=100).map(|j| j as f64 / 100.0).collect();
            charts.push(Chart {
                title: format!("profile at x = {x}"),
                x_label: "y".into(),
                y_label: "r".into(),
                log: false,
                series: vec![
                    Series {
                        name: "network".into(),
                        points: ys.iter().map(|&y| (y, eval_network(&fit.params, &fit.coeffs, x, y).0)).collect(),
                    },
                    Series { name: "target".into(), points: ys.iter().map(|&y| (y, target(x, y))).collect() },
                ],
            });
        }
        write_text(&out.join("residual2d.svg"), &render_svg(&charts))?;
    }
    Ok(())
}

pub fn run_demo(a: &DemoArgs) -> CliResult<DemoFit> {
    let spec = spec_from_args(a);
    let fit = fit_demo(&spec)?;
    write_demo(&spec, &fit, &a.output.out, a.output.svg.is_on())?;
    Ok(fit)
}

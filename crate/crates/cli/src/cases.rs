//! The model problems and the `case` subcommand.

use std::path::Path;

use relu_minres::analysis::{
    aposteriori_indicator, default_rho, error_report, fine_relu_gap, operator_constants, oracle_residual, ErrorReport,
    FineTestSpace,
};
use relu_minres::minres::{InnerConfig, InnerMode};
use relu_minres::model::{
    build_uniform_mesh, exact_solution, DiracMode, Domain1D, ExactSolution, OperatorConstants, ProblemData,
    ReluResidual, SourceTerm, TrialSpace,
};
use relu_minres::optimizer::SimplexOptions;
use relu_minres::uzawa::{run_uzawa, UzawaConfig, UzawaState};

use crate::args::{CaseArgs, CaseId, Mode, ProblemArgs, SolverArgs};
use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, num, render_svg, write_text, Chart, Series, Table};

pub const SAMPLES: usize = 1001;

/// Case 1 source: 1 on `(0, 1/2]`, 0 on `(1/2, 1]`.
pub fn case1_source() -> SourceTerm {
    SourceTerm::PiecewiseConstant { breaks: vec![0.5], values: vec![1.0, 0.0] }
}

pub fn parse_source(s: &str) -> CliResult<SourceTerm> {
    let bad = || CliError::Usage(format!("cannot parse source {s:?}"));
    let list = |t: &str| -> CliResult<Vec<f64>> {
        t.split(',').filter(|x| !x.trim().is_empty()).map(|x| x.trim().parse::<f64>().map_err(|_| bad())).collect()
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["dirac", x] => Ok(SourceTerm::dirac(x.parse().map_err(|_| bad())?)),
        ["dirac", x, w] => Ok(SourceTerm::Dirac {
            location: x.parse().map_err(|_| bad())?,
            mode: DiracMode::Mollified { width: w.parse().map_err(|_| bad())? },
        }),
        ["constant", v] => Ok(SourceTerm::constant(v.parse().map_err(|_| bad())?)),
        ["piecewise", b, v] => Ok(SourceTerm::PiecewiseConstant { breaks: list(b)?, values: list(v)? }),
        _ => Err(bad()),
    }
}

pub fn problem_data(p: &ProblemArgs) -> CliResult<ProblemData> {
    let (beta, gamma, source) = match p.case {
        CaseId::Case1 => (0.001, 1.0, Some(case1_source())),
        CaseId::Case2 => (1.0, 0.0, Some(SourceTerm::dirac(0.5))),
        CaseId::Case3 => (1.0, 0.0, Some(SourceTerm::dirac(2.0 / 3.0))),
        CaseId::Custom => (1.0, 0.0, None),
    };
    let source = match (&p.source, source) {
        (Some(s), _) => parse_source(s)?,
        (None, Some(s)) => s,
        (None, None) => return Err(CliError::Usage("--case custom needs --source".into())),
    };
    let data = ProblemData::new(
        Domain1D::unit(),
        p.beta.unwrap_or(beta),
        p.gamma.unwrap_or(gamma),
        source,
        p.u_in.unwrap_or(0.0),
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(data)
}

pub fn inner_config(s: &SolverArgs, m: usize) -> InnerConfig {
    InnerConfig {
        m,
        mode: match s.mode {
            Mode::Varpro => InnerMode::VariableProjection,
            Mode::Joint => InnerMode::Joint,
        },
        margin_fraction: s.margin,
        multistart: s.multistart,
        seed: s.seed,
        optimizer: SimplexOptions { max_evals: s.max_evals, restarts: s.restarts, ..SimplexOptions::default() },
        ..InnerConfig::default()
    }
}

/// Everything a case run produces.
#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub data: ProblemData,
    pub state: UzawaState,
    pub constants: OperatorConstants,
    pub report: ErrorReport,
    /// `||rbar - r_n||_V` against the fine-space representer.
    pub oracle_gap: f64,
    pub aposteriori: f64,
    pub m: usize,
}

pub struct CaseSetup {
    pub data: ProblemData,
    pub n: usize,
    pub m: usize,
    pub solver: SolverArgs,
}

/// Knot of largest coefficient magnitude.
pub fn largest_kink(r: &ReluResidual) -> Option<f64> {
    r.breakpoints()
        .iter()
        .zip(r.coeffs())
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(&t, _)| t)
}

pub fn solve_case(setup: &CaseSetup) -> CliResult<CaseOutcome> {
    let s = &setup.solver;
    if setup.n == 0 || setup.m == 0 {
        return Err(CliError::Usage("--N and --M must be positive".into()));
    }
    let data = setup.data.clone();
    let mesh = build_uniform_mesh(&data.domain, setup.n)?;
    let space = TrialSpace::new(mesh.clone(), s.p);
    let fine = FineTestSpace::new(&space, s.fine_r, &data)?;
    let rho = s.rho.unwrap_or_else(|| default_rho(&fine));
    let constants = operator_constants(&fine, rho)?;

    let mut cfg = UzawaConfig::new(rho, inner_config(s, setup.m));
    cfg.eps = s.eps;
    cfg.max_iters = s.max_iters;
    let state = run_uzawa(&data, &mesh, s.p, &cfg)?;

    let exact = exact_solution(&data)?;
    let h_fine = mesh.max_h() / s.fine_r as f64;
    let report = error_report(&state.u, &state.r, &data, &|x| exact.eval(x), 2.0 * h_fine);
    let rbar = oracle_residual(&state.u, &fine);
    let oracle_gap = fine_relu_gap(&rbar, &state.r, data.beta);
    let aposteriori = aposteriori_indicator(report.dual_norm, oracle_gap, constants.mu).unwrap_or(f64::NAN);
    Ok(CaseOutcome { data, state, constants, report, oracle_gap, aposteriori, m: setup.m })
}

pub const SOLUTION_HEADER: [&str; 3] = ["x", "u_h", "u_exact"];
pub const RESIDUAL_HEADER: [&str; 3] = ["x", "r_n", "residual_expr"];
pub const HISTORY_HEADER: [&str; 5] = ["k", "dual_norm", "J", "step_norm", "inner_evals"];
pub const REPORT_HEADER: [&str; 17] = [
    "l2_error_u",
    "residual_expr_error",
    "dual_norm",
    "dofs_u",
    "dofs_r",
    "mu",
    "cb",
    "omega",
    "delta_star",
    "rho",
    "iters",
    "converged",
    "gram_condition",
    "oracle_gap",
    "aposteriori",
    "N",
    "M",
];

fn sample_points() -> impl Iterator<Item = f64> {
    (0..SAMPLES).map(|i| i as f64 / (SAMPLES - 1) as f64)
}

pub fn write_case_files(o: &CaseOutcome, exact: &ExactSolution, out: &Path, svg: bool) -> CliResult<()> {
    ensure_dir(out)?;
    let u = &o.state.u;
    let r = &o.state.r;
    let (beta, gamma) = (o.data.beta, o.data.gamma);

    let mut sol = Table::new(&SOLUTION_HEADER);
    let mut res = Table::new(&RESIDUAL_HEADER);
    let mut u_pts = Vec::with_capacity(SAMPLES);
    let mut ex_pts = Vec::with_capacity(SAMPLES);
    let mut r_pts = Vec::with_capacity(SAMPLES);
    for x in sample_points() {
        let uh = u.eval(x)?;
        let ue = exact.eval(x);
        sol.push(vec![num(x), num(uh), num(ue)]);
        let rv = r.value_unchecked(x);
        let expr = -beta * r.derivative_unchecked(x) + gamma * rv;
        res.push(vec![num(x), num(rv), num(expr)]);
        u_pts.push((x, uh));
        ex_pts.push((x, ue));
        r_pts.push((x, rv));
    }
    sol.write(&out.join("solution.csv"))?;
    res.write(&out.join("residual.csv"))?;

    let mut hist = Table::new(&HISTORY_HEADER);
    for h in &o.state.history {
        hist.push(vec![h.k.to_string(), num(h.dual_norm), num(h.j), num(h.step_norm), h.inner_evals.to_string()]);
    }
    hist.write(&out.join("history.csv"))?;

    let c = &o.constants;
    let rep = &o.report;
    let mut report = Table::new(&REPORT_HEADER);
    report.push(vec![
        num(rep.l2_error_u),
        num(rep.residual_expr_error),
        num(rep.dual_norm),
        rep.dofs_u.to_string(),
        rep.dofs_r.to_string(),
        num(c.mu),
        num(c.cb),
        num(c.omega),
        num(c.delta_star),
        num(c.rho),
        o.state.k.to_string(),
        o.state.converged.to_string(),
        num(o.state.gram_condition),
        num(o.oracle_gap),
        num(o.aposteriori),
        u.space.mesh.num_elements().to_string(),
        o.m.to_string(),
    ]);
    report.write(&out.join("report.csv"))?;

    if svg {
        let charts = [
            Chart {
                title: "solution".into(),
                x_label: "x".into(),
                y_label: "u".into(),
                log: false,
                series: vec![Series { name: "u_h".into(), points: u_pts }, Series { name: "exact".into(), points: ex_pts }],
            },
            Chart {
                title: format!("residual, {} breakpoints", r.len()),
                x_label: "x".into(),
                y_label: "r_n".into(),
                log: false,
                series: vec![Series { name: "r_n".into(), points: r_pts }],
            },
            Chart {
                title: "dual norm history".into(),
                x_label: "iteration".into(),
                y_label: "||r_n||_V".into(),
                log: false,
                series: vec![Series {
                    name: "dual norm".into(),
                    points: o.state.history.iter().map(|h| (h.k as f64, h.dual_norm)).collect(),
                }],
            },
        ];
        write_text(&out.join("plots.svg"), &render_svg(&charts))?;
    }
    Ok(())
}

/// Runs a case and writes its files; on solver failure writes
/// `diagnostics.txt` before returning the error.
pub fn run_case_in(setup: &CaseSetup, out: &Path, svg: bool) -> CliResult<CaseOutcome> {
    ensure_dir(out)?;
    let result = solve_case(setup).and_then(|o| {
        let exact = exact_solution(&o.data)?;
        write_case_files(&o, &exact, out, svg)?;
        Ok(o)
    });
    if let Err(e) = &result {
        if !matches!(e, CliError::Usage(_)) {
            write_text(&out.join("diagnostics.txt"), &format!("{e}\n{e:#?}\n"))?;
        }
    }
    result
}

pub fn run_case(args: &CaseArgs) -> CliResult<CaseOutcome> {
    let setup = CaseSetup {
        data: problem_data(&args.problem)?,
        n: args.n,
        m: args.m.unwrap_or(2 * args.n),
        solver: args.solver.clone(),
    };
    run_case_in(&setup, &args.output.out, args.output.svg.is_on())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sources_parse() {
        assert!(matches!(parse_source("dirac:0.25").unwrap(), SourceTerm::Dirac { location, .. } if location == 0.25));
        assert!(matches!(
            parse_source("dirac:0.5:0.01").unwrap(),
            SourceTerm::Dirac { mode: DiracMode::Mollified { width }, .. } if width == 0.01
        ));
        let SourceTerm::PiecewiseConstant { breaks, values } = parse_source("piecewise:0.5:1,0").unwrap() else {
            panic!()
        };
        assert_eq!((breaks, values), (vec![0.5], vec![1.0, 0.0]));
        assert!(parse_source("gauss:1").is_err());
    }

    #[test]
    fn kink_picks_largest_coefficient() {
        let r = ReluResidual::new(Domain1D::unit(), vec![0.2, 0.6, 0.9], vec![0.1, -3.0, 2.0], None).unwrap();
        assert_eq!(largest_kink(&r), Some(0.6));
        assert_eq!(largest_kink(&ReluResidual::zero(Domain1D::unit())), None);
    }
}

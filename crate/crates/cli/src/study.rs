//! Convergence studies and the `constants` subcommand.

use std::time::Instant;

use relu_minres::analysis::{default_rho, operator_constants, FineTestSpace};
use relu_minres::model::{build_uniform_mesh, OperatorConstants, TrialSpace};

use crate::args::{ConstantsArgs, StudyArgs};
use crate::cases::{problem_data, run_case_in, CaseOutcome, CaseSetup};
use crate::error::CliResult;
use crate::output::{ensure_dir, loglog_slope, num, render_svg, write_text, Chart, Series, Table};

pub const CONVERGENCE_HEADER: [&str; 8] =
    ["N", "M", "dofs_u", "l2_error_u", "residual_expr_error", "dual_norm", "iters", "wall_seconds"];

#[derive(Debug, Clone)]
pub struct StudyRow {
    pub n: usize,
    pub m: usize,
    pub outcome: Option<CaseOutcome>,
    pub wall_seconds: f64,
}

pub fn run_study(args: &StudyArgs) -> CliResult<Vec<StudyRow>> {
    let data = problem_data(&args.problem)?;
    let out = &args.output.out;
    ensure_dir(out)?;
    let mut rows = Vec::new();
    let mut failures = String::new();
    for &n in &args.n_list.0 {
        let m = args.m_rule.breakpoints(n, args.m);
        let setup = CaseSetup { data: data.clone(), n, m, solver: args.solver.clone() };
        let t = Instant::now();
        let outcome = match run_case_in(&setup, &out.join(format!("N{n}")), args.output.svg.is_on()) {
            Ok(o) => Some(o),
            Err(e) => {
                failures.push_str(&format!("N={n} M={m}: {e}\n"));
                None
            }
        };
        let wall_seconds = if args.timing.is_on() { t.elapsed().as_secs_f64() } else { 0.0 };
        rows.push(StudyRow { n, m, outcome, wall_seconds });
    }

    let mut table = Table::new(&CONVERGENCE_HEADER);
    for r in &rows {
        let (dofs, l2, expr, dual, iters) = match &r.outcome {
            Some(o) => (
                o.report.dofs_u.to_string(),
                num(o.report.l2_error_u),
                num(o.report.residual_expr_error),
                num(o.report.dual_norm),
                o.state.k.to_string(),
            ),
            None => ("0".into(), num(f64::NAN), num(f64::NAN), num(f64::NAN), "0".into()),
        };
        table.push(vec![r.n.to_string(), r.m.to_string(), dofs, l2, expr, dual, iters, num(r.wall_seconds)]);
    }
    table.write(&out.join("convergence.csv"))?;
    if !failures.is_empty() {
        write_text(&out.join("failures.txt"), &failures)?;
    }

    if args.output.svg.is_on() {
        let series = |name: &str, f: fn(&CaseOutcome) -> f64| {
            let pts: Vec<(f64, f64)> =
                rows.iter().filter_map(|r| r.outcome.as_ref().map(|o| (r.n as f64, f(o)))).collect();
            let label = match loglog_slope(&pts) {
                Some(s) => format!("{name} (slope {s:.2})"),
                None => name.to_string(),
            };
            Series { name: label, points: pts }
        };
        let chart = Chart {
            title: "convergence".into(),
            x_label: "N".into(),
            y_label: "error".into(),
            log: true,
            series: vec![
                series("l2_error_u", |o| o.report.l2_error_u),
                series("residual_expr_error", |o| o.report.residual_expr_error),
                series("dual_norm", |o| o.report.dual_norm),
            ],
        };
        write_text(&out.join("convergence.svg"), &render_svg(&[chart]))?;
    }
    Ok(rows)
}

pub fn compute_constants(args: &ConstantsArgs) -> CliResult<OperatorConstants> {
    let data = problem_data(&args.problem)?;
    let space = TrialSpace::new(build_uniform_mesh(&data.domain, args.n)?, args.p);
    let fine = FineTestSpace::new(&space, args.fine_r, &data)?;
    let rho = args.rho.unwrap_or_else(|| default_rho(&fine));
    Ok(operator_constants(&fine, rho)?)
}

pub fn constants_csv(c: &OperatorConstants) -> String {
    format!("mu,cb,omega,delta_star\n{},{},{},{}\n", num(c.mu), num(c.cb), num(c.omega), num(c.delta_star))
}

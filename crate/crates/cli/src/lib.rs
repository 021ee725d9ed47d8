//! Driver for the model problems, convergence studies and the 2D residual fit.

pub mod args;
pub mod cases;
pub mod demo2d;
pub mod error;
pub mod output;
pub mod study;

use std::ffi::OsString;

use args::Command;
use error::CliResult;

/// Parses `argv` and runs the selected subcommand, returning the text to print.
pub fn run(argv: Vec<OsString>) -> CliResult<String> {
    let cli = args::parse_from(argv)?;
    match cli.command {
        Command::Case(a) => {
            let o = cases::run_case(&a)?;
            Ok(format!(
                "case finished: iters={} converged={} l2_error_u={} dual_norm={}\n",
                o.state.k,
                o.state.converged,
                output::num(o.report.l2_error_u),
                output::num(o.report.dual_norm)
            ))
        }
        Command::Study(a) => {
            let rows = study::run_study(&a)?;
            let failed = rows.iter().filter(|r| r.outcome.is_none()).count();
            Ok(format!("study finished: {} runs, {failed} failed\n", rows.len()))
        }
        Command::Demo2d(a) => {
            let f = demo2d::run_demo(&a)?;
            Ok(format!(
                "2d fit: rel_l2_r={} rel_l2_dy={} converged={}\n",
                output::num(f.rel_l2_r),
                output::num(f.rel_l2_dy),
                f.converged
            ))
        }
        Command::Constants(a) => Ok(study::constants_csv(&study::compute_constants(&a)?)),
    }
}

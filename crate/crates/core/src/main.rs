//! Command-line entry point: benchmark tables, config-driven runs, breather
//! demos, and the built-in check suite.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use efit::harness::{
    breather_demo, run_experiment, self_check, table_report, write_report, DemoConfig,
    InitialCondition, RunConfig, Scheme,
};
use efit::problems::ProblemId;
use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "efit",
    version,
    about = "Conservative exponentially fitted time integration benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reproduce a built-in benchmark table (classic and fitted ladders) as CSV.
    Table {
        /// Table number.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        id: u8,
        /// Deepest refinement index; table-specific default when omitted.
        #[arg(long)]
        max_n: Option<usize>,
        /// Report destination.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a JSON experiment configuration.
    Run {
        /// Configuration file (see RunConfig's JSON keys).
        #[arg(long)]
        config: PathBuf,
        /// Report destination; falls back to the config's `out` field.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Long breather run: full field dump plus envelope-drift summary.
    Demo {
        /// Benchmark problem.
        #[arg(long, value_enum)]
        problem: DemoProblem,
        /// Stepping scheme (classic, ef, ef_c1:<v>).
        #[arg(long, default_value = "ef")]
        scheme: String,
        /// mKdV breather shape parameter.
        #[arg(long)]
        xi: Option<f64>,
        /// NLS breather modulation parameter.
        #[arg(long)]
        beta: Option<f64>,
        /// NLS breather internal frequency.
        #[arg(long)]
        freq: Option<f64>,
        /// Grid spacing.
        #[arg(long)]
        dx: Option<f64>,
        /// Time step.
        #[arg(long)]
        dt: Option<f64>,
        /// End time.
        #[arg(long)]
        t_end: Option<f64>,
        /// Field dump destination; the drift summary lands next to it with
        /// extension `drift.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in invariant and oracle checks.
    Check,
}

#[derive(Clone, Copy, ValueEnum)]
enum DemoProblem {
    Mkdv,
    Nls,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Table { id, max_n, out } => {
            let report = table_report(id, max_n)?;
            write_report(&report, &out)?;
            report_summary(&report, &out);
            Ok(())
        }
        Command::Run { config, out } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let cfg: RunConfig = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", config.display()))?;
            let out = out.or_else(|| cfg.out.clone()).ok_or_else(|| {
                anyhow!("no output path: pass --out or set \"out\" in the config")
            })?;
            let report = run_experiment(&cfg)?;
            write_report(&report, &out)?;
            report_summary(&report, &out);
            Ok(())
        }
        Command::Demo {
            problem,
            scheme,
            xi,
            beta,
            freq,
            dx,
            dt,
            t_end,
            out,
        } => {
            let scheme: Scheme = scheme.parse()?;
            let cfg = match problem {
                DemoProblem::Mkdv => {
                    if beta.is_some() || freq.is_some() {
                        bail!("--beta/--freq apply to the nls demo only");
                    }
                    DemoConfig {
                        problem: ProblemId::Mkdv,
                        scheme,
                        domain: [-4.0, 4.0],
                        dx: dx.unwrap_or(0.04),
                        dt: dt.unwrap_or(0.004),
                        t0: 0.0,
                        t_end: t_end.unwrap_or(20.0),
                        initial_condition: InitialCondition::MkdvBreather {
                            xi: xi.unwrap_or(0.7),
                        },
                    }
                }
                DemoProblem::Nls => {
                    if xi.is_some() {
                        bail!("--xi applies to the mkdv demo only");
                    }
                    DemoConfig {
                        problem: ProblemId::Nls,
                        scheme,
                        domain: [-PI / 7.0, PI / 7.0],
                        dx: dx.unwrap_or(2.0 * PI / 7000.0),
                        dt: dt.unwrap_or(0.01),
                        t0: 0.0,
                        t_end: t_end.unwrap_or(0.5),
                        initial_condition: InitialCondition::NlsBreather {
                            beta: beta.unwrap_or(1.4),
                            omega: freq.unwrap_or(25.0),
                        },
                    }
                }
            };
            let levels = breather_demo(&cfg, &out)?;
            let drift = out.with_extension("drift.csv");
            let mean = levels.last().map_or(0.0, |l| l.mean_x_peak);
            println!(
                "wrote {} and {} ({} time levels; final mean peak location {mean:.4})",
                out.display(),
                drift.display(),
                levels.len()
            );
            Ok(())
        }
        Command::Check => {
            let outcomes = self_check();
            let mut failures = 0;
            for o in &outcomes {
                let verdict = if o.pass { "ok  " } else { "FAIL" };
                println!("{verdict}  {} — {}", o.name, o.detail);
                failures += usize::from(!o.pass);
            }
            if failures > 0 {
                bail!("{failures} of {} checks failed", outcomes.len());
            }
            println!("all {} checks passed", outcomes.len());
            Ok(())
        }
    }
}

fn report_summary(report: &efit::diagnostics::ExperimentReport, out: &std::path::Path) {
    let failed = report.rows.iter().filter(|r| r.failed).count();
    if failed > 0 {
        eprintln!(
            "warning: {failed} of {} ladder rows failed (NaN cells)",
            report.rows.len()
        );
    }
    let worst_newton = report.rows.iter().map(|r| r.max_newton).max().unwrap_or(0);
    println!(
        "wrote {} ({} rows, max {} Newton iterations per step)",
        out.display(),
        report.rows.len(),
        worst_newton
    );
}

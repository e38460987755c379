//! Command-line front door: mesh inspection, Poisson solves, condition
//! number studies, the verification suite, and sweep orchestration.
//!
//! Exit codes: 0 success, 1 failed verification checks, 2 resource limits,
//! 3 numerical failures, 64 usage errors.

use bpxhd::bpx::{kappa, pcg, BpxOperator, KappaMethod, MassVariant};
use bpxhd::error::Error;
use bpxhd::mesh::{Mesh, DEFAULT_DOF_BUDGET};
use bpxhd::multilevel::Hierarchy;
use bpxhd::spectral::DENSE_LIMIT;
use bpxhd::verification::{
    self, rho_freudenthal, run_all, write_reports_csv, SweepConfig, SweepVariant, VerifyConfig,
};
use clap::{Parser, Subcommand};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "bpxhd",
    about = "P1 finite elements on Kuhn-triangulated cubes with a multilevel preconditioner",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a mesh and report its counts and shape constants.
    MeshInfo {
        #[arg(short)]
        d: usize,
        #[arg(short)]
        n: usize,
        /// Write the summary (json) or the element table (csv) here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "json")]
        format: String,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Run the verification checks and write the report table.
    Verify {
        /// Only run checks whose claim name contains this substring.
        #[arg(long)]
        only: Option<String>,
        #[arg(long, default_value_t = 4)]
        dmax: usize,
        #[arg(short = 'J', long, default_value_t = 3)]
        levels: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Measure one condition number.
    Kappa {
        #[arg(short)]
        d: usize,
        #[arg(short = 'J', long = "levels")]
        j: usize,
        #[arg(long, default_value = "exact")]
        variant: String,
        /// Measure the raw stiffness instead of the preconditioned operator.
        #[arg(long)]
        no_precond: bool,
        #[arg(long, default_value = "dense")]
        method: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Append the row to this CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Condition numbers over a (d, J, variant) grid plus a dimension fit.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        dims: Vec<usize>,
        #[arg(short = 'J', long, value_delimiter = ',', default_value = "2,3,4")]
        levels: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "exact")]
        variants: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output prefix; writes <out>.csv, <out>.json, <out>_summary.txt.
        #[arg(long, default_value = "sweep")]
        out: String,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Solve a manufactured Poisson system and report the solver behavior.
    Solve {
        #[arg(short)]
        d: usize,
        #[arg(short = 'J', long = "levels")]
        j: usize,
        #[arg(long, default_value = "exact")]
        variant: String,
        #[arg(long)]
        no_precond: bool,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 10000)]
        maxit: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the solve report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        budget: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0u8,
                _ => 64,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::BudgetExceeded { .. } => 2,
        Error::InvalidArgument(_) | Error::OutsideDomain { .. } => 64,
        Error::SolverFailure(_)
        | Error::EigenFailure(_)
        | Error::InvariantViolation(_)
        | Error::DegenerateGeometry { .. } => 3,
        Error::Io(_) => 1,
    }
}

/// --budget flag, then the BPXHD_BUDGET environment variable, then default.
fn resolve_budget(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("BPXHD_BUDGET")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(DEFAULT_DOF_BUDGET)
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::MeshInfo {
            d,
            n,
            out,
            format,
            budget,
        } => {
            let mesh = Mesh::build_with_budget(d, n, resolve_budget(budget))?;
            println!("dimension        {d}");
            println!("grid             {n}");
            println!("vertices         {}", mesh.num_vertices());
            println!("elements         {}", mesh.num_elements());
            println!("boundary faces   {}", mesh.boundary_faces().len());
            println!("mesh size h      {}", mesh.mesh_size());
            let ratio = mesh.element_simplex(0).shape_ratio();
            println!(
                "shape ratio      {} (formula 2 sqrt(d) + (d-1) sqrt(2d) = {})",
                ratio,
                rho_freudenthal(d)
            );
            if let Some(path) = out {
                let mut file = File::create(&path)?;
                match format.as_str() {
                    "json" => {
                        let text = serde_json::to_string_pretty(&mesh.summary())
                            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
                        file.write_all(text.as_bytes())?;
                    }
                    "csv" => mesh.write_elements_csv(&mut file)?,
                    other => {
                        return Err(Error::InvalidArgument(format!(
                            "unknown format '{other}' (expected json|csv)"
                        )))
                    }
                }
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            only,
            dmax,
            levels,
            seed,
            out,
            format,
        } => {
            if dmax < 1 {
                return Err(Error::InvalidArgument("--dmax must be at least 1".into()));
            }
            let config = VerifyConfig {
                dmax,
                levels,
                filter: only.clone(),
                seed,
            };
            let reports = run_all(&config)?;
            if reports.is_empty() {
                println!(
                    "warning: no checks match filter '{}'",
                    only.unwrap_or_default()
                );
                return Ok(ExitCode::SUCCESS);
            }
            let mut stdout = std::io::stdout().lock();
            write_reports_csv(&reports, &mut stdout)?;
            drop(stdout);
            if let Some(path) = out {
                let mut file = File::create(&path)?;
                match format.as_str() {
                    "csv" => write_reports_csv(&reports, &mut file)?,
                    "json" => {
                        let text = serde_json::to_string_pretty(&reports)
                            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
                        file.write_all(text.as_bytes())?;
                    }
                    other => {
                        return Err(Error::InvalidArgument(format!(
                            "unknown format '{other}' (expected csv|json)"
                        )))
                    }
                }
                println!("wrote {}", path.display());
            }
            let failed = reports
                .iter()
                .filter(|r| r.status == verification::CheckStatus::Fail)
                .count();
            if failed > 0 {
                eprintln!("{failed} asserted checks failed");
                Ok(ExitCode::from(1))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
        Command::Kappa {
            d,
            j,
            variant,
            no_precond,
            method,
            seed,
            out,
            budget,
        } => {
            let method: KappaMethod = method.parse()?;
            let free = (1usize << j)
                .checked_sub(1)
                .and_then(|n| n.checked_pow(d as u32))
                .ok_or_else(|| Error::InvalidArgument("size overflow".into()))?;
            if method == KappaMethod::Dense && free > DENSE_LIMIT {
                return Err(Error::InvalidArgument(format!(
                    "--method dense conflicts with {free} free dofs (limit {DENSE_LIMIT}); use --method lanczos"
                )));
            }
            let hier = Hierarchy::build_with_budget(d, j, resolve_budget(budget))?;
            let stiffness = hier.finest().stiffness();
            let report = if no_precond {
                kappa(stiffness, None, method, seed)?
            } else {
                let mv: MassVariant = variant.parse()?;
                let bpx = BpxOperator::new(&hier, mv);
                kappa(stiffness, Some(&bpx), method, seed)?
            };
            let row = format!(
                "{},{},{},{},{},{},{}",
                d, j, report.preconditioner, report.lambda_min, report.lambda_max, report.kappa,
                report.method
            );
            println!("{}", verification::SweepResult::csv_header());
            println!("{row}");
            println!("seed {seed}");
            if let Some(path) = out {
                let exists = path.exists();
                let mut file = std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&path)?;
                if !exists {
                    writeln!(file, "{}", verification::SweepResult::csv_header())?;
                }
                writeln!(file, "{row}")?;
                println!("appended to {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            dims,
            levels,
            variants,
            seed,
            out,
            budget,
        } => {
            let variants = variants
                .iter()
                .map(|v| v.parse())
                .collect::<Result<Vec<SweepVariant>, _>>()?;
            let config = SweepConfig {
                dims,
                levels,
                variants,
                seed,
                budget: resolve_budget(budget),
            };
            let result = verification::sweep(&config);
            let csv_path = PathBuf::from(format!("{out}.csv"));
            let mut file = File::create(&csv_path)?;
            result.write_csv(&mut file)?;
            let json_path = PathBuf::from(format!("{out}.json"));
            let text = serde_json::to_string_pretty(&result)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            std::fs::write(&json_path, text)?;
            let summary_path = PathBuf::from(format!("{out}_summary.txt"));
            let mut summary = String::new();
            summary.push_str(&format!("cells: {}\n", result.rows.len()));
            summary.push_str(&format!("failures: {}\n", result.failures.len()));
            for f in &result.failures {
                summary.push_str(&format!("  {f}\n"));
            }
            match result.dimension_slope {
                Some(slope) => summary.push_str(&format!(
                    "log-log slope of kappa vs d at the largest common J: {slope}\n"
                )),
                None => summary.push_str("dimension slope: not available\n"),
            }
            summary.push_str(&format!("seed: {seed}\n"));
            std::fs::write(&summary_path, &summary)?;
            print!("{summary}");
            println!(
                "wrote {}, {}, {}",
                csv_path.display(),
                json_path.display(),
                summary_path.display()
            );
            if result.rows.is_empty() && !result.failures.is_empty() {
                Err(Error::SolverFailure("all sweep cells failed".into()))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
        Command::Solve {
            d,
            j,
            variant,
            no_precond,
            tol,
            maxit,
            seed,
            out,
            budget,
        } => {
            let hier = Hierarchy::build_with_budget(d, j, resolve_budget(budget))?;
            let stiffness = hier.finest().stiffness();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth = DVector::from_fn(stiffness.nrows(), |_, _| rng.gen_range(-1.0..1.0));
            let rhs = stiffness.matvec(&truth);
            let (solution, report) = if no_precond {
                pcg(stiffness, &rhs, None, tol, maxit)?
            } else {
                let mv: MassVariant = variant.parse()?;
                let bpx = BpxOperator::new(&hier, mv);
                pcg(stiffness, &rhs, Some(&bpx), tol, maxit)?
            };
            let error = (&solution - &truth).amax();
            println!(
                "d={d} J={j} unknowns={} pre={} iterations={} rel_residual={:e} max_error={:e}",
                report.unknowns,
                report.preconditioner,
                report.iterations,
                report.relative_residual,
                error
            );
            if let Some(path) = out {
                let text = serde_json::to_string_pretty(&report)
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?;
                std::fs::write(&path, text)?;
                println!("wrote {}", path.display());
            }
            if report.converged {
                Ok(ExitCode::SUCCESS)
            } else {
                Err(Error::SolverFailure(format!(
                    "pcg did not reach {tol:e} within {maxit} iterations"
                )))
            }
        }
    }
}

//! `conigrate` command-line front end.

mod config;
mod report;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use conigrate::mesh::triangulate_with;
use conigrate::validation::{convergence_study, cross_validate, Problem};
use thiserror::Error;

use config::{Method, Output, RunConfig};
use report::*;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] conigrate::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use conigrate::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::InvalidParameter { .. } | E::InvalidProfile(_)) => 2,
            CliError::Core(E::WoodAnomaly { .. }) => 3,
            CliError::Core(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(name = "conigrate", version, about = "Conical diffraction by impedance gratings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Result file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the diffraction problem and write the Rayleigh spectrum.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Overrides `run.method`.
        #[arg(long, value_parser = ["fem", "bie", "both"])]
        method: Option<String>,
    },
    /// Evaluate the energy balance for the configured solver(s).
    EnergyCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ["fem", "bie", "both"])]
        method: Option<String>,
    },
    /// FEM refinement study with mesh sizes `h0 / 2^k`; writes the rate table as CSV.
    Convergence {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        /// Coarsest mesh size.
        #[arg(long, default_value_t = 0.2)]
        h0: f64,
        /// Also write the full report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compare FEM and boundary-integral spectra.
    CrossValidate {
        #[command(flatten)]
        common: Common,
    },
    /// Print the DtN mode matrices and the ellipticity diagnostics.
    DtnInspect {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-3)]
        delta: f64,
    },
    /// Write the periodic mesh.
    MeshExport {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|_| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("CONIGRATE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("`CONIGRATE_THREADS`: expected a non-negative integer, got {v:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("`CONIGRATE_THREADS`: {e}")))?;
    }
    Ok(())
}

fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    RunConfig::parse(&text)
}

fn emit<T: serde::Serialize>(out: &Option<PathBuf>, doc: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(doc).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_text(out, &text)
}

fn write_text(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).map_err(io_err(p)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(e.to_string())),
    }
}

/// Path for a side artifact: `<out stem>.<suffix>`.
fn artifact(out: &Option<PathBuf>, suffix: &str) -> PathBuf {
    match out {
        Some(p) => p.with_extension(suffix),
        None => PathBuf::from(format!("conigrate.{suffix}")),
    }
}

fn write_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut io::BufWriter<fs::File>) -> io::Result<()>,
{
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = io::BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn method_of(cfg: &RunConfig, flag: &Option<String>) -> Method {
    match flag.as_deref() {
        Some("fem") => Method::Fem,
        Some("bie") => Method::Bie,
        Some("both") => Method::Both,
        _ => cfg.run.method,
    }
}

fn params_echo(cfg: &RunConfig, problem: &Problem) -> Result<ParamsEcho, CliError> {
    let d = problem.derived()?;
    Ok(ParamsEcho::new(
        &problem.params,
        &d,
        cfg.numerics.b,
        problem.profile.gamma_max,
        problem.resolved_truncation(&d),
    ))
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Solve { common, method } => solve(&common, &method),
        Command::EnergyCheck { common, method } => energy(&common, &method),
        Command::Convergence {
            common,
            levels,
            h0,
            report,
        } => convergence(&common, levels, h0, &report),
        Command::CrossValidate { common } => {
            let cfg = load(&common.config)?;
            let problem = cfg.problem()?;
            let params = params_echo(&cfg, &problem)?;
            let cv = cross_validate(&problem, cfg.numerics.h_target, cfg.numerics.bie_nodes)?;
            emit(
                &common.out,
                &CrossDoc {
                    config: &cfg,
                    params,
                    h_target: cfg.numerics.h_target,
                    bie_nodes: cfg.numerics.bie_nodes,
                    discrepancy: Discrepancy::from(&cv),
                    fem_energy: EnergyOut::from(&cv.fem.energy),
                    bie_energy: EnergyOut::from(&cv.bie.energy),
                },
            )
        }
        Command::DtnInspect { common, delta } => {
            let cfg = load(&common.config)?;
            let problem = cfg.problem()?;
            if !(delta.is_finite() && delta > 0.0) {
                return Err(CliError::Config(format!("`delta`: must be positive, got {delta}")));
            }
            let d = problem.derived()?;
            let n = problem.resolved_truncation(&d);
            emit(
                &common.out,
                &DtnDoc {
                    config: &cfg,
                    params: params_echo(&cfg, &problem)?,
                    modes: modes(&problem.params, &d, n),
                    ellipticity: ellipticity(&problem.params, &d, delta, n),
                },
            )
        }
        Command::MeshExport { common } => {
            let cfg = load(&common.config)?;
            let problem = cfg.problem()?;
            let mesh = triangulate_with(&problem.profile, problem.b, cfg.numerics.h_target, &problem.mesh_options)?;
            let mut buf = Vec::new();
            mesh.write_export(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
            write_text(&common.out, &String::from_utf8_lossy(&buf))
        }
    }
}

fn solve(common: &Common, flag: &Option<String>) -> Result<(), CliError> {
    let cfg = load(&common.config)?;
    let problem = cfg.problem()?;
    let params = params_echo(&cfg, &problem)?;
    let method = method_of(&cfg, flag);
    let d = problem.derived()?;
    let p = &problem.params;
    let (want_s, want_e, want_en) = (
        cfg.outputs(Output::Spectrum),
        cfg.outputs(Output::Efficiencies),
        cfg.outputs(Output::Energy),
    );

    let fem = match method {
        Method::Fem | Method::Both => Some(problem.solve_fem(cfg.numerics.h_target)?),
        Method::Bie => None,
    };
    let bie = match method {
        Method::Bie | Method::Both => Some(problem.solve_bie(cfg.numerics.bie_nodes)?),
        Method::Fem => None,
    };

    if let Some(f) = &fem {
        if cfg.outputs(Output::Field) {
            write_with(&artifact(&common.out, "field.csv"), |w| f.solution.write_csv(w))?;
        }
        if cfg.outputs(Output::Mesh) {
            write_with(&artifact(&common.out, "mesh.txt"), |w| f.solution.mesh.write_export(w))?;
        }
    }
    if let Some(b) = &bie {
        if cfg.outputs(Output::Densities) {
            write_with(&artifact(&common.out, "densities.csv"), |w| b.densities.write_csv(w))?;
        }
    }

    let solver_out = |name: &'static str, s: &conigrate::params::RayleighSpectrum, e: &conigrate::validation::EnergyReport, diag: Diagnostics| SolverOut {
        method: name,
        spectrum: want_s.then(|| spectrum_rows(s)),
        efficiencies: want_e.then(|| efficiencies(s, p, &d)),
        energy: want_en.then(|| EnergyOut::from(e)),
        diagnostics: diag,
    };
    let fem_out = fem.as_ref().map(|f| {
        solver_out(
            "fem",
            &f.spectrum,
            &f.energy,
            Diagnostics {
                unknowns: f.solution.mesh.n_dofs,
                relative_residual: f.solution.report.residual,
            },
        )
    });
    let bie_out = bie.as_ref().map(|b| {
        solver_out(
            "bie",
            &b.spectrum,
            &b.energy,
            Diagnostics {
                unknowns: b.densities.grid.len(),
                relative_residual: b.densities.residual,
            },
        )
    });
    let discrepancy = match (&fem, &bie) {
        (Some(f), Some(b)) => {
            let orders: Vec<OrderOut> = f
                .spectrum
                .propagating()
                .filter_map(|a| {
                    b.spectrum.get(a.order.n).map(|o| OrderOut {
                        n: a.order.n,
                        du: (a.u - o.u).norm(),
                        dv: (a.v - o.v).norm(),
                    })
                })
                .collect();
            Some(Discrepancy {
                max: orders.iter().map(|o| o.du.max(o.dv)).fold(0.0, f64::max),
                orders,
            })
        }
        _ => None,
    };
    let (primary, second) = match (fem_out, bie_out) {
        (Some(f), b) => (f, b),
        (None, Some(b)) => (b, None),
        (None, None) => unreachable!("at least one solver runs"),
    };
    emit(
        &common.out,
        &SolveDoc {
            config: &cfg,
            params,
            method: primary.method,
            spectrum: primary.spectrum,
            efficiencies: primary.efficiencies,
            energy: primary.energy,
            diagnostics: primary.diagnostics,
            bie: second,
            discrepancy,
        },
    )
}

fn energy(common: &Common, flag: &Option<String>) -> Result<(), CliError> {
    let cfg = load(&common.config)?;
    let problem = cfg.problem()?;
    let params = params_echo(&cfg, &problem)?;
    let method = method_of(&cfg, flag);
    let mut rows = Vec::new();
    let mut push = |name: &'static str, e: &conigrate::validation::EnergyReport| {
        rows.push(MethodEnergy {
            method: name,
            energy: EnergyOut::from(e),
            inequality_holds: e.gamma_term <= 0.0 && e.lhs <= e.incident_term * (1.0 + 5e-2),
        })
    };
    if matches!(method, Method::Fem | Method::Both) {
        push("fem", &problem.solve_fem(cfg.numerics.h_target)?.energy);
    }
    if matches!(method, Method::Bie | Method::Both) {
        push("bie", &problem.solve_bie(cfg.numerics.bie_nodes)?.energy);
    }
    emit(
        &common.out,
        &EnergyDoc {
            config: &cfg,
            params,
            energy: rows,
        },
    )
}

fn convergence(common: &Common, levels: usize, h0: f64, report: &Option<PathBuf>) -> Result<(), CliError> {
    let cfg = load(&common.config)?;
    let problem = cfg.problem()?;
    if !(h0.is_finite() && h0 > 0.0) {
        return Err(CliError::Config(format!("`h0`: must be positive, got {h0}")));
    }
    if levels < 3 {
        return Err(CliError::Config(format!("`levels`: at least 3 are required, got {levels}")));
    }
    let hs: Vec<f64> = (0..levels).map(|k| h0 / (1u64 << k) as f64).collect();
    let r = convergence_study(&problem, &hs)?;
    let mut buf = Vec::new();
    r.write_csv(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
    write_text(&common.out, &String::from_utf8_lossy(&buf))?;
    if let Some(path) = report {
        emit(&Some(path.clone()), &ConvergenceDoc::new(&cfg, params_echo(&cfg, &problem)?, &r))?;
    }
    Ok(())
}

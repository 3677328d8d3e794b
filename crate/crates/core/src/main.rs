use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use sma_core::config::{
    parse_partial, PartialConfig, PartialExperiment, PartialLoad, PartialMaterial, PartialMesh,
    PartialOutput, PartialSolver, RunConfig,
};
use sma_core::driver::{diagnose_trajectory, LedgerRow, StepDiagnostics, StepStatus};
use sma_core::io::{load_run, Manifest, RunInfo, RunWriter, Snapshot};
use sma_core::Error;

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_STALL: u8 = 3;
const EXIT_CONTRACT: u8 = 4;

#[derive(Parser)]
#[command(
    name = "smasim",
    version,
    about = "Quasistatic two-variant shape-memory microstructure simulator"
)]
struct Cli {
    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full simulation and write the run directory.
    Run(ConfigArgs),
    /// Validate a configuration and print it fully resolved.
    Check(ConfigArgs),
    /// Replay a run directory through the stability and energy-balance checks.
    Diagnose {
        run_dir: PathBuf,
        /// Slack of the upper energy estimate.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Also store the report as diagnostics.csv in the run directory.
        #[arg(long)]
        write: bool,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; flags override its values.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    boundary: Option<String>,
    #[arg(long)]
    initial: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    phase_solver: Option<String>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    delta1: Option<f64>,
    #[arg(long)]
    delta2: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    alpha_i: Option<f64>,
    #[arg(long)]
    alpha_s: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    n_steps: Option<usize>,
    /// Amplitude knots as `t:a` pairs, e.g. `0:0,4:1,8:0`.
    #[arg(long, value_delimiter = ',', value_parser = parse_knot)]
    knots: Option<Vec<[f64; 2]>>,
    #[arg(long)]
    elastic_tol: Option<f64>,
    #[arg(long)]
    elastic_max_iterations: Option<usize>,
    #[arg(long)]
    sweep_rel_tol: Option<f64>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    #[arg(long)]
    enforce_stability: Option<bool>,
    #[arg(long)]
    stability_tol: Option<f64>,
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    snapshots: Option<bool>,
    #[arg(long)]
    diagnostics: Option<bool>,
}

fn parse_knot(s: &str) -> Result<[f64; 2], String> {
    let (t, a) = s
        .split_once(':')
        .ok_or_else(|| format!("`{s}` is not a `t:a` pair"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok([num(t)?, num(a)?])
}

impl ConfigArgs {
    fn overrides(&self) -> PartialConfig {
        PartialConfig {
            experiment: PartialExperiment {
                preset: self.preset.clone(),
                boundary: self.boundary.clone(),
                initial: self.initial.clone(),
                seed: self.seed,
                phase_solver: self.phase_solver.clone(),
            },
            mesh: PartialMesh {
                nx: self.nx,
                ny: self.ny,
            },
            material: PartialMaterial {
                alpha: self.alpha,
                delta1: self.delta1,
                delta2: self.delta2,
                epsilon: self.epsilon,
                beta: self.beta,
                alpha_i: self.alpha_i,
                alpha_s: self.alpha_s,
            },
            load: PartialLoad {
                t_final: self.t_final,
                n_steps: self.n_steps,
                knots: self.knots.clone(),
            },
            solver: PartialSolver {
                elastic_tol: self.elastic_tol,
                elastic_max_iterations: self.elastic_max_iterations,
                sweep_rel_tol: self.sweep_rel_tol,
                max_sweeps: self.max_sweeps,
                enforce_stability: self.enforce_stability,
                stability_tol: self.stability_tol,
            },
            output: PartialOutput {
                dir: self.out.clone(),
                snapshots: self.snapshots,
                diagnostics: self.diagnostics,
            },
        }
    }

    fn resolve(&self) -> Result<RunConfig, Error> {
        let overrides = self.overrides();
        match &self.config {
            None => RunConfig::resolve(overrides),
            Some(path) => {
                // file errors carry line numbers; re-resolve with flags on top
                RunConfig::from_file(path)?;
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                RunConfig::resolve(parse_partial(&text)?.merge(overrides))
                    .map_err(|e| Error::Config(format!("{e} (after applying command-line flags)")))
            }
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::Config(_)
        | Error::Parse { .. }
        | Error::UnknownPreset(_)
        | Error::UnknownPhaseSolver(_)
        | Error::InvalidParameter(_)
        | Error::InvalidMesh(_) => EXIT_CONFIG,
        Error::Contract(_) | Error::NegativeWeight { .. } | Error::UseCoupledSolver => {
            EXIT_CONTRACT
        }
        _ => EXIT_STALL,
    }
}

fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_code(&err))
}

fn run(cfg: RunConfig) -> Result<u8, Error> {
    let sim = cfg.build_simulation()?;
    let writer = RunWriter::create(&cfg.output.dir, cfg.output.snapshots)?;
    writer.write_mesh(&sim.mesh, &sim.sets)?;
    let seed = cfg.experiment.seed;
    let manifest = |rows: &[LedgerRow], failure: Option<String>| Manifest {
        run: RunInfo {
            seed,
            partial: rows.len() != cfg.load.n_steps + 1,
            steps_recorded: rows.len(),
            nodes: sim.mesh.num_nodes(),
            triangles: sim.mesh.num_triangles(),
            interior_edges: sim.mesh.interior_edges().len(),
            failure,
        },
        config: cfg.clone(),
    };
    writer.write_manifest(&manifest(&[], None))?;

    let mut rows: Vec<LedgerRow> = Vec::new();
    let mut write_error = None;
    let result = sim.run_with(seed, |row, outcome| {
        info!(
            "step {:>3}  t = {:<6} frac_z1 = {:.4}  E = {:.8}  D = {:.3e}  sweeps = {}  {}",
            row.k,
            row.t,
            row.frac_z1,
            row.energy(),
            row.d_inc,
            row.sweeps,
            row.status
        );
        rows.push(row.clone());
        if write_error.is_none() {
            let snap = Snapshot {
                k: row.k,
                t: row.t,
                a: row.a,
                seed,
                state: outcome.state.clone(),
            };
            write_error = writer.write_snapshot(&sim.mesh, &snap).err();
        }
    });
    writer.write_ledger(seed, &rows)?;
    let traj = match result {
        Ok(traj) => traj,
        Err(e) => {
            writer.write_manifest(&manifest(&rows, Some(e.to_string())))?;
            return Err(e);
        }
    };
    if let Some(e) = write_error {
        writer.write_manifest(&manifest(&rows, Some(e.to_string())))?;
        return Err(e);
    }
    writer.write_manifest(&manifest(&rows, None))?;

    let mut code = 0;
    if rows.iter().any(|r| r.status != StepStatus::Ok) {
        warn!("some steps did not converge cleanly; see the status column of the ledger");
        code = EXIT_STALL;
    }
    if cfg.output.diagnostics {
        let report = diagnose_trajectory(&sim, &traj, 1e-8)?;
        writer.write_diagnostics(&report)?;
        if !report_ok(&report) {
            code = EXIT_CONTRACT;
        }
    }
    println!("{}", writer.dir().display());
    Ok(code)
}

fn report_ok(report: &[StepDiagnostics]) -> bool {
    let mut ok = true;
    for d in report {
        if let Some(v) = d.stability.best_violation() {
            warn!(
                "step {}: {} competitors beat the state (worst {:?}, gap {:.3e})",
                d.k,
                d.stability.violations.len(),
                v.competitor,
                v.gap
            );
            ok = false;
        }
        if let Some(b) = d.balance.as_ref().filter(|b| !b.upper_ok) {
            warn!(
                "step {}: upper energy estimate violated ({} > {})",
                d.k, b.upper, b.bound
            );
            ok = false;
        }
    }
    ok
}

fn diagnose(dir: &Path, tol: f64, write: bool) -> Result<u8, Error> {
    let loaded = load_run(dir)?;
    let sim = loaded.manifest.config.build_simulation()?;
    let report = diagnose_trajectory(&sim, &loaded.trajectory, tol)?;
    print!("{}", sma_core::io::diagnostics_csv(&report));
    if write {
        RunWriter::create(dir, false)?.write_diagnostics(&report)?;
    }
    Ok(if report_ok(&report) { 0 } else { EXIT_CONTRACT })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    let result = match &cli.command {
        Command::Run(args) => args.resolve().and_then(run),
        Command::Check(args) => args.resolve().map(|cfg| {
            print!("{}", cfg.to_toml());
            0
        }),
        Command::Diagnose {
            run_dir,
            tol,
            write,
        } => diagnose(run_dir, *tol, *write),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => fail(e),
    }
}

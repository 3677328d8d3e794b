//! Run configuration: a sectioned TOML file, optionally overridden by
//! command-line flags, resolved against the chosen preset's defaults.
//!
//! ```toml
//! [experiment]
//! preset = "example1"
//! seed = 2018
//!
//! [material]
//! alpha_i = 0.003
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::driver::{ExperimentRegistry, LoadProgram, Simulation, SolverOptions, TRIANGLE_WAVE};
use crate::elastic::LbfgsOptions;
use crate::error::{Error, Result};
use crate::material::{Coefficients, MaterialParams};
use crate::mesh::build_structured_mesh;
use crate::phase::PhaseSolverRegistry;

pub const DEFAULT_SEED: u64 = 2018;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub mesh: MeshConfig,
    pub material: MaterialConfig,
    pub load: LoadConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `example1`, `example2` or `custom`.
    pub preset: String,
    /// Boundary rule name; fixed by named presets.
    pub boundary: String,
    /// Initial phase rule name; fixed by named presets.
    pub initial: String,
    pub seed: u64,
    pub phase_solver: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub alpha: f64,
    pub delta1: f64,
    /// Optional; when given it must equal `2 alpha + 2 delta1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta2: Option<f64>,
    pub epsilon: f64,
    pub beta: f64,
    pub alpha_i: f64,
    pub alpha_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    pub t_final: f64,
    pub n_steps: usize,
    /// `[t, a]` pairs of the piecewise-linear amplitude.
    pub knots: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub elastic_tol: f64,
    pub elastic_max_iterations: usize,
    pub sweep_rel_tol: f64,
    pub max_sweeps: usize,
    pub enforce_stability: bool,
    pub stability_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub snapshots: bool,
    pub diagnostics: bool,
}

/// Every field optional; the shape of a config file and of flag overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    #[serde(default)]
    pub experiment: PartialExperiment,
    #[serde(default)]
    pub mesh: PartialMesh,
    #[serde(default)]
    pub material: PartialMaterial,
    #[serde(default)]
    pub load: PartialLoad,
    #[serde(default)]
    pub solver: PartialSolver,
    #[serde(default)]
    pub output: PartialOutput,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialExperiment {
    pub preset: Option<String>,
    pub boundary: Option<String>,
    pub initial: Option<String>,
    pub seed: Option<u64>,
    pub phase_solver: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialMesh {
    pub nx: Option<usize>,
    pub ny: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialMaterial {
    pub alpha: Option<f64>,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub beta: Option<f64>,
    pub alpha_i: Option<f64>,
    pub alpha_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialLoad {
    pub t_final: Option<f64>,
    pub n_steps: Option<usize>,
    pub knots: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialSolver {
    pub elastic_tol: Option<f64>,
    pub elastic_max_iterations: Option<usize>,
    pub sweep_rel_tol: Option<f64>,
    pub max_sweeps: Option<usize>,
    pub enforce_stability: Option<bool>,
    pub stability_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialOutput {
    pub dir: Option<PathBuf>,
    pub snapshots: Option<bool>,
    pub diagnostics: Option<bool>,
}

macro_rules! overlay {
    ($base:expr, $top:expr; $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

impl PartialConfig {
    /// Values set in `top` win.
    pub fn merge(mut self, top: PartialConfig) -> PartialConfig {
        overlay!(self.experiment, top.experiment; preset, boundary, initial, seed, phase_solver);
        overlay!(self.mesh, top.mesh; nx, ny);
        overlay!(self.material, top.material; alpha, delta1, delta2, epsilon, beta, alpha_i, alpha_s);
        overlay!(self.load, top.load; t_final, n_steps, knots);
        overlay!(self.solver, top.solver; elastic_tol, elastic_max_iterations, sweep_rel_tol, max_sweeps,
            enforce_stability, stability_tol);
        overlay!(self.output, top.output; dir, snapshots, diagnostics);
        self
    }
}

impl From<RunConfig> for PartialConfig {
    fn from(c: RunConfig) -> Self {
        PartialConfig {
            experiment: PartialExperiment {
                preset: Some(c.experiment.preset),
                boundary: Some(c.experiment.boundary),
                initial: Some(c.experiment.initial),
                seed: Some(c.experiment.seed),
                phase_solver: Some(c.experiment.phase_solver),
            },
            mesh: PartialMesh {
                nx: Some(c.mesh.nx),
                ny: Some(c.mesh.ny),
            },
            material: PartialMaterial {
                alpha: Some(c.material.alpha),
                delta1: Some(c.material.delta1),
                delta2: c.material.delta2,
                epsilon: Some(c.material.epsilon),
                beta: Some(c.material.beta),
                alpha_i: Some(c.material.alpha_i),
                alpha_s: Some(c.material.alpha_s),
            },
            load: PartialLoad {
                t_final: Some(c.load.t_final),
                n_steps: Some(c.load.n_steps),
                knots: Some(c.load.knots),
            },
            solver: PartialSolver {
                elastic_tol: Some(c.solver.elastic_tol),
                elastic_max_iterations: Some(c.solver.elastic_max_iterations),
                sweep_rel_tol: Some(c.solver.sweep_rel_tol),
                max_sweeps: Some(c.solver.max_sweeps),
                enforce_stability: Some(c.solver.enforce_stability),
                stability_tol: Some(c.solver.stability_tol),
            },
            output: PartialOutput {
                dir: Some(c.output.dir),
                snapshots: Some(c.output.snapshots),
                diagnostics: Some(c.output.diagnostics),
            },
        }
    }
}

impl RunConfig {
    /// Defaults of a preset. `custom` starts from the example 1 setup.
    pub fn preset(name: &str) -> Result<RunConfig> {
        let (boundary, initial, alpha_i) = match name {
            "example1" | "custom" => ("clamped-shear", "random", 0.0),
            "example2" => ("periodic-shear", "strips", 0.001),
            other => return Err(Error::UnknownPreset(other.to_string())),
        };
        let solver = SolverOptions::default();
        let coeffs = Coefficients {
            alpha_i,
            ..Coefficients::default()
        };
        Ok(RunConfig {
            experiment: ExperimentConfig {
                preset: name.to_string(),
                boundary: boundary.to_string(),
                initial: initial.to_string(),
                seed: DEFAULT_SEED,
                phase_solver: "auto".to_string(),
            },
            mesh: MeshConfig { nx: 16, ny: 8 },
            material: MaterialConfig {
                alpha: coeffs.alpha,
                delta1: coeffs.delta1,
                delta2: None,
                epsilon: coeffs.epsilon,
                beta: coeffs.beta,
                alpha_i: coeffs.alpha_i,
                alpha_s: coeffs.alpha_s,
            },
            load: LoadConfig {
                t_final: 16.0,
                n_steps: 16,
                knots: TRIANGLE_WAVE.iter().map(|&(t, a)| [t, a]).collect(),
            },
            solver: SolverConfig {
                elastic_tol: solver.elastic.gradient_tol,
                elastic_max_iterations: solver.elastic.max_iterations,
                sweep_rel_tol: solver.sweep_rel_tol,
                max_sweeps: solver.max_sweeps,
                enforce_stability: solver.enforce_stability,
                stability_tol: solver.stability_tol,
            },
            output: OutputConfig {
                dir: PathBuf::from("runs").join(name),
                snapshots: true,
                diagnostics: false,
            },
        })
    }

    /// Fills the gaps of `partial` from its preset (default `example1`) and
    /// validates the result.
    pub fn resolve(partial: PartialConfig) -> Result<RunConfig> {
        let preset = partial
            .experiment
            .preset
            .clone()
            .unwrap_or_else(|| "example1".to_string());
        if preset != "custom" {
            let (rule, init) = ExperimentRegistry::preset_parts(&preset)?;
            for (key, given, fixed) in [
                ("experiment.boundary", &partial.experiment.boundary, rule),
                ("experiment.initial", &partial.experiment.initial, init),
            ] {
                if let Some(g) = given {
                    if g != fixed {
                        return Err(Error::Config(format!(
                            "{key} = \"{g}\" conflicts with preset `{preset}` (which uses \"{fixed}\"); \
                             use preset = \"custom\""
                        )));
                    }
                }
            }
        } else if partial.experiment.boundary.is_none() || partial.experiment.initial.is_none() {
            return Err(Error::Config(
                "preset \"custom\" requires experiment.boundary and experiment.initial".into(),
            ));
        }
        let merged = PartialConfig::from(RunConfig::preset(&preset)?).merge(partial);
        let e = merged.experiment;
        let m = merged.material;
        let l = merged.load;
        let s = merged.solver;
        let o = merged.output;
        // every field is set after merging onto the preset
        let cfg = RunConfig {
            experiment: ExperimentConfig {
                preset: e.preset.unwrap_or(preset),
                boundary: e.boundary.unwrap_or_default(),
                initial: e.initial.unwrap_or_default(),
                seed: e.seed.unwrap_or(DEFAULT_SEED),
                phase_solver: e.phase_solver.unwrap_or_default(),
            },
            mesh: MeshConfig {
                nx: merged.mesh.nx.unwrap_or_default(),
                ny: merged.mesh.ny.unwrap_or_default(),
            },
            material: MaterialConfig {
                alpha: m.alpha.unwrap_or_default(),
                delta1: m.delta1.unwrap_or_default(),
                delta2: m.delta2,
                epsilon: m.epsilon.unwrap_or_default(),
                beta: m.beta.unwrap_or_default(),
                alpha_i: m.alpha_i.unwrap_or_default(),
                alpha_s: m.alpha_s.unwrap_or_default(),
            },
            load: LoadConfig {
                t_final: l.t_final.unwrap_or_default(),
                n_steps: l.n_steps.unwrap_or_default(),
                knots: l.knots.unwrap_or_default(),
            },
            solver: SolverConfig {
                elastic_tol: s.elastic_tol.unwrap_or_default(),
                elastic_max_iterations: s.elastic_max_iterations.unwrap_or_default(),
                sweep_rel_tol: s.sweep_rel_tol.unwrap_or_default(),
                max_sweeps: s.max_sweeps.unwrap_or_default(),
                enforce_stability: s.enforce_stability.unwrap_or_default(),
                stability_tol: s.stability_tol.unwrap_or_default(),
            },
            output: OutputConfig {
                dir: o.dir.unwrap_or_default(),
                snapshots: o.snapshots.unwrap_or_default(),
                diagnostics: o.diagnostics.unwrap_or_default(),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse_str(text: &str) -> Result<RunConfig> {
        RunConfig::resolve(parse_partial(text)?)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let partial = parse_partial(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Parse {
                path: path.to_path_buf(),
                msg,
            },
            other => other,
        })?;
        RunConfig::resolve(partial).map_err(|e| locate_error(e, path, &text))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config is always representable")
    }

    pub fn coefficients(&self) -> Coefficients {
        let m = &self.material;
        Coefficients {
            alpha: m.alpha,
            delta1: m.delta1,
            epsilon: m.epsilon,
            beta: m.beta,
            alpha_i: m.alpha_i,
            alpha_s: m.alpha_s,
        }
    }

    pub fn material_params(&self) -> Result<MaterialParams> {
        let c = self.coefficients();
        match self.material.delta2 {
            Some(d2) => MaterialParams::with_delta2(c, d2),
            None => MaterialParams::new(c),
        }
    }

    pub fn load_program(&self) -> Result<LoadProgram> {
        let knots = self.load.knots.iter().map(|&[t, a]| (t, a)).collect();
        LoadProgram::new(self.load.t_final, self.load.n_steps, knots)
    }

    pub fn solver_options(&self) -> SolverOptions {
        let s = &self.solver;
        SolverOptions {
            elastic: LbfgsOptions {
                gradient_tol: s.elastic_tol,
                max_iterations: s.elastic_max_iterations,
                ..SolverOptions::default().elastic
            },
            sweep_rel_tol: s.sweep_rel_tol,
            max_sweeps: s.max_sweeps,
            enforce_stability: s.enforce_stability,
            stability_tol: s.stability_tol,
            ..SolverOptions::default()
        }
    }

    /// Checks every parameter before any computation starts.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Error::Config(format!("{key}: {msg}"));
        self.material_params()
            .map_err(|e| bad("material", e.to_string()))?;
        self.load_program()
            .map_err(|e| bad("load", e.to_string()))?;
        if self.mesh.nx == 0 || self.mesh.ny == 0 {
            return Err(bad(
                "mesh",
                format!(
                    "nx and ny must be >= 1, got {}x{}",
                    self.mesh.nx, self.mesh.ny
                ),
            ));
        }
        let solvers = PhaseSolverRegistry::default();
        if solvers.get(&self.experiment.phase_solver).is_err() {
            let names: Vec<_> = solvers.names().collect();
            return Err(bad(
                "experiment.phase_solver",
                format!(
                    "unknown solver `{}` (available: {})",
                    self.experiment.phase_solver,
                    names.join(", ")
                ),
            ));
        }
        ExperimentRegistry::default()
            .compose(&self.experiment.boundary, &self.experiment.initial)
            .map_err(|e| bad("experiment", e.to_string()))?;
        let s = &self.solver;
        for (key, v) in [
            ("solver.elastic_tol", s.elastic_tol),
            ("solver.sweep_rel_tol", s.sweep_rel_tol),
            ("solver.stability_tol", s.stability_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(key, format!("must be > 0, got {v}")));
            }
        }
        if s.max_sweeps == 0 || s.elastic_max_iterations == 0 {
            return Err(bad(
                "solver",
                "max_sweeps and elastic_max_iterations must be >= 1".into(),
            ));
        }
        if self.output.dir.as_os_str().is_empty() {
            return Err(bad("output.dir", "must not be empty".into()));
        }
        Ok(())
    }

    pub fn build_simulation(&self) -> Result<Simulation> {
        let experiment = ExperimentRegistry::default()
            .compose(&self.experiment.boundary, &self.experiment.initial)?;
        let solver = PhaseSolverRegistry::default().get(&self.experiment.phase_solver)?;
        Simulation::new(
            build_structured_mesh(self.mesh.nx, self.mesh.ny)?,
            self.material_params()?,
            self.load_program()?,
            experiment,
            solver,
            self.solver_options(),
        )
    }
}

pub fn parse_partial(text: &str) -> Result<PartialConfig> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))
}

/// Attaches the line of the offending key, when the message names one that
/// appears in `text`.
fn locate_error(err: Error, path: &Path, text: &str) -> Error {
    let Error::Config(msg) = err else { return err };
    let key = msg.split(':').next().unwrap_or_default();
    let (section, field) = key.split_once('.').unwrap_or((key, ""));
    // (rank, line): an exact field match wins, else the key of the section
    // mentioned earliest in the message
    let mut best: Option<(usize, usize)> = None;
    let mut current = "";
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim();
            continue;
        }
        let Some(name) = line
            .split('=')
            .next()
            .map(str::trim)
            .filter(|n| !n.is_empty())
        else {
            continue;
        };
        if current != section {
            continue;
        }
        let rank = if field.is_empty() {
            msg[key.len()..].find(name)
        } else {
            (name == field).then_some(0)
        };
        if let Some(rank) = rank {
            if best.is_none_or(|(r, _)| rank < r) {
                best = Some((rank, no + 1));
            }
        }
    }
    match best {
        Some((_, line)) => Error::Parse {
            path: path.to_path_buf(),
            msg: format!("line {line}: {msg}"),
        },
        None => Error::Config(msg),
    }
}

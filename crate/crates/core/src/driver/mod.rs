//! Rate-independent evolution by incremental minimization.
//!
//! Every time step minimizes `E(t_k, y, z) + D(z, z_{k-1})` by alternating an
//! elastic solve in `y` (phase fixed) with an exact phase solve in `z`
//! (deformation fixed). A converged alternation is then tested against a
//! finite set of competitors (single-triangle flips, uniform fields); a
//! competitor that beats the state also lowers the incremental objective, so
//! it is adopted and the alternation resumes.

mod diagnostics;
mod load;

use std::fmt;
use std::sync::Arc;

use nalgebra::Vector2;

pub use diagnostics::{
    diagnose_trajectory, energy_balance_report, stability_diagnostic, BalanceRow, Competitor,
    StabilityReport, StepDiagnostics, Violation,
};
pub use load::{
    dirichlet_values, schedule_amplitude, volume_fraction, BalancedRandom, BoundaryRule,
    ClampedShear, Experiment, ExperimentRegistry, LayerStrips, LoadProgram, PeriodicShear,
    PhaseInitializer, TRIANGLE_WAVE,
};

use crate::elastic::{
    enforce_periodicity, ElasticObjective, LbfgsOptions, LbfgsStatus, StiffnessPreconditioner,
};
use crate::error::{Error, Inadmissible, Result};
use crate::material::{dissipation_increment, edge_stretch, MaterialParams};
use crate::mesh::{classify_layout, Mesh2D, NodeKind, NodeSets};
use crate::phase::{PhaseProblem, PhaseSolver};

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    /// Deformed nodal positions, flat `[x, y, x, y, ...]`.
    pub positions: Vec<f64>,
    pub z: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParts {
    pub bulk: f64,
    /// `alpha_i` part of the interfacial energy.
    pub int1: f64,
    /// `alpha_s` (deformed-length) part of the interfacial energy.
    pub int2: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.bulk + self.int1 + self.int2
    }
}

pub fn energy_parts(
    mesh: &Mesh2D,
    sets: &NodeSets,
    params: &MaterialParams,
    state: &State,
) -> Result<EnergyParts, Inadmissible> {
    let objective = ElasticObjective {
        include_alpha_s: false,
        ..ElasticObjective::new(mesh, sets, params, &state.z)
    };
    let bulk = objective.energy(&state.positions)?;
    let mut int1 = 0.0;
    let mut int2 = 0.0;
    for e in mesh.interior_edges() {
        if state.z[e.plus] != state.z[e.minus] {
            int1 += params.alpha_i * e.length;
            if params.alpha_s > 0.0 {
                let f = mesh.deformation_gradient(e.plus, &state.positions);
                int2 += params.alpha_s * edge_stretch(&f, &e.tangent) * e.length;
            }
        }
    }
    Ok(EnergyParts { bulk, int1, int2 })
}

pub fn dissipation(mesh: &Mesh2D, beta: f64, z: &[u8], z_old: &[u8]) -> f64 {
    mesh.triangle_areas()
        .iter()
        .zip(z.iter().zip(z_old))
        .map(|(&area, (&a, &b))| dissipation_increment(a, b, beta, area))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub elastic: LbfgsOptions,
    /// Alternation stops once a sweep lowers the objective by less than this
    /// fraction and leaves the phase field unchanged.
    pub sweep_rel_tol: f64,
    /// Sweep limit, counted afresh after every adopted competitor.
    pub max_sweeps: usize,
    /// Energy margin beyond which a competitor counts as beating a state.
    pub stability_tol: f64,
    /// Adopt beating competitors during the step instead of only reporting them.
    pub enforce_stability: bool,
    /// Upper bound on competitors adopted within one step.
    pub max_adoptions: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            elastic: LbfgsOptions {
                gradient_tol: 1e-9,
                ..LbfgsOptions::default()
            },
            sweep_rel_tol: 1e-8,
            max_sweeps: 50,
            stability_tol: 1e-8,
            enforce_stability: true,
            max_adoptions: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Ok,
    /// The elastic solver hit its iteration cap or could not find descent.
    ElasticStalled,
    /// The alternation did not settle within `max_sweeps`, or too many
    /// competitors were adopted.
    SweepLimit,
}

impl fmt::Display for StepStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepStatus::Ok => "ok",
            StepStatus::ElasticStalled => "stalled",
            StepStatus::SweepLimit => "max-sweeps",
        })
    }
}

impl std::str::FromStr for StepStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(StepStatus::Ok),
            "stalled" => Ok(StepStatus::ElasticStalled),
            "max-sweeps" => Ok(StepStatus::SweepLimit),
            other => Err(Error::Config(format!("unknown step status `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub k: usize,
    pub t: f64,
    pub a: f64,
    pub bulk: f64,
    pub int1: f64,
    pub int2: f64,
    pub d_inc: f64,
    pub diss_cum: f64,
    pub frac_z1: f64,
    pub sweeps: usize,
    pub status: StepStatus,
}

impl LedgerRow {
    pub fn energy(&self) -> f64 {
        self.bulk + self.int1 + self.int2
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub seed: u64,
    pub states: Vec<State>,
    pub ledger: Vec<LedgerRow>,
}

impl Trajectory {
    /// Triangles whose phase changed in step `k`.
    pub fn flips(&self, k: usize) -> usize {
        if k == 0 {
            return 0;
        }
        self.states[k]
            .z
            .iter()
            .zip(&self.states[k - 1].z)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn is_complete(&self, program: &LoadProgram) -> bool {
        self.ledger.len() == program.n_steps + 1
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: State,
    pub objective: f64,
    pub sweeps: usize,
    pub status: StepStatus,
    pub adopted_competitors: usize,
}

pub struct Simulation {
    pub mesh: Mesh2D,
    pub sets: NodeSets,
    pub params: MaterialParams,
    pub program: LoadProgram,
    pub experiment: Experiment,
    pub phase_solver: Arc<dyn PhaseSolver>,
    pub options: SolverOptions,
    preconditioner: Option<StiffnessPreconditioner>,
}

impl Simulation {
    pub fn new(
        mesh: Mesh2D,
        params: MaterialParams,
        program: LoadProgram,
        experiment: Experiment,
        phase_solver: Arc<dyn PhaseSolver>,
        options: SolverOptions,
    ) -> Result<Self> {
        program.validate()?;
        let sets = classify_layout(&mesh, experiment.rule.layout());
        let preconditioner = StiffnessPreconditioner::new(&mesh, &sets, &params);
        Ok(Simulation {
            preconditioner,
            mesh,
            sets,
            params,
            program,
            experiment,
            phase_solver,
            options,
        })
    }

    pub fn amplitude(&self, t: f64) -> Result<f64> {
        schedule_amplitude(&self.program, t)
    }

    /// Reference positions carried by the boundary displacement field at `t`.
    pub fn affine_positions(&self, t: f64) -> Result<Vec<f64>> {
        let a = self.amplitude(t)?;
        let mut y: Vec<f64> = self
            .mesh
            .nodes()
            .iter()
            .flat_map(|x| {
                let p = x + self.experiment.rule.displacement(a, x);
                [p.x, p.y]
            })
            .collect();
        enforce_periodicity(&self.sets, &mut y);
        Ok(y)
    }

    /// Starting guess for time `t_new`: the previous positions shifted by the
    /// change of the displacement field, with Dirichlet nodes set exactly.
    pub fn warm_start(&self, positions: &[f64], t_old: f64, t_new: f64) -> Result<Vec<f64>> {
        let (a_old, a_new) = (self.amplitude(t_old)?, self.amplitude(t_new)?);
        let rule = &self.experiment.rule;
        let mut y = positions.to_vec();
        for (n, x) in self.mesh.nodes().iter().enumerate() {
            let exact = x + rule.displacement(a_new, x);
            let p = match self.sets.kinds[n] {
                NodeKind::Dirichlet => exact,
                _ => {
                    Vector2::new(y[2 * n], y[2 * n + 1]) + rule.displacement(a_new, x)
                        - rule.displacement(a_old, x)
                }
            };
            y[2 * n] = p.x;
            y[2 * n + 1] = p.y;
        }
        enforce_periodicity(&self.sets, &mut y);
        Ok(y)
    }

    pub fn energy_parts(&self, state: &State) -> Result<EnergyParts, Inadmissible> {
        energy_parts(&self.mesh, &self.sets, &self.params, state)
    }

    pub fn energy(&self, state: &State) -> Result<f64, Inadmissible> {
        self.energy_parts(state).map(|e| e.total())
    }

    pub fn dissipation(&self, z: &[u8], z_old: &[u8]) -> f64 {
        dissipation(&self.mesh, self.params.beta, z, z_old)
    }

    /// `E(y, z) + D(z, z_prev)`, with `D` dropped when `with_dissipation` is false.
    pub fn incremental_objective(
        &self,
        state: &State,
        z_prev: &[u8],
        with_dissipation: bool,
    ) -> Result<f64, Inadmissible> {
        let mut v = self.energy(state)?;
        if with_dissipation {
            v += self.dissipation(&state.z, z_prev);
        }
        Ok(v)
    }

    /// Minimizes over `y` with `z` fixed, starting from `positions`.
    pub fn relax_elastic(&self, positions: &[f64], z: &[u8]) -> Result<(Vec<f64>, LbfgsStatus)> {
        let objective = ElasticObjective {
            preconditioner: self.preconditioner.as_ref(),
            ..ElasticObjective::new(&self.mesh, &self.sets, &self.params, z)
        };
        let r = objective.minimize(positions, &self.options.elastic)?;

        Ok((r.positions, r.status))
    }

    pub fn solve_phase(
        &self,
        positions: &[f64],
        z_prev: &[u8],
        with_dissipation: bool,
    ) -> Result<Vec<u8>> {
        let problem = PhaseProblem::assemble(
            &self.mesh,
            positions,
            z_prev,
            &self.params,
            with_dissipation,
        )?;
        self.phase_solver.solve(&problem)
    }

    /// Alternating minimization from `start` for the step whose previous
    /// phase field is `z_prev`.
    pub fn solve_increment(
        &self,
        start: State,
        z_prev: &[u8],
        with_dissipation: bool,
    ) -> Result<StepOutcome> {
        let mut state = start;
        let mut objective = self.incremental_objective(&state, z_prev, with_dissipation)?;
        let mut sweeps = 0;
        let mut stalled = false;
        let mut adopted = 0;
        let mut status = StepStatus::Ok;
        loop {
            let mut settled = false;
            for _ in 0..self.options.max_sweeps {
                sweeps += 1;
                let (positions, elastic) = self.relax_elastic(&state.positions, &state.z)?;
                stalled |= elastic != LbfgsStatus::Converged;
                let z = self.solve_phase(&positions, z_prev, with_dissipation)?;
                let changed = z != state.z;
                let next = State { positions, z };
                let value = self.incremental_objective(&next, z_prev, with_dissipation)?;
                if value > objective + 1e-10 * (1.0 + objective.abs()) {
                    return Err(Error::Contract(format!(
                        "sweep {sweeps} raised the incremental objective from {objective} to {value}"
                    )));
                }
                let decrease = objective - value;
                state = next;
                objective = value;
                if !changed && decrease <= self.options.sweep_rel_tol * objective.abs().max(1.0) {
                    settled = true;
                    break;
                }
            }
            if !settled {
                status = StepStatus::SweepLimit;
                break;
            }
            if !self.options.enforce_stability {
                break;
            }
            if adopted == self.options.max_adoptions {
                status = StepStatus::SweepLimit;
                break;
            }
            let report = stability_diagnostic(self, &state)?;
            match report.best_violation() {
                Some(v) => {
                    log::debug!("adopting competitor {:?} (gap {:.3e})", v.competitor, v.gap);
                    let candidate = v.state.clone();
                    let value = self.incremental_objective(&candidate, z_prev, with_dissipation)?;
                    if value >= objective {
                        return Err(Error::Contract(format!(
                            "competitor {:?} beats the state but does not lower the incremental objective",
                            v.competitor
                        )));
                    }
                    state = candidate;
                    objective = value;
                    adopted += 1;
                }
                None => break,
            }
        }
        if stalled && status == StepStatus::Ok {
            status = StepStatus::ElasticStalled;
        }
        Ok(StepOutcome {
            state,
            objective,
            sweeps,
            status,
            adopted_competitors: adopted,
        })
    }

    /// Prescribed phase field relaxed at `t = 0` without dissipation, starting
    /// from zero displacement.
    pub fn initial_state(&self, seed: u64) -> Result<StepOutcome> {
        let z0 = self
            .experiment
            .initializer
            .initial_phase(&self.mesh, seed)?;
        let start = State {
            positions: self.affine_positions(0.0)?,
            z: z0.clone(),
        };
        self.solve_increment(start, &z0, false)
    }

    fn ledger_row(
        &self,
        k: usize,
        outcome: &StepOutcome,
        z_prev: &[u8],
        diss_before: f64,
    ) -> Result<LedgerRow> {
        let t = self.program.time(k);
        let parts = self.energy_parts(&outcome.state)?;
        let d_inc = if k == 0 {
            0.0
        } else {
            self.dissipation(&outcome.state.z, z_prev)
        };
        Ok(LedgerRow {
            k,
            t,
            a: self.amplitude(t)?,
            bulk: parts.bulk,
            int1: parts.int1,
            int2: parts.int2,
            d_inc,
            diss_cum: diss_before + d_inc,
            frac_z1: volume_fraction(&self.mesh, &outcome.state.z),
            sweeps: outcome.sweeps,
            status: outcome.status,
        })
    }

    /// Full evolution over the load program.
    pub fn run(&self, seed: u64) -> Result<Trajectory> {
        self.run_with(seed, |_, _| {})
    }

    /// As [`Simulation::run`], calling `on_step` after every recorded step.
    pub fn run_with(
        &self,
        seed: u64,
        mut on_step: impl FnMut(&LedgerRow, &StepOutcome),
    ) -> Result<Trajectory> {
        let init = self.initial_state(seed)?;
        let row = self.ledger_row(0, &init, &init.state.z, 0.0)?;
        on_step(&row, &init);
        let mut traj = Trajectory {
            seed,
            states: vec![init.state],
            ledger: vec![row],
        };
        for k in 1..=self.program.n_steps {
            let prev = &traj.states[k - 1];
            let start = State {
                positions: self.warm_start(
                    &prev.positions,
                    self.program.time(k - 1),
                    self.program.time(k),
                )?,
                z: prev.z.clone(),
            };
            let z_prev = prev.z.clone();
            let outcome = self.solve_increment(start, &z_prev, true)?;
            if outcome.status != StepStatus::Ok {
                log::warn!("step {k}: {}", outcome.status);
            }
            let diss_before = traj.ledger[k - 1].diss_cum;
            let row = self.ledger_row(k, &outcome, &z_prev, diss_before)?;
            on_step(&row, &outcome);
            traj.states.push(outcome.state);
            traj.ledger.push(row);
        }
        Ok(traj)
    }
}

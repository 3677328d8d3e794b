//! Discrete stability and energy-balance checks.

use rayon::prelude::*;

use super::{Simulation, State, Trajectory};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Competitor {
    /// The state itself.
    Identity,
    /// One triangle switched to the other variant, deformation re-relaxed.
    Flip(usize),
    /// Whole body in one variant, deformation re-relaxed.
    Uniform(u8),
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub competitor: Competitor,
    /// `E(q) - E(q~) - D(z, z~)`; positive means the competitor wins.
    pub gap: f64,
    pub state: State,
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub energy: f64,
    pub checked: usize,
    /// Smallest `E(q~) + D(z, z~) - E(q)` over all competitors.
    pub min_margin: f64,
    pub violations: Vec<Violation>,
}

impl StabilityReport {
    pub fn is_stable(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn best_violation(&self) -> Option<&Violation> {
        self.violations
            .iter()
            .fold(None, |best: Option<&Violation>, v| match best {
                Some(b) if b.gap >= v.gap => Some(b),
                _ => Some(v),
            })
    }
}

/// Tests `E(q) <= E(q~) + D(z, z~)` against single flips and uniform fields.
pub fn stability_diagnostic(sim: &Simulation, state: &State) -> Result<StabilityReport> {
    let energy = sim.energy(state)?;
    let n = sim.mesh.num_triangles();
    let mut competitors: Vec<Competitor> = vec![Competitor::Identity];
    competitors.extend((0..n).map(Competitor::Flip));
    competitors.extend([Competitor::Uniform(0), Competitor::Uniform(1)]);

    let evaluated: Vec<Result<(Competitor, f64, State)>> = competitors
        .par_iter()
        .map(|&c| {
            let candidate = match c {
                Competitor::Identity => state.clone(),
                Competitor::Flip(t) => {
                    let mut z = state.z.clone();
                    z[t] ^= 1;
                    relaxed(sim, state, z)?
                }
                Competitor::Uniform(v) => relaxed(sim, state, vec![v; n])?,
            };
            let margin = sim.energy(&candidate)? + sim.dissipation(&state.z, &candidate.z) - energy;
            Ok((c, margin, candidate))
        })
        .collect();

    let mut report = StabilityReport {
        energy,
        checked: competitors.len(),
        min_margin: f64::INFINITY,
        violations: Vec::new(),
    };
    for item in evaluated {
        let (competitor, margin, candidate) = item?;
        report.min_margin = report.min_margin.min(margin);
        if -margin > sim.options.stability_tol {
            report.violations.push(Violation {
                competitor,
                gap: -margin,
                state: candidate,
            });
        }
    }
    Ok(report)
}

fn relaxed(sim: &Simulation, state: &State, z: Vec<u8>) -> Result<State> {
    let (positions, _) = sim.relax_elastic(&state.positions, &z)?;
    Ok(State { positions, z })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceRow {
    pub k: usize,
    /// `E(t_k, q_k) + D(z_k, z_{k-1})`.
    pub upper: f64,
    /// `E(t_k, q_{k-1})` with `q_{k-1}` carried to the new boundary data.
    pub bound: f64,
    pub upper_ok: bool,
    /// Energy change caused by imposing the new boundary data.
    pub work: f64,
    /// `E(t_k, q_k) + Diss_k - E(t_0, q_0) - sum of work`.
    pub residual: f64,
}

/// Per-step upper energy estimate and cumulative balance residual.
pub fn energy_balance_report(
    sim: &Simulation,
    traj: &Trajectory,
    tol: f64,
) -> Result<Vec<BalanceRow>> {
    let mut rows = Vec::with_capacity(traj.states.len().saturating_sub(1));
    let e0 = sim.energy(&traj.states[0])?;
    let mut prev_energy = e0;
    let mut work_sum = 0.0;
    let mut diss_sum = 0.0;
    for k in 1..traj.states.len() {
        let (prev, cur) = (&traj.states[k - 1], &traj.states[k]);
        let carried = State {
            positions: sim.warm_start(
                &prev.positions,
                sim.program.time(k - 1),
                sim.program.time(k),
            )?,
            z: prev.z.clone(),
        };
        let bound = sim.energy(&carried)?;
        let energy = sim.energy(cur)?;
        let d = sim.dissipation(&cur.z, &prev.z);
        let work = bound - prev_energy;
        work_sum += work;
        diss_sum += d;
        let upper = energy + d;
        rows.push(BalanceRow {
            k,
            upper,
            bound,
            upper_ok: upper <= bound + tol,
            work,
            residual: energy + diss_sum - e0 - work_sum,
        });
        prev_energy = energy;
    }
    Ok(rows)
}

/// Stability and balance results of one recorded step.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub k: usize,
    pub stability: StabilityReport,
    /// `None` for the initial state.
    pub balance: Option<BalanceRow>,
}

/// Runs both checks over a whole trajectory.
pub fn diagnose_trajectory(
    sim: &Simulation,
    traj: &Trajectory,
    balance_tol: f64,
) -> Result<Vec<StepDiagnostics>> {
    let mut balance = energy_balance_report(sim, traj, balance_tol)?.into_iter();
    traj.states
        .iter()
        .enumerate()
        .map(|(k, state)| {
            Ok(StepDiagnostics {
                k,
                stability: stability_diagnostic(sim, state)?,
                balance: if k == 0 { None } else { balance.next() },
            })
        })
        .collect()
}

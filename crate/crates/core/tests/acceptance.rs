//! End-to-end acceptance criteria. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::Matrix2;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sma_core::config::RunConfig;
use sma_core::driver::{energy_balance_report, stability_diagnostic, Simulation, Trajectory};
use sma_core::elastic::ElasticObjective;
use sma_core::io::ledger_csv;
use sma_core::material::{
    variant_density, variant_density_gradient, Coefficients, MaterialParams, Variant,
};
use sma_core::mesh::{build_structured_mesh, classify_layout, BoundaryLayout};
use sma_core::phase::{
    lp_relaxation_check, solve_coupled, ExhaustiveSolver, PhaseProblem, PhaseSolver,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn preset_sim(preset: &str, tweak: impl FnOnce(&mut RunConfig)) -> Simulation {
    let mut cfg = RunConfig::preset(preset).unwrap();
    tweak(&mut cfg);
    cfg.validate().unwrap();
    cfg.build_simulation().unwrap()
}

fn step_at(traj: &Trajectory, t: f64) -> usize {
    traj.ledger
        .iter()
        .position(|r| r.t == t)
        .expect("time on the step grid")
}

fn dominant(frac: f64) -> f64 {
    frac.max(1.0 - frac)
}

fn well_calibration() -> Outcome {
    let p = MaterialParams::default();
    let w1 = variant_density(p.stretch(Variant::One), Variant::One, &p).unwrap();
    let w2 = variant_density(p.stretch(Variant::Two), Variant::Two, &p).unwrap();
    let g1 = variant_density_gradient(p.stretch(Variant::One), Variant::One, &p)
        .unwrap()
        .norm();
    let g2 = variant_density_gradient(p.stretch(Variant::Two), Variant::Two, &p)
        .unwrap()
        .norm();
    // the assembled gradient of a body sitting in one well
    let mesh = build_structured_mesh(16, 8).unwrap();
    let sets = classify_layout(&mesh, BoundaryLayout::Clamped);
    let f1 = p.stretch(Variant::One);
    let y: Vec<f64> = mesh
        .nodes()
        .iter()
        .flat_map(|x| {
            let v = f1 * x;
            [v.x, v.y]
        })
        .collect();
    let z = vec![1u8; mesh.num_triangles()];
    let (_, grad) = ElasticObjective::new(&mesh, &sets, &p, &z)
        .energy_and_full_gradient(&y)
        .unwrap();
    let gmesh = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let worst = g1.max(g2).max(gmesh);
    outcome(
        w1 == 3.0 && w2 == 3.0 && worst <= 1e-10,
        format!("W1(F1) = {w1}, W2(F2) = {w2}, largest gradient at the wells {worst:.2e}"),
    )
}

fn gradient_correctness() -> Outcome {
    let mesh = build_structured_mesh(4, 2).unwrap();
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: 100,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let worst = std::cell::Cell::new(0.0f64);
    let strategy = (any::<u64>(), 0.0..0.2f64, -0.3..0.3f64, prop::bool::ANY);
    let result = runner.run(&strategy, |(seed, alpha_s, shear, periodic)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = if periodic {
            BoundaryLayout::PeriodicShear
        } else {
            BoundaryLayout::Clamped
        };
        let sets = classify_layout(&mesh, layout);
        let params = MaterialParams::new(Coefficients {
            alpha_i: 0.003,
            alpha_s,
            ..Coefficients::default()
        })
        .unwrap();
        let z: Vec<u8> = (0..mesh.num_triangles())
            .map(|_| rng.gen_range(0..2))
            .collect();
        let y: Vec<f64> = mesh
            .nodes()
            .iter()
            .flat_map(|x| {
                let (dx, dy): (f64, f64) = (rng.gen_range(-0.04..0.04), rng.gen_range(-0.04..0.04));
                [x.x + shear * x.y + dx, x.y + dy]
            })
            .collect();
        let objective = ElasticObjective {
            include_alpha_s: true,
            ..ElasticObjective::new(&mesh, &sets, &params, &z)
        };
        let (_, grad) = objective.energy_and_full_gradient(&y).unwrap();
        let h = 1e-6;
        let mut err2 = 0.0;
        let mut norm2 = 0.0;
        for i in 0..y.len() {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[i] += h;
            ym[i] -= h;
            let fd = (objective.energy_and_full_gradient(&yp).unwrap().0
                - objective.energy_and_full_gradient(&ym).unwrap().0)
                / (2.0 * h);
            err2 += (fd - grad[i]).powi(2);
            norm2 += grad[i].powi(2);
        }
        let rel = (err2 / norm2).sqrt();
        worst.set(worst.get().max(rel));
        prop_assert!(rel <= 1e-6, "relative error {rel:.3e}");
        Ok(())
    });
    outcome(
        result.is_ok(),
        format!(
            "100 random admissible states (bulk + alpha_s term), worst relative error {:.2e}",
            worst.get()
        ),
    )
}

/// Random problems on small structured meshes with values on a dyadic grid,
/// so every objective sum is exact.
fn random_problem(rng: &mut ChaCha8Rng, zero_weights: bool) -> PhaseProblem {
    let shapes = [
        (1, 1),
        (2, 1),
        (1, 2),
        (3, 1),
        (2, 2),
        (4, 1),
        (3, 2),
        (4, 2),
        (2, 4),
        (8, 1),
    ];
    let (nx, ny) = shapes[rng.gen_range(0..shapes.len())];
    let mesh = build_structured_mesh(nx, ny).unwrap();
    let n = mesh.num_triangles();
    let unary = (0..n)
        .map(|_| rng.gen_range(-64..=64) as f64 / 64.0)
        .collect();
    let edges: Vec<(usize, usize)> = mesh
        .interior_edges()
        .iter()
        .map(|e| (e.plus, e.minus))
        .collect();
    let weights = edges
        .iter()
        .map(|_| {
            if zero_weights {
                0.0
            } else {
                rng.gen_range(1..=64) as f64 / 64.0
            }
        })
        .collect();
    let z_prev = (0..n).map(|_| rng.gen_range(0..2)).collect();
    PhaseProblem::new(unary, edges, weights, z_prev)
}

fn phase_solver_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let exhaustive = ExhaustiveSolver::default();
    let (mut mismatches, mut worst_gap, mut worst_sigma, mut non_integral) = (0, 0.0f64, 0.0f64, 0);
    for _ in 0..200 {
        let problem = random_problem(&mut rng, false);
        let cut = solve_coupled(&problem).unwrap();
        let best = exhaustive.solve(&problem).unwrap();
        if problem.objective(&cut) != problem.objective(&best) {
            mismatches += 1;
        }
        let lp = lp_relaxation_check(&problem, &cut).unwrap();
        worst_gap = worst_gap.max(lp.gap.abs());
        worst_sigma = worst_sigma.max(lp.sigma_residual);
        non_integral += usize::from(!lp.integral);
    }
    outcome(
        mismatches == 0 && worst_gap <= 1e-9 && worst_sigma <= 1e-9,
        format!(
            "200 problems: {mismatches} cut/enumeration mismatches, worst LP gap {worst_gap:.2e}, \
             worst sigma residual {worst_sigma:.2e}, {non_integral} fractional LP optima"
        ),
    )
}

fn closed_form_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = MaterialParams::default();
    let mut instances = 0;
    let mut bad = 0;
    let mut check = |problem: &PhaseProblem| {
        instances += 1;
        let z = solve_coupled(problem).unwrap();
        let ok = problem
            .unary
            .iter()
            .zip(&z)
            .zip(&problem.z_prev)
            .all(|((&u, &zt), &zp)| {
                if u > 0.0 {
                    zt == 0
                } else if u < 0.0 {
                    zt == 1
                } else {
                    zt == zp
                }
            });
        bad += usize::from(!ok);
    };
    for _ in 0..300 {
        check(&random_problem(&mut rng, true));
    }
    // unary terms from random deformations of the default material
    let mesh = build_structured_mesh(8, 4).unwrap();
    for _ in 0..50 {
        let f = Matrix2::new(1.0, rng.gen_range(-0.4..0.4), rng.gen_range(-0.2..0.2), 1.0);
        let y: Vec<f64> = mesh
            .nodes()
            .iter()
            .flat_map(|x| {
                let v = f * x;
                [
                    v.x + rng.gen_range(-0.01..0.01),
                    v.y + rng.gen_range(-0.01..0.01),
                ]
            })
            .collect();
        let z_prev: Vec<u8> = (0..mesh.num_triangles())
            .map(|_| rng.gen_range(0..2))
            .collect();
        check(&PhaseProblem::assemble(&mesh, &y, &z_prev, &params, true).unwrap());
    }
    outcome(
        bad == 0,
        format!("{instances} zero-weight instances, {bad} disagree with the sign rule"),
    )
}

struct Runs {
    ex1: (Simulation, Trajectory),
    ex1_interface: (Simulation, Trajectory),
    ex1_no_dissipation: (Simulation, Trajectory),
    ex2: (Simulation, Trajectory),
}

fn timed_run(label: &str, sim: Simulation) -> (Simulation, Trajectory) {
    let start = Instant::now();
    let traj = sim.run(sim_seed()).unwrap();
    eprintln!("  [{label}: {:.1} s]", start.elapsed().as_secs_f64());
    (sim, traj)
}

fn sim_seed() -> u64 {
    RunConfig::preset("example1").unwrap().experiment.seed
}

fn fractions(traj: &Trajectory) -> String {
    traj.ledger
        .iter()
        .map(|r| format!("{:.3}", r.frac_z1))
        .collect::<Vec<_>>()
        .join(" ")
}

fn example1_ratio(runs: &Runs) -> Outcome {
    let traj = &runs.ex1.1;
    let frac = dominant(traj.ledger[step_at(traj, 8.0)].frac_z1);
    outcome(
        (0.65..=0.85).contains(&frac),
        format!(
            "dominant fraction at t = 8 is {frac:.4} (window [0.65, 0.85]); frac_z1 by step: {}",
            fractions(traj)
        ),
    )
}

fn example1_interface(runs: &Runs) -> Outcome {
    let traj = &runs.ex1_interface.1;
    let f8 = dominant(traj.ledger[step_at(traj, 8.0)].frac_z1);
    let f16 = dominant(traj.ledger[step_at(traj, 16.0)].frac_z1);
    let (i0, i16) = (traj.ledger[0].int1, traj.ledger[step_at(traj, 16.0)].int1);
    outcome(
        f8 > 0.9 && f16 > 0.9 && i16 < i0,
        format!(
            "dominant fraction {f8:.4} at t = 8, {f16:.4} at t = 16; E_int1 {i0:.5} -> {i16:.5}"
        ),
    )
}

fn example2_events(runs: &Runs) -> Outcome {
    let traj = &runs.ex2.1;
    let f: Vec<f64> = traj.ledger.iter().map(|r| r.frac_z1).collect();
    let loading: Vec<usize> = traj
        .ledger
        .iter()
        .filter(|r| r.t > 0.0 && r.t <= 4.0)
        .map(|r| r.k)
        .collect();
    let growth = loading.iter().all(|&k| f[k] > f[k - 1]);
    let first_unloading = traj.ledger.iter().find(|r| r.t > 8.0).unwrap().k;
    let plateau = traj.flips(first_unloading) == 0;
    let k12 = step_at(traj, 12.0);
    let variant2 = 1.0 - f[k12] > 0.9;
    let late: Vec<usize> = traj
        .ledger
        .iter()
        .filter(|r| r.t > 12.0)
        .map(|r| r.k)
        .collect();
    let frozen = late.iter().all(|&k| traj.flips(k) == 0);
    let flips: Vec<String> = (1..traj.states.len())
        .map(|k| traj.flips(k).to_string())
        .collect();
    outcome(
        growth && plateau && variant2 && frozen,
        format!(
            "growth on (0,4]: {growth}; no flips at t = {}: {plateau}; variant 2 > 0.9 at t = 12: {variant2} ({:.4}); \
             frozen after t = 12: {frozen}; frac_z1: {}; flips: {}",
            traj.ledger[first_unloading].t,
            1.0 - f[k12],
            fractions(traj),
            flips.join(" ")
        ),
    )
}

fn hysteresis(runs: &Runs) -> Outcome {
    let (with, without) = (&runs.ex1.1, &runs.ex1_no_dissipation.1);
    let differ = with
        .ledger
        .iter()
        .zip(&without.ledger)
        .any(|(a, b)| a.frac_z1 != b.frac_z1);
    // variant 1 is favored while the load rises to a = 1
    let (fw, fo) = (
        with.ledger[step_at(with, 8.0)].frac_z1,
        without.ledger[step_at(without, 8.0)].frac_z1,
    );
    outcome(
        differ && fw > fo,
        format!("curves differ: {differ}; variant-1 fraction at t = 8: {fw:.4} (beta = 0.1) vs {fo:.4} (beta = 0)"),
    )
}

fn incremental_minimality(runs: &Runs) -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for (label, (sim, traj)) in [
        ("example1", &runs.ex1),
        ("example1 alpha_i=0.003", &runs.ex1_interface),
        ("example1 beta=0", &runs.ex1_no_dissipation),
        ("example2", &runs.ex2),
    ] {
        let balance = energy_balance_report(sim, traj, 1e-8).unwrap();
        let upper_fail = balance.iter().filter(|b| !b.upper_ok).count();
        let mut violations = 0;
        let mut worst = 0.0f64;
        for state in &traj.states {
            let report = stability_diagnostic(sim, state).unwrap();
            violations += report.violations.len();
            worst = worst.max(report.best_violation().map_or(0.0, |v| v.gap));
        }
        pass &= upper_fail == 0 && violations == 0;
        details.push(format!(
            "{label}: {upper_fail} upper-estimate failures, {violations} stability violations (worst gap {worst:.2e})"
        ));
    }
    outcome(pass, details.join("; "))
}

fn determinism(runs: &Runs) -> Outcome {
    let (sim, first) = &runs.ex1;
    let second = sim.run(first.seed).unwrap();
    let fresh = preset_sim("example1", |_| {}).run(first.seed).unwrap();
    let a = ledger_csv(first.seed, &first.ledger);
    let b = ledger_csv(second.seed, &second.ledger);
    let c = ledger_csv(fresh.seed, &fresh.ledger);
    outcome(
        a == b && a == c,
        format!(
            "three example1 runs with seed {}: ledgers byte-identical = {}",
            first.seed,
            a == b && a == c
        ),
    )
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, o: Outcome| {
        println!(
            "{} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    };
    report("well-calibration", well_calibration());
    report("gradient-correctness", gradient_correctness());
    report("phase-solver-exactness", phase_solver_exactness());
    report("closed-form-consistency", closed_form_consistency());

    let runs = Runs {
        ex1: timed_run("example1", preset_sim("example1", |_| {})),
        ex1_interface: timed_run(
            "example1 alpha_i=0.003",
            preset_sim("example1", |c| c.material.alpha_i = 0.003),
        ),
        ex1_no_dissipation: timed_run(
            "example1 beta=0",
            preset_sim("example1", |c| c.material.beta = 0.0),
        ),
        ex2: timed_run("example2", preset_sim("example2", |_| {})),
    };
    report("example1-ratio", example1_ratio(&runs));
    report("example1-interfacial", example1_interface(&runs));
    report("example2-events", example2_events(&runs));
    report("hysteresis", hysteresis(&runs));
    report("incremental-minimality", incremental_minimality(&runs));
    report("determinism", determinism(&runs));

    println!("{} criteria failed", failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

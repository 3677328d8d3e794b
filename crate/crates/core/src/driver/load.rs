//! Loading schedule and experiment setups.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryLayout, Mesh2D, NodeSets};

/// Triangular wave `0 -> 1 -> 0 -> -1 -> 0` over one period of length 16.
pub const TRIANGLE_WAVE: [(f64, f64); 5] = [
    (0.0, 0.0),
    (4.0, 1.0),
    (8.0, 0.0),
    (12.0, -1.0),
    (16.0, 0.0),
];

#[derive(Debug, Clone, PartialEq)]
pub struct LoadProgram {
    pub t_final: f64,
    pub n_steps: usize,
    /// `(t, a)` knots, strictly increasing in `t`, spanning `[0, t_final]`.
    pub knots: Vec<(f64, f64)>,
}

impl Default for LoadProgram {
    fn default() -> Self {
        LoadProgram {
            t_final: 16.0,
            n_steps: 16,
            knots: TRIANGLE_WAVE.to_vec(),
        }
    }
}

impl LoadProgram {
    pub fn new(t_final: f64, n_steps: usize, knots: Vec<(f64, f64)>) -> Result<Self> {
        let p = LoadProgram {
            t_final,
            n_steps,
            knots,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return bad(format!("t_final must be > 0, got {}", self.t_final));
        }
        if self.n_steps == 0 {
            return bad("n_steps must be >= 1".into());
        }
        if self.knots.len() < 2 {
            return bad("at least two wave knots are required".into());
        }
        if self
            .knots
            .iter()
            .any(|(t, a)| !t.is_finite() || !a.is_finite())
        {
            return bad("wave knots must be finite".into());
        }
        if self.knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return bad("wave knot times must be strictly increasing".into());
        }
        let (first, last) = (self.knots[0].0, self.knots[self.knots.len() - 1].0);
        if first > 0.0 || last < self.t_final {
            return bad(format!(
                "wave knots cover [{first}, {last}] but the program runs over [0, {}]",
                self.t_final
            ));
        }
        Ok(())
    }

    /// `t_k = k T / N`.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t_final
        } else {
            k as f64 * self.t_final / self.n_steps as f64
        }
    }

    /// Piecewise-linear amplitude `a(t)`.
    pub fn amplitude(&self, t: f64) -> Result<f64> {
        schedule_amplitude(self, t)
    }
}

pub fn schedule_amplitude(program: &LoadProgram, t: f64) -> Result<f64> {
    if !(0.0..=program.t_final).contains(&t) {
        return Err(Error::TimeOutOfRange {
            t,
            t_final: program.t_final,
        });
    }
    let knots = &program.knots;
    let i = knots.partition_point(|&(tk, _)| tk <= t);
    if i == 0 {
        return Ok(knots[0].1);
    }
    if i == knots.len() {
        return Ok(knots[i - 1].1);
    }
    let (t0, a0) = knots[i - 1];
    let (t1, a1) = knots[i];
    Ok(a0 + (a1 - a0) * (t - t0) / (t1 - t0))
}

/// Where Dirichlet data acts and what displacement it prescribes.
///
/// The displacement is an affine field of the reference position, so it is
/// also used to carry interior nodes along when the load changes.
pub trait BoundaryRule: Send + Sync {
    fn name(&self) -> &'static str;

    fn layout(&self) -> BoundaryLayout;

    fn displacement(&self, amplitude: f64, x: &Vector2<f64>) -> Vector2<f64>;
}

/// Whole boundary clamped to `u = 0.3 a(t) (x2 - 0.5, 0)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClampedShear;

impl BoundaryRule for ClampedShear {
    fn name(&self) -> &'static str {
        "clamped-shear"
    }

    fn layout(&self) -> BoundaryLayout {
        BoundaryLayout::Clamped
    }

    fn displacement(&self, amplitude: f64, x: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(0.3 * amplitude * (x.y - 0.5), 0.0)
    }
}

/// Side edges moved by `u = 0.4 a(t) (0, x1)`, top mirrors bottom.
#[derive(Debug, Clone, Copy, Default)]
pub struct PeriodicShear;

impl BoundaryRule for PeriodicShear {
    fn name(&self) -> &'static str {
        "periodic-shear"
    }

    fn layout(&self) -> BoundaryLayout {
        BoundaryLayout::PeriodicShear
    }

    fn displacement(&self, amplitude: f64, x: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(0.0, 0.4 * amplitude * x.x)
    }
}

/// Constrained-node displacements at time `t`, in node order.
pub fn dirichlet_values(
    program: &LoadProgram,
    rule: &dyn BoundaryRule,
    mesh: &Mesh2D,
    sets: &NodeSets,
    t: f64,
) -> Result<Vec<(usize, Vector2<f64>)>> {
    let a = schedule_amplitude(program, t)?;
    Ok(sets
        .dirichlet
        .iter()
        .map(|&n| (n, rule.displacement(a, &mesh.nodes()[n])))
        .collect())
}

/// Prescribes the phase field before the initial relaxation.
pub trait PhaseInitializer: Send + Sync {
    fn name(&self) -> &'static str;

    fn initial_phase(&self, mesh: &Mesh2D, seed: u64) -> Result<Vec<u8>>;
}

/// Independent fair coin per triangle, redrawn until the area fraction of
/// `z = 1` is within 0.05 of one half.
#[derive(Debug, Clone, Copy)]
pub struct BalancedRandom {
    pub max_attempts: usize,
}

impl Default for BalancedRandom {
    fn default() -> Self {
        BalancedRandom { max_attempts: 100 }
    }
}

impl PhaseInitializer for BalancedRandom {
    fn name(&self) -> &'static str {
        "random"
    }

    fn initial_phase(&self, mesh: &Mesh2D, seed: u64) -> Result<Vec<u8>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..self.max_attempts {
            let z: Vec<u8> = (0..mesh.num_triangles())
                .map(|_| rng.gen_range(0..2u8))
                .collect();
            if (volume_fraction(mesh, &z) - 0.5).abs() < 0.05 {
                return Ok(z);
            }
        }
        Err(Error::InitialSampling(self.max_attempts))
    }
}

/// One single-variant strip per mesh layer, alternating, bottom layer `z = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LayerStrips;

impl PhaseInitializer for LayerStrips {
    fn name(&self) -> &'static str {
        "strips"
    }

    fn initial_phase(&self, mesh: &Mesh2D, _seed: u64) -> Result<Vec<u8>> {
        Ok((0..mesh.num_triangles())
            .map(|t| (mesh.triangle_layer(t) % 2) as u8)
            .collect())
    }
}

/// Area fraction of `z = 1`.
pub fn volume_fraction(mesh: &Mesh2D, z: &[u8]) -> f64 {
    let ones = mesh
        .triangle_areas()
        .iter()
        .zip(z)
        .filter(|(_, &zt)| zt == 1)
        .fold(0.0, |acc, (a, _)| acc + a);
    ones / mesh.total_area()
}

/// Boundary rules and phase initializers addressable by name, plus the
/// named presets that pair them.
#[derive(Clone)]
pub struct ExperimentRegistry {
    rules: BTreeMap<&'static str, Arc<dyn BoundaryRule>>,
    initializers: BTreeMap<&'static str, Arc<dyn PhaseInitializer>>,
}

/// A boundary rule and phase initializer with the preset's default `alpha_i`.
#[derive(Clone)]
pub struct Experiment {
    pub rule: Arc<dyn BoundaryRule>,
    pub initializer: Arc<dyn PhaseInitializer>,
}

impl Default for ExperimentRegistry {
    fn default() -> Self {
        let mut reg = ExperimentRegistry {
            rules: BTreeMap::new(),
            initializers: BTreeMap::new(),
        };
        reg.register_rule(Arc::new(ClampedShear));
        reg.register_rule(Arc::new(PeriodicShear));
        reg.register_initializer(Arc::new(BalancedRandom::default()));
        reg.register_initializer(Arc::new(LayerStrips));
        reg
    }
}

impl ExperimentRegistry {
    pub fn register_rule(&mut self, rule: Arc<dyn BoundaryRule>) {
        self.rules.insert(rule.name(), rule);
    }

    pub fn register_initializer(&mut self, init: Arc<dyn PhaseInitializer>) {
        self.initializers.insert(init.name(), init);
    }

    pub fn rule(&self, name: &str) -> Result<Arc<dyn BoundaryRule>> {
        self.rules
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Config(format!("unknown boundary rule `{name}`")))
    }

    pub fn initializer(&self, name: &str) -> Result<Arc<dyn PhaseInitializer>> {
        self.initializers
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Config(format!("unknown initial phase rule `{name}`")))
    }

    pub fn compose(&self, rule: &str, initial: &str) -> Result<Experiment> {
        Ok(Experiment {
            rule: self.rule(rule)?,
            initializer: self.initializer(initial)?,
        })
    }

    /// Rule and initializer names of a preset.
    pub fn preset_parts(preset: &str) -> Result<(&'static str, &'static str)> {
        match preset {
            "example1" => Ok(("clamped-shear", "random")),
            "example2" => Ok(("periodic-shear", "strips")),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    pub fn preset(&self, preset: &str) -> Result<Experiment> {
        let (rule, initial) = Self::preset_parts(preset)?;
        self.compose(rule, initial)
    }
}

//! Run directory layout and plain-text formats.
//!
//! ```text
//! <dir>/manifest.toml          resolved config, seed, mesh summary, completion flag
//! <dir>/ledger.csv             one row per recorded step
//! <dir>/mesh.txt               reference nodes, triangles, periodic pairs
//! <dir>/snapshots/step_XXX.txt deformed positions and phase field of step XXX
//! <dir>/diagnostics.csv        stability / energy-balance report (optional)
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a snapshot back reproduces the state bit for bit. Every file is written to
//! a temporary sibling first and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::driver::{LedgerRow, State, StepDiagnostics, Trajectory};
use crate::error::{Error, Result};
use crate::mesh::{Mesh2D, NodeSets};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const LEDGER_FILE: &str = "ledger.csv";
pub const MESH_FILE: &str = "mesh.txt";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";

pub const LEDGER_HEADER: &str = "k,t,a,E_bulk,E_int1,E_int2,D_inc,Diss_cum,frac_z1,sweeps,status";

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

pub fn snapshot_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(SNAPSHOT_DIR).join(format!("step_{k:03}.txt"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunInfo {
    pub seed: u64,
    /// True when the run stopped before the last step.
    pub partial: bool,
    pub steps_recorded: usize,
    pub nodes: usize,
    pub triangles: usize,
    pub interior_edges: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub run: RunInfo,
    pub config: RunConfig,
}

impl Manifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest is always representable")
    }

    pub fn parse(path: &Path, text: &str) -> Result<Manifest> {
        let m: Manifest = toml::from_str(text).map_err(|e| parse_err(path, e.to_string()))?;
        m.config.validate()?;
        Ok(m)
    }
}

pub fn ledger_csv(seed: u64, rows: &[LedgerRow]) -> String {
    let mut out = format!("# seed = {seed}\n{LEDGER_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            r.t,
            r.a,
            r.bulk,
            r.int1,
            r.int2,
            r.d_inc,
            r.diss_cum,
            r.frac_z1,
            r.sweeps,
            r.status
        );
    }
    out
}

pub fn parse_ledger(path: &Path, text: &str) -> Result<(u64, Vec<LedgerRow>)> {
    let mut lines = text.lines().enumerate();
    let seed = lines
        .next()
        .and_then(|(_, l)| l.strip_prefix("# seed = "))
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| parse_err(path, "line 1: expected `# seed = N`"))?;
    match lines.next() {
        Some((_, h)) if h.trim() == LEDGER_HEADER => {}
        _ => {
            return Err(parse_err(
                path,
                format!("line 2: expected header `{LEDGER_HEADER}`"),
            ))
        }
    }
    let mut rows = Vec::new();
    for (no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| parse_err(path, format!("line {}: {what}", no + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(bad("expected 11 columns"));
        }
        let num = |i: usize| {
            f[i].parse::<f64>()
                .map_err(|_| bad(&format!("column {} is not a number", i + 1)))
        };
        let int = |i: usize| {
            f[i].parse::<usize>()
                .map_err(|_| bad(&format!("column {} is not an integer", i + 1)))
        };
        rows.push(LedgerRow {
            k: int(0)?,
            t: num(1)?,
            a: num(2)?,
            bulk: num(3)?,
            int1: num(4)?,
            int2: num(5)?,
            d_inc: num(6)?,
            diss_cum: num(7)?,
            frac_z1: num(8)?,
            sweeps: int(9)?,
            status: f[10].parse().map_err(|_| bad("unknown status"))?,
        });
    }
    Ok((seed, rows))
}

/// Reference nodes with their boundary role, triangles, and periodic pairs.
pub fn mesh_text(mesh: &Mesh2D, sets: &NodeSets) -> String {
    let mut out = format!("nx {}\nny {}\n", mesh.nx(), mesh.ny());
    let _ = writeln!(out, "nodes {}\nid X1 X2 kind", mesh.num_nodes());
    for (id, p) in mesh.nodes().iter().enumerate() {
        let kind = match sets.kinds[id] {
            crate::mesh::NodeKind::Free => "free",
            crate::mesh::NodeKind::Dirichlet => "dirichlet",
            crate::mesh::NodeKind::Periodic { .. } => "periodic",
        };
        let _ = writeln!(out, "{id} {} {} {kind}", p.x, p.y);
    }
    let _ = writeln!(out, "triangles {}\nid n1 n2 n3", mesh.num_triangles());
    out.push_str(&mesh.triangle_table());
    let _ = writeln!(out, "periodic {}\nmaster slave", sets.periodic.len());
    for (m, s) in &sets.periodic {
        let _ = writeln!(out, "{m} {s}");
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub k: usize,
    pub t: f64,
    pub a: f64,
    pub seed: u64,
    pub state: State,
}

pub fn snapshot_text(mesh: &Mesh2D, snap: &Snapshot) -> String {
    let mut out = format!(
        "k {}\nt {}\na {}\nseed {}\n",
        snap.k, snap.t, snap.a, snap.seed
    );
    let _ = writeln!(out, "nodes {}\nid X1 X2 x1 x2", mesh.num_nodes());
    let y = &snap.state.positions;
    for (id, p) in mesh.nodes().iter().enumerate() {
        let _ = writeln!(out, "{id} {} {} {} {}", p.x, p.y, y[2 * id], y[2 * id + 1]);
    }
    let _ = writeln!(out, "triangles {}\nid z", snap.state.z.len());
    for (id, z) in snap.state.z.iter().enumerate() {
        let _ = writeln!(out, "{id} {z}");
    }
    out
}

pub fn parse_snapshot(path: &Path, text: &str) -> Result<Snapshot> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| parse_err(path, format!("unexpected end of file, expected {what}")))
    };
    fn field<T: std::str::FromStr>(path: &Path, (no, line): (usize, &str), key: &str) -> Result<T> {
        line.strip_prefix(key)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| parse_err(path, format!("line {}: expected `{key} <value>`", no + 1)))
    }
    let k = field(path, next("k")?, "k ")?;
    let t = field(path, next("t")?, "t ")?;
    let a = field(path, next("a")?, "a ")?;
    let seed = field(path, next("seed")?, "seed ")?;
    let n_nodes: usize = field(path, next("nodes")?, "nodes ")?;
    next("node header")?;
    let mut positions = vec![0.0; 2 * n_nodes];
    for id in 0..n_nodes {
        let (no, line) = next("node row")?;
        let cols: Vec<&str> = line.split_whitespace().collect();
        let parsed = (cols.len() == 5)
            .then(|| {
                Some((
                    cols[0].parse::<usize>().ok()?,
                    cols[3].parse::<f64>().ok()?,
                    cols[4].parse::<f64>().ok()?,
                ))
            })
            .flatten();
        match parsed {
            Some((i, x, y)) if i == id => {
                positions[2 * id] = x;
                positions[2 * id + 1] = y;
            }
            _ => {
                return Err(parse_err(
                    path,
                    format!("line {}: malformed node row", no + 1),
                ))
            }
        }
    }
    let n_tri: usize = field(path, next("triangles")?, "triangles ")?;
    next("triangle header")?;
    let mut z = Vec::with_capacity(n_tri);
    for id in 0..n_tri {
        let (no, line) = next("triangle row")?;
        let mut cols = line.split_whitespace();
        match (
            cols.next().and_then(|c| c.parse::<usize>().ok()),
            cols.next(),
        ) {
            (Some(i), Some(v @ ("0" | "1"))) if i == id => z.push(if v == "1" { 1 } else { 0 }),
            _ => {
                return Err(parse_err(
                    path,
                    format!("line {}: malformed triangle row", no + 1),
                ))
            }
        }
    }
    Ok(Snapshot {
        k,
        t,
        a,
        seed,
        state: State { positions, z },
    })
}

pub fn diagnostics_csv(rows: &[StepDiagnostics]) -> String {
    let mut out = String::from(
        "k,competitors,violations,min_margin,worst_gap,upper,bound,upper_ok,work,residual\n",
    );
    for d in rows {
        let worst = d.stability.best_violation().map_or(0.0, |v| v.gap);
        let _ = write!(
            out,
            "{},{},{},{},{}",
            d.k,
            d.stability.checked,
            d.stability.violations.len(),
            d.stability.min_margin,
            worst
        );
        match &d.balance {
            Some(b) => {
                let _ = writeln!(
                    out,
                    ",{},{},{},{},{}",
                    b.upper, b.bound, b.upper_ok, b.work, b.residual
                );
            }
            None => out.push_str(",,,,,\n"),
        }
    }
    out
}

/// Writes the files of one run directory.
#[derive(Debug, Clone)]
pub struct RunWriter {
    dir: PathBuf,
    snapshots: bool,
}

impl RunWriter {
    pub fn create(dir: &Path, snapshots: bool) -> Result<RunWriter> {
        let sub = dir.join(SNAPSHOT_DIR);
        fs::create_dir_all(if snapshots { &sub } else { dir }).map_err(|e| Error::io(dir, e))?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            snapshots,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_mesh(&self, mesh: &Mesh2D, sets: &NodeSets) -> Result<()> {
        write_atomic(&self.dir.join(MESH_FILE), mesh_text(mesh, sets).as_bytes())
    }

    pub fn write_snapshot(&self, mesh: &Mesh2D, snap: &Snapshot) -> Result<()> {
        if !self.snapshots {
            return Ok(());
        }
        write_atomic(
            &snapshot_path(&self.dir, snap.k),
            snapshot_text(mesh, snap).as_bytes(),
        )
    }

    pub fn write_ledger(&self, seed: u64, rows: &[LedgerRow]) -> Result<()> {
        write_atomic(
            &self.dir.join(LEDGER_FILE),
            ledger_csv(seed, rows).as_bytes(),
        )
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> Result<()> {
        write_atomic(&self.dir.join(MANIFEST_FILE), manifest.to_toml().as_bytes())
    }

    pub fn write_diagnostics(&self, rows: &[StepDiagnostics]) -> Result<()> {
        write_atomic(
            &self.dir.join(DIAGNOSTICS_FILE),
            diagnostics_csv(rows).as_bytes(),
        )
    }
}

/// A run directory read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub manifest: Manifest,
    pub trajectory: Trajectory,
}

/// Reads manifest, ledger and every snapshot listed in the ledger.
pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let path = dir.join(MANIFEST_FILE);
    let manifest = Manifest::parse(&path, &read(&path)?)?;
    let path = dir.join(LEDGER_FILE);
    let (seed, ledger) = parse_ledger(&path, &read(&path)?)?;
    if seed != manifest.run.seed {
        return Err(parse_err(
            &path,
            format!(
                "seed {seed} differs from the manifest's {}",
                manifest.run.seed
            ),
        ));
    }
    let mut states = Vec::with_capacity(ledger.len());
    for (i, row) in ledger.iter().enumerate() {
        let path = snapshot_path(dir, row.k);
        let snap = parse_snapshot(&path, &read(&path)?)?;
        if snap.k != i || row.k != i {
            return Err(parse_err(
                &path,
                format!("expected step {i}, found {}", snap.k),
            ));
        }
        states.push(snap.state);
    }
    Ok(LoadedRun {
        manifest,
        trajectory: Trajectory {
            seed,
            states,
            ledger,
        },
    })
}

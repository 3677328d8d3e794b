//! Stored-energy densities of the two martensite variants.
//!
//! The base density is the compressible Mooney-Rivlin form
//! `W(F) = alpha |F|^2 + delta1 det(F)^2 - delta2 ln det(F)`, and variant `v`
//! uses `W(F F_v^-1)` with the unimodular shears
//! `F_1 = [[1, eps], [0, 1]]`, `F_2 = [[1, -eps], [0, 1]]`.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Inadmissible, Result};

/// One of the two martensite variants. `Variant::One` corresponds to `z = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    One,
    Two,
}

impl Variant {
    /// Variant selected by a binary phase value.
    pub fn from_phase(z: u8) -> Self {
        if z == 1 {
            Variant::One
        } else {
            Variant::Two
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialParams {
    pub alpha: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub epsilon: f64,
    pub beta: f64,
    pub alpha_i: f64,
    pub alpha_s: f64,
    f1: Matrix2<f64>,
    f2: Matrix2<f64>,
    f1_inv: Matrix2<f64>,
    f2_inv: Matrix2<f64>,
}

/// Plain coefficient set, as read from configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficients {
    pub alpha: f64,
    pub delta1: f64,
    pub epsilon: f64,
    pub beta: f64,
    pub alpha_i: f64,
    pub alpha_s: f64,
}

impl Default for Coefficients {
    fn default() -> Self {
        Coefficients {
            alpha: 1.0,
            delta1: 1.0,
            epsilon: 0.3,
            beta: 0.1,
            alpha_i: 0.0,
            alpha_s: 0.0,
        }
    }
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams::new(Coefficients::default()).expect("default coefficients are valid")
    }
}

impl MaterialParams {
    /// Validates coefficients and derives `delta2 = 2 alpha + 2 delta1`, which
    /// places the minimum of the base density on `SO(2)`.
    pub fn new(c: Coefficients) -> Result<Self> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter(what.to_string()))
            }
        };
        check(c.alpha.is_finite() && c.alpha > 0.0, "alpha must be > 0")?;
        check(c.delta1.is_finite() && c.delta1 > 0.0, "delta1 must be > 0")?;
        check(
            c.epsilon.is_finite() && c.epsilon > 0.0,
            "epsilon must be > 0",
        )?;
        check(c.beta.is_finite() && c.beta >= 0.0, "beta must be >= 0")?;
        check(
            c.alpha_i.is_finite() && c.alpha_i >= 0.0,
            "alpha_i must be >= 0",
        )?;
        check(
            c.alpha_s.is_finite() && c.alpha_s >= 0.0,
            "alpha_s must be >= 0",
        )?;
        let f1 = Matrix2::new(1.0, c.epsilon, 0.0, 1.0);
        let f2 = Matrix2::new(1.0, -c.epsilon, 0.0, 1.0);
        Ok(MaterialParams {
            alpha: c.alpha,
            delta1: c.delta1,
            delta2: 2.0 * c.alpha + 2.0 * c.delta1,
            epsilon: c.epsilon,
            beta: c.beta,
            alpha_i: c.alpha_i,
            alpha_s: c.alpha_s,
            f1,
            f2,
            f1_inv: Matrix2::new(1.0, -c.epsilon, 0.0, 1.0),
            f2_inv: Matrix2::new(1.0, c.epsilon, 0.0, 1.0),
        })
    }

    /// Same as [`MaterialParams::new`] but also checks an explicitly supplied
    /// `delta2` against the well relation.
    pub fn with_delta2(c: Coefficients, delta2: f64) -> Result<Self> {
        let p = Self::new(c)?;
        if (delta2 - p.delta2).abs() > 1e-12 * p.delta2 {
            return Err(Error::InvalidParameter(format!(
                "delta2 = {delta2} violates delta2 = 2 alpha + 2 delta1 = {}",
                p.delta2
            )));
        }
        Ok(p)
    }

    pub fn coefficients(&self) -> Coefficients {
        Coefficients {
            alpha: self.alpha,
            delta1: self.delta1,
            epsilon: self.epsilon,
            beta: self.beta,
            alpha_i: self.alpha_i,
            alpha_s: self.alpha_s,
        }
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(Coefficients {
            beta,
            ..self.coefficients()
        })
    }

    pub fn stretch(&self, v: Variant) -> &Matrix2<f64> {
        match v {
            Variant::One => &self.f1,
            Variant::Two => &self.f2,
        }
    }

    pub fn stretch_inv(&self, v: Variant) -> &Matrix2<f64> {
        match v {
            Variant::One => &self.f1_inv,
            Variant::Two => &self.f2_inv,
        }
    }

    /// Minimum value of the base density, attained on `SO(2)`.
    pub fn well_energy(&self) -> f64 {
        2.0 * self.alpha + self.delta1
    }
}

/// Cofactor of a 2x2 matrix: `[[d, -c], [-b, a]]` for `[[a, b], [c, d]]`.
pub fn cof2(f: &Matrix2<f64>) -> Matrix2<f64> {
    Matrix2::new(f[(1, 1)], -f[(1, 0)], -f[(0, 1)], f[(0, 0)])
}

/// Compressible Mooney-Rivlin density.
pub fn mooney_rivlin(f: &Matrix2<f64>, p: &MaterialParams) -> Result<f64, Inadmissible> {
    let det = f.determinant();
    if !(det > 0.0) {
        return Err(Inadmissible { det });
    }
    Ok(p.alpha * f.norm_squared() + p.delta1 * det * det - p.delta2 * det.ln())
}

/// The same density written in `C = F^T F`; used to cross-check the `F` route.
pub fn mooney_rivlin_c(c: &Matrix2<f64>, p: &MaterialParams) -> Result<f64, Inadmissible> {
    let det = c.determinant();
    if !(det > 0.0) {
        return Err(Inadmissible { det });
    }
    Ok(p.alpha * c.trace() + p.delta1 * det - 0.5 * p.delta2 * det.ln())
}

pub fn variant_density(
    f: &Matrix2<f64>,
    v: Variant,
    p: &MaterialParams,
) -> Result<f64, Inadmissible> {
    mooney_rivlin(&(f * p.stretch_inv(v)), p)
}

/// Variant density through `F_v^-T C F_v^-1`.
pub fn variant_density_c(
    f: &Matrix2<f64>,
    v: Variant,
    p: &MaterialParams,
) -> Result<f64, Inadmissible> {
    let inv = p.stretch_inv(v);
    mooney_rivlin_c(&(inv.transpose() * f.transpose() * f * inv), p)
}

/// First Piola-Kirchhoff stress `dW_v/dF`.
pub fn variant_density_gradient(
    f: &Matrix2<f64>,
    v: Variant,
    p: &MaterialParams,
) -> Result<Matrix2<f64>, Inadmissible> {
    let inv = p.stretch_inv(v);
    let g = f * inv;
    let det = g.determinant();
    if !(det > 0.0) {
        return Err(Inadmissible { det });
    }
    // G^-T = cof(G) / det G
    let dg = 2.0 * p.alpha * g + (2.0 * p.delta1 * det * det - p.delta2) / det * cof2(&g);
    Ok(dg * inv.transpose())
}

/// Density and stress in one pass.
pub fn variant_energy_and_stress(
    f: &Matrix2<f64>,
    v: Variant,
    p: &MaterialParams,
) -> Result<(f64, Matrix2<f64>), Inadmissible> {
    let inv = p.stretch_inv(v);
    let g = f * inv;
    let det = g.determinant();
    if !(det > 0.0) {
        return Err(Inadmissible { det });
    }
    let w = p.alpha * g.norm_squared() + p.delta1 * det * det - p.delta2 * det.ln();
    let dg = 2.0 * p.alpha * g + (2.0 * p.delta1 * det * det - p.delta2) / det * cof2(&g);
    Ok((w, dg * inv.transpose()))
}

/// `|cof(F (I - n n^T)) n|` for the edge with unit tangent `t`; in two
/// dimensions this is the stretch `|F t|` of the edge.
pub fn edge_stretch(f: &Matrix2<f64>, t: &Vector2<f64>) -> f64 {
    (f * t).norm()
}

/// Surface route `|cof(F (I - n n^T)) n|` with `n` the unit normal.
pub fn surface_cofactor_stretch(f: &Matrix2<f64>, n: &Vector2<f64>) -> f64 {
    let surface = f * (Matrix2::identity() - n * n.transpose());
    (cof2(&surface) * n).norm()
}

/// Sign of the linearized dissipation: `s(0) = 1`, `s(1) = -1`.
pub fn dissipation_sign(z_old: u8) -> f64 {
    if z_old == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn dissipation_increment(z_new: u8, z_old: u8, beta: f64, area: f64) -> f64 {
    beta * (z_new as f64 - z_old as f64).abs() * area
}

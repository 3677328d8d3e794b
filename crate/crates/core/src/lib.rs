//! Quasistatic simulation of two-variant martensite microstructure in a
//! two-dimensional specimen.
//!
//! The crate solves a time-discrete sequence of incremental problems: a
//! polyconvex bulk energy per variant, an interfacial energy on mesh edges
//! between different variants, and a rate-independent dissipation on phase
//! changes. Deformations are P1 fields on a structured triangulation, the
//! phase field is piecewise constant and binary.

pub mod config;
pub mod driver;
pub mod elastic;
pub mod error;
pub mod io;
pub mod material;
pub mod mesh;
pub mod phase;

pub use error::{Error, Inadmissible, Result};

//! Reconstruction of nuclear-spin cluster geometry from pairwise
//! dipolar coupling frequencies measured through a single electron-spin
//! sensor.
//!
//! The crate covers the full pipeline: the point-dipole coupling model
//! and hyperfine conversions ([`model`]), lattice-constrained sequential
//! placement ([`lattice`]), continuous least-squares refinement and
//! sensor positioning ([`refine`]), exact and perturbative treatment of
//! the electron-mediated frequency shifts ([`hamiltonian`]), time-domain
//! signal synthesis and spectral analysis ([`signal`]), and the bundled
//! measurement dataset with its file formats ([`io`]).

pub mod consts;
pub mod error;
pub mod hamiltonian;
pub mod io;
pub mod lattice;
pub mod model;
pub mod optim;
pub mod refine;
pub mod signal;

pub use consts::PhysicalConstants;
pub use error::{Error, Result};

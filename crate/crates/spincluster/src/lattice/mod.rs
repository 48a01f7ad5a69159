//! Lattice-constrained sequential structure construction.
//!
//! Spins are placed one at a time on a diamond lattice (or an adaptively
//! generated cubic lattice), anchored by the strongest measured coupling
//! into the already-placed set, while every configuration that satisfies
//! all pairwise tolerance constraints is tracked and ranked by its
//! running sum of squares.

mod cubic;
mod diamond;
mod lookup;
mod solver;

pub use cubic::{cubic_lattice_for_coupling, CubicLatticeSpec};
pub use diamond::{
    cartesian_to_int, diamond_sites_in_box, int_to_cartesian, on_diamond_lattice, DiamondLattice,
    Sublattice, CUBIC_TO_Z_FRAME, DELTA_INT,
};
pub use lookup::CouplingLookup;
pub use solver::{
    derive_spin_order, load_checkpoint, reduce_symmetry_diamond, CandidateConfiguration,
    LatticeMode, SolveOutcome, Solver, SolverParams, StepLog,
};

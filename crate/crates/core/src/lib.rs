//! Càdlàg path metrics, exact orthogonal martingale decompositions on finite
//! filtered probability spaces, and experiments on their stability under
//! discrete approximation.

pub mod brackets;
pub mod cadlag;
pub mod gkw;
pub mod harness;
pub mod lattice;
pub mod rng;
pub mod scalar;
pub mod schemes;
pub mod young;

pub use num_rational::BigRational;

pub use cadlag::{CadlagPath, JumpWindow, PathError};
pub use gkw::{angle_brackets, decompose, validate_m2prime, Decomposition};
pub use lattice::{AdaptedProcess, LatticeBasis, LatticeError, TransitionProcess};
pub use scalar::{rational, Real, Scalar};

pub type Path = CadlagPath<f64>;
pub type Window = JumpWindow<f64>;
pub type Lattice = LatticeBasis<f64>;
pub type ExactLattice = LatticeBasis<BigRational>;
pub use young::{Growth, Moderate, YoungFunction};

//! Exact time-domain simulation and tracking control for the driven 1D
//! Fermi-Hubbard ring.
//!
//! The crate enumerates fixed particle-number occupation bases, assembles
//! sparse operators on the combined sector space, computes interacting
//! ground states, propagates both the driven Schrödinger equation and the
//! field-free nonlinear tracking equation of motion, and post-processes
//! trajectories into harmonic spectra and band-limited control fields.
//!
//! With the default `parallel` feature the sparse kernels fan out over
//! rayon; without it everything runs on one thread. Either way all
//! reductions use a fixed summation order, so outputs are bit-identical
//! across thread counts and feature choices.

pub mod dense;
pub mod drive;
pub mod dynamics;
pub mod error;
pub mod fock;
pub mod groundstate;
pub mod linalg;
pub mod operators;
pub mod sparse;
pub mod spectral;

pub use error::{ConstraintKind, Error, Result};
pub use fock::{SectorBasis, SystemParams};
pub use operators::{BondExpectation, LatticeOperators};
pub use sparse::SparseOperator;

/// Number of worker threads the parallel kernels will use.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Pin the rayon pool size. A no-op without the `parallel` feature. Returns
/// the effective thread count.
pub fn configure_threads(threads: usize) -> usize {
    #[cfg(feature = "parallel")]
    {
        if threads > 0 {
            // ignore the error if a global pool already exists
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        1
    }
}

//! Design, analysis and optimization of "sandwich" synchronization
//! sequences for photon-counting (discrete-time Poisson) optical links.
//!
//! A sandwich sequence is a random flank, an alternating `1,0,...,1,0`
//! middle occupying a fraction `alpha` of the symbols, and a second random
//! flank of the same length. The receiver slices time into `n` chips per
//! symbol and picks the chip offset that maximises the bipolar correlation
//! with the sequence.
//!
//! The crate is organised bottom-up:
//!
//! * [`sequence`] builds sequences and their bipolar form.
//! * [`channel`] simulates per-chip photoelectron counts.
//! * [`sync`] computes correlations and runs the peak search.
//! * [`moments`] holds the closed-form correlation moments.
//! * [`bounds`] turns the moments into Gaussian misestimate bounds and the
//!   mean-squared-offset bound.
//! * [`optimizer`] picks `alpha` (threshold scan + golden-section search).
//! * [`montecarlo`] is the empirical verification harness.
//! * [`campaign`] runs the acceptance checks on top of all of the above.
//!
//! Data-parallel loops go through [`exec`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.

pub mod bounds;
pub mod campaign;
pub mod channel;
pub mod csvfmt;
pub mod error;
pub mod exec;
pub mod moments;
pub mod montecarlo;
pub mod normal;
pub mod optimizer;
pub mod quadrature;
pub mod report;
pub mod sequence;
pub mod sync;

pub use error::{Error, Result};

/// Name of the generator used for every random draw in the crate.
pub const RNG_NAME: &str = "ChaCha8Rng";

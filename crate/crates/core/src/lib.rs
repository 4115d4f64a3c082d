//! Simulation and analysis toolkit for spin-to-charge-conversion (SCC)
//! readout of single NV centers.
//!
//! The model chain, bottom to top:
//!
//! * [`charge`]: two-state ionization dynamics under illumination, photon
//!   counting by trajectory sampling or the number-resolved master equation;
//! * [`discrimination`]: threshold charge classification and the readout
//!   noise factor sigma_R it implies for spin readout;
//! * [`scc`]: the full protocol shot (init, optional charge verification,
//!   echo, spin-selective ionization, final readout), post-selection, and
//!   the conventional-readout comparison;
//! * [`magnetometry`]: echo fringes, coherence envelope with revivals, AC
//!   sensitivity, and optimal-interrogation searches;
//! * [`estimation`]: hidden-Markov rate fits of blinking traces and
//!   stretched-exponential coherence fits.
//!
//! Monte Carlo ensembles derive one RNG stream per shot from a master seed
//! ([`seed`]) and aggregate with commutative merges ([`parallel`]), so every
//! result is reproducible bit for bit at any thread count. Disable the
//! default `parallel` feature to drop the rayon dependency; the API is
//! unchanged.

pub mod charge;
pub mod discrimination;
pub mod error;
pub mod estimation;
pub mod magnetometry;
pub mod parallel;
pub mod scc;
pub mod seed;

pub use error::{Error, Result};

//! Polar-lattice wiretap codes for the Gaussian wiretap channel.
//!
//! The library is organized around one-dimensional binary lattice partition
//! chains. `lattice` holds the Gaussian-on-lattice functionals (theta series,
//! flatness factor, mod-Λ capacities) and discrete Gaussian sampling.
//! `channel` quantizes the per-level partition channels into finite
//! binary-input tables and provides the Arıkan transforms plus
//! degrading/upgrading merges. `construction` turns per-index reliability
//! statistics for the legitimate receiver and the eavesdropper into the
//! secrecy and shaping index partitions and assembles the full code object.
//! `codec` implements multilevel encoding (uniform and Gaussian-shaped),
//! successive-cancellation multistage decoding, and block-Markov chaining.
//! `sim` runs Monte-Carlo trials and computes the construction-side leakage
//! bound. `verify` exposes the invariant checklist used by the CLI.

pub mod channel;
pub mod codec;
pub mod construction;
pub mod error;
pub mod lattice;
pub mod numeric;
pub mod sim;
pub mod verify;

pub use error::Error;
pub use lattice::{GaussianParams, PartitionChain};

pub type Result<T> = std::result::Result<T, Error>;

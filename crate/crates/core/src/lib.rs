//! Delay-Doppler estimation for passive radar with a reference channel.
//!
//! Two estimators run on the same batch-wise, interference-cancelled data:
//!
//! * [`baseline2d`]: the normalized 2-D ambiguity summed incoherently over
//!   batches, maximized by grid search and a Nelder-Mead simplex.
//! * [`separable`]: a Doppler-free 1-D delay criterion for slow targets
//!   inside the clutter span, then Doppler from a line fit to the batch
//!   amplitude phases.
//!
//! [`scene`] simulates the channels, [`batching`] and [`projection`] build
//! the per-batch interference subspace, [`fusion`] combines node statistics
//! at a central node, and [`harness`] runs paired Monte Carlo sweeps.

pub mod baseline2d;
pub mod batching;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod par;
pub mod projection;
pub mod scene;
pub mod separable;
pub mod signal_io;
pub mod simplex;
pub mod wire;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use par::Execution;

//! Deterministic simulator for the off-wafer pulse path of an accelerated
//! neuromorphic system, together with the analysis used to characterize it.
//!
//! The modeled path runs spikes through a playback module on an FPGA, over
//! serial FPGA-to-chip pulse channels, through an on-chip loopback (or an
//! on-chip background generator in the upstream direction), and back into a
//! trace module that records 15-bit timestamps. Everything on the technical
//! side advances in integer nanoseconds; the biological side is related to it
//! by a fixed 10^4 acceleration factor.
//!
//! Module map:
//! - [`timebase`]: time domains, clock grids, timestamp wrap arithmetic
//! - [`events`]: pulse/packet/playback-frame wire formats and their budgets
//! - [`rng`]: the one seeded generator used by every stochastic source
//! - [`spikegen`]: spike train construction (regular, Poisson, generator
//!   emulation, network surrogate, file input)
//! - [`simcore`]: event engine, experiment plans, ground-truth log
//! - [`playback`]: spike-train packing into release groups and their replay
//! - [`link`]: the bounded serial channels in both directions
//! - [`hicann`]: chip-side behavior (loopback, background generator)
//! - [`trace`]: FPGA-side recording with overflow bookkeeping
//! - [`analysis`]: matching, loss/delay/jitter, ISI statistics
//! - [`benchmark`]: neurons-per-chip sweeps on surrogate network activity

pub mod analysis;
pub mod benchmark;
pub mod error;
pub mod events;
pub mod hicann;
pub mod link;
pub mod playback;
pub mod rng;
pub mod simcore;
pub mod spikegen;
pub mod timebase;
pub mod trace;

pub use error::Error;

//! Analytics and simulation for multi-source wireless status updating under
//! source-aware truncated ARQ.
//!
//! `N` sensors share one transmitter over a slotted channel. Each source
//! generates updates with its own Bernoulli probability, simultaneous
//! generations are resolved by a uniform pick, the pick preempts whatever is
//! in service, and each source carries its own retransmission cap: an update
//! failing at its cap is dropped. The crate computes the exact age-of-
//! information and peak-age distributions and means for every source, the
//! duty cycle, average power, and energy efficiency; simulates the protocol
//! slot by slot; cross-validates the two; and runs grid optimizations of the
//! caps, generation probabilities, and transmit powers.
//!
//! Modules:
//! - [`model`]: scenarios, validation, derived parameters.
//! - [`mdap`]: the per-source age process, its kernel and stationary law.
//! - [`metrics`]: closed-form and series-based performance metrics.
//! - [`sim`]: the slot-level Monte Carlo engine and theory/simulation gate.
//! - [`optimize`]: grid sweeps and objective optimization with baselines.
//! - [`cli`]: the command-line surface.

pub mod cli;
pub mod mdap;
pub mod metrics;
pub mod model;
pub mod optimize;
mod series;
pub mod sim;

pub use model::{derive, DerivedParams, LinkParams, Scenario};

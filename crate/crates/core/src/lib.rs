//! Value-weighted stochastic image transmission over a lossy datagram channel.
//!
//! An image is cut into fixed-size blocks, each block gets a value, and the
//! sender spends a fixed budget of N transmissions drawing blocks i.i.d. in
//! proportion to value. Nothing is retransmitted; the receiver keeps whatever
//! arrives whole and fills the rest.
//!
//! * [`model`]: probabilities, budgets, arrival predictions, feasibility.
//! * [`image`]: PGM/PPM codec, block tiling and reassembly, filling metrics.
//! * [`wire`]: bit-exact packet formats.
//! * [`channel`]: UDP and simulated transports, loss models, clocks.
//! * [`protocol`]: sender and receiver state machines.
//! * [`experiments`]: config files, CSV I/O, parameter sweeps, CLI commands.

pub mod channel;
pub mod experiments;
pub mod image;
pub mod model;
pub mod protocol;
pub mod wire;

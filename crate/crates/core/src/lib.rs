//! Broadcast gossip averaging on directed graphs.

pub mod analysis;
pub mod graph;
pub mod protocol;
pub mod sim;
pub mod spectra;

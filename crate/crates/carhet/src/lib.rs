//! Heterogeneous multi-RAT V2V toolkit: radio and capacity models, PDR
//! calibration, a decentralized RAT-selection protocol, a packet-level
//! highway simulator, and the protocol's CPU/overhead cost model.

pub mod capacity;
pub mod cli;
pub mod cost;
pub mod link;
pub mod protocol;
pub mod radio;
pub mod sim;

//! Plug-and-play transducer network: self-describing nodes, a registering
//! gateway with a REST API, and a virtual network to benchmark both.

pub mod bench_stats;
pub mod fixtures;
pub mod gateway;
pub mod http;
pub mod ite_model;
pub mod netsim;
pub mod node_fsm;
pub mod transducer_sim;

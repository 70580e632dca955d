//! Virtual network: access points, links and a clock, over which nodes and
//! the gateway talk.
//!
//! [`Simulation`] runs everything in virtual time from one seed.
//! [`realtime`] drives a node over real loopback TCP with the same delay
//! models.

mod clock;
mod dist;
mod engine;
mod fabric;
pub mod realtime;
mod scenario;

pub use clock::{Clock, ClockMode, RealClock, VirtualClock};
pub use dist::{millis, DelayDist, DistError};
pub use engine::{
    default_identity, id_exchange_bytes, run_scenario, SimError, SimReport, Simulation, TraceEvent,
    DEFAULT_HORIZON,
};
pub use fabric::{
    ConnectOutcome, ExchangeDraw, Fabric, SendOutcome, Traffic, FRAMES_BEFORE_LOSS, FRAMES_PER_EXCHANGE,
    FRAME_OVERHEAD_BYTES,
};
pub use scenario::{overload_multiplier, ApModel, ScenarioConfig, ScenarioError};

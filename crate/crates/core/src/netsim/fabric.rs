//! The link model: association delays, per-packet latency under load, loss,
//! and traffic accounting.
//!
//! Delay and loss come from separate generators and every operation always
//! consumes the same draws, so two runs with the same seed see identical
//! latencies whatever their load or loss settings. That pairing is what the
//! monotone-degradation tests rely on.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dist::{millis, DelayDist};
use super::scenario::ScenarioConfig;

/// Ethernet + IP + TCP headers per frame.
pub const FRAME_OVERHEAD_BYTES: u64 = 54;
/// Handshake, request, ack, response, ack and a four-way close.
pub const FRAMES_PER_EXCHANGE: u64 = 10;
/// Frames on the wire before a lost exchange is abandoned.
pub const FRAMES_BEFORE_LOSS: u64 = 4;

const LOSS_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

/// Per-run message counters. `sent == delivered + dropped` always holds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Traffic {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectOutcome {
    Connected(Duration),
    /// The handshake was lost; the node sees its connect timeout.
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOutcome {
    Delivered(Duration),
    Dropped,
}

/// Timings drawn for one request/response exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExchangeDraw {
    pub request_leg: Duration,
    pub processing: Duration,
    pub response_leg: Duration,
    pub lost: bool,
}

impl ExchangeDraw {
    pub fn round_trip(&self) -> Duration {
        self.request_leg + self.processing + self.response_leg
    }
}

#[derive(Debug, Clone)]
pub struct Fabric {
    scenario: ScenarioConfig,
    delay_rng: ChaCha8Rng,
    loss_rng: ChaCha8Rng,
    traffic: Traffic,
}

impl Fabric {
    pub fn new(scenario: ScenarioConfig, seed: u64) -> Self {
        Self {
            scenario,
            delay_rng: ChaCha8Rng::seed_from_u64(seed),
            loss_rng: ChaCha8Rng::seed_from_u64(seed ^ LOSS_STREAM),
            traffic: Traffic::default(),
        }
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn traffic(&self) -> Traffic {
        self.traffic
    }

    fn lost(&mut self) -> bool {
        let u: f64 = self.loss_rng.random();
        u < self.scenario.loss_probability
    }

    /// Joins the configuration or operational AP.
    pub fn connect(&mut self, configuration: bool) -> ConnectOutcome {
        let ap = self.scenario.connect_ap(configuration).clone();
        let elapsed = ap.auth_assoc_delay.sample_ms(&mut self.delay_rng)
            + ap.dhcp_delay.sample_ms(&mut self.delay_rng);
        if self.lost() {
            ConnectOutcome::Lost
        } else {
            ConnectOutcome::Connected(millis(elapsed))
        }
    }

    /// One packet's latency on the operational AP, overload included.
    pub fn latency(&mut self) -> Duration {
        let ap = &self.scenario.ap;
        let base = ap.per_packet_latency.sample_ms(&mut self.delay_rng);
        millis(base * ap.overload_multiplier())
    }

    /// A single message of `bytes` payload.
    pub fn send(&mut self, bytes: usize) -> SendOutcome {
        let latency = self.latency();
        let lost = self.lost();
        self.traffic.sent += 1;
        self.traffic.bytes += bytes as u64 + FRAME_OVERHEAD_BYTES;
        if lost {
            self.traffic.dropped += 1;
            SendOutcome::Dropped
        } else {
            self.traffic.delivered += 1;
            SendOutcome::Delivered(latency)
        }
    }

    /// Draws both legs, the far end's processing time and the loss outcome.
    /// Nothing is accounted until [`Fabric::account_exchange`].
    pub fn exchange(&mut self, processing: &DelayDist) -> ExchangeDraw {
        let request_leg = self.latency();
        let processing = processing.sample(&mut self.delay_rng);
        let response_leg = self.latency();
        ExchangeDraw {
            request_leg,
            processing,
            response_leg,
            lost: self.lost(),
        }
    }

    /// Counts an exchange: `response` is the reply size, `None` when the
    /// exchange was lost.
    pub fn account_exchange(&mut self, request: usize, response: Option<usize>) {
        self.traffic.sent += 1;
        match response {
            Some(response) => {
                self.traffic.delivered += 1;
                self.traffic.bytes +=
                    (request + response) as u64 + FRAMES_PER_EXCHANGE * FRAME_OVERHEAD_BYTES;
            }
            None => {
                self.traffic.dropped += 1;
                self.traffic.bytes += request as u64 + FRAMES_BEFORE_LOSS * FRAME_OVERHEAD_BYTES;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::scenario::ApModel;

    fn constant_latency(ms: f64, load: f64) -> ScenarioConfig {
        let mut s = ScenarioConfig::zero_delay();
        s.ap.per_packet_latency = DelayDist::constant(ms);
        s.ap.load = load;
        s
    }

    #[test]
    fn zero_delay_connect_is_instant() {
        let mut f = Fabric::new(ScenarioConfig::zero_delay(), 1);
        assert_eq!(f.connect(true), ConnectOutcome::Connected(Duration::ZERO));
    }

    #[test]
    fn constant_latency_without_load() {
        let mut f = Fabric::new(constant_latency(1.0, 0.0), 1);
        assert_eq!(f.send(10), SendOutcome::Delivered(Duration::from_millis(1)));
        assert_eq!(f.traffic().bytes, 10 + FRAME_OVERHEAD_BYTES);
    }

    #[test]
    fn total_loss_drops_everything() {
        let s = ScenarioConfig::builtin("A").unwrap().with_loss(1.0);
        let mut f = Fabric::new(s, 3);
        for _ in 0..50 {
            assert_eq!(f.connect(false), ConnectOutcome::Lost);
            assert_eq!(f.send(1), SendOutcome::Dropped);
        }
        let t = f.traffic();
        assert_eq!((t.sent, t.delivered, t.dropped), (50, 0, 50));
    }

    #[test]
    fn association_mean_matches_sampling_oracle() {
        let mut s = ScenarioConfig::zero_delay();
        s.ap.auth_assoc_delay = DelayDist::Normal {
            mean_ms: 8000.0,
            sd_ms: 1500.0,
        };
        let mut f = Fabric::new(s, 1);
        let draws: Vec<f64> = (0..20)
            .map(|_| match f.connect(false) {
                ConnectOutcome::Connected(d) => d.as_secs_f64() * 1000.0,
                ConnectOutcome::Lost => unreachable!(),
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / 20.0;
        assert!((mean - 8000.0).abs() < 2.0 * 1500.0 / 20f64.sqrt(), "{mean}");
    }

    #[test]
    fn load_never_shortens_paired_draws() {
        let base = ScenarioConfig::builtin("A").unwrap();
        let mut calm = Fabric::new(base.clone(), 9);
        let mut busy = Fabric::new(base.with_load(1.2), 9);
        for _ in 0..1000 {
            let (a, b) = (calm.latency(), busy.latency());
            assert!(b > a, "{a:?} {b:?}");
        }
    }

    #[test]
    fn paired_loss_draws_nest() {
        let base = ScenarioConfig::builtin("A").unwrap();
        let mut low = Fabric::new(base.clone().with_loss(0.1), 5);
        let mut high = Fabric::new(base.with_loss(0.3), 5);
        for _ in 0..1000 {
            let (a, b) = (low.exchange(&DelayDist::ZERO), high.exchange(&DelayDist::ZERO));
            assert_eq!(a.round_trip(), b.round_trip());
            assert!(!a.lost || b.lost);
        }
    }

    #[test]
    fn configuration_ap_is_used_for_phase_a() {
        let mut s = ScenarioConfig::zero_delay();
        let mut slow = ApModel::zero_delay();
        slow.auth_assoc_delay = DelayDist::constant(100.0);
        s.config_ap = Some(slow);
        let mut f = Fabric::new(s, 0);
        assert_eq!(f.connect(true), ConnectOutcome::Connected(Duration::from_millis(100)));
        assert_eq!(f.connect(false), ConnectOutcome::Connected(Duration::ZERO));
    }

    #[test]
    fn exchange_accounting_conserves_messages() {
        let mut f = Fabric::new(ScenarioConfig::zero_delay(), 0);
        f.account_exchange(41, Some(100));
        f.account_exchange(41, None);
        let t = f.traffic();
        assert_eq!(t.sent, t.delivered + t.dropped);
        assert_eq!(t.bytes, 141 + 10 * 54 + 41 + 4 * 54);
    }
}

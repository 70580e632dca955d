//! Delay distributions for links and access points.

use std::time::Duration;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bench_stats::GevParams;

/// A delay in milliseconds. Draws are truncated at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayDist {
    /// Uniform on `[mean - spread, mean + spread]`.
    Uniform { mean_ms: f64, spread_ms: f64 },
    Normal { mean_ms: f64, sd_ms: f64 },
    /// Replay of a fitted response-time model.
    Gev { mu_ms: f64, sigma_ms: f64, k: f64 },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid delay distribution: {0}")]
pub struct DistError(pub String);

impl DelayDist {
    pub const ZERO: DelayDist = DelayDist::constant(0.0);

    pub const fn constant(ms: f64) -> Self {
        DelayDist::Uniform {
            mean_ms: ms,
            spread_ms: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), DistError> {
        let ok = match *self {
            DelayDist::Uniform { mean_ms, spread_ms } => {
                mean_ms.is_finite() && spread_ms.is_finite() && spread_ms >= 0.0
            }
            DelayDist::Normal { mean_ms, sd_ms } => {
                mean_ms.is_finite() && sd_ms.is_finite() && sd_ms >= 0.0
            }
            DelayDist::Gev { mu_ms, sigma_ms, k } => {
                mu_ms.is_finite() && sigma_ms.is_finite() && sigma_ms > 0.0 && k.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(DistError(format!("{self:?}")))
        }
    }

    /// Mean of the untruncated distribution, where it exists.
    pub fn nominal_mean_ms(&self) -> f64 {
        match *self {
            DelayDist::Uniform { mean_ms, .. } | DelayDist::Normal { mean_ms, .. } => mean_ms,
            DelayDist::Gev { mu_ms, sigma_ms, k } => {
                if k >= 1.0 {
                    f64::INFINITY
                } else if k.abs() < 1e-9 {
                    mu_ms + sigma_ms * 0.577_215_664_901_532_9
                } else {
                    mu_ms + sigma_ms * (statrs::function::gamma::gamma(1.0 - k) - 1.0) / k
                }
            }
        }
    }

    /// One draw in milliseconds, never negative.
    pub fn sample_ms<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = match *self {
            DelayDist::Uniform { mean_ms, spread_ms } => {
                let u: f64 = rng.random();
                mean_ms + spread_ms * (2.0 * u - 1.0)
            }
            DelayDist::Normal { mean_ms, sd_ms } => Normal::new(mean_ms, sd_ms)
                .map(|n| n.sample(rng))
                .unwrap_or(mean_ms),
            DelayDist::Gev { mu_ms, sigma_ms, k } => GevParams {
                mu: mu_ms,
                sigma: sigma_ms,
                k,
            }
            .sample(rng),
        };
        x.max(0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Duration {
        millis(self.sample_ms(rng))
    }
}

/// Fractional milliseconds to a `Duration`, rounded to the microsecond.
pub fn millis(ms: f64) -> Duration {
    Duration::from_micros((ms.max(0.0) * 1000.0).round() as u64)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn zero_delay_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(DelayDist::ZERO.sample(&mut rng), Duration::ZERO);
        }
    }

    #[test]
    fn truncated_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let wide = DelayDist::Normal {
            mean_ms: 1.0,
            sd_ms: 100.0,
        };
        assert!((0..10_000).all(|_| wide.sample_ms(&mut rng) >= 0.0));
    }

    #[test]
    fn uniform_stays_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = DelayDist::Uniform {
            mean_ms: 29.0,
            spread_ms: 4.0,
        };
        for _ in 0..10_000 {
            let x = d.sample_ms(&mut rng);
            assert!((25.0..=33.0).contains(&x));
        }
    }

    #[test]
    fn serde_shape() {
        let d: DelayDist =
            serde_json::from_str(r#"{"kind":"normal","mean_ms":5366,"sd_ms":355}"#).unwrap();
        assert_eq!(
            d,
            DelayDist::Normal {
                mean_ms: 5366.0,
                sd_ms: 355.0
            }
        );
        assert!(DelayDist::Uniform {
            mean_ms: 1.0,
            spread_ms: -1.0
        }
        .validate()
        .is_err());
        assert!(DelayDist::Gev {
            mu_ms: 1.0,
            sigma_ms: 0.0,
            k: 0.1
        }
        .validate()
        .is_err());
    }

    #[test]
    fn gev_replay_matches_nominal_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = DelayDist::Gev {
            mu_ms: 33.0,
            sigma_ms: 2.0,
            k: 0.1,
        };
        let n = 200_000;
        let mean = (0..n).map(|_| d.sample_ms(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - d.nominal_mean_ms()).abs() < 0.05, "{mean}");
    }
}

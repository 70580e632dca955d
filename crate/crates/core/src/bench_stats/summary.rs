//! Means, confidence intervals and histograms.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::statistics::{Data, OrderStatistics};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("need at least {need} samples, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("confidence level {0} is outside (0, 1)")]
    BadLevel(f64),
    #[error("samples contain non-finite values")]
    NonFinite,
    #[error("invalid binning: {0}")]
    BadBinning(String),
}

pub fn mean(samples: &[f64]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    Some(samples.iter().sum::<f64>() / samples.len() as f64)
}

/// Unbiased sample variance (n - 1 denominator).
pub fn sample_variance(samples: &[f64]) -> Option<f64> {
    if samples.len() < 2 {
        return None;
    }
    let m = mean(samples)?;
    Some(samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (samples.len() - 1) as f64)
}

/// Student-t interval on the mean.
pub fn confidence_interval(samples: &[f64], level: f64) -> Result<(f64, f64), StatsError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::BadLevel(level));
    }
    let n = samples.len();
    if n < 2 {
        return Err(StatsError::TooFew { need: 2, got: n });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let m = mean(samples).expect("non-empty");
    let var = sample_variance(samples).expect("n >= 2");
    if var == 0.0 {
        return Ok((m, m));
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("degrees of freedom are positive")
        .inverse_cdf(1.0 - (1.0 - level) / 2.0);
    let half = t * (var / n as f64).sqrt();
    Ok((m - half, m + half))
}

/// Mean with an optional 95% interval (absent below two samples).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean_ms: f64,
    pub ci95_ms: Option<(f64, f64)>,
}

impl Estimate {
    pub fn of(samples: &[f64]) -> Option<Self> {
        Some(Self {
            mean_ms: mean(samples)?,
            ci95_ms: confidence_interval(samples, 0.95).ok(),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Binning {
    #[default]
    FreedmanDiaconis,
    Count { bins: usize },
    Width { width: f64 },
}


/// `counts[i]` holds samples in `[edges[i], edges[i+1])`; the last bin
/// also takes the maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

const MAX_BINS: usize = 10_000;

pub fn histogram(samples: &[f64], binning: Binning) -> Result<Histogram, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::TooFew { need: 1, got: 0 });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let bins = match binning {
        Binning::Count { bins: 0 } => return Err(StatsError::BadBinning("zero bins".into())),
        Binning::Count { bins } => bins,
        Binning::Width { width } if !(width > 0.0 && width.is_finite()) => {
            return Err(StatsError::BadBinning(format!("width {width}")))
        }
        Binning::Width { width } => (range / width).ceil().max(1.0) as usize,
        Binning::FreedmanDiaconis => {
            let iqr = Data::new(samples.to_vec()).interquartile_range();
            let width = 2.0 * iqr / (samples.len() as f64).cbrt();
            if width > 0.0 && range > 0.0 {
                (range / width).ceil().max(1.0) as usize
            } else {
                1
            }
        }
    }
    .min(MAX_BINS);
    let bins = if range == 0.0 { 1 } else { bins };
    let step = range / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| min + step * i as f64).collect();
    edges.push(max);
    let mut counts = vec![0u64; bins];
    for &x in samples {
        let i = if step == 0.0 {
            0
        } else {
            (((x - min) / step) as usize).min(bins - 1)
        };
        counts[i] += 1;
    }
    Ok(Histogram { edges, counts })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;

    #[test]
    fn constant_samples_have_zero_width() {
        assert_eq!(confidence_interval(&[3.5; 7], 0.95), Ok((3.5, 3.5)));
    }

    #[test]
    fn two_points_symmetric() {
        let (lo, hi) = confidence_interval(&[0.0, 2.0], 0.95).unwrap();
        assert!(((lo + hi) / 2.0 - 1.0).abs() < 1e-12);
        // t(0.975, 1) = 12.706; s = sqrt(2); half = 12.706 * sqrt(2) / sqrt(2)
        assert!((hi - 1.0 - 12.706_204_736).abs() < 1e-6, "{hi}");
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(confidence_interval(&[1.0], 0.95), Err(StatsError::TooFew { need: 2, got: 1 }));
        assert!(matches!(confidence_interval(&[1.0, 2.0], 1.0), Err(StatsError::BadLevel(_))));
        assert_eq!(Estimate::of(&[4.0]).unwrap().ci95_ms, None);
        assert!(Estimate::of(&[]).is_none());
    }

    #[test]
    fn coverage_near_nominal() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let reps = 1000;
        let mut covered = 0;
        let mut buf = vec![0.0; 10_000];
        for _ in 0..reps {
            for x in buf.iter_mut() {
                *x = StandardNormal.sample(&mut rng);
            }
            let (lo, hi) = confidence_interval(&buf, 0.95).unwrap();
            if lo <= 0.0 && 0.0 <= hi {
                covered += 1;
            }
        }
        // binomial(1000, 0.95) has sd ~6.9; allow about 3.5 sd
        assert!((926..=974).contains(&covered), "{covered}");
    }

    #[test]
    fn histogram_rules() {
        let xs: Vec<f64> = (0..100).map(f64::from).collect();
        let h = histogram(&xs, Binning::Count { bins: 10 }).unwrap();
        assert_eq!(h.counts, vec![10; 10]);
        assert_eq!(h.edges.first(), Some(&0.0));
        assert_eq!(h.edges.last(), Some(&99.0));
        let h = histogram(&[5.0; 4], Binning::FreedmanDiaconis).unwrap();
        assert_eq!((h.edges, h.counts), (vec![5.0, 5.0], vec![4]));
        assert!(histogram(&xs, Binning::Count { bins: 0 }).is_err());
        assert!(histogram(&xs, Binning::Width { width: -1.0 }).is_err());
    }

    proptest! {
        #[test]
        fn histogram_covers_everything(
            xs in prop::collection::vec(-1e6f64..1e6, 1..500),
            rule in prop_oneof![
                Just(Binning::FreedmanDiaconis),
                (1usize..50).prop_map(|bins| Binning::Count { bins }),
                (0.5f64..1e5).prop_map(|width| Binning::Width { width }),
            ],
        ) {
            let h = histogram(&xs, rule).unwrap();
            prop_assert_eq!(h.counts.iter().sum::<u64>(), xs.len() as u64);
            prop_assert_eq!(h.edges.len(), h.counts.len() + 1);
            let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(h.edges[0], min);
            prop_assert_eq!(*h.edges.last().unwrap(), max);
        }
    }
}

//! Generalized Extreme Value distribution: density, CDF, quantile, sampling
//! and maximum-likelihood fitting.
//!
//! Parameterization: `F(x) = exp(-(1 + k z)^(-1/k))` with `z = (x - mu) / sigma`
//! on the support `1 + k z > 0`; `k = 0` is the Gumbel limit and `k > 0` is
//! heavy-tailed.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

/// Below this |k| the Gumbel forms are used.
const GUMBEL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevParams {
    pub mu: f64,
    pub sigma: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GevError {
    #[error("scale must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("probability {0} is outside (0, 1)")]
    BadProbability(f64),
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("all samples are equal")]
    DegenerateInput,
    #[error("samples contain non-finite values")]
    NonFinite,
    #[error("optimizer did not converge in {iterations} iterations")]
    NoConvergence { best: GevParams, iterations: usize },
}

pub const MIN_FIT_SAMPLES: usize = 50;

impl GevParams {
    pub fn new(mu: f64, sigma: f64, k: f64) -> Result<Self, GevError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(GevError::BadScale(sigma));
        }
        Ok(Self { mu, sigma, k })
    }

    /// `-ln F(x)` when `x` is in the support; `None` outside it.
    fn t(&self, x: f64) -> Option<f64> {
        let z = (x - self.mu) / self.sigma;
        if self.k.abs() < GUMBEL_EPS {
            return Some((-z).exp());
        }
        let s = 1.0 + self.k * z;
        if s <= 0.0 {
            return None;
        }
        Some((-(self.k * z).ln_1p() / self.k).exp())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self.t(x) {
            Some(t) if t.is_finite() => t.powf(self.k + 1.0) * (-t).exp() / self.sigma,
            _ => 0.0,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self.t(x) {
            Some(t) => (-t).exp(),
            // below the lower bound when k > 0, above the upper bound when k < 0
            None => {
                if self.k > 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64, GevError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(GevError::BadProbability(p));
        }
        let y = -(-p.ln()).ln();
        if self.k.abs() < GUMBEL_EPS {
            return Ok(self.mu + self.sigma * y);
        }
        Ok(self.mu + self.sigma * (self.k * y).exp_m1() / self.k)
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                return self.quantile(u).expect("u in (0, 1)");
            }
        }
    }

    /// Negative log-likelihood; `+inf` when any sample is outside the support.
    pub fn neg_log_likelihood(&self, samples: &[f64]) -> f64 {
        let n = samples.len() as f64;
        let mut total = n * self.sigma.ln();
        if self.k.abs() < GUMBEL_EPS {
            for &x in samples {
                let z = (x - self.mu) / self.sigma;
                total += z + (-z).exp();
            }
            return total;
        }
        for &x in samples {
            let z = (x - self.mu) / self.sigma;
            let s = 1.0 + self.k * z;
            if s <= 0.0 {
                return f64::INFINITY;
            }
            let log_s = (self.k * z).ln_1p();
            total += (1.0 + 1.0 / self.k) * log_s + (-log_s / self.k).exp();
        }
        if total.is_finite() {
            total
        } else {
            f64::INFINITY
        }
    }
}

pub fn gev_pdf(x: f64, params: &GevParams) -> f64 {
    params.pdf(x)
}

pub fn gev_quantile(p: f64, params: &GevParams) -> Result<f64, GevError> {
    params.quantile(p)
}

/// Probability-weighted-moment estimate (Hosking, Wallis and Wood).
pub fn pwm_estimate(samples: &[f64]) -> Option<GevParams> {
    let n = samples.len();
    if n < 3 {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    for (i, &x) in sorted.iter().enumerate() {
        let i = i as f64;
        b0 += x;
        b1 += x * i / (nf - 1.0);
        b2 += x * i * (i - 1.0) / ((nf - 1.0) * (nf - 2.0));
    }
    b0 /= nf;
    b1 /= nf;
    b2 /= nf;
    let ln2 = std::f64::consts::LN_2;
    let c = (2.0 * b1 - b0) / (3.0 * b2 - b0) - ln2 / 3f64.ln();
    // Hosking's shape has the opposite sign convention.
    let kh = 7.8590 * c + 2.9554 * c * c;
    let (mu, sigma) = if kh.abs() < 1e-6 {
        let sigma = (2.0 * b1 - b0) / ln2;
        (b0 - 0.577_215_664_901_532_9 * sigma, sigma)
    } else {
        let g = gamma(1.0 + kh);
        let sigma = (2.0 * b1 - b0) * kh / (g * (1.0 - 2f64.powf(-kh)));
        (b0 + sigma * (g - 1.0) / kh, sigma)
    };
    GevParams::new(mu, sigma, -kh).ok().filter(|p| p.mu.is_finite() && p.k.is_finite())
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 5_000,
            tolerance: 1e-10,
        }
    }
}

/// Maximum-likelihood GEV fit. Starts from the PWM estimate (or the Gumbel
/// estimate when that start is infeasible) and minimizes the negative
/// log-likelihood with Nelder-Mead over `(mu, ln sigma, k)`.
pub fn fit_gev(samples: &[f64]) -> Result<GevParams, GevError> {
    fit_gev_with(samples, FitOptions::default())
}

pub fn fit_gev_with(samples: &[f64], options: FitOptions) -> Result<GevParams, GevError> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(GevError::TooFewSamples {
            min: MIN_FIT_SAMPLES,
            got: samples.len(),
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(GevError::NonFinite);
    }
    let first = samples[0];
    if samples.iter().all(|&x| x == first) {
        return Err(GevError::DegenerateInput);
    }

    let mut start = pwm_estimate(samples);
    if start.is_none_or(|p| !p.neg_log_likelihood(samples).is_finite()) {
        start = pwm_estimate(samples).map(|p| GevParams { k: 0.0, ..p });
    }
    let start = match start {
        Some(p) if p.neg_log_likelihood(samples).is_finite() => p,
        _ => {
            let mean = samples.iter().sum::<f64>() / samples.len() as f64;
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
                / (samples.len() - 1) as f64;
            let sigma = (6.0 * var).sqrt() / std::f64::consts::PI;
            GevParams::new(mean - 0.5772 * sigma, sigma, 0.0)?
        }
    };

    // Work in units of the starting scale so the simplex is well conditioned.
    let (mu0, s0) = (start.mu, start.sigma);
    let decode = |v: &[f64; 3]| GevParams {
        mu: mu0 + s0 * v[0],
        sigma: s0 * v[1].exp(),
        k: v[2],
    };
    let objective = |v: &[f64; 3]| decode(v).neg_log_likelihood(samples);
    let result = nelder_mead(objective, [0.0, 0.0, start.k], [0.1, 0.1, 0.05], options);
    let best = decode(&result.point);
    if result.converged {
        Ok(best)
    } else {
        Err(GevError::NoConvergence {
            best,
            iterations: result.iterations,
        })
    }
}

struct NmResult {
    point: [f64; 3],
    iterations: usize,
    converged: bool,
}

fn nelder_mead<F: Fn(&[f64; 3]) -> f64>(
    f: F,
    start: [f64; 3],
    steps: [f64; 3],
    options: FitOptions,
) -> NmResult {
    const N: usize = 3;
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(N + 1);
    simplex.push((start, f(&start)));
    for i in 0..N {
        let mut p = start;
        p[i] += steps[i];
        simplex.push((p, f(&p)));
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iterations {
        iterations += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[N].1;
        let size = simplex[1..]
            .iter()
            .flat_map(|(p, _)| p.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if best.is_finite()
            && (worst - best).abs() <= options.tolerance * (1.0 + best.abs())
            && size < 1e-7
        {
            converged = true;
            break;
        }
        let mut centroid = [0.0; N];
        for (p, _) in &simplex[..N] {
            for j in 0..N {
                centroid[j] += p[j] / N as f64;
            }
        }
        let along = |t: f64| {
            let mut p = [0.0; N];
            for j in 0..N {
                p[j] = centroid[j] + t * (simplex[N].0[j] - centroid[j]);
            }
            p
        };
        let reflected = along(-1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            simplex[N] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[N - 1].1 {
            simplex[N] = (reflected, fr);
        } else {
            let (contracted, fc) = if fr < simplex[N].1 {
                let c = along(-0.5);
                let fc = f(&c);
                (c, fc)
            } else {
                let c = along(0.5);
                let fc = f(&c);
                (c, fc)
            };
            if fc < simplex[N].1.min(fr) {
                simplex[N] = (contracted, fc);
            } else {
                let best = simplex[0].0;
                for entry in simplex.iter_mut().skip(1) {
                    let mut p = [0.0; N];
                    for j in 0..N {
                        p[j] = best[j] + 0.5 * (entry.0[j] - best[j]);
                    }
                    *entry = (p, f(&p));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    NmResult {
        point: simplex[0].0,
        iterations,
        converged,
    }
}

//! Per-slot demand generation.
//!
//! Three i.i.d. integer-valued processes bounded by `a_max`:
//!
//! - `Deterministic`: `round(mean)` every slot.
//! - `BernoulliBatch`: a batch of `m = floor(a_max)` requests with probability
//!   `mean / m`, nothing otherwise.
//! - `TruncatedPoisson`: `min(Poisson(lambda), m)` where `lambda` is solved so
//!   that the censored mean equals `mean`.

use rand::Rng;

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrivalKind {
    Deterministic,
    BernoulliBatch,
    TruncatedPoisson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalSpec {
    pub kind: ArrivalKind,
    pub mean: f64,
    pub a_max: f64,
}

impl ArrivalSpec {
    pub fn new(kind: ArrivalKind, mean: f64, a_max: f64) -> Self {
        Self { kind, mean, a_max }
    }

    pub fn deterministic(mean: f64) -> Self {
        Self::new(ArrivalKind::Deterministic, mean, mean.round().max(1.0))
    }

    pub fn bernoulli(mean: f64, a_max: f64) -> Self {
        Self::new(ArrivalKind::BernoulliBatch, mean, a_max)
    }

    fn batch(&self) -> f64 {
        self.a_max.floor()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidArgument(m));
        if !self.mean.is_finite() || self.mean < 0.0 {
            return bad(format!("mean must be finite and >= 0, got {}", self.mean));
        }
        if !self.a_max.is_finite() || self.a_max <= 0.0 {
            return bad(format!("a_max must be finite and > 0, got {}", self.a_max));
        }
        if self.mean > self.a_max {
            return bad(format!("mean {} exceeds a_max {}", self.mean, self.a_max));
        }
        match self.kind {
            ArrivalKind::Deterministic => {
                if self.mean.round() > self.a_max {
                    return bad(format!(
                        "round(mean) = {} exceeds a_max {}",
                        self.mean.round(),
                        self.a_max
                    ));
                }
            }
            ArrivalKind::BernoulliBatch | ArrivalKind::TruncatedPoisson => {
                if self.mean > self.batch() {
                    return bad(format!(
                        "mean {} exceeds the largest integer sample floor(a_max) = {}",
                        self.mean,
                        self.batch()
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Precomputed sampler for one arrival process.
#[derive(Debug, Clone)]
pub struct ArrivalSampler {
    inner: Sampler,
}

#[derive(Debug, Clone)]
enum Sampler {
    Constant(f64),
    Batch { size: f64, prob: f64 },
    /// Cumulative distribution over `0..=m`.
    Table(Vec<f64>),
}

impl ArrivalSampler {
    pub fn new(spec: &ArrivalSpec) -> Result<Self, ModelError> {
        spec.validate()?;
        let inner = match spec.kind {
            ArrivalKind::Deterministic => Sampler::Constant(spec.mean.round()),
            ArrivalKind::BernoulliBatch => {
                let size = spec.batch();
                if spec.mean == 0.0 {
                    Sampler::Constant(0.0)
                } else {
                    Sampler::Batch {
                        size,
                        prob: spec.mean / size,
                    }
                }
            }
            ArrivalKind::TruncatedPoisson => {
                let m = spec.batch();
                if spec.mean == 0.0 {
                    Sampler::Constant(0.0)
                } else if spec.mean >= m {
                    Sampler::Constant(m)
                } else {
                    let lambda = calibrate_censored_poisson(spec.mean, m as usize);
                    Sampler::Table(censored_poisson_cdf(lambda, m as usize))
                }
            }
        };
        Ok(Self { inner })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.inner {
            Sampler::Constant(v) => *v,
            Sampler::Batch { size, prob } => {
                if rng.gen::<f64>() < *prob {
                    *size
                } else {
                    0.0
                }
            }
            Sampler::Table(cdf) => {
                let u: f64 = rng.gen();
                cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1) as f64
            }
        }
    }

    /// Exact mean of the sampled distribution.
    pub fn mean(&self) -> f64 {
        match &self.inner {
            Sampler::Constant(v) => *v,
            Sampler::Batch { size, prob } => size * prob,
            Sampler::Table(cdf) => {
                let mut prev = 0.0;
                let mut mean = 0.0;
                for (n, &c) in cdf.iter().enumerate() {
                    mean += n as f64 * (c - prev);
                    prev = c;
                }
                mean
            }
        }
    }
}

/// One draw from `spec`. Builds a fresh sampler; hot loops should keep an
/// [`ArrivalSampler`] instead.
pub fn sample_arrivals<R: Rng + ?Sized>(spec: &ArrivalSpec, rng: &mut R) -> Result<f64, ModelError> {
    Ok(ArrivalSampler::new(spec)?.sample(rng))
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|v| (v as f64).ln()).sum()
}

fn censored_poisson_cdf(lambda: f64, m: usize) -> Vec<f64> {
    let mut cdf = Vec::with_capacity(m + 1);
    let mut acc = 0.0;
    for n in 0..m {
        acc += (-lambda + n as f64 * lambda.ln() - ln_factorial(n)).exp();
        cdf.push(acc.min(1.0));
    }
    cdf.push(1.0);
    cdf
}

fn censored_poisson_mean(lambda: f64, m: usize) -> f64 {
    let cdf = censored_poisson_cdf(lambda, m);
    // E[min(P, m)] = sum_{n=0}^{m-1} P(P > n)
    cdf[..m].iter().map(|c| 1.0 - c).sum()
}

fn calibrate_censored_poisson(mean: f64, m: usize) -> f64 {
    let mut hi = mean.max(1e-3);
    while censored_poisson_mean(hi, m) < mean && hi < 1e3 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if censored_poisson_mean(mid, m) < mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

//! Two-step slice sampler for densities of the form `w(θ) φ(θ; μ, σ²)` with a
//! bounded weight `w ∈ [0, 1]`.
//!
//! Each sweep draws `u ~ U(0, w(θ))` and then `θ` from the Gaussian restricted
//! to the superlevel set `{w > u}`, which is a half-line or the complement of
//! a symmetric interval for every supported weight.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, NollikError, Result};
use crate::numerics::{std_norm_logcdf, std_norm_quantile};
use crate::weightcore::{GaussianComponent, WeightKind, WeightedKernel};

/// Superlevel set of a weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    /// `{θ : |θ| > t}`
    Outside(f64),
    /// `{θ : θ > t}`
    Above(f64),
    /// `{θ : θ < t}`
    Below(f64),
}

/// A Gaussian base density tilted by a bounded weight with closed-form
/// superlevel sets.
pub trait SliceTarget {
    fn base(&self) -> GaussianComponent;
    fn weight(&self, theta: f64) -> f64;
    /// `{θ : w(θ) > u}` for `u ∈ [0, 1)`.
    fn region(&self, u: f64) -> Region;
}

impl SliceTarget for WeightedKernel {
    fn base(&self) -> GaussianComponent {
        self.component
    }

    fn weight(&self, theta: f64) -> f64 {
        self.weight.value(theta)
    }

    fn region(&self, u: f64) -> Region {
        let t = self.weight.inverse(u).unwrap_or(0.0);
        Region::Outside(t)
    }
}

/// Skew-normal density `2 φ(θ) Φ(αθ)` viewed as `φ` tilted by `Φ(αθ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewNormal {
    pub shape: f64,
}

impl SliceTarget for SkewNormal {
    fn base(&self) -> GaussianComponent {
        GaussianComponent::standard()
    }

    fn weight(&self, theta: f64) -> f64 {
        crate::numerics::std_norm_cdf(self.shape * theta)
    }

    fn region(&self, u: f64) -> Region {
        if self.shape == 0.0 {
            return Region::Above(f64::NEG_INFINITY);
        }
        let t = std_norm_quantile(u) / self.shape;
        if self.shape > 0.0 {
            Region::Above(t)
        } else {
            Region::Below(t)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SliceOptions {
    pub burn_in: usize,
    /// Sweeps between retained draws.
    pub thin: usize,
}

impl Default for SliceOptions {
    fn default() -> Self {
        Self { burn_in: 200, thin: 5 }
    }
}

/// Standard normal restricted to `(a, ∞)`.
pub fn std_normal_above<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a == f64::NEG_INFINITY {
        return StandardNormal.sample(rng);
    }
    if a < 0.5 {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z > a {
                return z;
            }
        }
    }
    // exponential proposal with the optimal rate for the tail
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e = -(1.0 - rng.random::<f64>()).ln() / lambda;
        let z = a + e;
        let d = z - lambda;
        if rng.random::<f64>() <= (-0.5 * d * d).exp() {
            return z;
        }
    }
}

/// Draw from `N(μ, σ²)` restricted to `region`.
pub fn truncated_normal<R: Rng + ?Sized>(c: &GaussianComponent, region: Region, rng: &mut R) -> f64 {
    let sd = c.sd();
    match region {
        Region::Above(t) => c.mu + sd * std_normal_above((t - c.mu) / sd, rng),
        Region::Below(t) => c.mu - sd * std_normal_above((c.mu - t) / sd, rng),
        Region::Outside(t) => {
            if t <= 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                return c.mu + sd * z;
            }
            let a_right = (t - c.mu) / sd;
            let a_left = (t + c.mu) / sd;
            let log_right = std_norm_logcdf(-a_right);
            let log_left = std_norm_logcdf(-a_left);
            // P(right tail) = 1 / (1 + exp(log_left - log_right))
            let p_right = 1.0 / (1.0 + (log_left - log_right).exp());
            if rng.random::<f64>() < p_right {
                c.mu + sd * std_normal_above(a_right, rng)
            } else {
                c.mu - sd * std_normal_above(a_left, rng)
            }
        }
    }
}

/// One slice-sampler sweep from `theta`.
pub fn slice_step<T: SliceTarget + ?Sized, R: Rng + ?Sized>(target: &T, theta: f64, rng: &mut R) -> f64 {
    let u = target.weight(theta) * rng.random::<f64>();
    truncated_normal(&target.base(), target.region(u), rng)
}

/// `n` draws from a generic slice target.
pub fn slice_sample<T: SliceTarget + ?Sized>(
    target: &T,
    n: usize,
    seed: u64,
    opts: SliceOptions,
) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = target.base();
    let mut theta = truncated_normal(&base, target.region(0.0), &mut rng);
    for _ in 0..opts.burn_in {
        theta = slice_step(target, theta, &mut rng);
    }
    let thin = opts.thin.max(1);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        for _ in 0..thin {
            theta = slice_step(target, theta, &mut rng);
        }
        out.push(theta);
    }
    out
}

/// `n` draws from the weighted density of `kernel` by slice sampling.
///
/// Only bounded weights with closed-form superlevel sets are supported.
pub fn slice_sample_weighted(kernel: &WeightedKernel, n: usize, seed: u64) -> Result<Vec<f64>> {
    slice_sample_weighted_with(kernel, n, seed, SliceOptions::default())
}

pub fn slice_sample_weighted_with(
    kernel: &WeightedKernel,
    n: usize,
    seed: u64,
    opts: SliceOptions,
) -> Result<Vec<f64>> {
    if kernel.weight.kind() == WeightKind::W0 {
        return Err(NollikError::UnsupportedKind(
            "slice sampling: W0 is unbounded".into(),
        ));
    }
    if opts.thin == 0 {
        return Err(invalid("slice sampler thinning must be >= 1"));
    }
    Ok(slice_sample(kernel, n, seed, opts))
}

//! Gibbs samplers for the parametric and nonparametric weighted two-group
//! models, with shared chain controls, adaptive random-walk proposals and
//! normal-inverse-gamma utilities.

pub mod bnp;
pub mod parametric;

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{NollikError, Result};
use crate::numerics::LN_SQRT_2PI;
use crate::weightcore::{GaussianComponent, WeightKind};

/// Iterations between proposal-scale updates.
pub const N_BATCH: u32 = 50;
/// Target acceptance rate of the random-walk blocks.
pub const TARGET_ACCEPTANCE: f64 = 0.44;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Controls {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for Controls {
    fn default() -> Self {
        Self {
            iterations: 35_000,
            burn_in: 10_000,
            thin: 5,
            seed: 1,
        }
    }
}

impl Controls {
    pub fn new(iterations: usize, burn_in: usize, thin: usize, seed: u64) -> Result<Self> {
        let c = Self {
            iterations,
            burn_in,
            thin,
            seed,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(NollikError::InvalidControls(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(NollikError::InvalidControls("thin must be >= 1".into()));
        }
        if (self.iterations - self.burn_in) / self.thin == 0 {
            return Err(NollikError::InvalidControls(
                "no iterations would be retained".into(),
            ));
        }
        Ok(())
    }

    /// Whether iteration `t` (1-based) is recorded.
    #[inline]
    pub fn retains(&self, t: usize) -> bool {
        t > self.burn_in && (t - self.burn_in) % self.thin == 0
    }

    pub fn n_records(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Per-block log proposal scales, adapted every [`N_BATCH`] iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveMhState {
    pub log_sd: Vec<f64>,
    pub batch_accepts: Vec<u32>,
    pub batch_proposals: Vec<u32>,
    pub total_accepts: Vec<u64>,
    pub total_proposals: Vec<u64>,
    pub n_batch: u32,
    pub t: u64,
}

impl AdaptiveMhState {
    pub fn new(n_blocks: usize, initial_log_sd: f64) -> Self {
        Self {
            log_sd: vec![initial_log_sd; n_blocks],
            batch_accepts: vec![0; n_blocks],
            batch_proposals: vec![0; n_blocks],
            total_accepts: vec![0; n_blocks],
            total_proposals: vec![0; n_blocks],
            n_batch: N_BATCH,
            t: 0,
        }
    }

    /// Initial scales: proposal variance 0.5 on every coordinate.
    pub fn with_default_scales(n_blocks: usize) -> Self {
        Self::new(n_blocks, 0.5 * 0.5_f64.ln())
    }

    #[inline]
    pub fn sd(&self, block: usize) -> f64 {
        self.log_sd[block].exp()
    }

    pub fn record(&mut self, block: usize, accepted: bool) {
        self.batch_proposals[block] += 1;
        self.total_proposals[block] += 1;
        if accepted {
            self.batch_accepts[block] += 1;
            self.total_accepts[block] += 1;
        }
    }

    /// Close one iteration; adapts when a batch completes.
    pub fn tick(&mut self) {
        self.t += 1;
        if self.t % self.n_batch as u64 == 0 {
            adapt_proposals(self);
        }
    }

    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.total_accepts
            .iter()
            .zip(&self.total_proposals)
            .map(|(a, p)| if *p == 0 { f64::NAN } else { *a as f64 / *p as f64 })
            .collect()
    }
}

/// `δ(t) = min(0.01, t^{-1/2})`.
#[inline]
pub fn adaptation_step(t: u64) -> f64 {
    0.01_f64.min((t.max(1) as f64).powf(-0.5))
}

/// Nudge each block's log scale down when its batch acceptance fell below
/// 0.44 and up otherwise, then reset the batch counters. Blocks without
/// proposals in the batch are left alone.
pub fn adapt_proposals(mh: &mut AdaptiveMhState) {
    let delta = adaptation_step(mh.t);
    for b in 0..mh.log_sd.len() {
        let n = mh.batch_proposals[b];
        if n > 0 {
            let rate = mh.batch_accepts[b] as f64 / n as f64;
            if rate < TARGET_ACCEPTANCE {
                mh.log_sd[b] -= delta;
            } else {
                mh.log_sd[b] += delta;
            }
        }
        mh.batch_accepts[b] = 0;
        mh.batch_proposals[b] = 0;
    }
}

/// Normal-inverse-gamma law: `σ² ~ IG(a, b)`, `μ | σ² ~ N(m, σ²/κ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nig {
    pub m: f64,
    pub kappa: f64,
    pub a: f64,
    pub b: f64,
}

/// Count, mean and centered sum of squares of a subsample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SuffStats {
    pub n: usize,
    pub mean: f64,
    pub sq: f64,
}

impl SuffStats {
    pub fn from_iter<I: Iterator<Item = f64> + Clone>(xs: I) -> Self {
        let mut n = 0usize;
        let mut sum = 0.0;
        for x in xs.clone() {
            n += 1;
            sum += x;
        }
        if n == 0 {
            return Self::default();
        }
        let mean = sum / n as f64;
        let sq = xs.map(|x| (x - mean) * (x - mean)).sum();
        Self { n, mean, sq }
    }
}

impl Nig {
    pub fn new(m: f64, kappa: f64, a: f64, b: f64) -> Result<Self> {
        if !m.is_finite() || !(kappa > 0.0 && a > 0.0 && b > 0.0) || !(kappa.is_finite() && a.is_finite() && b.is_finite()) {
            return Err(crate::error::invalid(format!(
                "NIG parameters need finite m and kappa, a, b > 0; got ({m}, {kappa}, {a}, {b})"
            )));
        }
        Ok(Self { m, kappa, a, b })
    }

    /// Conjugate update.
    pub fn posterior(&self, s: &SuffStats) -> Self {
        if s.n == 0 {
            return *self;
        }
        let n = s.n as f64;
        let kappa = self.kappa + n;
        Self {
            m: (self.kappa * self.m + n * s.mean) / kappa,
            kappa,
            a: self.a + 0.5 * n,
            b: self.b
                + 0.5 * s.sq
                + n * self.kappa / (n + self.kappa) * (s.mean - self.m).powi(2) / 2.0,
        }
    }

    /// Joint log density of `(μ, σ²)`.
    pub fn log_density(&self, mu: f64, sigma2: f64) -> f64 {
        if !(sigma2 > 0.0) {
            return f64::NEG_INFINITY;
        }
        let ln_s2 = sigma2.ln();
        -LN_SQRT_2PI - 0.5 * (ln_s2 - self.kappa.ln()) - self.kappa * (mu - self.m).powi(2) / (2.0 * sigma2)
            + self.a * self.b.ln()
            - ln_gamma(self.a)
            - (self.a + 1.0) * ln_s2
            - self.b / sigma2
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GaussianComponent {
        let sigma2 = sample_inv_gamma(self.a, self.b, rng);
        let z: f64 = StandardNormal.sample(rng);
        GaussianComponent {
            mu: self.m + (sigma2 / self.kappa).sqrt() * z,
            sigma2,
        }
    }

    pub fn mean_sigma2(&self) -> f64 {
        if self.a > 1.0 {
            self.b / (self.a - 1.0)
        } else {
            f64::INFINITY
        }
    }
}

pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    Beta::new(a, b).expect("beta parameters validated upstream").sample(rng)
}

/// Gamma with shape `a` and rate `rate`.
pub fn sample_gamma<R: Rng + ?Sized>(a: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(a, 1.0 / rate)
        .expect("gamma parameters validated upstream")
        .sample(rng)
}

/// Inverse gamma with shape `a` and scale `b` (mean `b / (a − 1)`).
pub fn sample_inv_gamma<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    1.0 / sample_gamma(a, b, rng)
}

/// Log inverse-gamma density.
pub fn log_inv_gamma(x: f64, a: f64, b: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    a * b.ln() - ln_gamma(a) - (a + 1.0) * x.ln() - b / x
}

/// Log of `NIG(μ, σ²) K^{−n}` in `(μ, log σ²)` coordinates, up to a constant.
pub(crate) fn tilted_log_target(post: &Nig, n: usize, c: &GaussianComponent, log_k: f64) -> f64 {
    post.log_density(c.mu, c.sigma2) - n as f64 * log_k + c.sigma2.ln()
}

/// Index drawn from unnormalized log masses; `None` if every mass is zero.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_mass: &[f64], rng: &mut R) -> Option<usize> {
    let max = log_mass.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let total: f64 = log_mass.iter().map(|l| (l - max).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    for (i, l) in log_mass.iter().enumerate() {
        let p = (l - max).exp();
        if u < p {
            return Some(i);
        }
        u -= p;
    }
    // round-off: fall back to the last positive mass
    log_mass.iter().rposition(|l| l.is_finite())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Parametric,
    Bnp,
}

/// One retained iteration.
///
/// The alternative is `Σ_j weights[j] · w φ(·; components[j]) / K_j`;
/// parametric draws have two components with weights `(1 − α, α)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawRecord {
    pub rho: f64,
    pub mu0: f64,
    pub sigma20: f64,
    pub xi: f64,
    /// Probability of the positive component (parametric only).
    pub alpha: Option<f64>,
    /// Concentration of the stick-breaking prior (nonparametric only).
    pub conc: Option<f64>,
    pub weights: Vec<f64>,
    pub components: Vec<GaussianComponent>,
    pub log_normconsts: Vec<f64>,
}

impl DrawRecord {
    pub fn null(&self) -> GaussianComponent {
        GaussianComponent {
            mu: self.mu0,
            sigma2: self.sigma20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub model: ModelKind,
    pub weight_kind: WeightKind,
    pub k: u32,
    pub delta: f64,
    pub controls: Controls,
    pub n_obs: usize,
    /// Names of the random-walk blocks, aligned with `acceptance`.
    pub blocks: Vec<String>,
    pub acceptance: Vec<f64>,
}

/// Retained draws and per-observation relevance counts of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub meta: TraceMeta,
    pub records: Vec<DrawRecord>,
    /// Number of retained iterations with `λ_i = 1`.
    pub lambda_sums: Vec<u64>,
}

impl ChainTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn rho_draws(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.rho).collect()
    }

    pub fn weight_function(&self, xi: f64) -> Result<crate::weightcore::WeightFunction> {
        crate::weightcore::WeightFunction::new(self.meta.weight_kind, xi, self.meta.k, self.meta.delta)
    }
}

pub(crate) fn validate_data(z: &[f64]) -> Result<()> {
    if z.len() < 2 {
        return Err(NollikError::EmptyData(format!(
            "need at least 2 observations, got {}",
            z.len()
        )));
    }
    if let Some(i) = z.iter().position(|x| !x.is_finite()) {
        return Err(NollikError::NonFinite(format!("observation {i} is {}", z[i])));
    }
    Ok(())
}

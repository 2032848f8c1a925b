//! Weight functions, weighted (non-local) Gaussian kernels and their
//! normalizing constants.
//!
//! A weighted density rescales a local density by an even weight that
//! vanishes at the origin:
//!
//! ```text
//! f_w(z) = w(z) φ(z; μ, σ²) / K,   K = E_φ[w(Z)]
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{invalid, NollikError, Result};
use crate::numerics::{
    integrate_panel_10, log_sum_exp, norm_cdf, norm_logpdf, norm_pdf, std_norm_cdf,
    CumulativeIntegral, POSITIVE_FLOOR,
};

/// Largest power accepted for the bounded kinds.
pub const MAX_BOUNDED_K: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    /// `z^{2k}` (unbounded, moment-type)
    W0,
    /// `1 - exp(-(z/ξ)^{2k})`
    W1,
    /// `exp(-(z/ξ)^{-2k})`
    W2,
    /// `1 - 1{|z| <= δ}`
    Indicator,
}

impl std::str::FromStr for WeightKind {
    type Err = NollikError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "w0" => Ok(WeightKind::W0),
            "w1" => Ok(WeightKind::W1),
            "w2" => Ok(WeightKind::W2),
            "indicator" | "identity" => Ok(WeightKind::Indicator),
            other => Err(invalid(format!("unknown weight kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for WeightKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            WeightKind::W0 => "w0",
            WeightKind::W1 => "w1",
            WeightKind::W2 => "w2",
            WeightKind::Indicator => "indicator",
        };
        f.write_str(s)
    }
}

/// Even, nonnegative weight with `w(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    kind: WeightKind,
    xi: f64,
    k: u32,
    delta: f64,
}

impl WeightFunction {
    pub fn new(kind: WeightKind, xi: f64, k: u32, delta: f64) -> Result<Self> {
        if kind == WeightKind::Indicator {
            if !(delta.is_finite() && delta >= 0.0) {
                return Err(invalid(format!("indicator half-width must be >= 0, got {delta}")));
            }
        } else if k == 0 {
            return Err(invalid("weight power k must be >= 1"));
        }
        if matches!(kind, WeightKind::W1 | WeightKind::W2) {
            if !(xi.is_finite() && xi > 0.0) {
                return Err(invalid(format!("weight scale xi must be > 0, got {xi}")));
            }
            if k > MAX_BOUNDED_K {
                return Err(invalid(format!(
                    "weight power k must be in 1..={MAX_BOUNDED_K} for {kind}, got {k}"
                )));
            }
        }
        Ok(Self {
            kind,
            xi: if matches!(kind, WeightKind::W1 | WeightKind::W2) { xi } else { 1.0 },
            k: if kind == WeightKind::Indicator { 1 } else { k },
            delta: if kind == WeightKind::Indicator { delta } else { 0.0 },
        })
    }

    pub fn w0(k: u32) -> Result<Self> {
        Self::new(WeightKind::W0, 1.0, k, 0.0)
    }

    pub fn w1(xi: f64, k: u32) -> Result<Self> {
        Self::new(WeightKind::W1, xi, k, 0.0)
    }

    pub fn w2(xi: f64, k: u32) -> Result<Self> {
        Self::new(WeightKind::W2, xi, k, 0.0)
    }

    pub fn indicator(delta: f64) -> Result<Self> {
        Self::new(WeightKind::Indicator, 1.0, 1, delta)
    }

    /// Weight equal to one everywhere except the origin.
    pub fn identity() -> Self {
        Self::indicator(0.0).expect("zero half-width is valid")
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Whether the weight depends on the scale ξ.
    pub fn uses_xi(&self) -> bool {
        matches!(self.kind, WeightKind::W1 | WeightKind::W2)
    }

    pub fn is_bounded(&self) -> bool {
        self.kind != WeightKind::W0
    }

    /// Weight that differs from one only on a null set.
    pub fn is_identity(&self) -> bool {
        self.kind == WeightKind::Indicator && self.delta == 0.0
    }

    pub fn with_xi(&self, xi: f64) -> Result<Self> {
        Self::new(self.kind, xi, self.k, self.delta)
    }

    /// `w(z)` without input validation.
    #[inline]
    pub fn value(&self, z: f64) -> f64 {
        let a = z.abs();
        let two_k = 2 * self.k as i32;
        match self.kind {
            WeightKind::W0 => a.powi(two_k),
            WeightKind::W1 => -(-(a / self.xi).powi(two_k)).exp_m1(),
            WeightKind::W2 => {
                if a == 0.0 {
                    0.0
                } else {
                    (-(self.xi / a).powi(two_k)).exp()
                }
            }
            WeightKind::Indicator => {
                if a <= self.delta {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    /// `log w(z)`; `-inf` where the weight vanishes.
    #[inline]
    pub fn log_value(&self, z: f64) -> f64 {
        let a = z.abs();
        let two_k = 2 * self.k as i32;
        match self.kind {
            WeightKind::W0 => 2.0 * self.k as f64 * a.ln(),
            WeightKind::W1 => (-(-(a / self.xi).powi(two_k)).exp_m1()).ln(),
            WeightKind::W2 => {
                if a == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -(self.xi / a).powi(two_k)
                }
            }
            WeightKind::Indicator => {
                if a <= self.delta {
                    f64::NEG_INFINITY
                } else {
                    0.0
                }
            }
        }
    }

    /// Positive root of `w(z) = level` for `level` in the range of the weight.
    ///
    /// For the indicator this is the discontinuity `δ` for any level in (0, 1).
    pub fn inverse(&self, level: f64) -> Result<f64> {
        let ok = match self.kind {
            WeightKind::W0 => level >= 0.0 && level.is_finite(),
            _ => (0.0..=1.0).contains(&level),
        };
        if !ok {
            return Err(invalid(format!("weight level {level} outside the range of {}", self.kind)));
        }
        let inv_2k = 1.0 / (2.0 * self.k as f64);
        Ok(match self.kind {
            WeightKind::W0 => level.powf(inv_2k),
            WeightKind::W1 => self.xi * (-(-level).ln_1p()).powf(inv_2k),
            WeightKind::W2 => {
                if level == 0.0 {
                    0.0
                } else {
                    self.xi * (-level.ln()).powf(-inv_2k)
                }
            }
            WeightKind::Indicator => self.delta,
        })
    }
}

/// Evaluate `w(z)`, rejecting non-finite inputs.
pub fn eval_weight(w: &WeightFunction, z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(NollikError::NonFinite(format!("weight argument {z}")));
    }
    Ok(w.value(z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mu: f64,
    pub sigma2: f64,
}

impl GaussianComponent {
    pub fn new(mu: f64, sigma2: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(NollikError::NonFinite(format!("component mean {mu}")));
        }
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(invalid(format!("component variance must be > 0, got {sigma2}")));
        }
        Ok(Self { mu, sigma2 })
    }

    pub fn standard() -> Self {
        Self { mu: 0.0, sigma2: 1.0 }
    }

    pub fn sd(&self) -> f64 {
        self.sigma2.sqrt()
    }

    #[inline]
    pub fn pdf(&self, z: f64) -> f64 {
        norm_pdf(z, self.mu, self.sigma2)
    }

    #[inline]
    pub fn logpdf(&self, z: f64) -> f64 {
        norm_logpdf(z, self.mu, self.sigma2)
    }

    #[inline]
    pub fn cdf(&self, z: f64) -> f64 {
        norm_cdf(z, self.mu, self.sigma2)
    }

    /// `P(Z > z)` without cancellation.
    #[inline]
    pub fn sf(&self, z: f64) -> f64 {
        std_norm_cdf((self.mu - z) / self.sd())
    }
}

/// `E[Z^{2k}]` for `Z ~ N(μ, σ²)` (noncentral even moment).
fn even_moment(mu: f64, sigma2: f64, k: u32) -> f64 {
    let n = 2 * k as u64;
    // Σ_j C(2k, 2j) μ^{2k-2j} σ^{2j} (2j-1)!!
    let mut total = 0.0;
    let mut binom = 1.0_f64; // C(n, 0)
    let mut dfact = 1.0_f64; // (2j-1)!!, with (-1)!! = 1
    for j in 0..=k as u64 {
        let term = binom * mu.powi((n - 2 * j) as i32) * sigma2.powi(j as i32) * dfact;
        total += term;
        // advance C(n, 2j) -> C(n, 2j+2)
        let a = (n - 2 * j) as f64;
        binom *= a * (a - 1.0) / (((2 * j + 1) * (2 * j + 2)) as f64);
        dfact *= (2 * j + 1) as f64;
    }
    total
}

/// `∫ w φ` for the bounded smooth kinds by composite Gauss-Legendre,
/// marching outward from the mean until the remaining Gaussian mass is negligible.
fn smooth_weight_mass(w: &WeightFunction, c: &GaussianComponent) -> f64 {
    let sd = c.sd();
    let xi = w.xi();
    let f = |z: f64| w.value(z) * c.pdf(z);
    let step = |a: f64, b: f64| {
        // finer panels where the weight changes
        let near = a.abs().min(b.abs()) < 4.0 * xi || a.signum() != b.signum();
        if near {
            (0.5 * sd).min(0.25 * xi)
        } else {
            0.5 * sd
        }
    };
    let mut total = 0.0;
    for dir in [1.0_f64, -1.0] {
        let mut a = c.mu;
        let mut half = 0.0;
        loop {
            let h = step(a, a + dir * 0.5 * sd);
            let b = a + dir * h;
            let (lo, hi) = if dir > 0.0 { (a, b) } else { (b, a) };
            let part = integrate_panel_10(&f, lo, hi);
            half += part;
            let dist = (b - c.mu).abs();
            // the weight is at most one, so φ bounds what is left
            let rest = std_norm_cdf(-dist / sd);
            if dist >= 40.0 * sd || rest <= 1e-17 * half {
                break;
            }
            a = b;
        }
        total += half;
    }
    total
}

/// `log K` for `K = E_{φ(μ,σ²)}[w(Z)]`.
pub fn log_normalizing_constant(w: &WeightFunction, c: &GaussianComponent) -> Result<f64> {
    let log_k = match w.kind() {
        WeightKind::W0 => even_moment(c.mu, c.sigma2, w.k()).ln(),
        WeightKind::Indicator => {
            if w.delta() == 0.0 {
                0.0
            } else {
                (c.cdf(-w.delta()) + c.sf(w.delta())).ln()
            }
        }
        WeightKind::W1 | WeightKind::W2 => smooth_weight_mass(w, c).ln(),
    };
    if !(log_k >= POSITIVE_FLOOR.ln()) {
        return Err(NollikError::Underflow(format!(
            "normalizing constant of {} weight under N({}, {}) is below {POSITIVE_FLOOR:e}",
            w.kind(),
            c.mu,
            c.sigma2
        )));
    }
    Ok(log_k)
}

/// `K = E_{φ(μ,σ²)}[w(Z)]`: composite Gauss-Legendre for the smooth bounded
/// kinds, closed forms for `W0` and the indicator.
pub fn normalizing_constant(w: &WeightFunction, c: &GaussianComponent) -> Result<f64> {
    log_normalizing_constant(w, c).map(f64::exp)
}

/// A Gaussian kernel rescaled by a weight function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedKernel {
    pub component: GaussianComponent,
    pub weight: WeightFunction,
    log_normconst: f64,
}

impl WeightedKernel {
    pub fn new(component: GaussianComponent, weight: WeightFunction) -> Result<Self> {
        let log_normconst = log_normalizing_constant(&weight, &component)?;
        Ok(Self {
            component,
            weight,
            log_normconst,
        })
    }

    pub fn normconst(&self) -> f64 {
        self.log_normconst.exp()
    }

    pub fn log_normconst(&self) -> f64 {
        self.log_normconst
    }

    #[inline]
    pub fn log_density(&self, z: f64) -> f64 {
        self.weight.log_value(z) + self.component.logpdf(z) - self.log_normconst
    }

    #[inline]
    pub fn density(&self, z: f64) -> f64 {
        let lw = self.weight.log_value(z);
        if lw == f64::NEG_INFINITY {
            0.0
        } else {
            (lw + self.component.logpdf(z) - self.log_normconst).exp()
        }
    }

    /// Integration range and panel width resolving both the Gaussian and
    /// the weight's transition near the origin.
    fn integration_layout(&self) -> (f64, f64, f64, Vec<f64>) {
        let sd = self.component.sd();
        let spread = 40.0 * sd + if self.weight.kind() == WeightKind::W0 { 4.0 * self.weight.k() as f64 * sd } else { 0.0 };
        let lo = self.component.mu - spread;
        let hi = self.component.mu + spread;
        let mut width = sd / 4.0;
        if self.weight.uses_xi() {
            width = width.min(self.weight.xi() / 8.0);
        }
        let mut breaks = vec![0.0, self.component.mu];
        if self.weight.kind() == WeightKind::Indicator && self.weight.delta() > 0.0 {
            breaks.push(-self.weight.delta());
            breaks.push(self.weight.delta());
        }
        (lo, hi, width, breaks)
    }
}

/// `w(z) φ(z; μ, σ²) / K`.
pub fn weighted_density(kernel: &WeightedKernel, z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(NollikError::NonFinite(format!("density argument {z}")));
    }
    Ok(kernel.density(z))
}

/// Precomputed cdf of a weighted kernel, for repeated evaluation.
pub struct WeightedCdf {
    integral: CumulativeIntegral<Box<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl WeightedCdf {
    pub fn new(kernel: &WeightedKernel) -> Self {
        let (lo, hi, width, breaks) = kernel.integration_layout();
        let w = kernel.weight;
        let c = kernel.component;
        let f: Box<dyn Fn(f64) -> f64 + Send + Sync> = Box::new(move |z| w.value(z) * c.pdf(z));
        Self {
            integral: CumulativeIntegral::new(f, lo, hi, width, &breaks),
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        self.integral.lower_at(z) / self.integral.total()
    }

    pub fn sf(&self, z: f64) -> f64 {
        self.integral.upper_at(z) / self.integral.total()
    }

    /// The integrated mass of `w φ`, i.e. a quadrature estimate of `K`.
    pub fn mass(&self) -> f64 {
        self.integral.total()
    }
}

/// Cumulative distribution of a weighted kernel by panel quadrature from -∞.
pub fn weighted_cdf(kernel: &WeightedKernel, z: f64) -> f64 {
    if z == f64::NEG_INFINITY {
        return 0.0;
    }
    if z == f64::INFINITY {
        return 1.0;
    }
    WeightedCdf::new(kernel).cdf(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MixtureKind {
    Local,
    Weighted,
}

/// Finite Gaussian mixture, either local (`Σ p_j φ_j`) or as a mixture of
/// weighted kernels (`Σ π_j w φ_j / K_j`).
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDensity {
    weights: Vec<f64>,
    components: Vec<GaussianComponent>,
    weight: Option<WeightFunction>,
    log_normconsts: Vec<f64>,
}

impl MixtureDensity {
    pub fn local(weights: Vec<f64>, components: Vec<GaussianComponent>) -> Result<Self> {
        validate_probabilities(&weights)?;
        if weights.len() != components.len() || weights.is_empty() {
            return Err(invalid("mixture weights and components must have equal nonzero length"));
        }
        Ok(Self {
            weights,
            components,
            weight: None,
            log_normconsts: Vec::new(),
        })
    }

    pub fn kind(&self) -> MixtureKind {
        if self.weight.is_some() {
            MixtureKind::Weighted
        } else {
            MixtureKind::Local
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn weight_function(&self) -> Option<&WeightFunction> {
        self.weight.as_ref()
    }

    /// Per-component `K_j` (weighted kind only).
    pub fn normconsts(&self) -> Vec<f64> {
        self.log_normconsts.iter().map(|l| l.exp()).collect()
    }

    pub fn density(&self, z: f64) -> f64 {
        match &self.weight {
            None => self
                .weights
                .iter()
                .zip(&self.components)
                .map(|(p, c)| p * c.pdf(z))
                .sum(),
            Some(w) => {
                let lw = w.log_value(z);
                if lw == f64::NEG_INFINITY {
                    return 0.0;
                }
                self.weights
                    .iter()
                    .zip(&self.components)
                    .zip(&self.log_normconsts)
                    .map(|((p, c), lk)| p * (lw + c.logpdf(z) - lk).exp())
                    .sum()
            }
        }
    }

    /// Local mixture cdf in closed form (local kind only).
    pub fn local_cdf(&self, z: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(p, c)| p * c.cdf(z))
            .sum()
    }

    pub fn local_sf(&self, z: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(p, c)| p * c.sf(z))
            .sum()
    }

    /// Range covering every component out to 40 sd, and the smallest sd.
    pub(crate) fn support(&self) -> (f64, f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut min_sd = f64::INFINITY;
        for c in &self.components {
            let sd = c.sd();
            lo = lo.min(c.mu - 40.0 * sd);
            hi = hi.max(c.mu + 40.0 * sd);
            min_sd = min_sd.min(sd);
        }
        (lo, hi, min_sd)
    }
}

fn validate_probabilities(p: &[f64]) -> Result<()> {
    if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(invalid("mixture weights must be finite and nonnegative"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(invalid(format!("mixture weights must sum to 1, got {s}")));
    }
    Ok(())
}

/// Rewrite `w(z) Σ p_j φ_j(z) / K̃` as `Σ π_j w(z) φ_j(z) / K_j` with
/// `π_j = p_j K_j / Σ_l p_l K_l`.
pub fn reparameterize_mixture(local: &MixtureDensity, w: &WeightFunction) -> Result<MixtureDensity> {
    if local.kind() != MixtureKind::Local {
        return Err(invalid("reparameterization expects a local mixture"));
    }
    let mut log_k = Vec::with_capacity(local.components.len());
    for c in &local.components {
        match log_normalizing_constant(w, c) {
            Ok(l) => log_k.push(l),
            Err(NollikError::Underflow(_)) => log_k.push(f64::NEG_INFINITY),
            Err(e) => return Err(e),
        }
    }
    let log_terms: Vec<f64> = local
        .weights
        .iter()
        .zip(&log_k)
        .map(|(p, lk)| p.ln() + lk)
        .collect();
    let log_total = log_sum_exp(&log_terms);
    if !log_total.is_finite() {
        return Err(NollikError::Underflow(
            "every component normalizing constant underflowed".into(),
        ));
    }
    let mut pi: Vec<f64> = log_terms.iter().map(|l| (l - log_total).exp()).collect();
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);
    // components whose K underflowed carry zero mass; keep a finite placeholder
    let log_normconsts = log_k
        .iter()
        .map(|l| if l.is_finite() { *l } else { 0.0 })
        .collect();
    Ok(MixtureDensity {
        weights: pi,
        components: local.components.clone(),
        weight: Some(*w),
        log_normconsts,
    })
}

/// Direct evaluation of `w(z) f_local(z) / K̃`, the left-hand side of the
/// reparameterization identity.
pub fn weighted_local_density(local: &MixtureDensity, w: &WeightFunction, z: f64) -> Result<f64> {
    let k_tilde: f64 = local
        .weights
        .iter()
        .zip(&local.components)
        .map(|(p, c)| normalizing_constant(w, c).map(|k| p * k))
        .sum::<Result<f64>>()?;
    Ok(w.value(z) * local.density(z) / k_tilde)
}

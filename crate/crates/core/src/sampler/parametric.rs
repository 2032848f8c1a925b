//! Parametric sampler: null `N(μ₀, σ₀²)` and a two-component weighted
//! alternative with a negative and a positive Gaussian kernel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    log_inv_gamma, sample_beta, tilted_log_target, sample_inv_gamma, sample_log_categorical, validate_data,
    AdaptiveMhState, ChainTrace, Controls, DrawRecord, ModelKind, Nig, SuffStats, TraceMeta,
};
use crate::error::{invalid, NollikError, Result};
use crate::weightcore::{log_normalizing_constant, GaussianComponent, WeightFunction, WeightKind};

pub const BLOCK_COMP1: usize = 0;
pub const BLOCK_COMP2: usize = 1;
pub const BLOCK_XI: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub a_rho: f64,
    pub b_rho: f64,
    pub a_alpha: f64,
    pub b_alpha: f64,
    pub m0: f64,
    pub kappa0: f64,
    pub a0: f64,
    pub b0: f64,
    pub m1: f64,
    pub m2: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub a_xi: f64,
    pub b_xi: f64,
    pub k: u32,
    pub weight_kind: WeightKind,
    /// Half-width of the indicator weight.
    pub delta: f64,
    /// Hold ξ at this value instead of sampling it.
    pub xi_fixed: Option<f64>,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            a_rho: 1.0,
            b_rho: 9.0,
            a_alpha: 1.0,
            b_alpha: 1.0,
            m0: 0.0,
            kappa0: 100.0,
            a0: 10.0,
            b0: 10.0,
            m1: -3.0,
            m2: 3.0,
            kappa1: 1.0,
            kappa2: 1.0,
            a1: 2.0,
            a2: 2.0,
            b1: 5.0,
            b2: 5.0,
            a_xi: 20.0,
            b_xi: 57.0,
            k: 2,
            weight_kind: WeightKind::W1,
            delta: 0.0,
            xi_fixed: None,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite and > 0, got {v}")))
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a_rho", self.a_rho),
            ("b_rho", self.b_rho),
            ("a_alpha", self.a_alpha),
            ("b_alpha", self.b_alpha),
            ("kappa0", self.kappa0),
            ("a0", self.a0),
            ("b0", self.b0),
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("a1", self.a1),
            ("a2", self.a2),
            ("b1", self.b1),
            ("b2", self.b2),
            ("a_xi", self.a_xi),
            ("b_xi", self.b_xi),
        ] {
            positive(name, v)?;
        }
        if !self.m0.is_finite() {
            return Err(invalid("m0 must be finite"));
        }
        if !(self.m1 < 0.0 && self.m2 > 0.0) || !self.m1.is_finite() || !self.m2.is_finite() {
            return Err(invalid(format!(
                "alternative prior means need m1 < 0 < m2, got m1={} m2={}",
                self.m1, self.m2
            )));
        }
        if let Some(xi) = self.xi_fixed {
            positive("xi", xi)?;
        }
        self.weight(self.xi_fixed.unwrap_or(1.0)).map(|_| ())
    }

    pub fn weight(&self, xi: f64) -> Result<WeightFunction> {
        WeightFunction::new(self.weight_kind, xi, self.k, self.delta)
    }

    pub fn null_prior(&self) -> Nig {
        Nig {
            m: self.m0,
            kappa: self.kappa0,
            a: self.a0,
            b: self.b0,
        }
    }

    /// Prior of component `j ∈ {1, 2}` before the sign restriction.
    pub fn alt_prior(&self, j: usize) -> Nig {
        match j {
            1 => Nig {
                m: self.m1,
                kappa: self.kappa1,
                a: self.a1,
                b: self.b1,
            },
            _ => Nig {
                m: self.m2,
                kappa: self.kappa2,
                a: self.a2,
                b: self.b2,
            },
        }
    }

    /// Whether ξ is a sampled parameter.
    pub fn samples_xi(&self) -> bool {
        matches!(self.weight_kind, WeightKind::W1 | WeightKind::W2) && self.xi_fixed.is_none()
    }
}

/// Full parameter vector of one parametric chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamState {
    pub rho: f64,
    pub alpha: f64,
    pub mu0: f64,
    pub sigma20: f64,
    pub comp1: GaussianComponent,
    pub comp2: GaussianComponent,
    pub xi: f64,
    pub weight: WeightFunction,
    /// `λ_i ∈ {0, 1}`
    pub lambda: Vec<u8>,
    /// `γ_i ∈ {0, 1, 2}`
    pub gamma: Vec<u8>,
    pub log_k1: f64,
    pub log_k2: f64,
    /// `log w(z_i; ξ)` at the current ξ.
    pub log_w: Vec<f64>,
}

impl ParamState {
    pub fn k1(&self) -> f64 {
        self.log_k1.exp()
    }

    pub fn k2(&self) -> f64 {
        self.log_k2.exp()
    }

    pub fn null(&self) -> GaussianComponent {
        GaussianComponent {
            mu: self.mu0,
            sigma2: self.sigma20,
        }
    }

    pub fn component(&self, j: usize) -> GaussianComponent {
        if j == 1 {
            self.comp1
        } else {
            self.comp2
        }
    }

    pub fn n_relevant(&self) -> usize {
        self.lambda.iter().filter(|l| **l == 1).count()
    }

    /// `(n₁₁, n₁₂)`
    pub fn component_counts(&self) -> (usize, usize) {
        let mut c = (0, 0);
        for g in &self.gamma {
            match g {
                1 => c.0 += 1,
                2 => c.1 += 1,
                _ => {}
            }
        }
        c
    }

    fn record(&self) -> DrawRecord {
        DrawRecord {
            rho: self.rho,
            mu0: self.mu0,
            sigma20: self.sigma20,
            xi: self.xi,
            alpha: Some(self.alpha),
            conc: None,
            weights: vec![1.0 - self.alpha, self.alpha],
            components: vec![self.comp1, self.comp2],
            log_normconsts: vec![self.log_k1, self.log_k2],
        }
    }
}

fn sign_ok(j: usize, mu: f64) -> bool {
    if j == 1 {
        mu < 0.0
    } else {
        mu > 0.0
    }
}

fn draw_alt_from_prior<R: Rng + ?Sized>(
    hp: &Hyperparameters,
    j: usize,
    w: &WeightFunction,
    rng: &mut R,
) -> Result<(GaussianComponent, f64)> {
    let prior = hp.alt_prior(j);
    let mut last = None;
    for _ in 0..1000 {
        let mut c = prior.sample(rng);
        c.mu = if j == 1 { -c.mu.abs() } else { c.mu.abs() };
        if c.mu == 0.0 {
            continue;
        }
        match log_normalizing_constant(w, &c) {
            Ok(lk) => return Ok((c, lk)),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| invalid("could not draw an initial alternative component")))
}

/// Initialize every group-specific parameter given a shared `ρ`.
pub(crate) fn init_group<R: Rng + ?Sized>(
    z: &[f64],
    hp: &Hyperparameters,
    rho: f64,
    rng: &mut R,
) -> Result<ParamState> {
    validate_data(z)?;
    hp.validate()?;
    let alpha = sample_beta(hp.a_alpha, hp.b_alpha, rng);
    let null = hp.null_prior().sample(rng);
    let xi = match hp.xi_fixed {
        Some(x) => x,
        None if hp.samples_xi() => sample_inv_gamma(hp.a_xi, hp.b_xi, rng),
        None => 1.0,
    };
    let weight = hp.weight(xi)?;
    let (comp1, log_k1) = draw_alt_from_prior(hp, 1, &weight, rng)?;
    let (comp2, log_k2) = draw_alt_from_prior(hp, 2, &weight, rng)?;
    let mut state = ParamState {
        rho,
        alpha,
        mu0: null.mu,
        sigma20: null.sigma2,
        comp1,
        comp2,
        xi: weight.xi(),
        weight,
        lambda: vec![0; z.len()],
        gamma: vec![0; z.len()],
        log_k1,
        log_k2,
        log_w: z.iter().map(|x| weight.log_value(*x)).collect(),
    };
    step_labels(&mut state, z, rng)?;
    Ok(state)
}

/// Draw parameters from the priors (component means reflected onto their
/// sign constraints) followed by one label pass.
pub fn init_state(z: &[f64], hp: &Hyperparameters, seed: u64) -> Result<ParamState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_state_with(z, hp, &mut rng)
}

pub fn init_state_with<R: Rng + ?Sized>(
    z: &[f64],
    hp: &Hyperparameters,
    rng: &mut R,
) -> Result<ParamState> {
    hp.validate()?;
    let rho = sample_beta(hp.a_rho, hp.b_rho, rng);
    init_group(z, hp, rho, rng)
}

/// `ρ ~ Beta(a_ρ + Σλ, b_ρ + N − Σλ)`.
pub fn step_rho<R: Rng + ?Sized>(state: &mut ParamState, hp: &Hyperparameters, rng: &mut R) {
    let n1 = state.n_relevant() as f64;
    let n = state.lambda.len() as f64;
    state.rho = sample_beta(hp.a_rho + n1, hp.b_rho + n - n1, rng);
}

/// Unnormalized log masses of `(λ, γ) = (0, 0), (1, 1), (1, 2)` for one observation.
pub fn label_log_masses(state: &ParamState, z: f64, log_w: f64) -> [f64; 3] {
    let base = state.rho.ln() + log_w;
    [
        (1.0 - state.rho).ln() + state.null().logpdf(z),
        base + (1.0 - state.alpha).ln() + state.comp1.logpdf(z) - state.log_k1,
        base + state.alpha.ln() + state.comp2.logpdf(z) - state.log_k2,
    ]
}

/// Normalized label probabilities for one observation.
pub fn label_probabilities(state: &ParamState, z: f64) -> [f64; 3] {
    let lm = label_log_masses(state, z, state.weight.log_value(z));
    let max = lm.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = lm.map(|l| (l - max).exp());
    let s: f64 = e.iter().sum();
    e.map(|x| x / s)
}

/// Joint update of `(λ_i, γ_i)` for every observation.
pub fn step_labels<R: Rng + ?Sized>(state: &mut ParamState, z: &[f64], rng: &mut R) -> Result<()> {
    // hoist the per-component constants out of the loop
    let c0 = (1.0 - state.rho).ln() - 0.5 * (2.0 * std::f64::consts::PI * state.sigma20).ln();
    let i0 = 0.5 / state.sigma20;
    let base = state.rho.ln();
    let c1 = base + (1.0 - state.alpha).ln() - state.log_k1
        - 0.5 * (2.0 * std::f64::consts::PI * state.comp1.sigma2).ln();
    let i1 = 0.5 / state.comp1.sigma2;
    let c2 = base + state.alpha.ln() - state.log_k2
        - 0.5 * (2.0 * std::f64::consts::PI * state.comp2.sigma2).ln();
    let i2 = 0.5 / state.comp2.sigma2;
    let (m0, m1, m2) = (state.mu0, state.comp1.mu, state.comp2.mu);
    for (i, &x) in z.iter().enumerate() {
        let lw = state.log_w[i];
        let lm = [
            c0 - (x - m0).powi(2) * i0,
            c1 + lw - (x - m1).powi(2) * i1,
            c2 + lw - (x - m2).powi(2) * i2,
        ];
        let g = sample_log_categorical(&lm, rng).ok_or_else(|| {
            NollikError::Underflow(format!("all label masses vanish for observation {i} (z = {x})"))
        })?;
        state.gamma[i] = g as u8;
        state.lambda[i] = u8::from(g != 0);
    }
    Ok(())
}

/// `α ~ Beta(a_α + n₁₂, b_α + n₁₁)`, with `α = P(γ = 2 | λ = 1)`.
pub fn step_alpha<R: Rng + ?Sized>(state: &mut ParamState, hp: &Hyperparameters, rng: &mut R) {
    let (n11, n12) = state.component_counts();
    state.alpha = sample_beta(hp.a_alpha + n12 as f64, hp.b_alpha + n11 as f64, rng);
}

fn stats_where(z: &[f64], gamma: &[u8], label: u8) -> SuffStats {
    SuffStats::from_iter(
        z.iter()
            .zip(gamma)
            .filter(move |(_, g)| **g == label)
            .map(|(x, _)| *x),
    )
}

/// Conjugate null update from the observations with `λ_i = 0`.
pub fn null_posterior(state: &ParamState, hp: &Hyperparameters, z: &[f64]) -> Nig {
    hp.null_prior().posterior(&stats_where(z, &state.gamma, 0))
}

pub fn step_null<R: Rng + ?Sized>(state: &mut ParamState, hp: &Hyperparameters, z: &[f64], rng: &mut R) {
    let c = null_posterior(state, hp, z).sample(rng);
    state.mu0 = c.mu;
    state.sigma20 = c.sigma2;
}

/// Random-walk step on `(μ_j, log σ_j²)` targeting the conjugate posterior
/// tilted by `K_j^{−n₁ⱼ}`, restricted to the sign constraint.
pub fn step_alt_component<R: Rng + ?Sized>(
    state: &mut ParamState,
    hp: &Hyperparameters,
    z: &[f64],
    j: usize,
    mh: &mut AdaptiveMhState,
    rng: &mut R,
) {
    let block = if j == 1 { BLOCK_COMP1 } else { BLOCK_COMP2 };
    let stats = stats_where(z, &state.gamma, j as u8);
    let post = hp.alt_prior(j).posterior(&stats);
    let current = state.component(j);
    let sd = mh.sd(block);
    let e1: f64 = StandardNormal.sample(rng);
    let e2: f64 = StandardNormal.sample(rng);
    let proposal = GaussianComponent {
        mu: current.mu + sd * e1,
        sigma2: (current.sigma2.ln() + sd * e2).exp(),
    };
    let u: f64 = rng.random();
    if !sign_ok(j, proposal.mu) || !(proposal.sigma2 > 0.0 && proposal.sigma2.is_finite()) {
        mh.record(block, false);
        return;
    }
    let log_k_new = match log_normalizing_constant(&state.weight, &proposal) {
        Ok(l) => l,
        Err(_) => {
            mh.record(block, false);
            return;
        }
    };
    let log_k_old = if j == 1 { state.log_k1 } else { state.log_k2 };
    let ratio = tilted_log_target(&post, stats.n, &proposal, log_k_new)
        - tilted_log_target(&post, stats.n, &current, log_k_old);
    let accept = u.ln() < ratio;
    if accept {
        if j == 1 {
            state.comp1 = proposal;
            state.log_k1 = log_k_new;
        } else {
            state.comp2 = proposal;
            state.log_k2 = log_k_new;
        }
    }
    mh.record(block, accept);
}

/// Log target of ξ in `log ξ` coordinates, up to a constant.
fn xi_log_target(
    hp: &Hyperparameters,
    xi: f64,
    sum_log_w: f64,
    counts: (usize, usize),
    log_k: (f64, f64),
) -> f64 {
    log_inv_gamma(xi, hp.a_xi, hp.b_xi) + sum_log_w
        - counts.0 as f64 * log_k.0
        - counts.1 as f64 * log_k.1
        + xi.ln()
}

/// Random-walk step on `log ξ`; a no-op when ξ is fixed or unused by the weight.
pub fn step_xi<R: Rng + ?Sized>(
    state: &mut ParamState,
    hp: &Hyperparameters,
    z: &[f64],
    mh: &mut AdaptiveMhState,
    rng: &mut R,
) {
    if !hp.samples_xi() {
        return;
    }
    let sd = mh.sd(BLOCK_XI);
    let e: f64 = StandardNormal.sample(rng);
    let xi_new = (state.xi.ln() + sd * e).exp();
    let u: f64 = rng.random();
    let w_new = match state.weight.with_xi(xi_new) {
        Ok(w) => w,
        Err(_) => {
            mh.record(BLOCK_XI, false);
            return;
        }
    };
    let (lk1, lk2) = match (
        log_normalizing_constant(&w_new, &state.comp1),
        log_normalizing_constant(&w_new, &state.comp2),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        _ => {
            mh.record(BLOCK_XI, false);
            return;
        }
    };
    let counts = state.component_counts();
    let mut sum_old = 0.0;
    let mut sum_new = 0.0;
    for (i, x) in z.iter().enumerate() {
        if state.lambda[i] == 1 {
            sum_old += state.log_w[i];
            sum_new += w_new.log_value(*x);
        }
    }
    let ratio = xi_log_target(hp, xi_new, sum_new, counts, (lk1, lk2))
        - xi_log_target(hp, state.xi, sum_old, counts, (state.log_k1, state.log_k2));
    let accept = ratio.is_finite() && u.ln() < ratio;
    if accept {
        state.xi = xi_new;
        state.weight = w_new;
        state.log_k1 = lk1;
        state.log_k2 = lk2;
        for (lw, x) in state.log_w.iter_mut().zip(z) {
            *lw = w_new.log_value(*x);
        }
    }
    mh.record(BLOCK_XI, accept);
}

/// One sweep of the group-specific updates (everything except ρ).
fn sweep_group<R: Rng + ?Sized>(
    state: &mut ParamState,
    hp: &Hyperparameters,
    z: &[f64],
    mh: &mut AdaptiveMhState,
    rng: &mut R,
) -> Result<()> {
    step_labels(state, z, rng)?;
    step_alpha(state, hp, rng);
    step_null(state, hp, z, rng);
    step_alt_component(state, hp, z, 1, mh, rng);
    step_alt_component(state, hp, z, 2, mh, rng);
    step_xi(state, hp, z, mh, rng);
    mh.tick();
    Ok(())
}

/// Chains of a grouped fit: one trace per group, all sharing the same ρ draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedTrace {
    pub groups: Vec<ChainTrace>,
}

impl GroupedTrace {
    pub fn rho_draws(&self) -> Vec<f64> {
        self.groups[0].rho_draws()
    }
}

fn block_names() -> Vec<String> {
    vec!["comp1".into(), "comp2".into(), "xi".into()]
}

/// Run one sampler per group with a single ρ updated from the pooled labels.
pub fn run_grouped(groups: &[&[f64]], hp: &Hyperparameters, controls: &Controls) -> Result<GroupedTrace> {
    controls.validate()?;
    hp.validate()?;
    if groups.is_empty() {
        return Err(NollikError::EmptyData("no groups".into()));
    }
    for (g, z) in groups.iter().enumerate() {
        validate_data(z).map_err(|e| match e {
            NollikError::EmptyData(m) => NollikError::EmptyData(format!("group {g}: {m}")),
            other => other,
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(controls.seed);
    let rho0 = sample_beta(hp.a_rho, hp.b_rho, &mut rng);
    let mut states = Vec::with_capacity(groups.len());
    for z in groups {
        states.push(init_group(z, hp, rho0, &mut rng)?);
    }
    let mut mhs = vec![AdaptiveMhState::with_default_scales(3); groups.len()];
    let n_tot: usize = groups.iter().map(|z| z.len()).sum();
    let mut records: Vec<Vec<DrawRecord>> = vec![Vec::with_capacity(controls.n_records()); groups.len()];
    let mut lambda_sums: Vec<Vec<u64>> = groups.iter().map(|z| vec![0; z.len()]).collect();

    for t in 1..=controls.iterations {
        let n1: usize = states.iter().map(|s| s.n_relevant()).sum();
        let rho = sample_beta(hp.a_rho + n1 as f64, hp.b_rho + (n_tot - n1) as f64, &mut rng);
        for (g, z) in groups.iter().enumerate() {
            states[g].rho = rho;
            sweep_group(&mut states[g], hp, z, &mut mhs[g], &mut rng)?;
        }
        if controls.retains(t) {
            for g in 0..groups.len() {
                records[g].push(states[g].record());
                for (acc, l) in lambda_sums[g].iter_mut().zip(&states[g].lambda) {
                    *acc += *l as u64;
                }
            }
        }
    }

    let weight = hp.weight(1.0)?;
    let groups = records
        .into_iter()
        .zip(lambda_sums)
        .zip(mhs)
        .zip(groups)
        .map(|(((records, lambda_sums), mh), z)| ChainTrace {
            meta: TraceMeta {
                model: ModelKind::Parametric,
                weight_kind: hp.weight_kind,
                k: weight.k(),
                delta: weight.delta(),
                controls: *controls,
                n_obs: z.len(),
                blocks: block_names(),
                acceptance: mh.acceptance_rates(),
            },
            records,
            lambda_sums,
        })
        .collect();
    Ok(GroupedTrace { groups })
}

/// Single-group chain.
pub fn run_chain(z: &[f64], hp: &Hyperparameters, controls: &Controls) -> Result<ChainTrace> {
    let mut g = run_grouped(&[z], hp, controls)?;
    Ok(g.groups.remove(0))
}

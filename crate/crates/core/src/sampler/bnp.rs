//! Blocked Gibbs sampler for the truncated stick-breaking mixture of
//! weighted Gaussian kernels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::parametric::Hyperparameters;
use super::{
    log_inv_gamma, sample_beta, sample_gamma, sample_inv_gamma, sample_log_categorical,
    tilted_log_target, validate_data, AdaptiveMhState, ChainTrace, Controls, DrawRecord, ModelKind,
    Nig, SuffStats, TraceMeta,
};
use crate::error::{invalid, NollikError, Result};
use crate::weightcore::{log_normalizing_constant, GaussianComponent, WeightFunction, WeightKind};

/// Largest stick allowed, keeping `log(1 − u)` finite.
const STICK_MAX: f64 = 1.0 - 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BnpHyperparameters {
    /// Truncation level.
    pub j: usize,
    pub m_g: f64,
    pub kappa_g: f64,
    pub a_g: f64,
    pub b_g: f64,
    /// Gamma prior (shape, rate) of the concentration.
    pub alpha_a: f64,
    pub beta_a: f64,
    pub a_rho: f64,
    pub b_rho: f64,
    pub m0: f64,
    pub kappa0: f64,
    pub a0: f64,
    pub b0: f64,
    pub a_xi: f64,
    pub b_xi: f64,
    pub k: u32,
    pub weight_kind: WeightKind,
    pub delta: f64,
    pub xi_fixed: Option<f64>,
}

impl Default for BnpHyperparameters {
    fn default() -> Self {
        let p = Hyperparameters::default();
        Self {
            j: 30,
            m_g: 0.0,
            kappa_g: 0.01,
            a_g: 3.0,
            b_g: 1.0,
            alpha_a: 1.0,
            beta_a: 1.0,
            a_rho: p.a_rho,
            b_rho: p.b_rho,
            m0: p.m0,
            kappa0: p.kappa0,
            a0: p.a0,
            b0: p.b0,
            a_xi: p.a_xi,
            b_xi: p.b_xi,
            k: p.k,
            weight_kind: p.weight_kind,
            delta: p.delta,
            xi_fixed: None,
        }
    }
}

impl BnpHyperparameters {
    pub fn validate(&self) -> Result<()> {
        if self.j == 0 || self.j > u16::MAX as usize {
            return Err(invalid(format!("truncation level J must be in 1..=65535, got {}", self.j)));
        }
        Nig::new(self.m_g, self.kappa_g, self.a_g, self.b_g)?;
        Nig::new(self.m0, self.kappa0, self.a0, self.b0)?;
        for (name, v) in [
            ("alpha_a", self.alpha_a),
            ("beta_a", self.beta_a),
            ("a_rho", self.a_rho),
            ("b_rho", self.b_rho),
            ("a_xi", self.a_xi),
            ("b_xi", self.b_xi),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if let Some(xi) = self.xi_fixed {
            if !(xi.is_finite() && xi > 0.0) {
                return Err(invalid(format!("xi must be > 0, got {xi}")));
            }
        }
        self.weight(self.xi_fixed.unwrap_or(1.0)).map(|_| ())
    }

    /// Prior mass left for the last stick, `(E[a] / (1 + E[a]))^{J−1}`.
    pub fn truncation_tail_mass(&self) -> f64 {
        let ea = self.alpha_a / self.beta_a;
        (ea / (1.0 + ea)).powi(self.j as i32 - 1)
    }

    pub fn weight(&self, xi: f64) -> Result<WeightFunction> {
        WeightFunction::new(self.weight_kind, xi, self.k, self.delta)
    }

    pub fn base(&self) -> Nig {
        Nig {
            m: self.m_g,
            kappa: self.kappa_g,
            a: self.a_g,
            b: self.b_g,
        }
    }

    pub fn null_prior(&self) -> Nig {
        Nig {
            m: self.m0,
            kappa: self.kappa0,
            a: self.a0,
            b: self.b0,
        }
    }

    pub fn samples_xi(&self) -> bool {
        matches!(self.weight_kind, WeightKind::W1 | WeightKind::W2) && self.xi_fixed.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnpState {
    pub rho: f64,
    pub mu0: f64,
    pub sigma20: f64,
    pub atoms: Vec<GaussianComponent>,
    pub log_k: Vec<f64>,
    /// `u_1, …, u_{J−1}`
    pub sticks: Vec<f64>,
    pub omega: Vec<f64>,
    pub conc: f64,
    pub xi: f64,
    pub weight: WeightFunction,
    pub lambda: Vec<u8>,
    /// `0` for null, `j ∈ 1..=J` for atom `j`.
    pub gamma: Vec<u16>,
    pub log_w: Vec<f64>,
}

impl BnpState {
    pub fn null(&self) -> GaussianComponent {
        GaussianComponent {
            mu: self.mu0,
            sigma2: self.sigma20,
        }
    }

    pub fn n_relevant(&self) -> usize {
        self.lambda.iter().filter(|l| **l == 1).count()
    }

    /// `n₁ⱼ` for `j = 1..=J` (index `j − 1`).
    pub fn cluster_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.atoms.len()];
        for g in &self.gamma {
            if *g > 0 {
                c[*g as usize - 1] += 1;
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
            alpha: None,
            conc: Some(self.conc),
            weights: self.omega.clone(),
            components: self.atoms.clone(),
            log_normconsts: self.log_k.clone(),
        }
    }
}

/// `ω_j = u_j ∏_{m<j} (1 − u_m)`, the last weight taking what is left.
pub fn stick_weights(sticks: &[f64]) -> Vec<f64> {
    let mut omega = Vec::with_capacity(sticks.len() + 1);
    let mut rest = 1.0;
    for u in sticks {
        omega.push(rest * u);
        rest *= 1.0 - u;
    }
    omega.push(rest);
    omega
}

fn draw_atom<R: Rng + ?Sized>(
    base: &Nig,
    w: &WeightFunction,
    rng: &mut R,
) -> Option<(GaussianComponent, f64)> {
    for _ in 0..100 {
        let c = base.sample(rng);
        if let Ok(lk) = log_normalizing_constant(w, &c) {
            return Some((c, lk));
        }
    }
    None
}

pub fn init_state_bnp(z: &[f64], hp: &BnpHyperparameters, seed: u64) -> Result<BnpState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_state_bnp_with(z, hp, &mut rng)
}

pub fn init_state_bnp_with<R: Rng + ?Sized>(
    z: &[f64],
    hp: &BnpHyperparameters,
    rng: &mut R,
) -> Result<BnpState> {
    validate_data(z)?;
    hp.validate()?;
    let rho = sample_beta(hp.a_rho, hp.b_rho, rng);
    let null = hp.null_prior().sample(rng);
    let conc = sample_gamma(hp.alpha_a, hp.beta_a, rng);
    let sticks: Vec<f64> = (1..hp.j)
        .map(|_| sample_beta(1.0, conc, rng).min(STICK_MAX))
        .collect();
    let xi = match hp.xi_fixed {
        Some(x) => x,
        None if hp.samples_xi() => sample_inv_gamma(hp.a_xi, hp.b_xi, rng),
        None => 1.0,
    };
    let weight = hp.weight(xi)?;
    let base = hp.base();
    let mut atoms = Vec::with_capacity(hp.j);
    let mut log_k = Vec::with_capacity(hp.j);
    for _ in 0..hp.j {
        let (c, lk) = draw_atom(&base, &weight, rng).ok_or_else(|| {
            NollikError::Underflow("could not draw an atom with a representable normalizing constant".into())
        })?;
        atoms.push(c);
        log_k.push(lk);
    }
    let mut state = BnpState {
        rho,
        mu0: null.mu,
        sigma20: null.sigma2,
        omega: stick_weights(&sticks),
        atoms,
        log_k,
        sticks,
        conc,
        xi: weight.xi(),
        weight,
        lambda: vec![0; z.len()],
        gamma: vec![0; z.len()],
        log_w: z.iter().map(|x| weight.log_value(*x)).collect(),
    };
    step_labels_bnp(&mut state, z, rng)?;
    Ok(state)
}

pub fn step_null_bnp<R: Rng + ?Sized>(state: &mut BnpState, hp: &BnpHyperparameters, z: &[f64], rng: &mut R) {
    let stats = SuffStats::from_iter(
        z.iter()
            .zip(&state.gamma)
            .filter(|(_, g)| **g == 0)
            .map(|(x, _)| *x),
    );
    let c = hp.null_prior().posterior(&stats).sample(rng);
    state.mu0 = c.mu;
    state.sigma20 = c.sigma2;
}

/// Labels over the null and the `J` weighted kernels.
pub fn step_labels_bnp<R: Rng + ?Sized>(state: &mut BnpState, z: &[f64], rng: &mut R) -> Result<()> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let jn = state.atoms.len();
    let c0 = (1.0 - state.rho).ln() - 0.5 * (two_pi * state.sigma20).ln();
    let i0 = 0.5 / state.sigma20;
    let base = state.rho.ln();
    let consts: Vec<(f64, f64, f64)> = state
        .atoms
        .iter()
        .zip(&state.omega)
        .zip(&state.log_k)
        .map(|((c, om), lk)| (base + om.ln() - lk - 0.5 * (two_pi * c.sigma2).ln(), 0.5 / c.sigma2, c.mu))
        .collect();
    let mut lm = vec![0.0; jn + 1];
    for (i, &x) in z.iter().enumerate() {
        let lw = state.log_w[i];
        lm[0] = c0 - (x - state.mu0).powi(2) * i0;
        for (slot, (c, inv, mu)) in lm[1..].iter_mut().zip(&consts) {
            *slot = c + lw - (x - mu).powi(2) * inv;
        }
        let g = sample_log_categorical(&lm, rng).ok_or_else(|| {
            NollikError::Underflow(format!("all label masses vanish for observation {i} (z = {x})"))
        })?;
        state.gamma[i] = g as u16;
        state.lambda[i] = u8::from(g != 0);
    }
    Ok(())
}

/// `u_j ~ Beta(1 + n₁ⱼ, a + Σ_{l>j} n₁ₗ)`, then recompute the weights.
pub fn step_sticks<R: Rng + ?Sized>(state: &mut BnpState, rng: &mut R) {
    let counts = state.cluster_counts();
    let mut tail: usize = counts.iter().sum();
    for (j, u) in state.sticks.iter_mut().enumerate() {
        tail -= counts[j];
        *u = sample_beta(1.0 + counts[j] as f64, state.conc + tail as f64, rng).min(STICK_MAX);
    }
    state.omega = stick_weights(&state.sticks);
}

/// Beta parameters of every stick given the cluster counts.
pub fn stick_parameters(counts: &[usize], conc: f64) -> Vec<(f64, f64)> {
    let mut tail: usize = counts.iter().sum();
    counts[..counts.len().saturating_sub(1)]
        .iter()
        .map(|n| {
            tail -= n;
            (1.0 + *n as f64, conc + tail as f64)
        })
        .collect()
}

/// Shape and rate of the concentration's full conditional.
pub fn concentration_parameters(sticks: &[f64], hp: &BnpHyperparameters) -> (f64, f64) {
    let s: f64 = sticks.iter().map(|u| (-u).ln_1p()).sum();
    (hp.alpha_a + sticks.len() as f64, hp.beta_a - s)
}

/// `a ~ Gamma(α_a + J − 1, β_a − Σ log(1 − u_j))`.
pub fn step_concentration<R: Rng + ?Sized>(state: &mut BnpState, hp: &BnpHyperparameters, rng: &mut R) {
    let (shape, rate) = concentration_parameters(&state.sticks, hp);
    state.conc = sample_gamma(shape, rate, rng);
}

/// Per atom: refresh from the base measure when empty, otherwise a
/// random-walk step on `(μ, log σ²)` targeting the tilted conjugate posterior.
pub fn step_atoms<R: Rng + ?Sized>(
    state: &mut BnpState,
    hp: &BnpHyperparameters,
    z: &[f64],
    mh: &mut AdaptiveMhState,
    rng: &mut R,
) {
    let jn = state.atoms.len();
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); jn];
    for (x, g) in z.iter().zip(&state.gamma) {
        if *g > 0 {
            buckets[*g as usize - 1].push(*x);
        }
    }
    let base = hp.base();
    for j in 0..jn {
        let data = &buckets[j];
        if data.is_empty() {
            if let Some((c, lk)) = draw_atom(&base, &state.weight, rng) {
                state.atoms[j] = c;
                state.log_k[j] = lk;
            }
            continue;
        }
        let stats = SuffStats::from_iter(data.iter().copied());
        let post = base.posterior(&stats);
        let current = state.atoms[j];
        let sd = mh.sd(j);
        let e1: f64 = StandardNormal.sample(rng);
        let e2: f64 = StandardNormal.sample(rng);
        let proposal = GaussianComponent {
            mu: current.mu + sd * e1,
            sigma2: (current.sigma2.ln() + sd * e2).exp(),
        };
        let u: f64 = rng.random();
        if !(proposal.sigma2 > 0.0 && proposal.sigma2.is_finite()) {
            mh.record(j, false);
            continue;
        }
        let Ok(lk_new) = log_normalizing_constant(&state.weight, &proposal) else {
            mh.record(j, false);
            continue;
        };
        let ratio = tilted_log_target(&post, stats.n, &proposal, lk_new)
            - tilted_log_target(&post, stats.n, &current, state.log_k[j]);
        let accept = u.ln() < ratio;
        if accept {
            state.atoms[j] = proposal;
            state.log_k[j] = lk_new;
        }
        mh.record(j, accept);
    }
}

/// Random-walk step on `log ξ`; the last block of `mh`.
pub fn step_xi_bnp<R: Rng + ?Sized>(
    state: &mut BnpState,
    hp: &BnpHyperparameters,
    z: &[f64],
    mh: &mut AdaptiveMhState,
    rng: &mut R,
) {
    if !hp.samples_xi() {
        return;
    }
    let block = state.atoms.len();
    let e: f64 = StandardNormal.sample(rng);
    let xi_new = (state.xi.ln() + mh.sd(block) * e).exp();
    let u: f64 = rng.random();
    let Ok(w_new) = state.weight.with_xi(xi_new) else {
        mh.record(block, false);
        return;
    };
    let counts = state.cluster_counts();
    let mut lk_new = vec![f64::NAN; counts.len()];
    let mut log_ratio = log_inv_gamma(xi_new, hp.a_xi, hp.b_xi) + xi_new.ln()
        - log_inv_gamma(state.xi, hp.a_xi, hp.b_xi)
        - state.xi.ln();
    for (j, n) in counts.iter().enumerate() {
        if *n > 0 {
            let Ok(lk) = log_normalizing_constant(&w_new, &state.atoms[j]) else {
                mh.record(block, false);
                return;
            };
            lk_new[j] = lk;
            log_ratio -= *n as f64 * (lk - state.log_k[j]);
        }
    }
    for (i, x) in z.iter().enumerate() {
        if state.lambda[i] == 1 {
            log_ratio += w_new.log_value(*x) - state.log_w[i];
        }
    }
    if !(log_ratio.is_finite() && u.ln() < log_ratio) {
        mh.record(block, false);
        return;
    }
    // every atom needs a representable constant at the new ξ
    for j in 0..counts.len() {
        if lk_new[j].is_nan() {
            match log_normalizing_constant(&w_new, &state.atoms[j]) {
                Ok(lk) => lk_new[j] = lk,
                Err(_) => {
                    mh.record(block, false);
                    return;
                }
            }
        }
    }
    state.xi = xi_new;
    state.weight = w_new;
    state.log_k = lk_new;
    for (lw, x) in state.log_w.iter_mut().zip(z) {
        *lw = w_new.log_value(*x);
    }
    mh.record(block, true);
}

pub fn step_rho_bnp<R: Rng + ?Sized>(state: &mut BnpState, hp: &BnpHyperparameters, rng: &mut R) {
    let n1 = state.n_relevant() as f64;
    let n = state.lambda.len() as f64;
    state.rho = sample_beta(hp.a_rho + n1, hp.b_rho + n - n1, rng);
}

pub fn run_chain_bnp(z: &[f64], hp: &BnpHyperparameters, controls: &Controls) -> Result<ChainTrace> {
    controls.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(controls.seed);
    let mut state = init_state_bnp_with(z, hp, &mut rng)?;
    let mut mh = AdaptiveMhState::with_default_scales(hp.j + 1);
    let mut records = Vec::with_capacity(controls.n_records());
    let mut lambda_sums = vec![0u64; z.len()];
    for t in 1..=controls.iterations {
        step_null_bnp(&mut state, hp, z, &mut rng);
        step_labels_bnp(&mut state, z, &mut rng)?;
        step_sticks(&mut state, &mut rng);
        step_atoms(&mut state, hp, z, &mut mh, &mut rng);
        step_xi_bnp(&mut state, hp, z, &mut mh, &mut rng);
        step_rho_bnp(&mut state, hp, &mut rng);
        step_concentration(&mut state, hp, &mut rng);
        mh.tick();
        if controls.retains(t) {
            records.push(state.record());
            for (acc, l) in lambda_sums.iter_mut().zip(&state.lambda) {
                *acc += *l as u64;
            }
        }
    }
    let mut blocks: Vec<String> = (1..=hp.j).map(|j| format!("atom{j}")).collect();
    blocks.push("xi".into());
    Ok(ChainTrace {
        meta: TraceMeta {
            model: ModelKind::Bnp,
            weight_kind: hp.weight_kind,
            k: state.weight.k(),
            delta: state.weight.delta(),
            controls: *controls,
            n_obs: z.len(),
            blocks,
            acceptance: mh.acceptance_rates(),
        },
        records,
        lambda_sums,
    })
}

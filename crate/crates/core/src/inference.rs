//! Post-processing of chains: relevance probabilities, averaged densities,
//! local false discovery rates, BFDR thresholds and acceptance regions.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, NollikError, Result};
use crate::numerics::norm_pdf;
use crate::sampler::parametric::{run_grouped, GroupedTrace, Hyperparameters};
use crate::sampler::{ChainTrace, Controls, DrawRecord, ModelKind};
use crate::theory::AcceptanceRegion;

/// Default number of density grid points.
pub const GRID_POINTS: usize = 512;
/// Default grid padding in sample standard deviations.
pub const GRID_SPREAD: f64 = 4.0;

/// Which alternative density is averaged for nonparametric chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BnpDensity {
    /// `Σ ω_j w φ_j / K_j`, the model's alternative.
    #[default]
    Weighted,
    /// `Σ ω_j φ_j`, ignoring the weight and the constants.
    Unweighted,
}

/// `P̂₁(z_i)`: fraction of retained iterations with `λ_i = 1`.
pub fn estimate_p1(trace: &ChainTrace) -> Result<Vec<f64>> {
    if trace.is_empty() {
        return Err(NollikError::EmptyData("trace has no retained draws".into()));
    }
    let t = trace.len() as f64;
    Ok(trace.lambda_sums.iter().map(|s| *s as f64 / t).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self { mean: f64::NAN, sd: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, sd: var.sqrt() }
    }
}

/// Named draws of every scalar parameter in a trace.
pub fn scalar_draws(trace: &ChainTrace) -> Vec<(String, Vec<f64>)> {
    let col = |f: &dyn Fn(&DrawRecord) -> f64| trace.records.iter().map(f).collect::<Vec<_>>();
    let mut out = vec![
        ("rho".to_string(), col(&|r| r.rho)),
        ("mu0".to_string(), col(&|r| r.mu0)),
        ("sigma20".to_string(), col(&|r| r.sigma20)),
        ("xi".to_string(), col(&|r| r.xi)),
    ];
    match trace.meta.model {
        ModelKind::Parametric => {
            out.push(("alpha".into(), col(&|r| r.alpha.unwrap_or(f64::NAN))));
            for j in 0..2 {
                out.push((format!("mu{}", j + 1), col(&|r| r.components[j].mu)));
                out.push((format!("sigma2{}", j + 1), col(&|r| r.components[j].sigma2)));
            }
        }
        ModelKind::Bnp => {
            out.push(("conc".into(), col(&|r| r.conc.unwrap_or(f64::NAN))));
        }
    }
    out
}

pub fn posterior_summaries(trace: &ChainTrace) -> Vec<(String, Summary)> {
    scalar_draws(trace)
        .into_iter()
        .map(|(name, xs)| (name, Summary::of(&xs)))
        .collect()
}

/// `n` equally spaced points covering the data range padded by `spread`
/// sample standard deviations.
pub fn default_grid(z: &[f64], n: usize, spread: f64) -> Result<Vec<f64>> {
    if z.len() < 2 {
        return Err(NollikError::EmptyData("need at least 2 observations for a grid".into()));
    }
    if n < 2 {
        return Err(invalid("grid needs at least 2 points"));
    }
    let s = Summary::of(z);
    let lo = z.iter().copied().fold(f64::INFINITY, f64::min) - spread * s.sd;
    let hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max) + spread * s.sd;
    Ok(linspace(lo, hi, n))
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect()
}

/// Pointwise posterior-mean densities on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub grid: Vec<f64>,
    pub f0_hat: Vec<f64>,
    pub f1_hat: Vec<f64>,
    pub f_hat: Vec<f64>,
    /// Posterior mean of ρ used to assemble `f_hat`.
    pub rho_hat: f64,
}

pub fn estimate_density_grid(trace: &ChainTrace, grid: &[f64], convention: BnpDensity) -> Result<DensityGrid> {
    if trace.is_empty() {
        return Err(NollikError::EmptyData("trace has no retained draws".into()));
    }
    if grid.is_empty() {
        return Err(invalid("empty grid"));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) || grid.iter().any(|g| !g.is_finite()) {
        return Err(invalid("grid must be finite and strictly increasing"));
    }
    let weighted = trace.meta.model == ModelKind::Parametric || convention == BnpDensity::Weighted;
    let mut f0 = vec![0.0; grid.len()];
    let mut f1 = vec![0.0; grid.len()];
    let mut wbuf = vec![1.0; grid.len()];
    for r in &trace.records {
        if weighted {
            let w = trace.weight_function(r.xi)?;
            for (b, g) in wbuf.iter_mut().zip(grid) {
                *b = w.value(*g);
            }
        }
        for (i, g) in grid.iter().enumerate() {
            f0[i] += norm_pdf(*g, r.mu0, r.sigma20);
        }
        for ((om, c), lk) in r.weights.iter().zip(&r.components).zip(&r.log_normconsts) {
            if *om == 0.0 {
                continue;
            }
            let scale = if weighted { om * (-lk).exp() } else { *om };
            for (i, g) in grid.iter().enumerate() {
                f1[i] += scale * wbuf[i] * norm_pdf(*g, c.mu, c.sigma2);
            }
        }
    }
    let t = trace.len() as f64;
    let rho_hat = trace.records.iter().map(|r| r.rho).sum::<f64>() / t;
    for v in f0.iter_mut().chain(f1.iter_mut()) {
        *v /= t;
    }
    let f = f0
        .iter()
        .zip(&f1)
        .map(|(a, b)| (1.0 - rho_hat) * a + rho_hat * b)
        .collect();
    Ok(DensityGrid {
        grid: grid.to_vec(),
        f0_hat: f0,
        f1_hat: f1,
        f_hat: f,
        rho_hat,
    })
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Result<f64> {
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    if !(x >= lo && x <= hi) {
        return Err(NollikError::OutOfGrid { z: x, lo, hi });
    }
    let i = xs.partition_point(|g| *g <= x);
    if i == xs.len() {
        return Ok(ys[xs.len() - 1]);
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    let t = (x - x0) / (x1 - x0);
    Ok(ys[i - 1] + t * (ys[i] - ys[i - 1]))
}

fn lfdr_cap(v: f64) -> f64 {
    if v.is_nan() {
        1.0
    } else {
        v.clamp(f64::MIN_POSITIVE, 1.0)
    }
}

/// `(1 − ρ̂) f̂₀ / f̂` at `z` by linear interpolation, capped into `(0, 1]`.
pub fn lfdr_from_grid(dg: &DensityGrid, rho_hat: f64, z: f64) -> Result<f64> {
    let vals: Vec<f64> = dg
        .f0_hat
        .iter()
        .zip(&dg.f1_hat)
        .map(|(a, b)| {
            let f = (1.0 - rho_hat) * a + rho_hat * b;
            if f > 0.0 {
                lfdr_cap((1.0 - rho_hat) * a / f)
            } else {
                1.0
            }
        })
        .collect();
    interpolate(&dg.grid, &vals, z).map(lfdr_cap)
}

/// `lfdr` at many points against a single pass over the grid.
pub fn lfdr_many(dg: &DensityGrid, rho_hat: f64, z: &[f64]) -> Result<Vec<f64>> {
    let vals: Vec<f64> = dg
        .f0_hat
        .iter()
        .zip(&dg.f1_hat)
        .map(|(a, b)| {
            let f = (1.0 - rho_hat) * a + rho_hat * b;
            if f > 0.0 {
                lfdr_cap((1.0 - rho_hat) * a / f)
            } else {
                1.0
            }
        })
        .collect();
    z.iter()
        .map(|x| interpolate(&dg.grid, &vals, *x).map(lfdr_cap))
        .collect()
}

/// Linear interpolation of `P̂₁` over the observed statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct P1Interpolator {
    z: Vec<f64>,
    p1: Vec<f64>,
}

impl P1Interpolator {
    pub fn new(z: &[f64], p1: &[f64]) -> Result<Self> {
        if z.len() != p1.len() || z.is_empty() {
            return Err(invalid("z and p1 must be nonempty and of equal length"));
        }
        let mut pairs: Vec<(f64, f64)> = z.iter().copied().zip(p1.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // ties in z are averaged
        let mut zs: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut ps: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut counts: Vec<f64> = Vec::with_capacity(pairs.len());
        for (x, p) in pairs {
            if zs.last() == Some(&x) {
                *ps.last_mut().unwrap() += p;
                *counts.last_mut().unwrap() += 1.0;
            } else {
                zs.push(x);
                ps.push(p);
                counts.push(1.0);
            }
        }
        for (p, c) in ps.iter_mut().zip(&counts) {
            *p /= c;
        }
        Ok(Self { z: zs, p1: ps })
    }

    pub fn at(&self, z: f64) -> Result<f64> {
        if self.z.len() == 1 {
            return if z == self.z[0] {
                Ok(self.p1[0])
            } else {
                Err(NollikError::OutOfGrid { z, lo: self.z[0], hi: self.z[0] })
            };
        }
        interpolate(&self.z, &self.p1, z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub nu_hat: f64,
    pub bfdr: f64,
    pub n_flagged: usize,
}

impl Threshold {
    pub fn no_discoveries() -> Self {
        Self {
            nu_hat: 1.0,
            bfdr: 0.0,
            n_flagged: 0,
        }
    }

    pub fn has_discoveries(&self) -> bool {
        self.n_flagged > 0
    }
}

/// `(ν, BFDR(ν))` for every observed `p1` value that flags at least one
/// observation, in increasing `ν`.
pub fn bfdr_curve(p1: &[f64]) -> Vec<(f64, f64, usize)> {
    let mut sorted: Vec<f64> = p1.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut out = Vec::new();
    let mut sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        // everything before index i is strictly above v
        if i > 0 {
            out.push((v, sum / i as f64, i));
        }
        while i < sorted.len() && sorted[i] == v {
            sum += 1.0 - sorted[i];
            i += 1;
        }
    }
    out.reverse();
    out
}

/// Smallest observed `ν` with `BFDR(ν) < α`, flagging `p1 > ν`.
pub fn bfdr_threshold(p1: &[f64], alpha: f64) -> Result<Threshold> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must be in (0, 1), got {alpha}")));
    }
    Ok(bfdr_curve(p1)
        .into_iter()
        .find(|(_, b, _)| *b < alpha)
        .map(|(nu_hat, bfdr, n_flagged)| Threshold { nu_hat, bfdr, n_flagged })
        .unwrap_or_else(Threshold::no_discoveries))
}

/// Critical values from midpoints between flagged and unflagged sorted
/// statistics; a side without flags is unbounded.
pub fn acceptance_region_from_flags(z: &[f64], flags: &[bool]) -> Result<AcceptanceRegion> {
    if z.len() != flags.len() {
        return Err(invalid("z and flags differ in length"));
    }
    let mut idx: Vec<usize> = (0..z.len()).collect();
    idx.sort_by(|a, b| z[*a].total_cmp(&z[*b]));
    let sorted: Vec<(f64, bool)> = idx.iter().map(|i| (z[*i], flags[*i])).collect();

    let lower = match sorted.iter().rposition(|(x, f)| *f && *x < 0.0) {
        None => f64::NEG_INFINITY,
        Some(p) => {
            let x = sorted[p].0;
            let mid = sorted.get(p + 1).map(|s| 0.5 * (x + s.0)).unwrap_or(x);
            if mid < 0.0 { mid } else { 0.5 * x }
        }
    };
    let upper = match sorted.iter().position(|(x, f)| *f && *x > 0.0) {
        None => f64::INFINITY,
        Some(p) => {
            let x = sorted[p].0;
            let mid = if p > 0 { 0.5 * (x + sorted[p - 1].0) } else { x };
            if mid > 0.0 { mid } else { 0.5 * x }
        }
    };
    AcceptanceRegion::new(lower, upper)
}

pub fn acceptance_region_from_p1(z: &[f64], p1: &[f64], nu_hat: f64) -> Result<AcceptanceRegion> {
    let flags: Vec<bool> = p1.iter().map(|p| *p > nu_hat).collect();
    acceptance_region_from_flags(z, &flags)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub z: Vec<f64>,
    pub p1: Vec<f64>,
    pub lfdr: Vec<f64>,
    pub alpha: f64,
    pub nu_hat: f64,
    pub flags: Vec<bool>,
    pub region: AcceptanceRegion,
    pub bfdr_at_nu: f64,
}

impl DiscoveryReport {
    pub fn n_flagged(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }
}

/// Report from relevance probabilities and density-route lfdr values.
pub fn build_report(z: &[f64], p1: Vec<f64>, lfdr: Vec<f64>, alpha: f64) -> Result<DiscoveryReport> {
    if z.len() != p1.len() || z.len() != lfdr.len() {
        return Err(invalid("z, p1 and lfdr differ in length"));
    }
    let th = bfdr_threshold(&p1, alpha)?;
    let flags: Vec<bool> = p1.iter().map(|p| *p > th.nu_hat).collect();
    let region = acceptance_region_from_flags(z, &flags)?;
    Ok(DiscoveryReport {
        z: z.to_vec(),
        p1,
        lfdr,
        alpha,
        nu_hat: th.nu_hat,
        flags,
        region,
        bfdr_at_nu: th.bfdr,
    })
}

/// Full post-processing of one chain.
pub fn analyze_chain(
    z: &[f64],
    trace: &ChainTrace,
    alpha: f64,
    grid: &[f64],
    convention: BnpDensity,
) -> Result<(DiscoveryReport, DensityGrid)> {
    if z.len() != trace.lambda_sums.len() {
        return Err(invalid("data and trace differ in length"));
    }
    let p1 = estimate_p1(trace)?;
    let dg = estimate_density_grid(trace, grid, convention)?;
    let lfdr = lfdr_many(&dg, dg.rho_hat, z)?;
    Ok((build_report(z, p1, lfdr, alpha)?, dg))
}

/// Agreement between `P̂₁` and `1 − lfdr̂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualRoute {
    pub mean_abs_diff: f64,
    pub max_abs_diff: f64,
    /// Fraction of observations with `|P̂₁ − (1 − lfdr̂)| < 0.05`.
    pub frac_within_05: f64,
}

pub fn dual_route(p1: &[f64], lfdr: &[f64]) -> DualRoute {
    let d: Vec<f64> = p1.iter().zip(lfdr).map(|(p, l)| (p - (1.0 - l)).abs()).collect();
    let n = d.len().max(1) as f64;
    DualRoute {
        mean_abs_diff: d.iter().sum::<f64>() / n,
        max_abs_diff: d.iter().copied().fold(0.0, f64::max),
        frac_within_05: d.iter().filter(|x| **x < 0.05).count() as f64 / n,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupedFit {
    pub trace: GroupedTrace,
    pub reports: Vec<DiscoveryReport>,
    pub densities: Vec<DensityGrid>,
    pub rho: Summary,
}

/// Grouped parametric fit with a shared ρ and per-group thresholds.
pub fn fit_grouped(
    z_by_group: &[&[f64]],
    hp: &Hyperparameters,
    controls: &Controls,
    alpha: f64,
    grid_points: usize,
) -> Result<GroupedFit> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let trace = run_grouped(z_by_group, hp, controls)?;
    let mut reports = Vec::with_capacity(z_by_group.len());
    let mut densities = Vec::with_capacity(z_by_group.len());
    for (z, tr) in z_by_group.iter().zip(&trace.groups) {
        let grid = default_grid(z, grid_points, GRID_SPREAD)?;
        let (rep, dg) = analyze_chain(z, tr, alpha, &grid, BnpDensity::Weighted)?;
        reports.push(rep);
        densities.push(dg);
    }
    let rho = Summary::of(&trace.rho_draws());
    Ok(GroupedFit {
        trace,
        reports,
        densities,
        rho,
    })
}

/// Running means `x̄_1, …, x̄_n`.
pub fn ergodic_means(xs: &[f64]) -> Vec<f64> {
    let mut s = 0.0;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            s += x;
            s / (i + 1) as f64
        })
        .collect()
}

/// Effective sample size from the variance of `n_batches` batch means.
pub fn batch_means_ess(xs: &[f64], n_batches: usize) -> Option<f64> {
    let b = n_batches.max(2);
    let size = xs.len() / b;
    if size < 1 {
        return None;
    }
    let used = &xs[..size * b];
    let all = Summary::of(used);
    if !(all.sd > 0.0) {
        return None;
    }
    let means: Vec<f64> = used.chunks(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let bm = Summary::of(&means);
    let sigma2 = size as f64 * bm.sd * bm.sd;
    if sigma2 > 0.0 {
        Some(used.len() as f64 * all.sd * all.sd / sigma2)
    } else {
        None
    }
}

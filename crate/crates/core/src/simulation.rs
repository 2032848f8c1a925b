//! Synthetic scenarios, classification metrics, the Benjamini–Hochberg
//! baseline and the benchmark harness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, NollikError, Result};
use crate::inference::{bfdr_threshold, estimate_p1};
use crate::numerics::{derive_seed, std_norm_cdf};
use crate::sampler::bnp::{run_chain_bnp, BnpHyperparameters};
use crate::sampler::parametric::{run_chain, Hyperparameters};
use crate::sampler::Controls;
use crate::weightcore::WeightKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    S1,
    S2,
    S3,
    S4,
    /// `0.9 N(0,1) + 0.05 N(k,1) + 0.05 N(−k,1)`
    Robust(u8),
}

impl std::str::FromStr for ScenarioId {
    type Err = NollikError;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        match up.as_str() {
            "S1" => Ok(Self::S1),
            "S2" => Ok(Self::S2),
            "S3" => Ok(Self::S3),
            "S4" => Ok(Self::S4),
            _ => {
                let rest = up
                    .strip_prefix("R-")
                    .or_else(|| up.strip_prefix('R'))
                    .ok_or_else(|| invalid(format!("unknown scenario '{s}'")))?;
                match rest.parse::<u8>() {
                    Ok(k) if k >= 1 => Ok(Self::Robust(k)),
                    _ => Err(invalid(format!("unknown scenario '{s}'"))),
                }
            }
        }
    }
}

impl std::fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::S1 => f.write_str("S1"),
            Self::S2 => f.write_str("S2"),
            Self::S3 => f.write_str("S3"),
            Self::S4 => f.write_str("S4"),
            Self::Robust(k) => write!(f, "R-{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub n: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(id: ScenarioId, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("scenario needs n >= 1"));
        }
        Ok(Self { id, n, seed })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub z: Vec<f64>,
    pub truth: Vec<bool>,
}

impl LabeledSample {
    pub fn relevant_fraction(&self) -> f64 {
        self.truth.iter().filter(|t| **t).count() as f64 / self.truth.len().max(1) as f64
    }
}

/// Proportion of relevant statistics in every scenario.
pub const RELEVANT_FRACTION: f64 = 0.1;

fn normal(mean: f64, var: f64) -> Normal<f64> {
    Normal::new(mean, var.sqrt()).expect("valid normal")
}

pub fn generate_scenario(spec: &ScenarioSpec) -> Result<LabeledSample> {
    if spec.n == 0 {
        return Err(invalid("scenario needs n >= 1"));
    }
    if let ScenarioId::Robust(0) = spec.id {
        return Err(invalid("robustness preset needs k >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut z = Vec::with_capacity(spec.n);
    let mut truth = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let relevant = rng.random::<f64>() < RELEVANT_FRACTION;
        let positive = rng.random::<bool>();
        let e: f64 = StandardNormal.sample(&mut rng);
        let x = match (spec.id, relevant) {
            (ScenarioId::S1, false) => normal(0.0, 1.5).sample(&mut rng),
            (ScenarioId::S1, true) => {
                if positive { 5.0 + e } else { -5.0 + e }
            }
            (ScenarioId::S2, false) => normal(0.0, 0.25).sample(&mut rng),
            (ScenarioId::S2, true) => normal(if positive { 3.0 } else { -3.0 }, 1.5).sample(&mut rng),
            (ScenarioId::S3, false) | (ScenarioId::S4, false) => e,
            (ScenarioId::S3, true) => {
                let g: f64 = StandardNormal.sample(&mut rng);
                g - 3.0 + e
            }
            (ScenarioId::S4, true) => {
                let u = rng.random_range(2.0..4.0);
                let g = if positive { u } else { -u };
                g + e
            }
            (ScenarioId::Robust(_), false) => e,
            (ScenarioId::Robust(k), true) => {
                let m = k as f64;
                if positive { m + e } else { -m + e }
            }
        };
        z.push(x);
        truth.push(relevant);
    }
    Ok(LabeledSample { z, truth })
}

/// Beta priors on ρ for the robustness presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RhoPrior {
    /// Beta(1, 9)
    Hp1,
    /// Beta(1, 1)
    Hp2,
    /// Beta(9, 1)
    Hp3,
}

impl RhoPrior {
    pub fn params(self) -> (f64, f64) {
        match self {
            Self::Hp1 => (1.0, 9.0),
            Self::Hp2 => (1.0, 1.0),
            Self::Hp3 => (9.0, 1.0),
        }
    }
}

impl std::str::FromStr for RhoPrior {
    type Err = NollikError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hp1" => Ok(Self::Hp1),
            "hp2" => Ok(Self::Hp2),
            "hp3" => Ok(Self::Hp3),
            _ => Err(invalid(format!("unknown prior preset '{s}'"))),
        }
    }
}

/// Hyperparameters for a robustness run: w1 by default or the unweighted
/// surrogate when `unweighted` is set.
pub fn robustness_hyperparameters(prior: RhoPrior, unweighted: bool) -> Hyperparameters {
    let (a, b) = prior.params();
    let mut hp = Hyperparameters {
        a_rho: a,
        b_rho: b,
        ..Default::default()
    };
    if unweighted {
        hp.weight_kind = WeightKind::Indicator;
        hp.delta = 0.0;
    }
    hp
}

/// Every `(ξ, k)` pair of the sensitivity study, `ξ, k ∈ {1, 2, 3, 4}`.
pub fn sensitivity_grid() -> Vec<(f64, u32)> {
    let mut out = Vec::with_capacity(16);
    for xi in 1..=4 {
        for k in 1..=4 {
            out.push((xi as f64, k));
        }
    }
    out
}

/// w1 with `ξ` held fixed at the given value.
pub fn sensitivity_hyperparameters(xi: f64, k: u32) -> Hyperparameters {
    Hyperparameters {
        weight_kind: WeightKind::W1,
        k,
        xi_fixed: Some(xi),
        ..Default::default()
    }
}

/// Two-sided tail probabilities under `N(0, 1)`.
pub fn two_sided_p_values(z: &[f64]) -> Vec<f64> {
    z.iter().map(|x| (2.0 * std_norm_cdf(-x.abs())).min(1.0)).collect()
}

/// Benjamini–Hochberg step-up rejections at level `alpha`.
pub fn bh_procedure(p: &[f64], alpha: f64) -> Vec<bool> {
    let m = p.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|a, b| p[*a].total_cmp(&p[*b]));
    let mut k = 0;
    for (rank, i) in idx.iter().enumerate() {
        if p[*i] <= (rank + 1) as f64 * alpha / m as f64 {
            k = rank + 1;
        }
    }
    let mut flags = vec![false; m];
    for i in &idx[..k] {
        flags[*i] = true;
    }
    flags
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    pub acc: f64,
    pub spe: f64,
    pub sen: f64,
    pub pre: f64,
    pub auc: Option<f64>,
    pub mcc: f64,
    pub f1: f64,
    /// Metrics that hit a zero denominator and took their fallback value.
    pub fallbacks: Vec<String>,
}

impl ConfusionMetrics {
    pub fn named(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("acc", self.acc),
            ("spe", self.spe),
            ("sen", self.sen),
            ("pre", self.pre),
            ("auc", self.auc.unwrap_or(f64::NAN)),
            ("mcc", self.mcc),
            ("f1", self.f1),
        ]
    }
}

/// Rank-statistic AUC with midranks for ties; `None` without both classes.
pub fn auc_rank(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let n1 = truth.iter().filter(|t| **t).count();
    let n0 = truth.len() - n1;
    if n1 == 0 || n0 == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|a, b| scores[*a].total_cmp(&scores[*b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = 0.5 * ((i + 1) + (j + 1)) as f64;
        for t in &idx[i..=j] {
            if truth[*t] {
                rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    Some(u / (n1 as f64 * n0 as f64))
}

/// Area under the empirical ROC curve by the trapezoid rule.
pub fn auc_trapezoid(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let n1 = truth.iter().filter(|t| **t).count() as f64;
    let n0 = truth.len() as f64 - n1;
    if n1 == 0.0 || n0 == 0.0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]));
    let (mut tp, mut fp) = (0.0, 0.0);
    let (mut prev_tpr, mut prev_fpr) = (0.0, 0.0);
    let mut area = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if truth[idx[i]] { tp += 1.0 } else { fp += 1.0 }
            i += 1;
        }
        let (tpr, fpr) = (tp / n1, fp / n0);
        area += 0.5 * (fpr - prev_fpr) * (tpr + prev_tpr);
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    Some(area)
}

pub fn confusion_metrics(flags: &[bool], truth: &[bool], scores: Option<&[f64]>) -> Result<ConfusionMetrics> {
    if flags.len() != truth.len() {
        return Err(invalid("flags and truth differ in length"));
    }
    if let Some(s) = scores {
        if s.len() != truth.len() {
            return Err(invalid("scores and truth differ in length"));
        }
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (f, t) in flags.iter().zip(truth) {
        match (f, t) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    let mut fallbacks = Vec::new();
    let mut ratio = |num: usize, den: usize, name: &str, fallback: f64| {
        if den == 0 {
            fallbacks.push(name.to_string());
            fallback
        } else {
            num as f64 / den as f64
        }
    };
    let n = tp + tn + fp + fn_;
    let acc = ratio(tp + tn, n, "acc", 1.0);
    let spe = ratio(tn, tn + fp, "spe", 1.0);
    let sen = ratio(tp, tp + fn_, "sen", 1.0);
    let pre = ratio(tp, tp + fp, "pre", if tp + fn_ == 0 { 1.0 } else { 0.0 });
    let f1 = if sen > 0.0 && pre > 0.0 {
        2.0 / (1.0 / sen + 1.0 / pre)
    } else {
        fallbacks.push("f1".into());
        0.0
    };
    let marg = [(tp + fp), (tp + fn_), (tn + fp), (tn + fn_)];
    let mcc = if marg.contains(&0) {
        fallbacks.push("mcc".into());
        0.0
    } else {
        let num = tp as f64 * tn as f64 - fp as f64 * fn_ as f64;
        let den = marg.iter().map(|m| *m as f64).product::<f64>().sqrt();
        num / den
    };
    let auc = scores.and_then(|s| auc_rank(s, truth));
    Ok(ConfusionMetrics {
        tp,
        tn,
        fp,
        fn_,
        acc,
        spe,
        sen,
        pre,
        auc,
        mcc,
        f1,
        fallbacks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    NollikW0,
    NollikW1,
    NollikW2,
    BnpW1,
    Bh,
}

impl Method {
    pub fn all() -> [Method; 5] {
        [Self::NollikW0, Self::NollikW1, Self::NollikW2, Self::BnpW1, Self::Bh]
    }

    /// Parametric hyperparameters for the Nollik methods.
    pub fn hyperparameters(self) -> Option<Hyperparameters> {
        let (kind, k) = match self {
            Self::NollikW0 => (WeightKind::W0, 1),
            Self::NollikW1 => (WeightKind::W1, 2),
            Self::NollikW2 => (WeightKind::W2, 2),
            _ => return None,
        };
        Some(Hyperparameters {
            weight_kind: kind,
            k,
            ..Default::default()
        })
    }
}

impl std::str::FromStr for Method {
    type Err = NollikError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nollik-w0" => Ok(Self::NollikW0),
            "nollik-w1" => Ok(Self::NollikW1),
            "nollik-w2" => Ok(Self::NollikW2),
            "bnp-w1" => Ok(Self::BnpW1),
            "bh" => Ok(Self::Bh),
            _ => Err(invalid(format!("unknown method '{s}'"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::NollikW0 => "nollik-w0",
            Self::NollikW1 => "nollik-w1",
            Self::NollikW2 => "nollik-w2",
            Self::BnpW1 => "bnp-w1",
            Self::Bh => "bh",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub scenarios: Vec<ScenarioId>,
    pub methods: Vec<Method>,
    pub replications: usize,
    pub seed: u64,
    pub n: usize,
    pub controls: Controls,
    /// BFDR level for Nollik and FDR level for BH.
    pub alpha: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            scenarios: vec![ScenarioId::S1, ScenarioId::S2, ScenarioId::S3, ScenarioId::S4],
            methods: Method::all().to_vec(),
            replications: 50,
            seed: 1,
            n: 1000,
            controls: Controls::default(),
            alpha: 0.05,
        }
    }
}

/// One row of the long-format results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub scenario: String,
    pub method: String,
    pub replication: usize,
    /// Decision rule: `bfdr05`, `lfdr20` or `bh05`.
    pub rule: String,
    pub metric: String,
    pub value: f64,
    pub note: String,
}

/// Output of one method on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    /// Flags per decision rule.
    pub rules: Vec<(String, Vec<bool>)>,
    /// Higher means more likely relevant.
    pub scores: Vec<f64>,
    pub rho_hat: Option<f64>,
}

pub fn run_method(method: Method, z: &[f64], controls: &Controls, alpha: f64) -> Result<MethodOutcome> {
    let trace = match method {
        Method::Bh => {
            let p = two_sided_p_values(z);
            let flags = bh_procedure(&p, alpha);
            return Ok(MethodOutcome {
                rules: vec![(format!("bh{:02}", (alpha * 100.0).round() as u32), flags)],
                scores: p.iter().map(|x| 1.0 - x).collect(),
                rho_hat: None,
            });
        }
        Method::BnpW1 => run_chain_bnp(z, &BnpHyperparameters::default(), controls)?,
        m => run_chain(z, &m.hyperparameters().expect("parametric method"), controls)?,
    };
    let p1 = estimate_p1(&trace)?;
    let th = bfdr_threshold(&p1, alpha)?;
    let bfdr_flags = p1.iter().map(|p| *p > th.nu_hat).collect();
    let lfdr_flags = p1.iter().map(|p| 1.0 - p < 0.2).collect();
    let rho = trace.rho_draws();
    Ok(MethodOutcome {
        rules: vec![
            (format!("bfdr{:02}", (alpha * 100.0).round() as u32), bfdr_flags),
            ("lfdr20".into(), lfdr_flags),
        ],
        scores: p1,
        rho_hat: Some(rho.iter().sum::<f64>() / rho.len() as f64),
    })
}

/// Seed of the dataset for scenario `s`, replication `r`; shared by every method.
pub fn dataset_seed(master: u64, s: usize, r: usize) -> u64 {
    derive_seed(derive_seed(master, s as u64), r as u64)
}

/// Seed of the chain for method `m` on that dataset.
pub fn fit_seed(master: u64, s: usize, r: usize, m: usize) -> u64 {
    derive_seed(dataset_seed(master, s, r), 1000 + m as u64)
}

/// Every (scenario, method, replication) cell; fit errors become rows with
/// metric `error` and a note instead of aborting.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<Vec<BenchmarkRow>> {
    if cfg.replications == 0 {
        return Err(invalid("replications must be >= 1"));
    }
    if cfg.n < 2 {
        return Err(invalid("benchmark needs n >= 2"));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(invalid(format!("alpha must be in (0, 1), got {}", cfg.alpha)));
    }
    cfg.controls.validate()?;
    let mut rows = Vec::new();
    for (si, sc) in cfg.scenarios.iter().enumerate() {
        for r in 0..cfg.replications {
            let spec = ScenarioSpec::new(*sc, cfg.n, dataset_seed(cfg.seed, si, r))?;
            let data = generate_scenario(&spec)?;
            for (mi, m) in cfg.methods.iter().enumerate() {
                let controls = Controls {
                    seed: fit_seed(cfg.seed, si, r, mi),
                    ..cfg.controls
                };
                let base = |rule: &str, metric: &str, value: f64, note: String| BenchmarkRow {
                    scenario: sc.to_string(),
                    method: m.to_string(),
                    replication: r + 1,
                    rule: rule.to_string(),
                    metric: metric.to_string(),
                    value,
                    note,
                };
                match run_method(*m, &data.z, &controls, cfg.alpha) {
                    Err(e) => rows.push(base("", "error", f64::NAN, e.to_string())),
                    Ok(out) => {
                        for (rule, flags) in &out.rules {
                            let cm = confusion_metrics(flags, &data.truth, Some(&out.scores))?;
                            for (name, v) in cm.named() {
                                let note = if cm.fallbacks.iter().any(|f| f == name) {
                                    "fallback".to_string()
                                } else {
                                    String::new()
                                };
                                rows.push(base(rule, name, v, note));
                            }
                        }
                        if let Some(rho) = out.rho_hat {
                            rows.push(base("", "rho_hat", rho, String::new()));
                        }
                    }
                }
            }
        }
    }
    Ok(rows)
}

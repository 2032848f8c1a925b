use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use nollik::inference::{BnpDensity, GRID_POINTS, GRID_SPREAD};
use nollik::{BnpHyperparameters, Controls, GaussianComponent, Hyperparameters, MixtureDensity, WeightFunction, WeightKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    #[default]
    Parametric,
    Bnp,
    Grouped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub points: usize,
    /// Padding beyond the data range, in sample standard deviations.
    pub spread: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points: GRID_POINTS,
            spread: GRID_SPREAD,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Transform Student t statistics with these degrees of freedom.
    pub df: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelChoice,
    pub alpha: f64,
    pub density: BnpDensity,
    pub controls: Controls,
    pub parametric: Hyperparameters,
    pub bnp: BnpHyperparameters,
    pub grid: GridConfig,
    pub data: DataConfig,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelChoice::Parametric,
            alpha: 0.05,
            density: BnpDensity::Weighted,
            controls: Controls::default(),
            parametric: Hyperparameters::default(),
            bnp: BnpHyperparameters::default(),
            grid: GridConfig::default(),
            data: DataConfig::default(),
            out: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long, value_enum)]
    pub model: Option<ModelChoice>,
    /// w0, w1, w2, indicator or identity
    #[arg(long)]
    pub weight: Option<String>,
    /// Fix ξ instead of sampling it
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid configuration")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn resolve(o: &Overrides) -> Result<Self> {
        let mut c = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(m) = o.model {
            c.model = m;
        }
        if let Some(w) = &o.weight {
            let kind: WeightKind = w.parse()?;
            c.parametric.weight_kind = kind;
            c.bnp.weight_kind = kind;
            if w.eq_ignore_ascii_case("identity") {
                c.parametric.delta = 0.0;
                c.bnp.delta = 0.0;
            }
        }
        if let Some(xi) = o.xi {
            c.parametric.xi_fixed = Some(xi);
            c.bnp.xi_fixed = Some(xi);
        }
        if let Some(k) = o.k {
            c.parametric.k = k;
            c.bnp.k = k;
        }
        if let Some(a) = o.alpha {
            c.alpha = a;
        }
        if let Some(v) = o.iters {
            c.controls.iterations = v;
        }
        if let Some(v) = o.burnin {
            c.controls.burn_in = v;
        }
        if let Some(v) = o.thin {
            c.controls.thin = v;
        }
        if let Some(v) = o.seed {
            c.controls.seed = v;
        }
        if let Some(p) = &o.out {
            c.out = Some(p.clone());
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.alpha > 0.0 && self.alpha < 1.0, "alpha must be in (0, 1), got {}", self.alpha);
        self.controls.validate()?;
        match self.model {
            ModelChoice::Parametric | ModelChoice::Grouped => self.parametric.validate()?,
            ModelChoice::Bnp => {
                self.bnp.validate()?;
                ensure!(self.bnp.j >= 2, "truncation level J must be >= 2, got {}", self.bnp.j);
                let tail = self.bnp.truncation_tail_mass();
                ensure!(
                    tail < 1e-6,
                    "truncation level J = {} leaves prior stick mass {tail:e} >= 1e-6; increase J",
                    self.bnp.j
                );
            }
        }
        ensure!(self.grid.points >= 2, "grid needs at least 2 points");
        ensure!(
            self.grid.spread.is_finite() && self.grid.spread >= 0.0,
            "grid spread must be finite and >= 0"
        );
        if let Some(df) = self.data.df {
            ensure!(df > 0.0 && df.is_finite(), "df must be > 0, got {df}");
        }
        Ok(())
    }

    pub fn hyperparameters_json(&self) -> serde_json::Value {
        match self.model {
            ModelChoice::Bnp => serde_json::to_value(&self.bnp),
            _ => serde_json::to_value(&self.parametric),
        }
        .expect("hyperparameters serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    #[serde(default = "one")]
    pub weight: f64,
    pub mu: f64,
    pub sigma2: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    pub kind: WeightKind,
    #[serde(default = "one")]
    pub xi: f64,
    #[serde(default = "two")]
    pub k: u32,
    #[serde(default)]
    pub delta: f64,
}

fn two() -> u32 {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub lower: f64,
    pub upper: f64,
}

/// Specification for the `theory` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConfig {
    pub rho: f64,
    pub null: ComponentConfig,
    pub alternative: Vec<ComponentConfig>,
    pub weight: WeightConfig,
    /// Half-widths `c` of symmetric regions `[−c, c]`.
    #[serde(default)]
    pub symmetric: Vec<f64>,
    #[serde(default)]
    pub region: Vec<RegionConfig>,
}

impl TheoryConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid theory configuration in {}", path.display()))
    }

    pub fn spec(&self) -> Result<nollik::TwoGroupSpec> {
        if self.alternative.is_empty() {
            bail!("theory configuration needs at least one alternative component");
        }
        let comps = self
            .alternative
            .iter()
            .map(|c| GaussianComponent::new(c.mu, c.sigma2))
            .collect::<nollik::Result<Vec<_>>>()?;
        let weights = self.alternative.iter().map(|c| c.weight).collect();
        let alt = MixtureDensity::local(weights, comps)?;
        let w = WeightFunction::new(self.weight.kind, self.weight.xi, self.weight.k, self.weight.delta)?;
        let null = GaussianComponent::new(self.null.mu, self.null.sigma2)?;
        Ok(nollik::TwoGroupSpec::new(self.rho, null, alt, Some(w))?)
    }

    pub fn regions(&self) -> Result<Vec<nollik::AcceptanceRegion>> {
        let mut out = Vec::new();
        for c in &self.symmetric {
            out.push(nollik::AcceptanceRegion::symmetric(*c)?);
        }
        for r in &self.region {
            out.push(nollik::AcceptanceRegion::new(r.lower, r.upper)?);
        }
        if out.is_empty() {
            bail!("theory configuration lists no regions");
        }
        Ok(out)
    }
}

//! Operating characteristics of a two-group model for a fixed acceptance
//! region, comparing a local alternative `f₁` with its weighted version
//! `f₁ᴺᴸ = w f₁ / K`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, NollikError, Result};
use crate::numerics::{
    bisect, integrate_panel, norm_pdf, CumulativeIntegral, POSITIVE_FLOOR,
};
use crate::weightcore::{GaussianComponent, MixtureDensity, MixtureKind, WeightFunction, WeightKind};

/// Half-width, in units of the null sd, of the threshold sweep used for AUC.
const AUC_SPAN: f64 = 40.0;
const AUC_PANEL: f64 = 0.25;
/// Root tolerance for the crossing point of `H`.
pub const ROOT_TOL: f64 = 1e-10;
/// `|H|` below this is treated as zero when looking for a flat root.
const PLATEAU_EPS: f64 = 1e-13;

/// `[lower, upper]`; statistics outside are flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRegion {
    pub lower: f64,
    pub upper: f64,
}

impl AcceptanceRegion {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || !(lower < 0.0 && upper > 0.0) {
            return Err(invalid(format!(
                "acceptance region needs lower < 0 < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn symmetric(c: f64) -> Result<Self> {
        Self::new(-c, c)
    }

    /// Nothing rejected.
    pub fn everything() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn contains(&self, z: f64) -> bool {
        self.lower <= z && z <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoGroupSpec {
    pub rho: f64,
    pub null: GaussianComponent,
    pub alt_local: MixtureDensity,
    pub weight: Option<WeightFunction>,
}

impl TwoGroupSpec {
    pub fn new(
        rho: f64,
        null: GaussianComponent,
        alt_local: MixtureDensity,
        weight: Option<WeightFunction>,
    ) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(invalid(format!("rho must be in (0, 1), got {rho}")));
        }
        if alt_local.kind() != MixtureKind::Local {
            return Err(invalid("the alternative must be given as a local mixture"));
        }
        Ok(Self {
            rho,
            null,
            alt_local,
            weight,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    pub fdr: f64,
    #[serde(rename = "for")]
    pub for_: f64,
    pub power: f64,
    pub auc: f64,
    /// `P(Z ∉ A | H₀)`, the same for both alternatives.
    pub fpr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaMetrics {
    pub d_fdr: f64,
    pub d_for: f64,
    pub d_beta: f64,
    /// `ΔF₁(z̄) − ΔF₁(z̲)`, the common sign of the three differences.
    pub d_cdf: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoints {
    /// Positive solution of `w(z) = K`.
    pub z_star: f64,
    /// Root of `H` in `[−z*, z*]` (midpoint of the flat segment when the root is an interval).
    pub z_hat: f64,
    /// Flat root segment, when `H` vanishes on an interval.
    pub plateau: Option<(f64, f64)>,
}

type Integrand = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// Precomputed cdfs for one specification; all queries reuse the same panels.
pub struct TheoryOracle {
    spec: TwoGroupSpec,
    weighted: Option<CumulativeIntegral<Integrand>>,
    auc_local: OnceLock<f64>,
    auc_weighted: OnceLock<f64>,
}

impl TheoryOracle {
    pub fn new(spec: TwoGroupSpec) -> Result<Self> {
        let weighted = match spec.weight {
            Some(w) if !w.is_identity() => {
                let (lo, hi, min_sd) = spec.alt_local.support();
                let mut width = min_sd / 4.0;
                if w.uses_xi() {
                    width = width.min(w.xi() / 8.0);
                }
                let mut breaks = vec![0.0];
                if w.kind() == WeightKind::Indicator {
                    breaks.push(-w.delta());
                    breaks.push(w.delta());
                }
                breaks.extend(spec.alt_local.components().iter().map(|c| c.mu));
                let local = spec.alt_local.clone();
                let f: Integrand = Box::new(move |z| w.value(z) * local.density(z));
                let integral = CumulativeIntegral::new(f, lo, hi, width, &breaks);
                if !(integral.total() >= POSITIVE_FLOOR) {
                    return Err(NollikError::Underflow(
                        "weighted alternative has numerically zero mass".into(),
                    ));
                }
                Some(integral)
            }
            _ => None,
        };
        Ok(Self {
            spec,
            weighted,
            auc_local: OnceLock::new(),
            auc_weighted: OnceLock::new(),
        })
    }

    pub fn spec(&self) -> &TwoGroupSpec {
        &self.spec
    }

    fn require_weight(&self) -> Result<WeightFunction> {
        self.spec
            .weight
            .ok_or_else(|| invalid("this quantity needs a weight function"))
    }

    /// `K = ∫ w f₁` (one for the identity weight).
    pub fn normconst(&self) -> f64 {
        match &self.weighted {
            Some(ci) => ci.total(),
            None => 1.0,
        }
    }

    pub fn f1_cdf(&self, z: f64) -> f64 {
        self.spec.alt_local.local_cdf(z)
    }

    pub fn f1_sf(&self, z: f64) -> f64 {
        self.spec.alt_local.local_sf(z)
    }

    pub fn f1_nl_cdf(&self, z: f64) -> f64 {
        match &self.weighted {
            Some(ci) => ci.lower_at(z) / ci.total(),
            None => self.f1_cdf(z),
        }
    }

    pub fn f1_nl_sf(&self, z: f64) -> f64 {
        match &self.weighted {
            Some(ci) => ci.upper_at(z) / ci.total(),
            None => self.f1_sf(z),
        }
    }

    fn alt_cdf(&self, z: f64, weighted: bool) -> f64 {
        if weighted {
            self.f1_nl_cdf(z)
        } else {
            self.f1_cdf(z)
        }
    }

    fn alt_sf(&self, z: f64, weighted: bool) -> f64 {
        if weighted {
            self.f1_nl_sf(z)
        } else {
            self.f1_sf(z)
        }
    }

    /// `P(Z ∉ A | H₀)`.
    fn null_reject(&self, r: &AcceptanceRegion) -> f64 {
        self.spec.null.cdf(r.lower) + self.spec.null.sf(r.upper)
    }

    fn alt_reject(&self, r: &AcceptanceRegion, weighted: bool) -> f64 {
        self.alt_cdf(r.lower, weighted) + self.alt_sf(r.upper, weighted)
    }

    pub fn characteristics(
        &self,
        region: &AcceptanceRegion,
        use_weighted: bool,
    ) -> Result<OperatingCharacteristics> {
        if use_weighted {
            self.require_weight()?;
        }
        let rho = self.spec.rho;
        let p0r = self.null_reject(region);
        let p1r = self.alt_reject(region, use_weighted);
        let pr = (1.0 - rho) * p0r + rho * p1r;
        if !(pr >= POSITIVE_FLOOR) {
            return Err(NollikError::ZeroMassRegion);
        }
        let p1a = 1.0 - p1r;
        let pa = (1.0 - rho) * (1.0 - p0r) + rho * p1a;
        let for_ = if pa > 0.0 { (rho * p1a / pa).clamp(0.0, 1.0) } else { 0.0 };
        Ok(OperatingCharacteristics {
            fdr: ((1.0 - rho) * p0r / pr).clamp(0.0, 1.0),
            for_,
            power: p1r.clamp(0.0, 1.0),
            auc: self.auc(use_weighted),
            fpr: p0r,
        })
    }

    /// `H(z) = F₁(z) − F₁ᴺᴸ(z)`.
    pub fn h(&self, z: f64) -> f64 {
        self.f1_cdf(z) - self.f1_nl_cdf(z)
    }

    /// Differences local minus weighted. Each is a nonnegative factor times
    /// `ΔF₁(z̄) − ΔF₁(z̲)`, so the three share its sign exactly.
    pub fn deltas(&self, region: &AcceptanceRegion) -> Result<DeltaMetrics> {
        self.require_weight()?;
        let rho = self.spec.rho;
        let d_cdf = self.h(region.upper) - self.h(region.lower);
        let p0r = self.null_reject(region);
        let p0a = 1.0 - p0r;
        let pr = (1.0 - rho) * p0r + rho * self.alt_reject(region, false);
        let pr_nl = (1.0 - rho) * p0r + rho * self.alt_reject(region, true);
        if !(pr >= POSITIVE_FLOOR && pr_nl >= POSITIVE_FLOOR) {
            return Err(NollikError::ZeroMassRegion);
        }
        let pa = 1.0 - pr;
        let pa_nl = 1.0 - pr_nl;
        let for_factor = if pa > 0.0 && pa_nl > 0.0 {
            rho * (1.0 - rho) * p0a / (pa * pa_nl)
        } else {
            0.0
        };
        Ok(DeltaMetrics {
            d_fdr: (1.0 - rho) * p0r * rho / (pr * pr_nl) * d_cdf,
            d_for: for_factor * d_cdf,
            d_beta: d_cdf,
            d_cdf,
        })
    }

    /// AUC over regions with equal null mass `t` in each tail:
    /// `∫ TPR(t) dFPR`, with `FPR = 2t`.
    pub fn auc(&self, use_weighted: bool) -> f64 {
        let cell = if use_weighted && self.spec.weight.is_some() {
            &self.auc_weighted
        } else {
            &self.auc_local
        };
        *cell.get_or_init(|| self.compute_auc(use_weighted && self.spec.weight.is_some()))
    }

    fn compute_auc(&self, weighted: bool) -> f64 {
        let mu0 = self.spec.null.mu;
        let sd0 = self.spec.null.sd();
        // x = Φ⁻¹(t) ∈ (−∞, 0]; z̲ = μ₀ + σ₀x, z̄ = μ₀ − σ₀x
        let tpr = |x: f64| {
            self.alt_cdf(mu0 + sd0 * x, weighted) + self.alt_sf(mu0 - sd0 * x, weighted)
        };
        let integrand = |x: f64| tpr(x) * 2.0 * norm_pdf(x, 0.0, 1.0);
        let n = (AUC_SPAN / AUC_PANEL) as usize;
        let mut acc = 0.0;
        for i in 0..n {
            let a = -AUC_SPAN + i as f64 * AUC_PANEL;
            acc += integrate_panel(&integrand, a, a + AUC_PANEL);
        }
        acc.clamp(0.0, 1.0)
    }

    /// `z*` and `ẑ`.
    pub fn critical_points(&self) -> Result<CriticalPoints> {
        let w = self.require_weight()?;
        let k = self.normconst();
        let level = if w.is_bounded() { k.min(1.0) } else { k };
        let z_star = w.inverse(level)?;
        let h_lo = self.h(-z_star);
        let h_hi = self.h(z_star);
        if !(h_lo < -PLATEAU_EPS && h_hi > PLATEAU_EPS) {
            return Err(NollikError::NoSignChange {
                lo: -z_star,
                hi: z_star,
            });
        }
        let root = bisect(|z| self.h(z), -z_star, z_star, ROOT_TOL);
        // a flat segment shows up as distinct crossings of ±ε
        let left = bisect(|z| self.h(z) + PLATEAU_EPS, -z_star, z_star, ROOT_TOL);
        let right = bisect(|z| self.h(z) - PLATEAU_EPS, -z_star, z_star, ROOT_TOL);
        if right - left > 1e-6 {
            return Ok(CriticalPoints {
                z_star,
                z_hat: 0.5 * (left + right),
                plateau: Some((left, right)),
            });
        }
        Ok(CriticalPoints {
            z_star,
            z_hat: root,
            plateau: None,
        })
    }

    /// Whether `{w ≤ K} = [−z*, z*]` lies inside the acceptance region.
    pub fn contains_critical_interval(&self, region: &AcceptanceRegion) -> Result<bool> {
        let w = self.require_weight()?;
        let k = self.normconst();
        let level = if w.is_bounded() { k.min(1.0) } else { k };
        let z_star = w.inverse(level)?;
        Ok(region.lower <= -z_star && z_star <= region.upper)
    }
}

pub fn region_characteristics(
    spec: &TwoGroupSpec,
    region: &AcceptanceRegion,
    use_weighted: bool,
) -> Result<OperatingCharacteristics> {
    TheoryOracle::new(spec.clone())?.characteristics(region, use_weighted)
}

pub fn delta_metrics(spec: &TwoGroupSpec, region: &AcceptanceRegion) -> Result<DeltaMetrics> {
    TheoryOracle::new(spec.clone())?.deltas(region)
}

pub fn h_function(spec: &TwoGroupSpec, z: f64) -> Result<f64> {
    let oracle = TheoryOracle::new(spec.clone())?;
    oracle.require_weight()?;
    Ok(oracle.h(z))
}

pub fn critical_points(spec: &TwoGroupSpec) -> Result<CriticalPoints> {
    TheoryOracle::new(spec.clone())?.critical_points()
}

pub fn check_contains_critical_interval(spec: &TwoGroupSpec, region: &AcceptanceRegion) -> Result<bool> {
    TheoryOracle::new(spec.clone())?.contains_critical_interval(region)
}

/// `F⁻¹` of a local mixture by bisection.
pub fn local_mixture_quantile(m: &MixtureDensity, p: f64) -> f64 {
    let (lo, hi, _) = m.support();
    bisect(|z| m.local_cdf(z) - p, lo, hi, 1e-14)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::std_norm_cdf;

    fn std_alt() -> MixtureDensity {
        MixtureDensity::local(vec![1.0], vec![GaussianComponent::standard()]).unwrap()
    }

    fn mirror(mu: f64, s2: f64) -> MixtureDensity {
        MixtureDensity::local(
            vec![0.5, 0.5],
            vec![
                GaussianComponent::new(-mu, s2).unwrap(),
                GaussianComponent::new(mu, s2).unwrap(),
            ],
        )
        .unwrap()
    }

    fn spec(alt: MixtureDensity, w: Option<WeightFunction>) -> TwoGroupSpec {
        TwoGroupSpec::new(0.2, GaussianComponent::standard(), alt, w).unwrap()
    }

    #[test]
    fn nothing_rejected_limit() {
        let alt = MixtureDensity::local(vec![1.0], vec![GaussianComponent::new(0.0, 4.0).unwrap()]).unwrap();
        let s = spec(alt, None);
        let oc = region_characteristics(&s, &AcceptanceRegion::new(-40.0, 40.0).unwrap(), false).unwrap();
        assert!(oc.power < 1e-80);
        assert!((oc.for_ - 0.2).abs() < 1e-12);
    }

    #[test]
    fn zero_mass_region_is_an_error() {
        let s = spec(std_alt(), None);
        assert!(matches!(
            region_characteristics(&s, &AcceptanceRegion::everything(), false),
            Err(NollikError::ZeroMassRegion)
        ));
    }

    #[test]
    fn identical_groups_have_chance_auc() {
        let s = spec(std_alt(), None);
        let oc = region_characteristics(&s, &AcceptanceRegion::symmetric(2.0).unwrap(), false).unwrap();
        assert!((oc.auc - 0.5).abs() < 1e-6, "{}", oc.auc);
    }

    #[test]
    fn indicator_power_closed_forms() {
        let s = spec(std_alt(), Some(WeightFunction::indicator(1.0).unwrap()));
        let a = AcceptanceRegion::symmetric(2.0).unwrap();
        let local = region_characteristics(&s, &a, false).unwrap();
        let nl = region_characteristics(&s, &a, true).unwrap();
        assert!((local.power - 2.0 * std_norm_cdf(-2.0)).abs() < 1e-14);
        assert!((local.power - 0.045_50).abs() < 1e-5);
        assert!((nl.power - std_norm_cdf(-2.0) / std_norm_cdf(-1.0)).abs() < 1e-12);
        assert!((nl.power - 0.143_39).abs() < 1e-5);
        assert_eq!(local.fpr, nl.fpr);
    }

    #[test]
    fn identity_weight_gives_zero_deltas() {
        let alt = MixtureDensity::local(
            vec![0.3, 0.7],
            vec![GaussianComponent::new(-2.0, 1.0).unwrap(), GaussianComponent::new(3.0, 0.5).unwrap()],
        )
        .unwrap();
        let s = spec(alt, Some(WeightFunction::identity()));
        let d = delta_metrics(&s, &AcceptanceRegion::new(-1.5, 2.5).unwrap()).unwrap();
        assert_eq!((d.d_fdr, d.d_for, d.d_beta), (0.0, 0.0, 0.0));
    }

    #[test]
    fn symmetric_mirror_mixture_improves() {
        let s = spec(mirror(3.0, 1.0), Some(WeightFunction::w1(3.0, 2).unwrap()));
        let d = delta_metrics(&s, &AcceptanceRegion::symmetric(2.0).unwrap()).unwrap();
        assert!(d.d_fdr >= -1e-10 && d.d_for >= -1e-10 && d.d_beta >= -1e-10);
        assert!(d.d_fdr > 0.0);
    }

    #[test]
    fn factorized_deltas_match_direct_differences() {
        let alt = MixtureDensity::local(
            vec![0.6, 0.4],
            vec![GaussianComponent::new(-1.0, 2.0).unwrap(), GaussianComponent::new(2.5, 0.7).unwrap()],
        )
        .unwrap();
        let oracle = TheoryOracle::new(spec(alt, Some(WeightFunction::w2(2.0, 2).unwrap()))).unwrap();
        for (lo, hi) in [(-2.0, 2.0), (-0.5, 3.0), (-3.0, 0.4)] {
            let r = AcceptanceRegion::new(lo, hi).unwrap();
            let l = oracle.characteristics(&r, false).unwrap();
            let n = oracle.characteristics(&r, true).unwrap();
            let d = oracle.deltas(&r).unwrap();
            assert!((d.d_fdr - (l.fdr - n.fdr)).abs() < 1e-12);
            assert!((d.d_for - (l.for_ - n.for_)).abs() < 1e-12);
            assert!((d.d_beta - (n.power - l.power)).abs() < 1e-12);
            let s = d.d_cdf.signum();
            assert_eq!(d.d_fdr.signum(), s);
            assert_eq!(d.d_for.signum(), s);
            assert_eq!(d.d_beta.signum(), s);
        }
    }

    #[test]
    fn h_limits_and_symmetry() {
        let s = spec(mirror(2.0, 1.5), Some(WeightFunction::w1(3.0, 2).unwrap()));
        let o = TheoryOracle::new(s).unwrap();
        assert!(o.h(40.0).abs() < 1e-8);
        assert!(o.h(-40.0).abs() < 1e-8);
        assert!(o.h(0.0).abs() < 1e-12);
    }

    #[test]
    fn indicator_h_closed_form_inside_gap() {
        let o = TheoryOracle::new(spec(std_alt(), Some(WeightFunction::indicator(1.0).unwrap()))).unwrap();
        let k = 2.0 * std_norm_cdf(-1.0);
        for &z in &[-0.9, -0.3, 0.0, 0.55, 0.99] {
            // F₁ᴺᴸ is flat at F₁(−δ)/K across the gap
            let want = std_norm_cdf(z) - std_norm_cdf(-1.0) / k;
            assert!((o.h(z) - want).abs() < 1e-8);
        }
    }

    #[test]
    fn symmetric_root_is_origin() {
        let o = TheoryOracle::new(spec(mirror(3.0, 1.0), Some(WeightFunction::w1(3.0, 2).unwrap()))).unwrap();
        let cp = o.critical_points().unwrap();
        assert!(cp.z_hat.abs() < 1e-8);
        assert!(cp.plateau.is_none());
    }

    #[test]
    fn z_star_matches_bisection_of_weight_equation() {
        let w = WeightFunction::w1(3.0, 2).unwrap();
        let o = TheoryOracle::new(spec(std_alt(), Some(w))).unwrap();
        let cp = o.critical_points().unwrap();
        let k = o.normconst();
        let root = bisect(|z| w.value(z) - k, 0.0, 30.0, 1e-13);
        assert!((cp.z_star - root).abs() < 1e-10);
    }

    #[test]
    fn asymmetric_indicator_root_closed_form() {
        let alt = MixtureDensity::local(vec![1.0], vec![GaussianComponent::new(0.7, 1.3).unwrap()]).unwrap();
        let delta = 1.0;
        let o = TheoryOracle::new(spec(alt.clone(), Some(WeightFunction::indicator(delta).unwrap()))).unwrap();
        let cp = o.critical_points().unwrap();
        let k = alt.local_cdf(-delta) + alt.local_sf(delta);
        let want = local_mixture_quantile(&alt, alt.local_cdf(-delta) / k);
        assert!((cp.z_hat - want).abs() < 1e-8, "{} vs {want}", cp.z_hat);
    }

    #[test]
    fn identity_weight_has_no_crossing() {
        let o = TheoryOracle::new(spec(std_alt(), Some(WeightFunction::identity()))).unwrap();
        assert!(matches!(o.critical_points(), Err(NollikError::NoSignChange { .. })));
    }

    #[test]
    fn critical_interval_containment() {
        // W0 with k=1 over N(0,1): K = 1, so z* = 1
        let o = TheoryOracle::new(spec(std_alt(), Some(WeightFunction::w0(1).unwrap()))).unwrap();
        assert!(o.contains_critical_interval(&AcceptanceRegion::symmetric(2.0).unwrap()).unwrap());
        // W0 with k=1 over N(0, 9): K = 9, z* = 3
        let alt = MixtureDensity::local(vec![1.0], vec![GaussianComponent::new(0.0, 9.0).unwrap()]).unwrap();
        let o = TheoryOracle::new(spec(alt, Some(WeightFunction::w0(1).unwrap()))).unwrap();
        assert!((o.critical_points().unwrap().z_star - 3.0).abs() < 1e-9);
        assert!(!o.contains_critical_interval(&AcceptanceRegion::symmetric(2.0).unwrap()).unwrap());
    }

    #[test]
    fn weighted_quantities_need_a_weight() {
        let s = spec(std_alt(), None);
        assert!(delta_metrics(&s, &AcceptanceRegion::symmetric(1.0).unwrap()).is_err());
        assert!(region_characteristics(&s, &AcceptanceRegion::symmetric(1.0).unwrap(), true).is_err());
    }
}

//! Scalar special functions and quadrature rules shared by the rest of the crate.

use std::sync::OnceLock;

use statrs::function::beta::beta_reg;
use libm::erfc;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Positive floor below which a normalizing constant is treated as underflowed.
pub const POSITIVE_FLOOR: f64 = 1e-300;

#[inline]
pub fn norm_logpdf(x: f64, mu: f64, sigma2: f64) -> f64 {
    let d = x - mu;
    -LN_SQRT_2PI - 0.5 * sigma2.ln() - 0.5 * d * d / sigma2
}

#[inline]
pub fn norm_pdf(x: f64, mu: f64, sigma2: f64) -> f64 {
    norm_logpdf(x, mu, sigma2).exp()
}

/// Standard normal cdf.
#[inline]
pub fn std_norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Log of the standard normal cdf, accurate deep into the lower tail.
pub fn std_norm_logcdf(x: f64) -> f64 {
    if x > 0.0 {
        (-0.5 * erfc(x / SQRT_2)).ln_1p()
    } else if x > -37.0 {
        (0.5 * erfc(-x / SQRT_2)).ln()
    } else {
        // asymptotic Mills-ratio series
        let x2 = x * x;
        let inv = 1.0 / x2;
        let series = 1.0 - inv * (1.0 - 3.0 * inv * (1.0 - 5.0 * inv * (1.0 - 7.0 * inv)));
        -0.5 * x2 - (-x).ln() - LN_SQRT_2PI + series.ln()
    }
}

#[inline]
pub fn norm_cdf(x: f64, mu: f64, sigma2: f64) -> f64 {
    std_norm_cdf((x - mu) / sigma2.sqrt())
}

/// Inverse of the standard normal cdf (Wichura, AS 241).
pub fn std_norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((r * 2509.080_928_730_122_7 + 33430.575_583_588_128) * r
            + 67265.770_927_008_7)
            * r
            + 45921.953_931_549_87)
            * r
            + 13731.693_765_509_461)
            * r
            + 1971.590_950_306_551_4)
            * r
            + 133.141_667_891_784_38)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((r * 5226.495_278_852_546 + 28729.085_735_721_943) * r
            + 39307.895_800_092_71)
            * r
            + 21213.794_301_586_596)
            * r
            + 5394.196_021_424_751)
            * r
            + 687.187_007_492_057_9)
            * r
            + 42.313_330_701_600_91)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((r * 7.745_450_142_783_414e-4 + 0.022_723_844_989_269_184) * r
            + 0.241_780_725_177_450_6)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((r * 1.050_750_071_644_416_9e-9 + 5.475_938_084_995_345e-4) * r
            + 0.015_198_666_563_616_457)
            * r
            + 0.148_103_976_427_480_07)
            * r
            + 0.689_767_334_985_1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((r * 2.010_334_399_292_288_1e-7 + 2.711_555_568_743_487_6e-5) * r
            + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((r * 2.044_263_103_389_939_7e-15 + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 0.014_875_361_290_850_615)
            * r
            + 0.136_929_880_922_735_8)
            * r
            + 0.599_832_206_555_887_9)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Lower-tail probability `min(F_t(t), 1 - F_t(t))` of a Student t with `df` degrees of freedom.
pub fn student_t_tail(t: f64, df: f64) -> f64 {
    let t2 = t * t;
    let y = t2 / (df + t2);
    if y < 0.5 {
        0.5 * (1.0 - beta_reg(0.5, 0.5 * df, y))
    } else {
        0.5 * beta_reg(0.5 * df, 0.5, df / (df + t2))
    }
}

pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = student_t_tail(t, df);
    if t < 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Nodes and weights of an n-point rule.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> QuadratureRule {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    QuadratureRule {
        nodes: x,
        weights: w,
    }
}

fn legendre_rule() -> &'static QuadratureRule {
    static RULE: OnceLock<QuadratureRule> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(20))
}

fn legendre_rule_10() -> &'static QuadratureRule {
    static RULE: OnceLock<QuadratureRule> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(10))
}

/// Gauss-Legendre integral of `f` over `[a, b]`.
pub fn integrate_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let rule = legendre_rule();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// 10-point Gauss-Legendre integral of `f` over `[a, b]`.
#[inline]
pub fn integrate_panel_10<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let rule = legendre_rule_10();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Running integral of a nonnegative integrand over a fixed panel partition.
///
/// Panel integrals are computed once; evaluating the lower or upper
/// integral at a point costs one partial-panel rule.
pub struct CumulativeIntegral<F> {
    f: F,
    edges: Vec<f64>,
    /// `lower[i]` = integral over `[edges[0], edges[i]]`
    lower: Vec<f64>,
    /// `upper[i]` = integral over `[edges[i], edges[last]]`
    upper: Vec<f64>,
}

impl<F: Fn(f64) -> f64> CumulativeIntegral<F> {
    /// Partition `[lo, hi]` into panels no wider than `max_width`, splitting
    /// additionally at every breakpoint inside the interval.
    pub fn new(f: F, lo: f64, hi: f64, max_width: f64, breakpoints: &[f64]) -> Self {
        assert!(lo < hi && max_width > 0.0);
        let n = ((hi - lo) / max_width).ceil().max(1.0) as usize;
        let mut edges: Vec<f64> = (0..=n)
            .map(|i| lo + (hi - lo) * i as f64 / n as f64)
            .collect();
        edges[n] = hi;
        edges.extend(breakpoints.iter().copied().filter(|b| *b > lo && *b < hi));
        edges.sort_by(|a, b| a.total_cmp(b));
        edges.dedup();
        let panels: Vec<f64> = edges
            .windows(2)
            .map(|e| integrate_panel(&f, e[0], e[1]))
            .collect();
        let mut lower = Vec::with_capacity(edges.len());
        let mut acc = 0.0;
        lower.push(0.0);
        for p in &panels {
            acc += p;
            lower.push(acc);
        }
        let mut upper = vec![0.0; edges.len()];
        let mut acc = 0.0;
        for (i, p) in panels.iter().enumerate().rev() {
            acc += p;
            upper[i] = acc;
        }
        Self {
            f,
            edges,
            lower,
            upper,
        }
    }

    pub fn lo(&self) -> f64 {
        self.edges[0]
    }

    pub fn hi(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    pub fn total(&self) -> f64 {
        *self.lower.last().unwrap()
    }

    fn panel_of(&self, z: f64) -> usize {
        // index i with edges[i] <= z < edges[i + 1]
        self.edges.partition_point(|e| *e <= z) - 1
    }

    /// Integral over `[lo, z]`.
    pub fn lower_at(&self, z: f64) -> f64 {
        if z <= self.lo() {
            return 0.0;
        }
        if z >= self.hi() {
            return self.total();
        }
        let i = self.panel_of(z);
        let part = integrate_panel(&self.f, self.edges[i], z);
        let panel = self.lower[i + 1] - self.lower[i];
        self.lower[i] + part.clamp(0.0, panel.max(0.0))
    }

    /// Integral over `[z, hi]`.
    pub fn upper_at(&self, z: f64) -> f64 {
        if z >= self.hi() {
            return 0.0;
        }
        if z <= self.lo() {
            return self.total();
        }
        let i = self.panel_of(z);
        let part = integrate_panel(&self.f, z, self.edges[i + 1]);
        let panel = self.upper[i] - self.upper[i + 1];
        self.upper[i + 1] + part.clamp(0.0, panel.max(0.0))
    }
}

/// Bisection for a sign change of `f` on `[lo, hi]`; returns the bracket midpoint
/// once its width drops below `tol`.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let f_lo = f(lo);
    let rising = f_lo <= 0.0;
    for _ in 0..400 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm <= 0.0) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// SplitMix64 finalizer, used to derive independent seeds from a master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15_u64.wrapping_mul(stream.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

//! Acceptance suite: one pass/fail line per criterion, nonzero exit on any failure.

use std::path::Path;
use std::time::{Duration, Instant};

use nollik::inference::{
    analyze_chain, bfdr_curve, bfdr_threshold, default_grid, estimate_p1, BnpDensity, GRID_POINTS, GRID_SPREAD,
};
use nollik::io::{write_benchmark_csv, write_densities_csv, write_report_csv, write_trace};
use nollik::numerics::{norm_pdf, std_norm_cdf, std_norm_quantile, CumulativeIntegral};
use nollik::sampler::bnp::{init_state_bnp, step_concentration, step_sticks, BnpHyperparameters};
use nollik::sampler::parametric::{init_state, step_alpha, step_labels, step_null, step_rho, Hyperparameters};
use nollik::sampler::{ChainTrace, Controls, Nig, SuffStats};
use nollik::simulation::{
    auc_rank, bh_procedure, generate_scenario, robustness_hyperparameters, run_benchmark, BenchmarkConfig, Method,
    RhoPrior, ScenarioId, ScenarioSpec,
};
use nollik::slice::{slice_sample, slice_sample_weighted, SkewNormal, SliceOptions};
use nollik::theory::{AcceptanceRegion, TheoryOracle, TwoGroupSpec};
use nollik::weightcore::{
    normalizing_constant, reparameterize_mixture, weighted_local_density, GaussianComponent, MixtureDensity,
    WeightFunction, WeightKind, WeightedCdf, WeightedKernel,
};
use nollik::{run_chain, run_chain_bnp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

fn random_weight(rng: &mut ChaCha8Rng, kind: WeightKind) -> WeightFunction {
    match kind {
        WeightKind::W0 => WeightFunction::w0(rng.random_range(1..=3)).unwrap(),
        WeightKind::Indicator => WeightFunction::indicator(rng.random_range(0.1..2.0)).unwrap(),
        k => WeightFunction::new(k, rng.random_range(0.5..4.0), rng.random_range(1..=4), 0.0).unwrap(),
    }
}

fn c1_mixture_identity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let grid: Vec<f64> = (0..1001).map(|i| -10.0 + 0.02 * i as f64).collect();
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let comps: Vec<GaussianComponent> = (0..3)
            .map(|_| GaussianComponent::new(rng.random_range(-5.0..5.0), rng.random_range(0.2..3.0)).unwrap())
            .collect();
        let local = MixtureDensity::local(weights, comps).unwrap();
        let kind = if case % 2 == 0 { WeightKind::W1 } else { WeightKind::W2 };
        let w = random_weight(&mut rng, kind);
        let mixed = reparameterize_mixture(&local, &w).unwrap();
        for z in &grid {
            let a = weighted_local_density(&local, &w, *z).unwrap();
            let b = mixed.density(*z);
            // subnormal values carry no relative precision
            worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE));
        }
    }
    let t = start.elapsed();
    outcome(
        worst < 1e-10 && t.as_secs_f64() < 10.0,
        format!("max relative error {worst:.2e} over 100 cases x 1001 points (limit 1e-10, subnormal floor), {}", secs(t)),
    )
}

fn symmetric_alternative(rng: &mut ChaCha8Rng, i: usize) -> MixtureDensity {
    if i % 2 == 0 {
        let m = rng.random_range(0.5..5.0);
        let s2 = rng.random_range(0.25..4.0);
        MixtureDensity::local(
            vec![0.5, 0.5],
            vec![GaussianComponent::new(-m, s2).unwrap(), GaussianComponent::new(m, s2).unwrap()],
        )
        .unwrap()
    } else {
        MixtureDensity::local(vec![1.0], vec![GaussianComponent::new(0.0, rng.random_range(1.5..9.0)).unwrap()])
            .unwrap()
    }
}

fn c2_symmetric_sweep() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut cells, mut bad) = (0usize, 0usize);
    let mut worst = f64::INFINITY;
    for i in 0..50 {
        let alt = symmetric_alternative(&mut rng, i);
        let rho = rng.random_range(0.05..0.3);
        for kind in [WeightKind::W1, WeightKind::W2] {
            for xi in [1.0, 2.0, 3.0] {
                for k in 1..=3 {
                    let w = WeightFunction::new(kind, xi, k, 0.0).unwrap();
                    let spec = TwoGroupSpec::new(rho, GaussianComponent::standard(), alt.clone(), Some(w)).unwrap();
                    let o = TheoryOracle::new(spec).unwrap();
                    let auc_gap = o.auc(true) - o.auc(false);
                    worst = worst.min(auc_gap);
                    let mut cell_ok = auc_gap >= -1e-10;
                    for c in 1..=8 {
                        let r = AcceptanceRegion::symmetric(0.5 * c as f64).unwrap();
                        let d = o.deltas(&r).unwrap();
                        let m = d.d_fdr.min(d.d_for).min(d.d_beta);
                        worst = worst.min(m);
                        cell_ok &= m >= -1e-10;
                        cells += 1;
                    }
                    if !cell_ok {
                        bad += 1;
                    }
                }
            }
        }
    }
    let t = start.elapsed();
    outcome(
        bad == 0 && t.as_secs_f64() < 120.0,
        format!(
            "{cells} (alternative, weight, xi, k, c) cells, {bad} violating oracles, min delta/AUC gap {worst:.2e}, {}",
            secs(t)
        ),
    )
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

fn c3_contained_sweep() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut conditioned, mut attempts, mut violations) = (0usize, 0usize, 0usize);
    let (mut sign_cells, mut sign_ok, mut direct_checked, mut direct_bad) = (0usize, 0usize, 0usize, 0usize);
    while conditioned < 200 && attempts < 20_000 {
        attempts += 1;
        let p = rng.random_range(0.1..0.9);
        let alt = MixtureDensity::local(
            vec![p, 1.0 - p],
            vec![
                GaussianComponent::new(rng.random_range(-5.0..-0.5), rng.random_range(0.25..3.0)).unwrap(),
                GaussianComponent::new(rng.random_range(0.5..5.0), rng.random_range(0.25..3.0)).unwrap(),
            ],
        )
        .unwrap();
        let kind = if rng.random::<bool>() { WeightKind::W1 } else { WeightKind::W2 };
        let w = WeightFunction::new(kind, rng.random_range(0.5..3.0), rng.random_range(1..=3), 0.0).unwrap();
        let null = GaussianComponent::new(rng.random_range(-0.3..0.3), rng.random_range(0.7..1.5)).unwrap();
        let spec = TwoGroupSpec::new(rng.random_range(0.05..0.4), null, alt, Some(w)).unwrap();
        let region = AcceptanceRegion::new(-rng.random_range(0.5..5.0), rng.random_range(0.5..5.0)).unwrap();
        let o = TheoryOracle::new(spec).unwrap();
        let Ok(d) = o.deltas(&region) else { continue };
        sign_cells += 1;
        let s = sign(d.d_cdf);
        if sign(d.d_fdr) == s && sign(d.d_for) == s && sign(d.d_beta) == s {
            sign_ok += 1;
        }
        // direct differences agree with the common sign wherever they are resolvable
        let local = o.characteristics(&region, false).unwrap();
        let nl = o.characteristics(&region, true).unwrap();
        for direct in [local.fdr - nl.fdr, local.for_ - nl.for_, nl.power - local.power] {
            if direct.abs() > 1e-12 {
                direct_checked += 1;
                if sign(direct) != s {
                    direct_bad += 1;
                }
            }
        }
        if o.contains_critical_interval(&region).unwrap() {
            conditioned += 1;
            if d.d_fdr.min(d.d_for).min(d.d_beta) < -1e-10 {
                violations += 1;
            }
        }
    }
    outcome(
        conditioned == 200 && violations == 0 && sign_ok == sign_cells && direct_bad == 0,
        format!(
            "{conditioned} conditioned cases ({violations} with a delta < -1e-10); sign identity {sign_ok}/{sign_cells} cells, \
             direct differences {}/{direct_checked} agree; {attempts} draws, {}",
            direct_checked - direct_bad,
            secs(start.elapsed())
        ),
    )
}

fn c4_indicator_closed_form() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for delta in [0.5, 1.0, 2.0] {
        let alt = MixtureDensity::local(vec![1.0], vec![GaussianComponent::standard()]).unwrap();
        let w = WeightFunction::indicator(delta).unwrap();
        let o = TheoryOracle::new(TwoGroupSpec::new(0.1, GaussianComponent::standard(), alt, Some(w)).unwrap())
            .unwrap();
        let k = o.normconst();
        let want = std_norm_quantile(std_norm_cdf(-delta) / k);
        match o.critical_points() {
            Ok(cp) => {
                let e = (cp.z_hat - want).abs();
                worst = worst.max(e);
                parts.push(format!("delta={delta}: z_hat={:.3e} vs {:.3e}", cp.z_hat, want));
            }
            Err(e) => {
                worst = f64::INFINITY;
                parts.push(format!("delta={delta}: {e}"));
            }
        }
    }
    outcome(worst < 1e-6, format!("max |error| {worst:.2e} (limit 1e-6); {}", parts.join("; ")))
}

fn c5_normalizing_constants() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let kinds = [WeightKind::W0, WeightKind::W1, WeightKind::W2, WeightKind::Indicator];
    let n = 1_000_000;
    let (mut within, mut worst_z) = (0usize, 0.0f64);
    let mut w0_worst: f64 = 0.0;
    for case in 0..50 {
        let w = random_weight(&mut rng, kinds[case % 4]);
        let c = GaussianComponent::new(rng.random_range(-4.0..4.0), rng.random_range(0.3..3.0)).unwrap();
        let k = normalizing_constant(&w, &c).unwrap();
        let dist = Normal::new(c.mu, c.sd()).unwrap();
        let mut mc_rng = ChaCha8Rng::seed_from_u64(5000 + case as u64);
        let vals: Vec<f64> = (0..n).map(|_| w.value(dist.sample(&mut mc_rng))).collect();
        let (m, v) = mean_var(&vals);
        let se = (v / n as f64).sqrt();
        let zscore = if se > 0.0 { (k - m).abs() / se } else if k == m { 0.0 } else { f64::INFINITY };
        worst_z = worst_z.max(zscore);
        if zscore <= 3.0 {
            within += 1;
        }
        let w0 = WeightFunction::w0(1).unwrap();
        w0_worst = w0_worst.max(rel(normalizing_constant(&w0, &c).unwrap(), c.mu * c.mu + c.sigma2));
    }
    outcome(
        within == 50 && w0_worst < 1e-12,
        format!(
            "{within}/50 pairs within 3 SE of 1e6-draw Monte Carlo (worst {worst_z:.2} SE); W0 k=1 max rel error {w0_worst:.1e}, {}",
            secs(start.elapsed())
        ),
    )
}

fn ks_distance(mut x: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, v)| {
            let f = cdf(*v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn c6_slice_sampler() -> Outcome {
    let kernel = WeightedKernel::new(GaussianComponent::standard(), WeightFunction::w1(5.0, 1).unwrap()).unwrap();
    let cdf = WeightedCdf::new(&kernel);
    let d1 = ks_distance(slice_sample_weighted(&kernel, 10_000, 1).unwrap(), |z| cdf.cdf(z));
    let skew = SkewNormal { shape: 2.0 };
    let skew_cdf = CumulativeIntegral::new(
        |x: f64| 2.0 * norm_pdf(x, 0.0, 1.0) * std_norm_cdf(2.0 * x),
        -40.0,
        40.0,
        0.25,
        &[0.0],
    );
    let d2 = ks_distance(slice_sample(&skew, 10_000, 1, SliceOptions::default()), |z| skew_cdf.lower_at(z));
    outcome(
        d1 < 0.02 && d2 < 0.02,
        format!("KS distance {d1:.4} for w1(5,1) x N(0,1), {d2:.4} for skew-normal shape 2 (limit 0.02, n = 1e4)"),
    )
}

fn identity_hyperparameters() -> Hyperparameters {
    Hyperparameters {
        weight_kind: WeightKind::Indicator,
        delta: 0.0,
        ..Default::default()
    }
}

/// Gibbs sampler drawing both alternative components straight from their
/// sign-truncated conjugate posteriors (valid for the identity weight only).
fn conjugate_gibbs(z: &[f64], hp: &Hyperparameters, controls: &Controls) -> Vec<[f64; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(controls.seed ^ 0x5eed);
    let mut s = init_state(z, hp, controls.seed).unwrap();
    let mut out = Vec::new();
    for t in 1..=controls.iterations {
        step_rho(&mut s, hp, &mut rng);
        step_labels(&mut s, z, &mut rng).unwrap();
        step_alpha(&mut s, hp, &mut rng);
        step_null(&mut s, hp, z, &mut rng);
        for j in 1..=2u8 {
            let stats = SuffStats::from_iter(
                z.iter()
                    .zip(&s.gamma)
                    .filter(|(_, g)| **g == j)
                    .map(|(x, _)| *x),
            );
            let post = hp.alt_prior(j as usize).posterior(&stats);
            let c = loop {
                let c = post.sample(&mut rng);
                if (j == 1 && c.mu < 0.0) || (j == 2 && c.mu > 0.0) {
                    break c;
                }
            };
            if j == 1 {
                s.comp1 = c;
            } else {
                s.comp2 = c;
            }
        }
        if controls.retains(t) {
            out.push([s.comp1.mu, s.comp1.sigma2, s.comp2.mu, s.comp2.sigma2]);
        }
    }
    out
}

fn qq_correlation(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (ma, va) = mean_var(&a);
    let (mb, vb) = mean_var(&b);
    let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() as f64 - 1.0);
    cov / (va * vb).sqrt()
}

/// Mean and variance of `draws` each within 3 Monte Carlo standard errors.
fn moments_match(draws: &[f64], mean: f64, var: f64) -> (bool, f64) {
    let n = draws.len() as f64;
    let (m, v) = mean_var(draws);
    let z_mean = (m - mean).abs() / (var / n).sqrt();
    let dev: Vec<f64> = draws.iter().map(|x| (x - m).powi(2)).collect();
    let (_, v4) = mean_var(&dev);
    let z_var = (v - var).abs() / (v4 / n).sqrt();
    let worst = z_mean.max(z_var);
    (worst <= 3.0, worst)
}

fn beta_moments(a: f64, b: f64) -> (f64, f64) {
    (a / (a + b), a * b / ((a + b).powi(2) * (a + b + 1.0)))
}

fn c7_sampler_validity() -> Outcome {
    let start = Instant::now();
    let data = generate_scenario(&ScenarioSpec::new(ScenarioId::S1, 1000, 707).unwrap()).unwrap();
    let hp = identity_hyperparameters();
    let controls = Controls::default();
    let trace = run_chain(&data.z, &hp, &controls).unwrap();
    let gibbs = conjugate_gibbs(&data.z, &hp, &controls);
    let names = ["mu1", "sigma21", "mu2", "sigma22"];
    let mut qq = Vec::new();
    for p in 0..4 {
        let a: Vec<f64> = trace
            .records
            .iter()
            .map(|r| if p % 2 == 0 { r.components[p / 2].mu } else { r.components[p / 2].sigma2 })
            .collect();
        let b: Vec<f64> = gibbs.iter().map(|g| g[p]).collect();
        qq.push(qq_correlation(a, b));
    }
    let qq_ok = trace.len() == 5000 && gibbs.len() == 5000 && qq.iter().all(|c| *c > 0.99);

    // full conditionals against their closed forms
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut state = init_state(&data.z, &hp, 3).unwrap();
    let mut checks: Vec<(&str, bool, f64)> = Vec::new();

    let n1 = state.n_relevant() as f64;
    let ntot = data.z.len() as f64;
    let draws: Vec<f64> = (0..n)
        .map(|_| {
            step_rho(&mut state, &hp, &mut rng);
            state.rho
        })
        .collect();
    let (m, v) = beta_moments(hp.a_rho + n1, hp.b_rho + ntot - n1);
    let (ok, z) = moments_match(&draws, m, v);
    checks.push(("rho", ok, z));

    let (n11, n12) = state.component_counts();
    let draws: Vec<f64> = (0..n)
        .map(|_| {
            step_alpha(&mut state, &hp, &mut rng);
            state.alpha
        })
        .collect();
    let (m, v) = beta_moments(hp.a_alpha + n12 as f64, hp.b_alpha + n11 as f64);
    let (ok, z) = moments_match(&draws, m, v);
    checks.push(("alpha", ok, z));

    let null_stats = SuffStats::from_iter(
        data.z
            .iter()
            .zip(&state.gamma)
            .filter(|(_, g)| **g == 0)
            .map(|(x, _)| *x),
    );
    let post: Nig = hp.null_prior().posterior(&null_stats);
    let (mut mus, mut s2s) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        step_null(&mut state, &hp, &data.z, &mut rng);
        mus.push(state.mu0);
        s2s.push(state.sigma20);
    }
    // NIG: σ² ~ IG(a, b), μ | σ² ~ N(m, σ²/κ)
    let e_s2 = post.b / (post.a - 1.0);
    let v_s2 = post.b * post.b / ((post.a - 1.0).powi(2) * (post.a - 2.0));
    let (ok, z) = moments_match(&mus, post.m, e_s2 / post.kappa);
    checks.push(("mu0", ok, z));
    let (ok, z) = moments_match(&s2s, e_s2, v_s2);
    checks.push(("sigma20", ok, z));

    let bhp = BnpHyperparameters::default();
    let mut b = init_state_bnp(&data.z, &bhp, 5).unwrap();
    let counts = b.cluster_counts();
    let tail: usize = counts[1..].iter().sum();
    let conc = b.conc;
    let draws: Vec<f64> = (0..n)
        .map(|_| {
            b.conc = conc;
            step_sticks(&mut b, &mut rng);
            b.sticks[0]
        })
        .collect();
    let (m, v) = beta_moments(1.0 + counts[0] as f64, conc + tail as f64);
    let (ok, z) = moments_match(&draws, m, v);
    checks.push(("stick u1", ok, z));

    let s: f64 = b.sticks.iter().map(|u| (-u).ln_1p()).sum();
    let (shape, rate) = (bhp.alpha_a + (bhp.j - 1) as f64, bhp.beta_a - s);
    let draws: Vec<f64> = (0..n)
        .map(|_| {
            step_concentration(&mut b, &bhp, &mut rng);
            b.conc
        })
        .collect();
    let (ok, z) = moments_match(&draws, shape / rate, shape / (rate * rate));
    checks.push(("concentration", ok, z));

    let fc_ok = checks.iter().all(|c| c.1);
    let fc: Vec<String> = checks.iter().map(|(n, _, z)| format!("{n} {z:.2}")).collect();
    outcome(
        qq_ok && fc_ok,
        format!(
            "Q-Q correlations {} (limit 0.99, {} vs {} draws); full conditionals worst SE: {}, {}",
            names
                .iter()
                .zip(&qq)
                .map(|(n, c)| format!("{n} {c:.4}"))
                .collect::<Vec<_>>()
                .join(", "),
            trace.len(),
            gibbs.len(),
            fc.join(", "),
            secs(start.elapsed())
        ),
    )
}

/// Non-local fits shared by the recovery and BFDR criteria.
struct Fit {
    z: Vec<f64>,
    p1: Vec<f64>,
    rho_hat: f64,
    auc: Option<f64>,
    seconds: f64,
}

fn fit(z: Vec<f64>, truth: Option<&[bool]>, hp: &Hyperparameters, seed: u64) -> Fit {
    let start = Instant::now();
    let controls = Controls { seed, ..Controls::default() };
    let trace = run_chain(&z, hp, &controls).unwrap();
    let p1 = estimate_p1(&trace).unwrap();
    let rho = trace.rho_draws();
    Fit {
        auc: truth.and_then(|t| auc_rank(&p1, t)),
        rho_hat: rho.iter().sum::<f64>() / rho.len() as f64,
        z,
        p1,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn s1_fits() -> Vec<Fit> {
    (0..50)
        .map(|r| {
            let d = generate_scenario(&ScenarioSpec::new(ScenarioId::S1, 1000, 8000 + r).unwrap()).unwrap();
            fit(d.z.clone(), Some(&d.truth), &Hyperparameters::default(), r + 1)
        })
        .collect()
}

fn c8_recovery(fits: &[Fit]) -> Outcome {
    let inside = fits.iter().filter(|f| (0.07..=0.13).contains(&f.rho_hat)).count();
    let mut aucs: Vec<f64> = fits[..10].iter().filter_map(|f| f.auc).collect();
    aucs.sort_by(f64::total_cmp);
    let med = 0.5 * (aucs[4] + aucs[5]);
    let slowest = fits.iter().map(|f| f.seconds).fold(0.0, f64::max);
    let (lo, hi) = fits
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), f| (a.min(f.rho_hat), b.max(f.rho_hat)));
    outcome(
        inside >= 45 && aucs.len() == 10 && med >= 0.90 && slowest <= 300.0,
        format!(
            "rho_hat in [0.07, 0.13] for {inside}/50 S1 fits (range {lo:.3}..{hi:.3}); median AUC {med:.4} over 10; \
             slowest fit {slowest:.1}s"
        ),
    )
}

fn c9_bfdr_machinery(fits: &[&Fit]) -> Outcome {
    let (mut bfdr_bad, mut mono_bad, mut zero_bad) = (0, 0, 0);
    let mut worst_p0: f64 = 0.0;
    for f in fits {
        let th = bfdr_threshold(&f.p1, 0.05).unwrap();
        if th.has_discoveries() && !(th.bfdr < 0.05) {
            bfdr_bad += 1;
        }
        let curve = bfdr_curve(&f.p1);
        if curve.windows(2).any(|w| w[1].1 > w[0].1 + 1e-15) {
            mono_bad += 1;
        }
        let i0 = (0..f.z.len())
            .min_by(|a, b| f.z[*a].abs().total_cmp(&f.z[*b].abs()))
            .unwrap();
        worst_p0 = worst_p0.max(f.p1[i0]);
        if !(f.p1[i0] < 0.01) {
            zero_bad += 1;
        }
    }
    outcome(
        bfdr_bad == 0 && mono_bad == 0 && zero_bad == 0,
        format!(
            "{} fits: BFDR(nu) >= 0.05 in {bfdr_bad}, non-monotone BFDR curve in {mono_bad}, P1 at z nearest 0 >= 0.01 in {zero_bad} \
             (max {worst_p0:.4})",
            fits.len()
        ),
    )
}

fn c10_robustness() -> (Outcome, Fit) {
    let d = generate_scenario(&ScenarioSpec::new(ScenarioId::Robust(1), 1000, 1).unwrap()).unwrap();
    let nl = fit(d.z.clone(), None, &robustness_hyperparameters(RhoPrior::Hp3, false), 1);
    let un = fit(d.z.clone(), None, &robustness_hyperparameters(RhoPrior::Hp3, true), 1);
    let frac = |f: &Fit| f.p1.iter().filter(|p| **p > 0.8).count() as f64 / f.p1.len() as f64;
    let (a, b) = (frac(&nl), frac(&un));
    (
        outcome(
            a < 0.10 && b > 0.30,
            format!(
                "HP3 on mu_k=1: w1 flags {:.1}% at P1 > 0.8 (limit < 10%), identity flags {:.1}% (limit > 30%); rho_hat {:.3} vs {:.3}",
                100.0 * a,
                100.0 * b,
                nl.rho_hat,
                un.rho_hat
            ),
        ),
        nl,
    )
}

fn c11_bh_fixtures() -> Outcome {
    let t = true;
    let f = false;
    let cases: Vec<(Vec<f64>, f64, Vec<bool>)> = vec![
        (vec![0.01, 0.02, 0.04, 0.8], 0.05, vec![t, t, f, f]),
        (vec![1.0; 5], 0.05, vec![f; 5]),
        (vec![0.0; 5], 0.05, vec![t; 5]),
        (vec![0.05], 0.05, vec![t]),
        (vec![0.0501], 0.05, vec![f]),
        (vec![0.03, 0.03, 0.03], 0.05, vec![t, t, t]),
        (vec![0.04, 0.04, 0.9], 0.05, vec![f, f, f]),
        (vec![0.001, 0.2, 0.011, 0.3, 0.02], 0.05, vec![t, f, t, f, t]),
        (vec![0.012, 0.013, 0.5, 0.6, 0.7], 0.05, vec![t, t, f, f, f]),
        (vec![0.06, 0.001, 0.07, 0.08], 0.1, vec![t, t, t, t]),
        (vec![0.2, 0.15, 0.1, 0.05, 0.01], 0.05, vec![f, f, f, f, t]),
        (vec![0.2, 0.15, 0.1, 0.05, 0.01], 0.25, vec![t, t, t, t, t]),
        (
            vec![0.009, 0.011, 0.012, 0.013, 0.2, 0.05, 0.9, 0.3, 0.4, 0.5],
            0.05,
            vec![t, t, t, t, f, f, f, f, f, f],
        ),
        (vec![0.5, 0.001], 0.001, vec![f, f]),
        (vec![0.049; 4], 0.05, vec![t; 4]),
        (vec![0.026, 0.024], 0.05, vec![t, t]),
        (vec![0.0125, 0.025, 0.0375, 0.05], 0.05, vec![t, t, t, t]),
        (vec![0.0126, 0.0251, 0.0376, 0.0501], 0.05, vec![f, f, f, f]),
        (vec![0.3, 0.01, 0.02, 0.025, 0.6, 0.001], 0.1, vec![f, t, t, t, f, t]),
        (
            vec![0.002, 0.004, 0.006, 0.008, 0.01, 0.012, 0.014, 0.016, 0.5, 0.9],
            0.01,
            vec![f; 10],
        ),
    ];
    let failed: Vec<usize> = cases
        .iter()
        .enumerate()
        .filter(|(_, (p, a, want))| bh_procedure(p, *a) != *want)
        .map(|(i, _)| i + 1)
        .collect();
    outcome(
        failed.is_empty(),
        format!("{}/{} fixtures agree exactly{}", cases.len() - failed.len(), cases.len(), if failed.is_empty() {
            String::new()
        } else {
            format!(" (failing: {failed:?})")
        }),
    )
}

fn write_fit_outputs(dir: &Path, z: &[f64], trace: &ChainTrace) {
    let grid = default_grid(z, GRID_POINTS, GRID_SPREAD).unwrap();
    let (report, dg) = analyze_chain(z, trace, 0.05, &grid, BnpDensity::Weighted).unwrap();
    write_report_csv(&dir.join("report.csv"), &report).unwrap();
    write_densities_csv(&dir.join("densities.csv"), &dg).unwrap();
    write_trace(&dir.join("trace.csv"), &dir.join("trace.json"), trace, serde_json::Value::Null).unwrap();
}

fn run_all_outputs(dir: &Path) {
    let d = generate_scenario(&ScenarioSpec::new(ScenarioId::S4, 400, 12).unwrap()).unwrap();
    let controls = Controls::new(2000, 500, 5, 99).unwrap();
    let p = dir.join("parametric");
    std::fs::create_dir_all(&p).unwrap();
    write_fit_outputs(&p, &d.z, &run_chain(&d.z, &Hyperparameters::default(), &controls).unwrap());
    let b = dir.join("bnp");
    std::fs::create_dir_all(&b).unwrap();
    let bhp = BnpHyperparameters::default();
    write_fit_outputs(&b, &d.z, &run_chain_bnp(&d.z, &bhp, &controls).unwrap());
    let cfg = BenchmarkConfig {
        scenarios: vec![ScenarioId::S1, ScenarioId::S3],
        methods: vec![Method::Bh, Method::NollikW2],
        replications: 2,
        seed: 4,
        n: 300,
        controls: Controls::new(1500, 500, 5, 1).unwrap(),
        alpha: 0.05,
    };
    write_benchmark_csv(&dir.join("benchmark.csv"), &run_benchmark(&cfg).unwrap()).unwrap();
}

fn files_under(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn c12_determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_all_outputs(a.path());
    run_all_outputs(b.path());
    let fa = files_under(a.path());
    let fb = files_under(b.path());
    let mut differing = Vec::new();
    for (x, y) in fa.iter().zip(&fb) {
        if x.strip_prefix(a.path()) != y.strip_prefix(b.path()) || std::fs::read(x).unwrap() != std::fs::read(y).unwrap() {
            differing.push(x.strip_prefix(a.path()).unwrap().display().to_string());
        }
    }
    outcome(
        fa.len() == fb.len() && fa.len() == 9 && differing.is_empty(),
        format!("{} output files compared byte for byte across two runs, {} differ {:?}", fa.len(), differing.len(), differing),
    )
}

fn report(n: usize, name: &str, o: &Outcome, failures: &mut usize) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    if !o.pass {
        *failures += 1;
    }
    println!("[{tag}] {n:>2}. {name}: {}", o.detail);
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    // `cargo test -- --list` style probes from tooling
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let start = Instant::now();
    let mut failures = 0;
    report(1, "mixture reparameterization identity", &c1_mixture_identity(), &mut failures);
    report(2, "symmetric-alternative sweep", &c2_symmetric_sweep(), &mut failures);
    report(3, "contained-region sweep and sign identity", &c3_contained_sweep(), &mut failures);
    report(4, "indicator weight closed form", &c4_indicator_closed_form(), &mut failures);
    report(5, "normalizing constants", &c5_normalizing_constants(), &mut failures);
    report(6, "slice sampler", &c6_slice_sampler(), &mut failures);
    report(7, "sampler validity", &c7_sampler_validity(), &mut failures);
    let fits = s1_fits();
    report(8, "recovery on S1", &c8_recovery(&fits), &mut failures);
    let (c10, robust_fit) = c10_robustness();
    let mut all: Vec<&Fit> = fits.iter().collect();
    all.push(&robust_fit);
    report(9, "BFDR control machinery", &c9_bfdr_machinery(&all), &mut failures);
    report(10, "prior robustness", &c10, &mut failures);
    report(11, "Benjamini-Hochberg fixtures", &c11_bh_fixtures(), &mut failures);
    report(12, "determinism", &c12_determinism(), &mut failures);
    println!(
        "acceptance: {} passed, {failures} failed in {}",
        12 - failures,
        secs(start.elapsed())
    );
    if failures > 0 {
        std::process::exit(1);
    }
}

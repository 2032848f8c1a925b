mod config;
mod output;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use nollik::inference::{
    acceptance_region_from_p1, analyze_chain, batch_means_ess, bfdr_threshold, default_grid, dual_route,
    ergodic_means, fit_grouped, posterior_summaries, scalar_draws, Summary,
};
use nollik::io::{
    fmt_f64, load_dataset, read_p1, read_trace, write_benchmark_csv, write_densities_csv, write_report_csv,
    write_summary_json, write_trace, FitSummary, LoadOptions, RegionJson,
};
use nollik::simulation::{run_benchmark, BenchmarkConfig, BenchmarkRow};
use nollik::{run_chain, run_chain_bnp, ChainTrace, Controls, TheoryOracle};
use serde::Serialize;

use config::{ModelChoice, Overrides, RunConfig, TheoryConfig};
use output::OutputDir;

#[derive(Parser)]
#[command(name = "nollik", version, about = "Two-group multiple testing with non-local alternatives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a CSV of statistics and write the discovery report
    Fit {
        /// Headered CSV with a statistic column and optional group/df columns
        data: PathBuf,
        /// Treat the statistics as Student t with these degrees of freedom
        #[arg(long)]
        df: Option<f64>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the simulation benchmark
    Simulate {
        /// Comma-separated scenarios (S1..S4, R-1..R-3)
        #[arg(long, default_value = "S1,S2,S3,S4")]
        scenario: String,
        /// Comma-separated methods (nollik-w0, nollik-w1, nollik-w2, bnp-w1, bh)
        #[arg(long, default_value = "nollik-w0,nollik-w1,nollik-w2,bnp-w1,bh")]
        method: String,
        #[arg(long, default_value_t = 50)]
        reps: usize,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        burnin: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Operating characteristics and deltas for a specified two-group model
    Theory {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the BFDR threshold from a file with a p1 column
    Threshold {
        #[arg(long)]
        p1: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Chain summaries for a saved trace
    Diagnose {
        #[arg(long)]
        trace: PathBuf,
        /// Trace sidecar; defaults to the trace path with a .json extension
        #[arg(long)]
        meta: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        batches: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit { data, df, overrides } => cmd_fit(&data, df, &overrides),
        Command::Simulate {
            scenario,
            method,
            reps,
            n,
            alpha,
            iters,
            burnin,
            thin,
            seed,
            out,
        } => {
            let mut controls = Controls::default();
            controls.iterations = iters.unwrap_or(controls.iterations);
            controls.burn_in = burnin.unwrap_or(controls.burn_in);
            controls.thin = thin.unwrap_or(controls.thin);
            let cfg = BenchmarkConfig {
                scenarios: parse_list(&scenario)?,
                methods: parse_list(&method)?,
                replications: reps,
                seed,
                n,
                controls,
                alpha,
            };
            cmd_simulate(&cfg, out.as_deref())
        }
        Command::Theory { config, out } => cmd_theory(&config, out.as_deref()),
        Command::Threshold { p1, alpha, out } => cmd_threshold(&p1, alpha, out.as_deref()),
        Command::Diagnose { trace, meta, batches } => {
            let meta = meta.unwrap_or_else(|| trace.with_extension("json"));
            cmd_diagnose(&trace, &meta, batches)
        }
    }
}

fn parse_list<T: std::str::FromStr<Err = nollik::NollikError>>(s: &str) -> Result<Vec<T>> {
    let v = s
        .split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<T>())
        .collect::<nollik::Result<Vec<_>>>()?;
    if v.is_empty() {
        bail!("empty list '{s}'");
    }
    Ok(v)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct Runtime {
    seconds: f64,
    version: &'static str,
}

/// Write the report, summary, density grid and trace of one chain into `dir`.
fn write_chain_outputs(
    out: &mut OutputDir,
    dir: &Path,
    z: &[f64],
    trace: &ChainTrace,
    cfg: &RunConfig,
) -> Result<FitSummary> {
    let grid = default_grid(z, cfg.grid.points, cfg.grid.spread)?;
    let (report, dg) = analyze_chain(z, trace, cfg.alpha, &grid, cfg.density)?;
    let mut summary = FitSummary::new(&report, trace, posterior_summaries(trace));
    summary.dual_route = Some(dual_route(&report.p1, &report.lfdr));
    write_report_csv(&out.file(dir.join("report.csv")), &report)?;
    write_summary_json(&out.file(dir.join("summary.json")), &summary)?;
    write_densities_csv(&out.file(dir.join("densities.csv")), &dg)?;
    let (tc, tj) = (out.file(dir.join("trace.csv")), out.file(dir.join("trace.json")));
    write_trace(&tc, &tj, trace, cfg.hyperparameters_json())?;
    Ok(summary)
}

#[derive(Serialize)]
struct GroupEntry {
    label: String,
    dir: String,
    n_obs: usize,
    nu_hat: f64,
    bfdr_at_nu: f64,
    n_flagged: usize,
    region: RegionJson,
}

#[derive(Serialize)]
struct GroupedSummary {
    model: &'static str,
    alpha: f64,
    rho: Summary,
    groups: Vec<GroupEntry>,
}

fn cmd_fit(data: &Path, df: Option<f64>, o: &Overrides) -> Result<()> {
    let mut cfg = RunConfig::resolve(o)?;
    if df.is_some() {
        cfg.data.df = df;
        cfg.validate()?;
    }
    let ds = load_dataset(data, LoadOptions { df: cfg.data.df })
        .with_context(|| format!("loading {}", data.display()))?;
    let out_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("nollik-out"));
    let start = Instant::now();
    let mut out = OutputDir::create(&out_dir)?;

    let grouped = cfg.model == ModelChoice::Grouped || ds.is_grouped();
    if grouped {
        if cfg.model == ModelChoice::Bnp {
            bail!("grouped data can only be fitted with the parametric model");
        }
        let groups = ds.groups();
        let slices: Vec<&[f64]> = groups.iter().map(|(_, z)| z.as_slice()).collect();
        let fit = fit_grouped(&slices, &cfg.parametric, &cfg.controls, cfg.alpha, cfg.grid.points)?;
        let mut entries = Vec::new();
        for (g, ((label, z), tr)) in groups.iter().zip(&fit.trace.groups).enumerate() {
            let name = format!("group-{}", g + 1);
            let dir = out.subdir(&out_dir.join(&name))?;
            let s = write_chain_outputs(&mut out, &dir, z, tr, &cfg)?;
            entries.push(GroupEntry {
                label: label.clone(),
                dir: name,
                n_obs: z.len(),
                nu_hat: s.nu_hat,
                bfdr_at_nu: s.bfdr_at_nu,
                n_flagged: s.n_flagged,
                region: s.region,
            });
        }
        write_json(
            &out.file(out_dir.join("summary.json")),
            &GroupedSummary {
                model: "grouped",
                alpha: cfg.alpha,
                rho: fit.rho,
                groups: entries,
            },
        )?;
    } else {
        let trace = match cfg.model {
            ModelChoice::Bnp => run_chain_bnp(&ds.z, &cfg.bnp, &cfg.controls)?,
            _ => run_chain(&ds.z, &cfg.parametric, &cfg.controls)?,
        };
        let s = write_chain_outputs(&mut out, &out_dir, &ds.z, &trace, &cfg)?;
        eprintln!(
            "{} observations, {} flagged at BFDR level {} (nu = {})",
            s.n_obs,
            s.n_flagged,
            cfg.alpha,
            fmt_f64(s.nu_hat)
        );
    }
    write_json(
        &out.file(out_dir.join("runtime.json")),
        &Runtime {
            seconds: start.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION"),
        },
    )?;
    out.commit();
    Ok(())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.retain(|x| !x.is_nan());
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn cmd_simulate(cfg: &BenchmarkConfig, out_dir: Option<&Path>) -> Result<()> {
    let rows = run_benchmark(cfg)?;
    if let Some(dir) = out_dir {
        let mut out = OutputDir::create(dir)?;
        write_benchmark_csv(&out.file(dir.join("benchmark.csv")), &rows)?;
        out.commit();
    }
    let mut cells: BTreeMap<(String, String, String, String), Vec<f64>> = BTreeMap::new();
    let mut errors = 0;
    for BenchmarkRow {
        scenario,
        method,
        rule,
        metric,
        value,
        ..
    } in rows
    {
        if metric == "error" {
            errors += 1;
            continue;
        }
        cells.entry((scenario, method, rule, metric)).or_default().push(value);
    }
    let mut w = std::io::stdout().lock();
    writeln!(w, "scenario,method,rule,metric,median,reps")?;
    for ((s, m, r, k), v) in cells {
        let n = v.len();
        writeln!(w, "{s},{m},{r},{k},{},{n}", fmt_f64(median(v)))?;
    }
    if errors > 0 {
        eprintln!("{errors} benchmark cells failed; see the note column of benchmark.csv");
    }
    Ok(())
}

#[derive(Serialize)]
struct TheoryRow {
    lower: f64,
    upper: f64,
    fdr: f64,
    fdr_nl: f64,
    #[serde(rename = "for")]
    for_: f64,
    for_nl: f64,
    power: f64,
    power_nl: f64,
    fpr: f64,
    d_fdr: f64,
    d_for: f64,
    d_beta: f64,
    contained_condition: bool,
}

#[derive(Serialize)]
struct TheoryOutput {
    normconst: f64,
    auc: f64,
    auc_nl: f64,
    z_star: Option<f64>,
    z_hat: Option<f64>,
    plateau: Option<(f64, f64)>,
    rows: Vec<TheoryRow>,
}

fn cmd_theory(config: &Path, out_dir: Option<&Path>) -> Result<()> {
    let tc = TheoryConfig::load(config)?;
    let oracle = TheoryOracle::new(tc.spec()?)?;
    let cp = oracle.critical_points().ok();
    let mut rows = Vec::new();
    for r in tc.regions()? {
        let local = oracle.characteristics(&r, false)?;
        let nl = oracle.characteristics(&r, true)?;
        let d = oracle.deltas(&r)?;
        rows.push(TheoryRow {
            lower: r.lower,
            upper: r.upper,
            fdr: local.fdr,
            fdr_nl: nl.fdr,
            for_: local.for_,
            for_nl: nl.for_,
            power: local.power,
            power_nl: nl.power,
            fpr: local.fpr,
            d_fdr: d.d_fdr,
            d_for: d.d_for,
            d_beta: d.d_beta,
            contained_condition: oracle.contains_critical_interval(&r).unwrap_or(false),
        });
    }
    let res = TheoryOutput {
        normconst: oracle.normconst(),
        auc: oracle.auc(false),
        auc_nl: oracle.auc(true),
        z_star: cp.map(|c| c.z_star),
        z_hat: cp.map(|c| c.z_hat),
        plateau: cp.and_then(|c| c.plateau),
        rows,
    };
    let mut table = String::from("lower,upper,fdr,fdr_nl,for,for_nl,power,power_nl,fpr,d_fdr,d_for,d_beta,contained\n");
    for r in &res.rows {
        let vals = [
            r.lower, r.upper, r.fdr, r.fdr_nl, r.for_, r.for_nl, r.power, r.power_nl, r.fpr, r.d_fdr, r.d_for,
            r.d_beta,
        ];
        let cells: Vec<String> = vals.iter().map(|v| fmt_f64(*v)).collect();
        table.push_str(&format!("{},{}\n", cells.join(","), r.contained_condition));
    }
    print!("{table}");
    if let Some(dir) = out_dir {
        let mut out = OutputDir::create(dir)?;
        std::fs::write(out.file(dir.join("theory.csv")), &table)?;
        write_json(&out.file(dir.join("theory.json")), &res)?;
        out.commit();
    }
    Ok(())
}

#[derive(Serialize)]
struct ThresholdOutput {
    alpha: f64,
    nu_hat: f64,
    bfdr_at_nu: f64,
    n_flagged: usize,
    discoveries: bool,
    region: Option<RegionJson>,
}

fn cmd_threshold(p1_path: &Path, alpha: f64, out: Option<&Path>) -> Result<()> {
    let (z, p1) = read_p1(p1_path).with_context(|| format!("reading {}", p1_path.display()))?;
    let th = bfdr_threshold(&p1, alpha)?;
    let region = if z.len() == p1.len() {
        Some(acceptance_region_from_p1(&z, &p1, th.nu_hat)?.into())
    } else {
        None
    };
    let res = ThresholdOutput {
        alpha,
        nu_hat: th.nu_hat,
        bfdr_at_nu: th.bfdr,
        n_flagged: th.n_flagged,
        discoveries: th.has_discoveries(),
        region,
    };
    match out {
        Some(p) => {
            let mut g = OutputDir::for_file(p)?;
            write_json(&g.file(p.to_path_buf()), &res)?;
            g.commit();
            Ok(())
        }
        None => print_json(&res),
    }
}

#[derive(Serialize)]
struct ParamDiagnostics {
    mean: f64,
    sd: f64,
    ess: Option<f64>,
    /// Running mean after 25, 50, 75 and 100% of the draws.
    ergodic_means: Vec<f64>,
    /// Difference of the two half-chain means in posterior sds.
    half_drift: Option<f64>,
}

#[derive(Serialize)]
struct Diagnostics {
    draws: usize,
    acceptance: BTreeMap<String, f64>,
    parameters: BTreeMap<String, ParamDiagnostics>,
}

fn cmd_diagnose(trace_path: &Path, meta_path: &Path, batches: usize) -> Result<()> {
    let trace = read_trace(trace_path, meta_path)
        .with_context(|| format!("reading {} and {}", trace_path.display(), meta_path.display()))?;
    if trace.is_empty() {
        bail!("trace has no draws");
    }
    let mut parameters = BTreeMap::new();
    for (name, xs) in scalar_draws(&trace) {
        if xs.iter().all(|x| x.is_nan()) {
            continue;
        }
        let s = Summary::of(&xs);
        let em = ergodic_means(&xs);
        let n = xs.len();
        let quarters = (1..=4).map(|q| em[(q * n / 4).max(1) - 1]).collect();
        let half_drift = (n >= 4 && s.sd > 0.0).then(|| {
            let a = Summary::of(&xs[..n / 2]).mean;
            let b = Summary::of(&xs[n / 2..]).mean;
            (a - b).abs() / s.sd
        });
        parameters.insert(
            name,
            ParamDiagnostics {
                mean: s.mean,
                sd: s.sd,
                ess: batch_means_ess(&xs, batches),
                ergodic_means: quarters,
                half_drift,
            },
        );
    }
    print_json(&Diagnostics {
        draws: trace.len(),
        acceptance: trace
            .meta
            .blocks
            .iter()
            .cloned()
            .zip(trace.meta.acceptance.iter().copied())
            .collect(),
        parameters,
    })
}

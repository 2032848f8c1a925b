use nollik::inference::{analyze_chain, default_grid, dual_route, estimate_p1, GRID_POINTS, GRID_SPREAD};
use nollik::io::{
    read_report, read_summary_json, read_trace, write_report_csv, write_summary_json, write_trace, FitSummary,
};
use nollik::inference::posterior_summaries;
use nollik::simulation::{generate_scenario, ScenarioId, ScenarioSpec};
use nollik::{run_chain, run_chain_bnp, run_grouped, BnpDensity, BnpHyperparameters, Controls, Hyperparameters};

fn s1(n: usize, seed: u64) -> Vec<f64> {
    generate_scenario(&ScenarioSpec::new(ScenarioId::S1, n, seed).unwrap()).unwrap().z
}

#[test]
fn trace_round_trip_is_exact() {
    let z = s1(200, 3);
    let trace = run_chain(&z, &Hyperparameters::default(), &Controls::new(600, 100, 5, 8).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (c, j) = (dir.path().join("t.csv"), dir.path().join("t.json"));
    write_trace(&c, &j, &trace, serde_json::Value::Null).unwrap();
    let back = read_trace(&c, &j).unwrap();
    assert_eq!(back, trace);
}

#[test]
fn bnp_trace_round_trip_is_exact() {
    let z = s1(150, 4);
    let hp = BnpHyperparameters { j: 6, ..Default::default() };
    let trace = run_chain_bnp(&z, &hp, &Controls::new(300, 100, 2, 8).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (c, j) = (dir.path().join("t.csv"), dir.path().join("t.json"));
    write_trace(&c, &j, &trace, serde_json::to_value(&hp).unwrap()).unwrap();
    assert_eq!(read_trace(&c, &j).unwrap(), trace);
}

#[test]
fn report_and_summary_round_trip() {
    let z = s1(300, 5);
    let trace = run_chain(&z, &Hyperparameters::default(), &Controls::new(1500, 500, 5, 2).unwrap()).unwrap();
    let grid = default_grid(&z, GRID_POINTS, GRID_SPREAD).unwrap();
    let (report, _) = analyze_chain(&z, &trace, 0.05, &grid, BnpDensity::Weighted).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (c, j) = (dir.path().join("report.csv"), dir.path().join("summary.json"));
    write_report_csv(&c, &report).unwrap();
    let summary = FitSummary::new(&report, &trace, posterior_summaries(&trace));
    write_summary_json(&j, &summary).unwrap();
    assert_eq!(read_summary_json(&j).unwrap(), summary);
    assert_eq!(read_report(&c, &j).unwrap(), report);
}

#[test]
fn p1_and_lfdr_routes_agree_on_s1() {
    let z = s1(1000, 11);
    let trace = run_chain(&z, &Hyperparameters::default(), &Controls { seed: 4, ..Controls::default() }).unwrap();
    let grid = default_grid(&z, GRID_POINTS, GRID_SPREAD).unwrap();
    let (report, _) = analyze_chain(&z, &trace, 0.05, &grid, BnpDensity::Weighted).unwrap();
    let d = dual_route(&report.p1, &report.lfdr);
    assert!(d.mean_abs_diff < 0.02, "{d:?}");
}

#[test]
fn single_group_matches_plain_chain() {
    let z = s1(250, 6);
    let hp = Hyperparameters::default();
    let controls = Controls::new(800, 200, 3, 17).unwrap();
    let plain = run_chain(&z, &hp, &controls).unwrap();
    let grouped = run_grouped(&[&z], &hp, &controls).unwrap();
    assert_eq!(grouped.groups.len(), 1);
    assert_eq!(grouped.groups[0].records, plain.records);
    assert_eq!(grouped.groups[0].lambda_sums, plain.lambda_sums);
}

#[test]
fn identical_groups_share_rho_and_stay_close() {
    let z = s1(300, 7);
    let controls = Controls::new(3000, 1000, 5, 5).unwrap();
    let g = run_grouped(&[&z, &z], &Hyperparameters::default(), &controls).unwrap();
    assert_eq!(g.groups[0].rho_draws(), g.groups[1].rho_draws());
    let a = estimate_p1(&g.groups[0]).unwrap();
    let b = estimate_p1(&g.groups[1]).unwrap();
    let mad = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    assert!(mad < 0.05, "mean |P1 difference| {mad}");
}

#[test]
fn fixed_seed_reproduces_chain() {
    let z = s1(200, 9);
    let hp = BnpHyperparameters { j: 8, ..Default::default() };
    let c = Controls::new(400, 100, 3, 21).unwrap();
    assert_eq!(run_chain_bnp(&z, &hp, &c).unwrap(), run_chain_bnp(&z, &hp, &c).unwrap());
    let other = Controls { seed: 22, ..c.clone() };
    assert_ne!(run_chain_bnp(&z, &hp, &c).unwrap().records, run_chain_bnp(&z, &hp, &other).unwrap().records);
}

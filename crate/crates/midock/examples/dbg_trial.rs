use midock::sim::*;

fn summarize(name: &str, kind: ScenarioKind, seeds: &[u64], disable_mi: bool) {
    let mut cfg = ScenarioConfig::template(kind);
    cfg.disable_mi = disable_mi || cfg.disable_mi;
    let (logs, rep) = run_batch(&cfg, seeds).unwrap();
    let rmses: Vec<String> = rep.trials.iter().map(|t| match t.rmse_3d_m {
        Some(r) => format!("{:.1}", r * 100.0),
        None => "-".into(),
    }).collect();
    let tds: Vec<String> = rep.trials.iter().map(|t| match t.touchdown_error_m {
        Some(r) => format!("{:.1}", r * 100.0),
        None => "-".into(),
    }).collect();
    let fails: Vec<String> = rep.trials.iter().map(|t| format!("{:?}", t.failure_reason)).collect();
    println!(
        "{name}: mean_rmse {:?} cm, sc {:.0}%, inside_pad {}/{}, rmse cm {:?} td cm {:?}",
        rep.mean_rmse_m.map(|v| (v * 1000.0).round() / 10.0),
        rep.success_rate * 100.0,
        rep.n_touchdown_inside_pad,
        rep.n_trials,
        rmses, tds
    );
    let max_est: f64 = logs.iter().flat_map(|l| l.rows.iter().filter(|r| r.airborne))
        .map(|r| (r.est_b - r.truth_b).norm()).fold(0.0, f64::max);
    println!("   max inst est err {:.3} m; failures {:?}", max_est, fails);
}

fn main() {
    let seeds10: Vec<u64> = (0..10).collect();
    let seeds5: Vec<u64> = (0..5).collect();
    summarize("S1_hover     ", ScenarioKind::S1Hover, &seeds10, false);
    summarize("S1_inout mi  ", ScenarioKind::S1InOut, &seeds5, false);
    summarize("S1_inout flow", ScenarioKind::S1InOut, &seeds5, true);
    summarize("S2_linear    ", ScenarioKind::S2Linear, &seeds10, false);
    summarize("S3_composite ", ScenarioKind::S3Composite, &seeds10, false);
}

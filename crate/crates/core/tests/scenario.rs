use vdlab_core::scenario::{
    load_configs, parse_configs, run_sweep, validate_cell, Estimator, ScenarioConfig, RESULTS_HEADER,
};

fn quick(limit: u64, runs: u32) -> ScenarioConfig {
    let mut c = ScenarioConfig::standard(limit, 0.1, 0.0);
    c.runs = runs;
    c
}

fn csvs(configs: &[ScenarioConfig]) -> (String, String) {
    let report = run_sweep(configs).unwrap();
    let mut results = Vec::new();
    let mut summary = Vec::new();
    report.write_results(&mut results).unwrap();
    report.write_summary(&mut summary).unwrap();
    (String::from_utf8(results).unwrap(), String::from_utf8(summary).unwrap())
}

#[test]
fn rerunning_a_sweep_reproduces_its_csvs() {
    let configs = vec![quick(8_000_000, 4), {
        let mut c = ScenarioConfig::standard(32_000_000, 0.1, 0.04).parallel(0.4, 4);
        c.runs = 3;
        c.base_seed = 50;
        c
    }];
    let first = csvs(&configs);
    assert_eq!(first, csvs(&configs));

    let mut lines = first.0.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&header[..RESULTS_HEADER.len()], &RESULTS_HEADER[..]);
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4 * 10 + 3 * 11);
    // sorted by configuration then seed, every row carrying its configuration
    let keys: Vec<(u64, u64)> = rows
        .iter()
        .map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap()))
        .collect();
    assert!(keys.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(keys.last(), Some(&(1, 52)));
    let limit_col = header.iter().position(|h| *h == "block_limit").unwrap();
    assert!(rows.iter().all(|r| r.len() == header.len()));
    assert_eq!(rows.last().unwrap()[limit_col], "32000000");
}

#[test]
fn fee_fractions_sum_to_one_per_run() {
    let report = run_sweep(&[quick(8_000_000, 10)]).unwrap();
    for run in &report.cells[0].runs {
        let total: f64 = run.miners.iter().map(|m| m.fee_fraction).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn confidence_interval_narrows_with_more_runs() {
    let report = run_sweep(&[quick(8_000_000, 10), quick(8_000_000, 40)]).unwrap();
    let hw = |i: usize| report.cells[i].miner(0).unwrap().expected_gain.half_width;
    let ratio = hw(0) / hw(1);
    // t quantiles shrink too, so the ratio sits a little above sqrt(4)
    assert!((1.4..3.2).contains(&ratio), "half-width ratio {ratio}");
}

#[test]
fn validation_reports_signed_deviation() {
    let report = run_sweep(&[quick(8_000_000, 20)]).unwrap();
    let cell = &report.cells[0];
    let rows = validate_cell(cell, 0.25, Estimator::Expected);
    assert_eq!(rows.len(), 1);
    let row = &rows[0];
    assert!(row.pass, "{row}");
    assert_eq!(row.signed_deviation, row.closed_form_gain - row.simulated_gain);
    assert!(row.to_string().starts_with("[PASS]"));

    let strict = validate_cell(cell, 0.0, Estimator::Expected);
    assert!(!strict[0].pass);
}

#[test]
fn invalid_blocks_flip_the_sign_at_small_limits() {
    let mut c = ScenarioConfig::standard(8_000_000, 0.1, 0.04);
    c.runs = 10;
    c.sim_duration = 6.0 * 3600.0;
    let report = run_sweep(&[c]).unwrap();
    let gain = report.cells[0].miner(0).unwrap().expected_gain.mean;
    assert!(gain < 0.0, "{gain}");
}

#[test]
fn config_files_resolve_workloads_next_to_them() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = quick(8_000_000, 2);
    c.workload = Some("models/w.json".into());
    std::fs::write(dir.path().join("sweep.json"), serde_json::to_string(&vec![c]).unwrap()).unwrap();
    let loaded = load_configs(&dir.path().join("sweep.json")).unwrap();
    assert_eq!(
        loaded[0].workload.as_deref(),
        Some(dir.path().join("models/w.json").as_path())
    );
    // the file does not exist, so the sweep fails cleanly
    assert!(run_sweep(&loaded).is_err());
}

#[test]
fn bad_configs_are_rejected() {
    let mut c = quick(8_000_000, 2);
    c.invalid_rate = 0.04;
    assert!(parse_configs(&serde_json::to_string(&c).unwrap()).is_err());
    let text = serde_json::to_string(&quick(8_000_000, 2))
        .unwrap()
        .replace("\"runs\":2", "\"runs\":0");
    assert!(parse_configs(&text).is_err());
}

use railcf::geometry::ScenarioConfig;
use railcf::montecarlo::{compute_cdf, run_plan, track_positions, Arch, ExperimentPlan, ResultTable, SE_CAP};
use railcf::power::PowerScheme;

fn small_plan(archs: Vec<Arch>) -> ExperimentPlan {
    let scenario = ScenarioConfig {
        num_aps: 4,
        num_tas: 3,
        antennas_per_ap: 2,
        railway_length: 400.0,
        train_length: 75.0,
        ..ScenarioConfig::default()
    };
    ExperimentPlan::new(scenario, archs, 3, 6, 99)
}

/// Rows without the wall-clock column.
fn strip(table: &ResultTable) -> Vec<(f64, f64, Arch, Vec<f64>)> {
    table
        .rows
        .iter()
        .map(|r| (r.speed_kmh, r.position, r.architecture, r.per_ta.clone()))
        .collect()
}

#[test]
fn runs_are_deterministic_for_any_thread_count() {
    let plan = small_plan(Arch::ALL.to_vec());
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = one.install(|| run_plan(&plan)).unwrap();
    let b = three.install(|| run_plan(&plan)).unwrap();
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(a.seed, 99);
}

#[test]
fn architectures_share_random_numbers() {
    let both = run_plan(&small_plan(vec![Arch::LocalMmseLsfd, Arch::CentralizedMmse])).unwrap();
    let alone = run_plan(&small_plan(vec![Arch::CentralizedMmse])).unwrap();
    let pick = |t: &ResultTable| -> Vec<Vec<f64>> {
        t.rows_for(Arch::CentralizedMmse, 300.0).map(|r| r.per_ta.clone()).collect()
    };
    assert_eq!(pick(&both), pick(&alone));
}

#[test]
fn duplicated_speed_gives_identical_rows() {
    let mut plan = small_plan(vec![Arch::LocalMrLsfd, Arch::SmallcellMmse]);
    plan.speeds_kmh = vec![200.0, 200.0];
    let t = run_plan(&plan).unwrap();
    let rows: Vec<_> = t.rows.iter().filter(|r| r.speed_kmh == 200.0).collect();
    assert_eq!(rows.len(), 2 * 2 * plan.positions.len());
    for pair in rows.chunks(4) {
        assert_eq!(pair[0].per_ta, pair[2].per_ta);
        assert_eq!(pair[1].per_ta, pair[3].per_ta);
    }
}

#[test]
fn row_aggregates_follow_definitions() {
    let mut plan = small_plan(Arch::ALL.to_vec());
    plan.power_scheme = PowerScheme::Fractional;
    plan.cluster_theta_db = Some(6.0);
    let t = run_plan(&plan).unwrap();
    assert_eq!(t.rows.len(), Arch::ALL.len() * plan.positions.len());
    for r in &t.rows {
        assert_eq!(r.per_ta.len(), 3);
        assert!(r.per_ta.iter().all(|&s| (0.0..=SE_CAP).contains(&s)), "{r:?}");
        let sum: f64 = r.per_ta.iter().sum();
        assert!((r.sum_se - sum).abs() <= 1e-12 * sum.max(1.0));
        assert!((r.block_se - sum / 3.0).abs() <= 1e-12 * sum.max(1.0));
        assert_eq!(r.worst_se, r.per_ta.iter().cloned().fold(f64::INFINITY, f64::min));
    }
    let v = plan.scenario.velocity_kmh;
    let series = t.series(Arch::LocalMrLsfd, v);
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    assert!((t.average_se(Arch::LocalMrLsfd, v) - mean).abs() <= 1e-12);
    assert_eq!(t.summary().unwrap().len(), Arch::ALL.len());
}

#[test]
fn results_csv_has_one_column_per_ta() {
    let t = run_plan(&small_plan(vec![Arch::LocalMrMf])).unwrap();
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "speed_kmh,position_m,architecture,block_se,worst_se,sum_se,wall_time_s,se_ta0,se_ta1,se_ta2"
    );
    assert_eq!(lines.count(), 3);
}

#[test]
fn invalid_plans_name_the_key() {
    let mut plan = small_plan(vec![]);
    assert!(run_plan(&plan).unwrap_err().to_string().contains("architectures"));
    plan.architectures = vec![Arch::LocalMrMf];
    plan.trials = 0;
    assert!(run_plan(&plan).unwrap_err().to_string().contains("trials"));
}

#[test]
fn cdf_conventions() {
    let c = compute_cdf(&[4.0; 7]).unwrap();
    assert_eq!((c.min, c.p5, c.p50, c.p95, c.max), (4.0, 4.0, 4.0, 4.0, 4.0));
    assert_eq!(compute_cdf(&[3.0, 1.0]).unwrap().p50, 2.0);
    assert!(compute_cdf(&[]).is_err());
    assert!(compute_cdf(&[1.0, f64::NAN]).is_err());
}

#[test]
fn default_track_spans_covered_railway() {
    let p = track_positions(&ScenarioConfig::default(), 5);
    assert_eq!(p, vec![0.0, 200.0, 400.0, 600.0, 800.0]);
    assert_eq!(track_positions(&ScenarioConfig::default(), 1), vec![0.0]);
}

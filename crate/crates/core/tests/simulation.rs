use fedkit::coordinator::{Dispatch, RoundPlan};
use fedkit::data::SiloSpec;
use fedkit::nn::{ArchitectureSpec, OptimConfig, StageSpec};
use fedkit::sim::{
    predict_round_time, prepare_silos, simulate, straggler_report, SimClient, SimOptions, SimReport,
};
use fedkit::trainer::NodeProfile;

/// Rows of the per-node performance table: samples, batch, epochs, iters/s,
/// reported minutes per round.
const MEASURED_ROUNDS: [(&str, usize, usize, usize, f64, f64); 6] = [
    ("spain", 6549, 8, 10, 15.6, 10.48),
    ("malawi", 240, 2, 3, 0.3, 26.78),
    ("egypt", 480, 8, 10, 2.5, 4.05),
    ("uganda", 360, 8, 10, 0.57, 12.96),
    ("ghana", 360, 8, 10, 0.67, 14.88),
    ("algeria", 480, 8, 10, 0.79, 14.81),
];

fn table_profile(row: &(&str, usize, usize, usize, f64, f64)) -> NodeProfile {
    let mut p = NodeProfile::new(row.0);
    p.batch_size = row.2;
    p.epochs_per_round = row.3;
    p.speed_iters_per_s = row.4;
    p
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b
}

#[test]
fn timing_model_tracks_reported_round_times() {
    for row in &MEASURED_ROUNDS {
        let minutes = predict_round_time(&table_profile(row), row.1, 0.0) / 60.0;
        let tol = if matches!(row.0, "egypt" | "uganda") { 0.05 } else { 0.35 };
        assert!(rel(minutes, row.5) <= tol, "{}: {minutes:.2} vs {}", row.0, row.5);
    }
    let egypt = table_profile(&MEASURED_ROUNDS[2]);
    assert!((predict_round_time(&egypt, 480, 0.0) - 240.0).abs() < 1e-9);
}

#[test]
fn presets_agree_with_the_table() {
    for row in &MEASURED_ROUNDS {
        let p = NodeProfile::measured(row.0).unwrap();
        assert_eq!(
            (p.batch_size, p.epochs_per_round, p.speed_iters_per_s),
            (row.2, row.3, row.4),
            "{}",
            row.0
        );
    }
}

#[test]
fn mitigations_shorten_the_single_board_round() {
    let m = NodeProfile::measured("malawi").unwrap();
    let total = 600;
    let mitigated = predict_round_time(&m, (total as f64 * m.train_fraction) as usize, 0.0);
    let full = m.unmitigated();
    let unmitigated = predict_round_time(&full, (total as f64 * full.train_fraction) as usize, 0.0);
    let oracle = (10.0 * (480.0f64 / 8.0).ceil()) / (3.0 * (240.0f64 / 2.0).ceil());
    assert!(rel(unmitigated / mitigated, oracle) < 0.01);
    assert!(rel(oracle, 600.0 / 360.0) < 1e-12);

    let egypt = NodeProfile::measured("egypt").unwrap();
    let slowdown = mitigated / predict_round_time(&egypt, 480, 0.0);
    assert!(rel(slowdown, 1200.0 / 240.0) < 1e-9);
}

#[test]
fn prediction_is_monotone() {
    let p = NodeProfile::new("x");
    let base = predict_round_time(&p, 100, 0.0);
    let mut faster = p.clone();
    faster.speed_iters_per_s *= 2.0;
    assert_eq!(predict_round_time(&faster, 100, 0.0), base / 2.0);
    let mut more = p.clone();
    more.epochs_per_round += 1;
    assert!(predict_round_time(&more, 100, 0.0) > base);
    assert!(predict_round_time(&p, 101, 0.0) >= base);
    assert!(predict_round_time(&p, 105, 0.0) > base);
}

fn tiny_arch() -> ArchitectureSpec {
    ArchitectureSpec {
        input_size: 8,
        channels: 1,
        num_classes: 4,
        stem_stride: 1,
        stages: vec![StageSpec { blocks: 1, width: 2 }],
    }
}

/// The six table silos at 8x8 pixels, Spain cut to a tenth.
fn table_clients(seed: u64) -> Vec<SimClient> {
    let specs: Vec<SiloSpec> = SiloSpec::reference_all()
        .into_iter()
        .map(|s| {
            let mut s = if s.silo_id == "spain" { s.with_total(525) } else { s };
            s.input_size = 8;
            s
        })
        .collect();
    prepare_silos(&specs, &NodeProfile::measured_all(), seed).unwrap()
}

fn run(clients: &[SimClient], rounds: u32, options: &SimOptions) -> fedkit::sim::SimOutput {
    simulate(
        clients,
        &RoundPlan::new(rounds),
        &tiny_arch(),
        &OptimConfig::default(),
        3,
        options,
    )
    .unwrap()
}

fn check_barrier(report: &SimReport, cost: f64) {
    for r in &report.rounds {
        let max = r.client_s.values().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.duration_s, max + cost);
        assert_eq!(r.client_s[&r.slowest], max);
    }
}

#[test]
fn single_board_node_is_always_the_straggler() {
    let clients = table_clients(1);
    let malawi = clients.iter().find(|c| c.profile.client_id == "malawi").unwrap();
    assert_eq!(malawi.silo.split_len(fedkit::data::Split::Train), 240);
    let options = SimOptions {
        aggregation_cost_s: 1.5,
        evaluate: false,
        ..SimOptions::default()
    };
    let out = run(&clients, 3, &options);
    assert_eq!(out.report.rounds.len(), 3);
    check_barrier(&out.report, 1.5);
    let rows = straggler_report(&out.report).unwrap();
    let m = rows.iter().find(|r| r.client_id == "malawi").unwrap();
    assert_eq!(m.slowest_share, 1.0);
    assert!((m.mean_round_s - 1200.0).abs() < 1e-9);
    let e = rows.iter().find(|r| r.client_id == "egypt").unwrap();
    assert!((e.mean_round_s - 240.0).abs() < 1e-9);

    // Without it, every round finishes sooner.
    let rest: Vec<SimClient> = clients
        .iter()
        .filter(|c| c.profile.client_id != "malawi")
        .cloned()
        .collect();
    let without = run(&rest, 3, &options);
    for (a, b) in without.report.rounds.iter().zip(&out.report.rounds) {
        assert!(a.duration_s < b.duration_s);
    }
}

fn small_clients(profiles: &[NodeProfile]) -> Vec<SimClient> {
    let specs: Vec<SiloSpec> = profiles
        .iter()
        .map(|p| {
            let mut s = SiloSpec::new(&p.client_id, [4, 4, 4, 4]);
            s.input_size = 8;
            s
        })
        .collect();
    prepare_silos(&specs, profiles, 2).unwrap()
}

fn quick_profiles() -> Vec<NodeProfile> {
    ["egypt", "ghana", "malawi"]
        .iter()
        .map(|id| {
            let mut p = NodeProfile::measured(id).unwrap();
            p.epochs_per_round = 1;
            p
        })
        .collect()
}

#[test]
fn speed_changes_time_not_results() {
    let base = small_clients(&quick_profiles());
    let scaled: Vec<SimClient> = base
        .iter()
        .cloned()
        .map(|mut c| {
            c.profile.speed_iters_per_s *= 3.7;
            c
        })
        .collect();
    let a = run(&base, 2, &SimOptions::default());
    let b = run(&scaled, 2, &SimOptions::default());
    assert_eq!(a.weights.value_bytes(), b.weights.value_bytes());
    assert_eq!(a.report.accuracy_curve(), b.report.accuracy_curve());
    for (x, y) in a.report.rounds.iter().zip(&b.report.rounds) {
        assert!(rel(x.duration_s, 3.7 * y.duration_s) < 1e-12);
        assert_eq!(x.slowest, y.slowest);
    }
}

#[test]
fn sequential_and_concurrent_agree() {
    let clients = small_clients(&quick_profiles());
    let seq = run(&clients, 2, &SimOptions::default());
    let conc = run(
        &clients,
        2,
        &SimOptions {
            dispatch: Dispatch::Concurrent,
            ..SimOptions::default()
        },
    );
    assert_eq!(seq.weights.value_bytes(), conc.weights.value_bytes());
    assert_eq!(seq.report, conc.report);
}

#[test]
fn same_seed_same_report() {
    let clients = small_clients(&quick_profiles());
    let a = run(&clients, 2, &SimOptions::default());
    let b = run(&clients, 2, &SimOptions::default());
    assert_eq!(a.report.to_csv(), b.report.to_csv());
    assert_eq!(a.report.to_json(), b.report.to_json());
    assert_eq!(a.report.accuracy_curve().len(), 2);
    assert_ne!(a.weights, fedkit::nn::build_model(&tiny_arch(), 3).unwrap());
}

#[test]
fn identical_nodes_have_no_slowdown() {
    let profiles: Vec<NodeProfile> = ["a", "b", "c"].iter().map(|id| NodeProfile::new(id)).collect();
    let mut clients = small_clients(&profiles);
    for c in &mut clients {
        c.profile.epochs_per_round = 1;
    }
    let out = run(&clients, 2, &SimOptions::default());
    for row in straggler_report(&out.report).unwrap() {
        assert!((row.slowdown - 1.0).abs() < 1e-12);
    }
    assert!(straggler_report(&SimReport::default()).is_err());
}

use gossiplab::analysis::{classify_expectation, predicted_consensus};
use gossiplab::graph::{auto_radius, directify, random_geometric_graph, DiGraph};
use gossiplab::protocol::{build_scheme, GossipState, SchemeKind};
use gossiplab::sim::{monte_carlo, run_trial, InitKind, SeriesMode, StopRule, TrialConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn graph(n: usize, seed: u64, p_asym: f64) -> DiGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_geometric_graph(n, auto_radius(n), &mut rng).unwrap();
    if p_asym > 0.0 {
        directify(&g, p_asym, &mut rng).unwrap()
    } else {
        g
    }
}

#[test]
fn campaigns_do_not_depend_on_thread_count() {
    let g = graph(12, 3, 0.2);
    let s = build_scheme(SchemeKind::Bbga, &g, 0.4, 0.0).unwrap();
    let config = TrialConfig::default();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| monte_carlo(&s, &g, InitKind::Gaussian, 12, &config, 77).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.records, four.records);
    assert_eq!(one.aggregate, four.aggregate);
}

#[test]
fn edge_list_round_trip_preserves_dynamics() {
    let g = graph(10, 8, 0.3);
    let text = g.to_edge_list();
    let path = std::env::temp_dir().join(format!("gossiplab-engine-{}.txt", std::process::id()));
    std::fs::write(&path, text).unwrap();
    let back = DiGraph::read_edge_list(&path).unwrap();
    std::fs::remove_file(&path).unwrap();
    let config = TrialConfig {
        series: SeriesMode::None,
        ..TrialConfig::default()
    };
    let x0: Vec<f64> = (0..10).map(|i| i as f64).collect();
    let s1 = build_scheme(SchemeKind::Ubga2, &g, 0.3, 0.0).unwrap();
    let s2 = build_scheme(SchemeKind::Ubga2, &back, 0.3, 0.0).unwrap();
    let r1 = run_trial(&s1, &x0, &config, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let r2 = run_trial(&s2, &x0, &config, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(r1, r2);
}

#[test]
fn bbga_long_run_meets_the_left_eigenvector_prediction() {
    let g = graph(16, 21, 0.3);
    let s = build_scheme(SchemeKind::Bbga, &g, 0.3, 0.0).unwrap();
    let report = classify_expectation(&s).unwrap();
    let x0: Vec<f64> = (0..16).map(|i| ((i * 7) % 5) as f64).collect();
    let target = predicted_consensus(&report, &x0).unwrap();
    let config = TrialConfig {
        stop: StopRule::Deviation { q_tol: 1e-26 },
        series: SeriesMode::None,
        ..TrialConfig::default()
    };
    let rec = run_trial(&s, &x0, &config, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert!(rec.converged_at.is_some());
    assert!((rec.consensus_value - target).abs() < 1e-8, "{} vs {target}", rec.consensus_value);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    // Every broadcast only ever pulls receivers toward the broadcaster, so the
    // range of x never widens under the classic scheme.
    #[test]
    fn classic_never_widens_the_range(seed in 0u64..1000, gamma in 0.05f64..1.0) {
        let g = graph(8, seed, 0.0);
        let s = build_scheme(SchemeKind::Classic, &g, 0.0, gamma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut st = GossipState::new((0..8).map(|i| (i as f64).sin()).collect());
        let spread = |x: &[f64]| {
            x.iter().copied().fold(f64::NEG_INFINITY, f64::max) - x.iter().copied().fold(f64::INFINITY, f64::min)
        };
        let mut prev = spread(&st.x);
        for _ in 0..300 {
            st.step(&s, &mut rng);
            let now = spread(&st.x);
            prop_assert!(now <= prev + 1e-15);
            prev = now;
        }
    }

    #[test]
    fn unbiased_schemes_conserve_total_mass(seed in 0u64..1000, eps in 0.01f64..2.0, which in 0usize..3) {
        let kind = [SchemeKind::Ubga1, SchemeKind::Ubga2, SchemeKind::Ubga3][which];
        let g = graph(9, seed, 0.25);
        let s = build_scheme(kind, &g, eps, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let mut st = GossipState::new((0..9).map(|i| (i * i) as f64 / 10.0).collect());
        let m0 = st.mass();
        for _ in 0..500 {
            st.step(&s, &mut rng);
        }
        prop_assert!((st.mass() - m0).abs() <= 1e-9 * m0.abs().max(1.0));
    }
}

use qram_core::noiselab::{
    enumerate_first_order, estimate_fidelity, good_set, query_layout, sample_error_config, BranchSim, ErrorConfig,
    ErrorEvent, ErrorModel, EstimateSpec, Estimator, ModelKind, Pauli,
};
use qram_core::par::stream_rng;
use qram_core::Dataset;

fn spec(n: usize, kind: ModelKind, epsilon: f64) -> EstimateSpec {
    EstimateSpec { n, kind, epsilon, samples: 400, datasets: 50, estimator: Estimator::Bound, seed: 31 }
}

#[test]
fn cd_event_count_matches_rate() {
    let l = query_layout(64).unwrap();
    let m = ErrorModel::new(ModelKind::Cd, 1e-2).unwrap();
    let mut rng = stream_rng(1, 0);
    let draws = 2000;
    let total: usize = (0..draws).map(|_| sample_error_config(&m, &l, &mut rng).events.len()).sum();
    let want = 0.75 * 1e-2 * l.alive_slot_count() as f64;
    let got = total as f64 / draws as f64;
    assert!((got - want).abs() < 5.0 * (want / draws as f64).sqrt(), "{got} vs {want}");
}

#[test]
fn zero_epsilon_is_perfect() {
    let l = query_layout(32).unwrap();
    for kind in ModelKind::ALL {
        let e = estimate_fidelity(&spec(32, kind, 0.0), &l).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.infidelity, 0.0);
    }
}

#[test]
fn monotone_in_epsilon_and_n() {
    for kind in ModelKind::ALL {
        let mut prev = 1.0;
        for k in 3..=7 {
            let l = query_layout(1 << k).unwrap();
            let e = estimate_fidelity(&spec(1 << k, kind, 1e-3), &l).unwrap();
            assert!(e.mean <= prev + 2.0 * e.stderr, "{kind} N=2^{k}");
            prev = e.mean;
        }
        let l = query_layout(64).unwrap();
        let a = estimate_fidelity(&spec(64, kind, 1e-3), &l).unwrap();
        let b = estimate_fidelity(&spec(64, kind, 4e-3), &l).unwrap();
        assert!(b.mean < a.mean);
    }
}

#[test]
fn ec_beats_op() {
    for k in [4, 6, 8] {
        let n = 1 << k;
        let l = query_layout(n).unwrap();
        let op = estimate_fidelity(&spec(n, ModelKind::Op, 1e-3), &l).unwrap();
        let ec = estimate_fidelity(&spec(n, ModelKind::Ec, 1e-3), &l).unwrap();
        assert!(ec.mean + 2.0 * ec.stderr >= op.mean, "N={n}");
        let dop = enumerate_first_order(ModelKind::Op, &l, Estimator::Bound, 4, 1).unwrap();
        let dec = enumerate_first_order(ModelKind::Ec, &l, Estimator::Bound, 4, 1).unwrap();
        assert!(dec <= dop);
    }
}

#[test]
fn linear_in_small_epsilon() {
    let l = query_layout(32).unwrap();
    let run = |eps| {
        let s = EstimateSpec { samples: 20_000, datasets: 20, ..spec(32, ModelKind::Cd, eps) };
        estimate_fidelity(&s, &l).unwrap().infidelity
    };
    let ratio = run(2e-5) / run(1e-5);
    assert!((ratio - 2.0).abs() < 0.4, "{ratio}");
}

#[test]
fn z_only_keeps_addresses() {
    let l = query_layout(128).unwrap();
    let m = ErrorModel::new(ModelKind::Ec, 5e-3).unwrap();
    let mut rng = stream_rng(4, 0);
    let d = Dataset::random(128, &mut rng);
    let mut sim = BranchSim::new(&l);
    for _ in 0..50 {
        let cfg = sample_error_config(&m, &l, &mut rng);
        sim.run(&cfg, &d);
        let g = sim.good_set(&d);
        assert!(g.ancilla_ones.is_empty());
    }
}

#[test]
fn x_on_idle_ancilla_changes_key() {
    let l = query_layout(4).unwrap();
    let d = Dataset::from_bits(&[0, 1, 1, 0]).unwrap();
    let q = (0..l.n_qubits).find(|&q| !l.heads.contains(&q) && l.alive_from[q] > 1).unwrap();
    let t = l.alive_from[q];
    let cfg = ErrorConfig::single(ErrorEvent { layer: t, qubit: q, pauli: Pauli::X }, 1.0);
    let g = good_set(&cfg, &d, &l);
    assert!(g.members.len() < 4 || !g.ancilla_ones.is_empty());
}

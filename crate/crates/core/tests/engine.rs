use ftmrs_core::config::{RedundancyMode, ScenarioConfig};
use ftmrs_core::energy::{receive_energy, transmit_energy};
use ftmrs_core::engine::{run_scenario, Simulation};
use ftmrs_core::faults::{FaultMix, Onset};
use ftmrs_core::metrics::{series, write_csv};
use ftmrs_core::{EnergyParams, NodeId, NodeRole, NodeState, Position};

fn node(i: u32, x: f64, y: f64, energy: f64) -> NodeState {
    NodeState::new(NodeId(i), Position::new(x, y), energy)
}

fn fixture_cfg(n: usize, rounds: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(n, rounds, 1);
    cfg.width = 100.0;
    cfg.height = 100.0;
    cfg.cluster_count = 1;
    cfg
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-15 + 1e-12 * b.abs()
}

fn tx(d: f64) -> f64 {
    transmit_energy(d, 800.0, &EnergyParams::default()).unwrap()
}

fn rx() -> f64 {
    receive_energy(800.0, &EnergyParams::default()).unwrap()
}

#[test]
fn six_node_round_by_hand() {
    // Head in the middle, five members 10 m away, base station 50 m north.
    let mut nodes = vec![node(0, 50.0, 50.0, 0.6)];
    for (i, (x, y)) in [(50.0, 60.0), (60.0, 50.0), (50.0, 40.0), (40.0, 50.0)]
        .into_iter()
        .enumerate()
    {
        nodes.push(node(i as u32 + 1, x, y, 0.5));
    }
    let a = std::f64::consts::FRAC_1_SQRT_2 * 10.0;
    nodes.push(node(5, 50.0 - a, 50.0 - a, 0.5));
    let mut cfg = fixture_cfg(6, 1);
    cfg.bs_position = Some(Position::new(50.0, 100.0));
    let mut sim = Simulation::with_nodes(cfg, nodes).unwrap();
    let report = sim.run_round();

    assert!(sim.nodes()[0].is_cluster_head);
    assert_eq!(report.packets_created, 6);
    assert_eq!(report.packets_delivered, 6);
    assert_eq!(report.delay_sum, 0);
    // 10 m member hop: (50e-9 + 10e-12 * 100) * 800 = 4.08e-5 J.
    assert!(close(tx(10.0), 4.08e-5));
    assert!(close(tx(50.0), 6.0e-5));
    assert!(close(sim.nodes()[0].energy, 0.6 - 5.0 * 4.0e-5 - 6.0e-5));
    for m in &sim.nodes()[1..] {
        assert!(close(m.energy, 0.5 - 4.08e-5), "{}: {}", m.id, m.energy);
    }
    let spent = 5.0 * 4.08e-5 + 5.0 * 4.0e-5 + 6.0e-5;
    assert!(close(sim.ledger().radio(), spent));
    assert!(close(report.global_energy, 3.1 - spent));
}

#[test]
fn relay_pays_for_forwarding() {
    // 0 head, 1 relays for 2, base station 12 m south of the head. Range 15 m.
    let nodes = vec![
        node(0, 50.0, 50.0, 0.6),
        node(1, 50.0, 62.0, 0.5),
        node(2, 50.0, 74.0, 0.5),
    ];
    let mut cfg = fixture_cfg(3, 1);
    cfg.radio_range = 15.0;
    cfg.bs_position = Some(Position::new(50.0, 38.0));
    let mut sim = Simulation::with_nodes(cfg, nodes).unwrap();
    let report = sim.run_round();

    assert_eq!(report.packets_delivered, 3);
    let e: Vec<f64> = sim.nodes().iter().map(|n| n.energy).collect();
    assert!(close(e[2], 0.5 - tx(12.0)));
    assert!(close(e[1], 0.5 - 2.0 * tx(12.0) - rx()));
    assert!(close(e[0], 0.6 - 2.0 * rx() - tx(12.0)));
}

#[test]
fn with_nodes_checks_ids() {
    let nodes = vec![node(1, 0.0, 0.0, 0.5)];
    assert!(Simulation::with_nodes(fixture_cfg(1, 1), nodes).is_err());
    assert!(Simulation::with_nodes(fixture_cfg(2, 1), vec![node(0, 0.0, 0.0, 0.5)]).is_err());
}

fn csv_of(cfg: &ScenarioConfig) -> Vec<u8> {
    let run = run_scenario(cfg).unwrap();
    let mut buf = Vec::new();
    write_csv(&series(&run), &mut buf).unwrap();
    buf
}

#[test]
fn same_seed_same_bytes() {
    let mut cfg = ScenarioConfig::new(80, 300, 9);
    cfg.faults.node_fault_fraction = 0.3;
    cfg.faults.transmission_fault_prob = 0.05;
    cfg.faults.onset = Onset::Spread { start: 1, end: 200 };
    assert_eq!(csv_of(&cfg), csv_of(&cfg));
    let other = ScenarioConfig {
        seed: 10,
        ..cfg.clone()
    };
    assert_ne!(csv_of(&cfg), csv_of(&other));
}

#[test]
fn energy_is_conserved_every_round() {
    for (frac, mode) in [
        (0.0, RedundancyMode::FTMRS),
        (0.4, RedundancyMode::AlwaysDuplicate { k: 3 }),
    ] {
        let mut cfg = ScenarioConfig::new(60, 100_000, 3);
        cfg.faults.node_fault_fraction = frac;
        cfg.faults.transmission_fault_prob = 0.02;
        cfg.faults.onset = Onset::Spread { start: 1, end: 500 };
        cfg.redundancy_mode = mode;
        let mut sim = Simulation::new(cfg).unwrap();
        let initial = sim.initial_energy();
        while !sim.is_finished() {
            let r = sim.run_round();
            let residual: f64 = sim.nodes().iter().map(|n| n.energy).sum();
            let lhs = initial - sim.ledger().total();
            assert!((lhs - residual).abs() <= 1e-9 * initial, "round {}", r.round);
            assert!(sim.nodes().iter().all(|n| n.energy >= 0.0));
            assert!(sim.nodes().iter().all(|n| n.energy > 0.0 || n.role == NodeRole::Dead));
        }
        assert_eq!(sim.global_energy(), 0.0);
        assert!(sim.lifetime().is_some());
    }
}

#[test]
fn dead_stays_dead() {
    let mut cfg = ScenarioConfig::new(60, 400, 5);
    cfg.faults.node_fault_fraction = 0.5;
    cfg.faults.onset = Onset::At { round: 10 };
    let mut sim = Simulation::new(cfg).unwrap();
    let mut dead = [false; 60];
    while !sim.is_finished() {
        sim.run_round();
        for (i, n) in sim.nodes().iter().enumerate() {
            assert!(!dead[i] || n.role == NodeRole::Dead, "{} came back", n.id);
            dead[i] = n.role == NodeRole::Dead;
        }
    }
}

#[test]
fn network_without_sources_ends() {
    let mut cfg = ScenarioConfig::new(20, 1000, 2);
    cfg.faults.node_fault_fraction = 1.0;
    cfg.faults.fault_mix = FaultMix {
        microcontroller: 1.0,
        sensor: 0.0,
        transmitter: 0.0,
        receiver: 0.0,
        battery: 0.0,
    };
    cfg.faults.onset = Onset::At { round: 3 };
    let run = run_scenario(&cfg).unwrap();
    assert_eq!(run.lifetime, Some(3));
    assert_eq!(run.reports.last().unwrap().global_energy, 0.0);
    assert_eq!(run.reports.last().unwrap().alive_count, 0);
}

#[test]
fn fault_free_light_load_is_lossless() {
    for seed in 1..=3 {
        let run = run_scenario(&ScenarioConfig::new(120, 200, seed)).unwrap();
        let rows = series(&run);
        let last = rows.last().unwrap();
        assert_eq!(last.pdr, 1.0);
        assert_eq!(last.avg_delay, Some(0.0));
        assert!(rows.iter().all(|r| r.throughput == 1.0));
    }
}

#[test]
fn rounds_max_zero_runs_nothing() {
    let run = run_scenario(&ScenarioConfig::new(10, 0, 1)).unwrap();
    assert!(run.reports.is_empty());
    assert_eq!(run.initial.global_energy, 5.0);
}

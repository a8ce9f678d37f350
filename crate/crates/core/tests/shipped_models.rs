//! The example models under `models/` load, solve and stay mutually
//! consistent across solvers.

use std::path::Path;

use thermnet::linear::{linearize, Input};
use thermnet::model::{Model, NodeKind, STEFAN_BOLTZMANN};
use thermnet::network::{heat_flow_report, Network};
use thermnet::solvers::{solve_steady, solve_transient, Method, SolveOptions};

fn load(name: &str) -> Model {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models").join(name);
    Model::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn by_id(net: &Network, temps: &[f64], id: &str) -> f64 {
    temps[net.index_of(id).unwrap()]
}

#[test]
fn every_model_file_parses_and_round_trips() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        let m = Model::from_json(&text).unwrap();
        assert_eq!(Model::from_json(&m.to_json()).unwrap(), m);
        count += 1;
    }
    assert_eq!(count, 7);
}

#[test]
fn two_node_matches_closed_form() {
    let net = Network::from_model(&load("example_two_node.json")).unwrap();
    let sol = solve_steady(&net, None, &net.steady_loads(), &SolveOptions::default()).unwrap();
    let exact = (1.0 / (STEFAN_BOLTZMANN * 0.01) + 81.0f64).powf(0.25);
    assert!((by_id(&net, &sol.temperatures, "plate") - exact).abs() < 1e-9);
}

#[test]
fn linear_chain_is_a_straight_line() {
    let net = Network::from_model(&load("linear_chain.json")).unwrap();
    let sol = solve_steady(&net, None, &net.steady_loads(), &SolveOptions::default()).unwrap();
    for k in 1..=5 {
        let t = by_id(&net, &sol.temperatures, &format!("n{k}"));
        assert!((t - (300.0 - 200.0 * k as f64 / 6.0)).abs() < 1e-9, "n{k}: {t}");
    }
}

#[test]
fn instrument_steady_state_agrees_between_solvers() {
    let net = Network::from_model(&load("shielded_instrument.json")).unwrap();
    let loads = net.steady_loads();
    let a = solve_steady(&net, None, &loads, &SolveOptions::with_method(Method::Newton)).unwrap();
    let b = solve_steady(&net, None, &loads, &SolveOptions::with_method(Method::Iterative)).unwrap();
    let worst = a.temperatures.iter().zip(&b.temperatures).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst}");
    // cold stack: each shield colder than the one below, bench and test
    // volume cryogenic
    let t = |id| by_id(&net, &a.temperatures, id);
    assert!(t("shield1") > t("shield2") && t("shield2") > t("shield3"));
    assert!(t("bench") < 40.0 && t("test_volume") < t("bench"));
}

#[test]
fn instrument_energy_balance_closes() {
    let net = Network::from_model(&load("shielded_instrument.json")).unwrap();
    let loads = net.steady_loads();
    let sol = solve_steady(&net, None, &loads, &SolveOptions::default()).unwrap();
    let report = heat_flow_report(&net, &sol.temperatures, &loads, None).unwrap();
    // every group except the fixed spacecraft is in balance
    for g in ["shield1", "shield2", "shield3", "bench"] {
        let into_group = report.group_net(g).unwrap();
        let dissipated: f64 = (0..net.len())
            .filter(|&i| net.groups[i].as_deref() == Some(g))
            .map(|i| loads[i])
            .sum();
        let to_space: f64 = report
            .flows
            .iter()
            .filter(|f| f.to == "space" && net.index_of(&f.from).is_some_and(|i| net.groups[i].as_deref() == Some(g)))
            .map(|f| f.watts)
            .sum();
        assert!((into_group + dissipated - to_space).abs() < 1e-8, "{g}: {into_group} + {dissipated} vs {to_space}");
    }
}

#[test]
fn cooldown_ends_at_the_steady_state() {
    let net = Network::from_model(&load("single_capacitor.json")).unwrap();
    let opts = SolveOptions {
        steady_rate: Some(1e-9),
        ..SolveOptions::with_method(Method::Bdf)
    };
    let r = solve_transient(&net, &net.initial, 0.0, 1e5, &[], &opts, None).unwrap();
    assert!(r.stats.steady_at.is_some());
    assert!((by_id(&net, r.last(), "mass") - 100.0).abs() < 1e-6);
}

#[test]
fn linearized_static_gain_matches_conductance_ratio() {
    // chain of equal conductances: a unit rise at the hot end lifts node k
    // by (6 - k)/6
    let net = Network::from_model(&load("linear_chain.json")).unwrap();
    let loads = net.steady_loads();
    let sol = solve_steady(&net, None, &loads, &SolveOptions::default()).unwrap();
    let sys = linearize(&net, &sol.temperatures, &loads, 1e-9).unwrap();
    let dc = sys.dc_response(&sys.input_column(&Input::Boundary("hot".into())).unwrap()).unwrap();
    for (i, id) in sys.ids.iter().enumerate() {
        let k: f64 = id[1..].parse().unwrap();
        assert!((dc[i] - (6.0 - k) / 6.0).abs() < 1e-12, "{id}");
    }
}

#[test]
fn instrument_has_expected_node_kinds() {
    let net = Network::from_model(&load("shielded_instrument.json")).unwrap();
    assert_eq!(net.kinds[net.index_of("spacecraft").unwrap()], NodeKind::Boundary);
    assert_eq!(net.kinds[net.index_of("test_volume").unwrap()], NodeKind::Arithmetic);
    let strut_nodes = net.ids.iter().filter(|id| id.starts_with("strut1_sec")).count();
    assert_eq!(strut_nodes, 13 + 7 + 3 + 3);
}

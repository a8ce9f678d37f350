use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{conductive_flow, radiative_flow, Network, NetworkError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FlowKind {
    Radiative,
    Conductive,
    Dissipation,
    Solar,
    Planetary,
}

impl FlowKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowKind::Radiative => "radiative",
            FlowKind::Conductive => "conductive",
            FlowKind::Dissipation => "dissipation",
            FlowKind::Solar => "solar",
            FlowKind::Planetary => "planetary",
        }
    }
}

/// One coupling's power, oriented so that `watts >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub from: String,
    pub to: String,
    pub kind: FlowKind,
    pub watts: f64,
}

/// Environmental power per node in W. Albedo counts as planetary.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnvPower {
    pub solar: Vec<f64>,
    pub planetary: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowReport {
    pub flows: Vec<Flow>,
    /// Net power into each node, W.
    pub node_net: Vec<(String, f64)>,
    pub groups: Vec<String>,
    /// Net power from group `i` to group `j` through node couplings.
    group_exchange: Vec<Vec<f64>>,
}

fn oriented(from: &str, to: &str, kind: FlowKind, q: f64) -> Flow {
    if q >= 0.0 {
        Flow { from: from.into(), to: to.into(), kind, watts: q }
    } else {
        Flow { from: to.into(), to: from.into(), kind, watts: -q }
    }
}

/// Per-coupling flows at `temps`, aggregated by node group labels.
///
/// `loads` is the per-node dissipation matching `temps` (for example
/// [`Network::steady_loads`]); `env` adds solar and planetary input.
pub fn heat_flow_report(net: &Network, temps: &[f64], loads: &[f64], env: Option<&EnvPower>) -> Result<FlowReport, NetworkError> {
    net.check_finite(temps)?;
    let mut groups: Vec<String> = net.groups.iter().flatten().cloned().collect();
    groups.sort();
    groups.dedup();
    let gi: BTreeMap<&str, usize> = groups.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
    let node_group: Vec<Option<usize>> = net.groups.iter().map(|g| g.as_deref().map(|g| gi[g])).collect();
    let mut exchange = vec![vec![0.0; groups.len()]; groups.len()];
    let mut add_exchange = |a: usize, b: usize, q: f64| {
        if let (Some(ga), Some(gb)) = (node_group[a], node_group[b]) {
            if ga != gb {
                exchange[ga][gb] += q;
                exchange[gb][ga] -= q;
            }
        }
    };

    let mut flows = Vec::new();
    for link in &net.links {
        let (ta, tb) = (temps[link.a], temps[link.b]);
        let q = conductive_flow(net.link_conductance(link, ta, tb).0, ta, tb);
        flows.push(oriented(&net.ids[link.a], &net.ids[link.b], FlowKind::Conductive, q));
        add_exchange(link.a, link.b, q);
    }
    for rl in &net.rad_links {
        let q = radiative_flow(rl.gr, temps[rl.a], temps[rl.b], net.sigma);
        flows.push(oriented(&net.ids[rl.a], &net.ids[rl.b], FlowKind::Radiative, q));
        add_exchange(rl.a, rl.b, q);
    }
    for (i, &q) in loads.iter().enumerate() {
        if q != 0.0 {
            flows.push(oriented("dissipation", &net.ids[i], FlowKind::Dissipation, q));
        }
    }
    let mut total_in = loads.to_vec();
    if let Some(env) = env {
        for (source, kind, values) in [("sun", FlowKind::Solar, &env.solar), ("planet", FlowKind::Planetary, &env.planetary)] {
            for (i, &q) in values.iter().enumerate() {
                if q != 0.0 {
                    flows.push(oriented(source, &net.ids[i], kind, q));
                    total_in[i] += q;
                }
            }
        }
    }
    let net_power = net.residual(temps, &total_in)?;
    Ok(FlowReport {
        flows,
        node_net: net.ids.iter().cloned().zip(net_power).collect(),
        groups,
        group_exchange: exchange,
    })
}

impl FlowReport {
    fn group(&self, name: &str) -> Result<usize, NetworkError> {
        self.groups
            .iter()
            .position(|g| g == name)
            .ok_or_else(|| NetworkError::UnknownGroup(name.to_string()))
    }

    /// Net power from group `from` to group `to`, W.
    pub fn group_flow(&self, from: &str, to: &str) -> Result<f64, NetworkError> {
        Ok(self.group_exchange[self.group(from)?][self.group(to)?])
    }

    /// Net power a group receives from all other groups, W.
    pub fn group_net(&self, name: &str) -> Result<f64, NetworkError> {
        let g = self.group(name)?;
        Ok(self.group_exchange.iter().map(|row| row[g]).sum())
    }

    /// Flow between each consecutive pair of an ordered group list.
    pub fn chain(&self, groups: &[&str]) -> Result<Vec<(String, String, f64)>, NetworkError> {
        for g in groups {
            self.group(g)?;
        }
        groups
            .windows(2)
            .map(|w| Ok((w[0].to_string(), w[1].to_string(), self.group_flow(w[0], w[1])?)))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("from,to,kind,watts\n");
        for f in &self.flows {
            writeln!(s, "{},{},{},{:e}", f.from, f.to, f.kind.as_str(), f.watts).unwrap();
        }
        s
    }

    /// Graphviz digraph of the node couplings, pen width growing with the
    /// logarithm of the carried power.
    pub fn to_dot(&self) -> String {
        let mut edges: BTreeMap<(String, String), f64> = BTreeMap::new();
        for f in &self.flows {
            *edges.entry((f.from.clone(), f.to.clone())).or_default() += f.watts;
        }
        let floor = edges.values().copied().filter(|w| *w > 0.0).fold(f64::INFINITY, f64::min);
        let mut s = String::from("digraph heatflow {\n  rankdir=LR;\n  node [shape=box];\n");
        for ((from, to), w) in &edges {
            let width = if *w > 0.0 && floor.is_finite() {
                1.0 + (w / floor).log10()
            } else {
                1.0
            };
            writeln!(s, "  \"{from}\" -> \"{to}\" [label=\"{:.3e} W\", penwidth={width:.2}];", w).unwrap();
        }
        s.push_str("}\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Capacity, Conductor, HeatLoad, Model, ThermalNode};

    fn chain_model() -> Model {
        Model {
            constants: Default::default(),
            materials: vec![],
            nodes: vec![
                ThermalNode::boundary("hot", 300.0).in_group("g1"),
                ThermalNode::diffusion("mid", Capacity::Fixed(1.0), 200.0).in_group("g2"),
                ThermalNode::boundary("cold", 100.0).in_group("g3"),
            ],
            faces: vec![],
            conductors: vec![Conductor::constant("c1", "hot", "mid", 1.0), Conductor::constant("c2", "mid", "cold", 1.0)],
            loads: vec![HeatLoad::constant("q", "mid", 0.5)],
            orbit: None,
            rad_couplings: None,
        }
    }

    #[test]
    fn single_conductor_flow() {
        let mut m = chain_model();
        m.conductors.truncate(1);
        m.loads.clear();
        m.nodes.truncate(2);
        let net = Network::from_model(&m).unwrap();
        let r = heat_flow_report(&net, &[300.0, 250.0], &[0.0, 0.0], None).unwrap();
        assert_eq!(r.flows.len(), 1);
        assert_eq!(r.flows[0].watts, conductive_flow(1.0, 300.0, 250.0));
        assert_eq!(r.flows[0].from, "hot");
    }

    #[test]
    fn group_chain_and_conservation() {
        let net = Network::from_model(&chain_model()).unwrap();
        // steady: mid = (300 + 100 + 0.5) / 2
        let t = [300.0, 200.25, 100.0];
        let r = heat_flow_report(&net, &t, &net.steady_loads(), None).unwrap();
        let chain = r.chain(&["g1", "g2", "g3"]).unwrap();
        assert!((chain[0].2 - 99.75).abs() < 1e-12);
        assert!((chain[1].2 - 100.25).abs() < 1e-12);
        let total: f64 = r.groups.iter().map(|g| r.group_net(g).unwrap()).sum();
        assert!(total.abs() < 1e-12);
        assert!(r.node_net[1].1.abs() < 1e-12);
        assert!(matches!(r.chain(&["g1", "nope"]), Err(NetworkError::UnknownGroup(_))));
    }

    #[test]
    fn csv_and_dot_render() {
        let net = Network::from_model(&chain_model()).unwrap();
        let r = heat_flow_report(&net, &[300.0, 200.25, 100.0], &net.steady_loads(), None).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("from,to,kind,watts\n"));
        assert_eq!(csv.lines().count(), 4);
        let dot = r.to_dot();
        assert!(dot.contains("\"hot\" -> \"mid\""));
    }
}

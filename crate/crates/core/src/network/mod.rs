//! Nodal energy balance: couplings, flows, residual and its Jacobian.
//!
//! A [`Network`] is the solver-facing form of a [`Model`]. Face-level
//! radiative exchange factors are folded into node-to-node couplings, and
//! conductors and loads are resolved to node indices.

mod report;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::{
    Capacity, ConductorKind, HeatLoad, LoadKind, MaterialTable, Model, ModelError, NodeKind, Property, RadCouplings,
    SPACE,
};

pub use report::{heat_flow_report, EnvPower, Flow, FlowKind, FlowReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("non-finite temperature at node '{0}'")]
    NonFinite(String),
    #[error("unknown group '{0}'")]
    UnknownGroup(String),
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Signed power from `i` to `j` through a radiative exchange factor `gr` (m²).
pub fn radiative_flow(gr: f64, t_i: f64, t_j: f64, sigma: f64) -> f64 {
    sigma * gr * (t_i.powi(4) - t_j.powi(4))
}

/// Signed power from `i` to `j` through a linear conductance `gl` (W/K).
pub fn conductive_flow(gl: f64, t_i: f64, t_j: f64) -> f64 {
    gl * (t_i - t_j)
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeCapacity {
    None,
    Fixed(f64),
    /// Mass in kg times the material's specific heat.
    Material { material: usize, mass: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Conductance {
    Constant(f64),
    /// `area / length` times k(T_mean) of the referenced material.
    Geometric { shape: f64, material: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: String,
    pub a: usize,
    pub b: usize,
    pub conductance: Conductance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadLink {
    pub a: usize,
    pub b: usize,
    /// m²
    pub gr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub ids: Vec<String>,
    pub kinds: Vec<NodeKind>,
    pub groups: Vec<Option<String>>,
    /// Initial temperatures; the fixed value for boundary nodes. Arithmetic
    /// nodes without a starting value hold NaN.
    pub initial: Vec<f64>,
    pub capacity: Vec<NodeCapacity>,
    pub materials: Vec<MaterialTable>,
    pub links: Vec<Link>,
    pub rad_links: Vec<RadLink>,
    pub loads: Vec<(usize, HeatLoad)>,
    pub sigma: f64,
}

impl Network {
    /// Builds the network using the model's inline `rad_couplings`, if any.
    pub fn from_model(model: &Model) -> Result<Network, NetworkError> {
        Network::with_couplings(model, model.rad_couplings.as_ref())
    }

    /// Builds the network with an explicit coupling block (face or node ids,
    /// or `space`). Couplings between faces of the same node are dropped.
    pub fn with_couplings(model: &Model, couplings: Option<&RadCouplings>) -> Result<Network, NetworkError> {
        let index: BTreeMap<&str, usize> = model.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
        let material_index: BTreeMap<&str, usize> =
            model.materials.iter().enumerate().map(|(i, m)| (m.name.as_str(), i)).collect();

        let capacity = model
            .nodes
            .iter()
            .map(|n| match (&n.kind, &n.capacity) {
                (NodeKind::Diffusion, Some(Capacity::Fixed(c))) => NodeCapacity::Fixed(*c),
                (NodeKind::Diffusion, Some(Capacity::Material(mc))) => NodeCapacity::Material {
                    material: material_index[mc.material.as_str()],
                    mass: mc.mass,
                },
                _ => NodeCapacity::None,
            })
            .collect();

        let links = model
            .conductors
            .iter()
            .map(|c| Link {
                id: c.id.clone(),
                a: index[c.node_a.as_str()],
                b: index[c.node_b.as_str()],
                conductance: match c.kind {
                    ConductorKind::Constant => Conductance::Constant(c.gl.unwrap_or(0.0)),
                    ConductorKind::Geometric => Conductance::Geometric {
                        shape: c.area.unwrap_or(0.0) / c.length.unwrap_or(1.0),
                        material: material_index[c.material.as_deref().unwrap_or_default()],
                    },
                },
            })
            .collect();

        let mut rad_links = Vec::new();
        if let Some(block) = couplings {
            let face_node: BTreeMap<&str, &str> = model.faces.iter().map(|f| (f.id.as_str(), f.node.as_str())).collect();
            let space = model.constants.space_node.as_str();
            let resolve = |id: &str| -> Result<usize, NetworkError> {
                let node = if id == SPACE {
                    space
                } else {
                    face_node.get(id).copied().unwrap_or(id)
                };
                index
                    .get(node)
                    .copied()
                    .ok_or_else(|| NetworkError::UnknownNode(node.to_string()))
            };
            let mut sums: BTreeMap<(usize, usize), f64> = BTreeMap::new();
            for e in &block.entries {
                let (a, b) = (resolve(&e.from)?, resolve(&e.to)?);
                if a == b || e.gr == 0.0 {
                    continue;
                }
                *sums.entry((a.min(b), a.max(b))).or_default() += e.gr;
            }
            rad_links = sums.into_iter().map(|((a, b), gr)| RadLink { a, b, gr }).collect();
        }

        let loads = model
            .loads
            .iter()
            .map(|l| (index[l.node.as_str()], l.clone()))
            .collect();

        Ok(Network {
            ids: model.nodes.iter().map(|n| n.id.clone()).collect(),
            kinds: model.nodes.iter().map(|n| n.kind).collect(),
            groups: model.nodes.iter().map(|n| n.group.clone()).collect(),
            initial: model.nodes.iter().map(|n| n.temperature.unwrap_or(f64::NAN)).collect(),
            capacity,
            materials: model.materials.clone(),
            links,
            rad_links,
            loads,
            sigma: model.constants.sigma,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|n| n == id)
    }

    pub fn indices_of(&self, kind: NodeKind) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.kinds[i] == kind).collect()
    }

    /// Diffusion and arithmetic nodes, in model order.
    pub fn unknowns(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.kinds[i] != NodeKind::Boundary).collect()
    }

    /// GL of a link and dGL/dT_mean at the given end temperatures.
    pub fn link_conductance(&self, link: &Link, t_a: f64, t_b: f64) -> (f64, f64) {
        match link.conductance {
            Conductance::Constant(g) => (g, 0.0),
            Conductance::Geometric { shape, material } => {
                let (k, dk) = self.materials[material].eval_with_slope(Property::Conductivity, 0.5 * (t_a + t_b));
                (k * shape, dk * shape)
            }
        }
    }

    /// Heat capacity m·c in J/K at temperature `t` and its slope.
    pub fn capacity_at(&self, node: usize, t: f64) -> (f64, f64) {
        match self.capacity[node] {
            NodeCapacity::None => (0.0, 0.0),
            NodeCapacity::Fixed(c) => (c, 0.0),
            NodeCapacity::Material { material, mass } => {
                let (c, dc) = self.materials[material].eval_with_slope(Property::SpecificHeat, t);
                (mass * c, mass * dc)
            }
        }
    }

    /// Nominal per-node dissipation used by steady-state solutions.
    pub fn steady_loads(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.len()];
        for (i, l) in &self.loads {
            q[*i] += l.steady_power();
        }
        q
    }

    /// Per-node dissipation at time `t`.
    pub fn loads_at(&self, t: f64) -> Vec<f64> {
        let mut q = vec![0.0; self.len()];
        for (i, l) in &self.loads {
            q[*i] += l.power_at(t);
        }
        q
    }

    /// Times in `(t0, t1)` where a timeseries load changes slope.
    pub fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .loads
            .iter()
            .filter(|(_, l)| l.kind == LoadKind::Timeseries)
            .flat_map(|(_, l)| l.samples.iter().flatten().map(|s| s.0))
            .filter(|&t| t > t0 && t < t1)
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Temperatures with boundary nodes pinned to their fixed values.
    pub fn with_boundaries(&self, temps: &[f64]) -> Vec<f64> {
        let mut t = temps.to_vec();
        for i in 0..self.len() {
            if self.kinds[i] == NodeKind::Boundary {
                t[i] = self.initial[i];
            }
        }
        t
    }

    fn check_finite(&self, temps: &[f64]) -> Result<(), NetworkError> {
        match temps.iter().position(|t| !t.is_finite()) {
            Some(i) => Err(NetworkError::NonFinite(self.ids[i].clone())),
            None => Ok(()),
        }
    }

    /// Net power into every node (W): incoming radiative and conductive flows
    /// plus `loads`. Boundary rows are reported but not constrained.
    pub fn residual(&self, temps: &[f64], loads: &[f64]) -> Result<Vec<f64>, NetworkError> {
        self.check_finite(temps)?;
        let mut r = vec![0.0; self.len()];
        self.residual_into(temps, loads, &mut r);
        Ok(r)
    }

    /// Unchecked residual; `out` is overwritten.
    pub fn residual_into(&self, temps: &[f64], loads: &[f64], out: &mut [f64]) {
        out.copy_from_slice(loads);
        for link in &self.links {
            let (ta, tb) = (temps[link.a], temps[link.b]);
            let (g, _) = self.link_conductance(link, ta, tb);
            let q = conductive_flow(g, ta, tb);
            out[link.a] -= q;
            out[link.b] += q;
        }
        for rl in &self.rad_links {
            let q = radiative_flow(rl.gr, temps[rl.a], temps[rl.b], self.sigma);
            out[rl.a] -= q;
            out[rl.b] += q;
        }
    }

    /// Analytic ∂residual/∂T over all nodes, including the k(T) slope of
    /// geometric conductors.
    pub fn jacobian(&self, temps: &[f64]) -> DMatrix<f64> {
        let n = self.len();
        let mut j = DMatrix::zeros(n, n);
        for link in &self.links {
            let (a, b) = (link.a, link.b);
            let (ta, tb) = (temps[a], temps[b]);
            let (g, dg) = self.link_conductance(link, ta, tb);
            // Q = g(Tm)(Ta - Tb) with Tm = (Ta + Tb)/2
            let dq_da = g + 0.5 * dg * (ta - tb);
            let dq_db = -g + 0.5 * dg * (ta - tb);
            j[(a, a)] -= dq_da;
            j[(a, b)] -= dq_db;
            j[(b, a)] += dq_da;
            j[(b, b)] += dq_db;
        }
        for rl in &self.rad_links {
            let (a, b) = (rl.a, rl.b);
            let ka = 4.0 * self.sigma * rl.gr * temps[a].powi(3);
            let kb = 4.0 * self.sigma * rl.gr * temps[b].powi(3);
            j[(a, a)] -= ka;
            j[(a, b)] += kb;
            j[(b, a)] += ka;
            j[(b, b)] -= kb;
        }
        j
    }

    /// Largest deviation between the analytic Jacobian and central
    /// differences with step `eps`. Each entry's error is taken relative to
    /// the larger of its row's and its column's largest finite-difference
    /// entry, so weak couplings are checked against the scale of the
    /// equation they enter rather than against rounding noise.
    pub fn jacobian_check(&self, temps: &[f64], eps: f64) -> f64 {
        let n = self.len();
        let analytic = self.jacobian(temps);
        let zero = vec![0.0; n];
        let (mut rp, mut rm) = (vec![0.0; n], vec![0.0; n]);
        let mut t = temps.to_vec();
        let mut fd = DMatrix::zeros(n, n);
        for c in 0..n {
            t[c] = temps[c] + eps;
            self.residual_into(&t, &zero, &mut rp);
            t[c] = temps[c] - eps;
            self.residual_into(&t, &zero, &mut rm);
            t[c] = temps[c];
            for r in 0..n {
                fd[(r, c)] = (rp[r] - rm[r]) / (2.0 * eps);
            }
        }
        let row_max: Vec<f64> = (0..n).map(|r| fd.row(r).amax()).collect();
        let col_max: Vec<f64> = (0..n).map(|c| fd.column(c).amax()).collect();
        let mut worst: f64 = 0.0;
        for c in 0..n {
            for r in 0..n {
                let scale = row_max[r].max(col_max[c]);
                if scale > 0.0 {
                    worst = worst.max((analytic[(r, c)] - fd[(r, c)]).abs() / scale);
                }
            }
        }
        worst
    }

    /// Residual restricted to `rows`, as a vector.
    pub fn residual_rows(&self, temps: &[f64], loads: &[f64], rows: &[usize]) -> DVector<f64> {
        let mut r = vec![0.0; self.len()];
        self.residual_into(temps, loads, &mut r);
        DVector::from_iterator(rows.len(), rows.iter().map(|&i| r[i]))
    }

    /// Node-level radiative coupling between two nodes, summed over links.
    pub fn node_gr(&self, a: usize, b: usize) -> f64 {
        self.rad_links
            .iter()
            .filter(|l| (l.a == a && l.b == b) || (l.a == b && l.b == a))
            .map(|l| l.gr)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_model, Conductor, MaterialTable, RadEntry, ThermalNode};
    use crate::model::STEFAN_BOLTZMANN as SIGMA;
    use proptest::prelude::*;

    fn two_node(gl: f64) -> Model {
        Model {
            constants: Default::default(),
            materials: vec![],
            nodes: vec![
                ThermalNode::boundary("space", 3.0),
                ThermalNode::diffusion("a", Capacity::Fixed(1.0), 100.0),
            ],
            faces: vec![],
            conductors: vec![Conductor::constant("c", "a", "space", gl)],
            loads: vec![],
            orbit: None,
            rad_couplings: None,
        }
    }

    #[test]
    fn radiative_flow_examples() {
        assert_eq!(radiative_flow(1.0, 100.0, 100.0, SIGMA), 0.0);
        let q = radiative_flow(0.5, 300.0, 200.0, SIGMA);
        assert!((q - SIGMA * 0.5 * (8.1e9 - 1.6e9)).abs() < 1e-9);
        assert!((q - 184.3).abs() < 0.05);
        assert_eq!(radiative_flow(0.5, 200.0, 300.0, SIGMA), -q);
    }

    #[test]
    fn conductive_flow_examples() {
        assert!((conductive_flow(0.1, 20.0, 10.0) - 1.0).abs() < 1e-15);
        assert!((conductive_flow(2.8, 30.01, 30.0) - 0.028).abs() < 1e-12);
        assert_eq!(conductive_flow(2.8, 30.0, 30.0), 0.0);
    }

    #[test]
    fn isolated_load_residual() {
        let mut m = two_node(1.0);
        m.nodes.push(ThermalNode::diffusion("lone", Capacity::Fixed(1.0), 50.0));
        m.loads.push(HeatLoad::constant("q", "lone", 1.0));
        let net = Network::from_model(&m).unwrap();
        let r = net.residual(&[3.0, 3.0, 50.0], &net.steady_loads()).unwrap();
        assert_eq!(r[2], 1.0);
    }

    #[test]
    fn quartic_equilibrium_residual() {
        let mut m = two_node(1.0);
        m.conductors.clear();
        m.rad_couplings = Some(RadCouplings {
            seed: None,
            rays: Default::default(),
            entries: vec![RadEntry {
                from: "a".into(),
                to: "space".into(),
                gr: 0.01,
                stderr: None,
            }],
        });
        m.loads.push(HeatLoad::constant("q", "a", 1.0));
        let net = Network::from_model(&m).unwrap();
        let t = (1.0 / (SIGMA * 0.01) + 3f64.powi(4)).powf(0.25);
        let r = net.residual(&[3.0, t], &net.steady_loads()).unwrap();
        assert!(r[1].abs() < 1e-9, "{}", r[1]);
        assert!((t - 204.93).abs() < 5e-3);
    }

    #[test]
    fn non_finite_named() {
        let net = Network::from_model(&two_node(1.0)).unwrap();
        let err = net.residual(&[3.0, f64::NAN], &[0.0, 0.0]).unwrap_err();
        assert_eq!(err, NetworkError::NonFinite("a".into()));
    }

    #[test]
    fn face_couplings_fold_into_nodes() {
        let text = r#"{
            "nodes": [
                {"id": "space", "kind": "boundary", "temperature": 3.0},
                {"id": "a", "kind": "diffusion", "capacity": 1.0, "temperature": 100.0},
                {"id": "b", "kind": "diffusion", "capacity": 1.0, "temperature": 100.0}
            ],
            "faces": [
                {"id": "a1", "node": "a", "primitive": {"type": "disc", "radius": 1.0}, "alpha": 1, "epsilon": 1},
                {"id": "a2", "node": "a", "primitive": {"type": "disc", "radius": 1.0}, "side": "back", "alpha": 1, "epsilon": 1},
                {"id": "b1", "node": "b", "primitive": {"type": "disc", "radius": 1.0}, "pose": {"origin": [0, 0, 1]}, "side": "back", "alpha": 1, "epsilon": 1}
            ],
            "rad_couplings": {"entries": [
                {"from": "a1", "to": "b1", "gr": 0.5},
                {"from": "a2", "to": "b1", "gr": 0.25},
                {"from": "a1", "to": "a2", "gr": 0.1},
                {"from": "a2", "to": "space", "gr": 2.0}
            ]}
        }"#;
        let m = parse_model(text).unwrap();
        let net = Network::from_model(&m).unwrap();
        assert_eq!(net.rad_links.len(), 2);
        assert_eq!(net.node_gr(1, 2), 0.75);
        assert_eq!(net.node_gr(1, 0), 2.0);
    }

    fn mixed_network() -> Network {
        let table = MaterialTable {
            name: "g".into(),
            conductivity: vec![(10.0, 0.5), (100.0, 2.0), (300.0, 3.0)],
            specific_heat: vec![(10.0, 5.0), (300.0, 900.0)],
        };
        let m = Model {
            constants: Default::default(),
            materials: vec![table],
            nodes: vec![
                ThermalNode::boundary("space", 3.0),
                ThermalNode::boundary("sc", 293.15),
                ThermalNode::diffusion("a", Capacity::Fixed(1.0), 100.0),
                ThermalNode::arithmetic("b"),
            ],
            faces: vec![],
            conductors: vec![
                Conductor::geometric("g1", "sc", "a", 1e-3, 0.1, "g"),
                Conductor::constant("g2", "a", "b", 0.3),
            ],
            loads: vec![],
            orbit: None,
            rad_couplings: Some(RadCouplings {
                seed: None,
                rays: Default::default(),
                entries: vec![
                    RadEntry { from: "a".into(), to: "space".into(), gr: 0.2, stderr: None },
                    RadEntry { from: "b".into(), to: "space".into(), gr: 0.05, stderr: None },
                    RadEntry { from: "a".into(), to: "b".into(), gr: 0.1, stderr: None },
                ],
            }),
        };
        Network::from_model(&m).unwrap()
    }

    proptest! {
        #[test]
        fn internal_flows_cancel(ta in 5.0f64..400.0, tb in 5.0f64..400.0) {
            let net = mixed_network();
            let t = [3.0, 293.15, ta, tb];
            let r = net.residual(&t, &[0.0; 4]).unwrap();
            let total: f64 = r.iter().sum();
            let scale: f64 = r.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            prop_assert!(total.abs() <= 1e-12 * scale);
        }

        #[test]
        fn flows_monotone_in_source(t_j in 1.0f64..400.0, t1 in 1.0f64..400.0, dt in 1e-3f64..50.0) {
            prop_assert!(radiative_flow(0.3, t1 + dt, t_j, SIGMA) > radiative_flow(0.3, t1, t_j, SIGMA));
            prop_assert!(conductive_flow(0.3, t1 + dt, t_j) > conductive_flow(0.3, t1, t_j));
        }

        #[test]
        fn jacobian_matches_central_differences(ta in 5.0f64..400.0, tb in 5.0f64..400.0) {
            let net = mixed_network();
            let err = net.jacobian_check(&[3.0, 293.15, ta, tb], 1e-3);
            prop_assert!(err < 1e-6, "{}", err);
        }
    }
}

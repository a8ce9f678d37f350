//! 1-D refinement of a conductive element into a chain of lumped nodes.

use super::{Capacity, Conductor, MaterialCapacity, ModelError, ThermalNode};

/// Nodes and conductors produced by [`subdivide_chain`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChainMesh {
    pub nodes: Vec<ThermalNode>,
    pub conductors: Vec<Conductor>,
}

impl ChainMesh {
    /// Conductor spans in m, in chain order.
    pub fn spans(&self) -> Vec<f64> {
        self.conductors.iter().map(|c| c.length.unwrap_or(0.0)).collect()
    }
}

/// Splits a uniform bar of `length` and cross-section `area` between
/// `end_a` and `end_b` into `n` equal diffusion nodes.
///
/// Node k (1-based) sits at `(k - 1/2) * length / n` from `end_a`. Interior
/// conductors span `length / n`, the two end conductors `length / (2n)`, so
/// the series resistance equals that of the undivided bar. `mass` is the
/// total bar mass in kg, shared equally between the nodes. Ids are
/// `{prefix}_{k}` for nodes and `{prefix}_c{k}` (k = 0..=n) for conductors.
#[allow(clippy::too_many_arguments)]
pub fn subdivide_chain(
    prefix: &str,
    length: f64,
    area: f64,
    material: &str,
    mass: f64,
    n: usize,
    end_a: &str,
    end_b: &str,
    initial_temperature: f64,
) -> Result<ChainMesh, ModelError> {
    if n == 0 {
        return Err(ModelError::Invalid {
            path: format!("chain[{prefix}]"),
            message: "node count must be >= 1".into(),
        });
    }
    for (name, v) in [("length", length), ("area", area), ("mass", mass)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(ModelError::Invalid {
                path: format!("chain[{prefix}].{name}"),
                message: "must be > 0".into(),
            });
        }
    }
    let node_id = |k: usize| format!("{prefix}_{k}");
    let nodes = (1..=n)
        .map(|k| {
            ThermalNode::diffusion(
                &node_id(k),
                Capacity::Material(MaterialCapacity {
                    material: material.to_string(),
                    mass: mass / n as f64,
                }),
                initial_temperature,
            )
        })
        .collect();

    let interior = length / n as f64;
    let end = 0.5 * interior;
    let mut conductors = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let a = if k == 0 { end_a.to_string() } else { node_id(k) };
        let b = if k == n { end_b.to_string() } else { node_id(k + 1) };
        let span = if k == 0 || k == n { end } else { interior };
        conductors.push(Conductor::geometric(&format!("{prefix}_c{k}"), &a, &b, area, span, material));
    }
    Ok(ChainMesh { nodes, conductors })
}

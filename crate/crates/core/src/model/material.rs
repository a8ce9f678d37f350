use serde::{Deserialize, Serialize};

/// Temperature-dependent material properties as piecewise-linear tables.
///
/// Each table is a list of `(T [K], value)` knots with strictly increasing
/// temperature. Outside the tabulated range the end values are held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialTable {
    pub name: String,
    /// `(T, k)` with k in W/(m·K).
    pub conductivity: Vec<(f64, f64)>,
    /// `(T, c)` with c in J/(kg·K).
    pub specific_heat: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Property {
    Conductivity,
    SpecificHeat,
}

impl MaterialTable {
    pub fn constant(name: &str, conductivity: f64, specific_heat: f64) -> Self {
        MaterialTable {
            name: name.to_string(),
            conductivity: vec![(1.0, conductivity)],
            specific_heat: vec![(1.0, specific_heat)],
        }
    }

    pub fn table(&self, property: Property) -> &[(f64, f64)] {
        match property {
            Property::Conductivity => &self.conductivity,
            Property::SpecificHeat => &self.specific_heat,
        }
    }

    pub fn eval(&self, property: Property, temperature: f64) -> f64 {
        interpolate(self.table(property), temperature).0
    }

    /// Value and slope d(value)/dT at `temperature`.
    pub fn eval_with_slope(&self, property: Property, temperature: f64) -> (f64, f64) {
        interpolate(self.table(property), temperature)
    }

    pub(crate) fn check(&self) -> Result<(), String> {
        for (label, table) in [
            ("conductivity", &self.conductivity),
            ("specific_heat", &self.specific_heat),
        ] {
            if table.is_empty() {
                return Err(format!("{label}: at least one entry required"));
            }
            for (i, &(t, v)) in table.iter().enumerate() {
                if !(t.is_finite() && t > 0.0) {
                    return Err(format!("{label}[{i}]: temperature must be > 0 K"));
                }
                if !(v.is_finite() && v > 0.0) {
                    return Err(format!("{label}[{i}]: value must be > 0"));
                }
            }
            if table.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(format!("{label}: temperatures must be strictly increasing"));
            }
        }
        Ok(())
    }
}

/// Piecewise-linear interpolation clamped at both ends. The slope is that of
/// the segment `[T_k, T_k+1)` containing `t`, and zero outside the table.
pub fn interpolate(table: &[(f64, f64)], t: f64) -> (f64, f64) {
    let first = table[0];
    let last = table[table.len() - 1];
    if t <= first.0 {
        return (first.1, 0.0);
    }
    if t >= last.0 {
        return (last.1, 0.0);
    }
    // first index whose temperature exceeds t
    let hi = table.partition_point(|&(tk, _)| tk <= t);
    let (t0, v0) = table[hi - 1];
    let (t1, v1) = table[hi];
    let slope = (v1 - v0) / (t1 - t0);
    (v0 + slope * (t - t0), slope)
}

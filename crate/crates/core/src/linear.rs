//! Small-signal analysis about a steady state: linearization, gain spectra
//! for boundary-temperature or dissipation inputs, and a cross-check of the
//! static gain against the nonlinear model.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::model::NodeKind;
use crate::network::{Network, NetworkError};
use crate::solvers::{solve_steady_newton, SolveError, SolveOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearError {
    #[error("not a steady state: residual {residual:e} W at node '{node}'")]
    NotSteady { node: String, residual: f64 },
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error("'{0}' is not a boundary node")]
    NotBoundary(String),
    #[error("'{0}' is a boundary node and cannot take a power input")]
    PowerIntoBoundary(String),
    #[error("input must be boundary:<node> or power:<node>, got '{0}'")]
    BadInput(String),
    #[error("frequencies must be positive and finite")]
    BadFrequency,
    #[error("singular system at {frequency} Hz")]
    Singular { frequency: f64 },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// A single perturbation source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Input {
    /// Oscillating fixed temperature, gains in K/K.
    Boundary(String),
    /// Oscillating dissipation, gains in K/W.
    Power(String),
}

impl Input {
    pub fn node(&self) -> &str {
        match self {
            Input::Boundary(n) | Input::Power(n) => n,
        }
    }

    pub fn unit(&self) -> &'static str {
        match self {
            Input::Boundary(_) => "K/K",
            Input::Power(_) => "K/W",
        }
    }
}

impl FromStr for Input {
    type Err = LinearError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some(("boundary", n)) if !n.is_empty() => Ok(Input::Boundary(n.into())),
            Some(("power", n)) if !n.is_empty() => Ok(Input::Power(n.into())),
            _ => Err(LinearError::BadInput(s.into())),
        }
    }
}

impl fmt::Display for Input {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Input::Boundary(n) => write!(f, "boundary:{n}"),
            Input::Power(n) => write!(f, "power:{n}"),
        }
    }
}

/// C dx/dt = -K x + B u over the non-boundary nodes. Arithmetic nodes keep
/// a zero capacitance row.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedSystem {
    /// Network indices of the state entries.
    pub nodes: Vec<usize>,
    pub ids: Vec<String>,
    /// Diagonal of C, J/K.
    pub capacitance: DVector<f64>,
    /// W/K
    pub conductance: DMatrix<f64>,
    /// Boundary network index and its input column, W/K.
    pub boundary_inputs: Vec<(usize, DVector<f64>)>,
    pub t_bar: Vec<f64>,
    all_ids: Vec<String>,
}

/// Linearizes about `t_bar`, which must satisfy the steady balance under
/// `loads` to within `tol` W on every non-boundary node.
pub fn linearize(net: &Network, t_bar: &[f64], loads: &[f64], tol: f64) -> Result<LinearizedSystem, LinearError> {
    let r = net.residual(t_bar, loads)?;
    let nodes = net.unknowns();
    if let Some(&worst) = nodes.iter().max_by(|&&a, &&b| r[a].abs().total_cmp(&r[b].abs())) {
        if !(r[worst].abs() <= tol) {
            return Err(LinearError::NotSteady {
                node: net.ids[worst].clone(),
                residual: r[worst],
            });
        }
    }
    let j = net.jacobian(t_bar);
    let n = nodes.len();
    let conductance = DMatrix::from_fn(n, n, |p, q| -j[(nodes[p], nodes[q])]);
    let capacitance = DVector::from_iterator(n, nodes.iter().map(|&i| net.capacity_at(i, t_bar[i]).0));
    let boundary_inputs = net
        .indices_of(NodeKind::Boundary)
        .into_iter()
        .map(|b| (b, DVector::from_iterator(n, nodes.iter().map(|&i| j[(i, b)]))))
        .collect();
    Ok(LinearizedSystem {
        ids: nodes.iter().map(|&i| net.ids[i].clone()).collect(),
        nodes,
        capacitance,
        conductance,
        boundary_inputs,
        t_bar: t_bar.to_vec(),
        all_ids: net.ids.clone(),
    })
}

impl LinearizedSystem {
    fn position(&self, id: &str) -> Option<usize> {
        self.all_ids.iter().position(|n| n == id)
    }

    /// Input column for a unit perturbation.
    pub fn input_column(&self, input: &Input) -> Result<DVector<f64>, LinearError> {
        let name = input.node();
        let idx = self.position(name).ok_or_else(|| LinearError::UnknownNode(name.into()))?;
        match input {
            Input::Boundary(_) => self
                .boundary_inputs
                .iter()
                .find(|(b, _)| *b == idx)
                .map(|(_, col)| col.clone())
                .ok_or_else(|| LinearError::NotBoundary(name.into())),
            Input::Power(_) => {
                let p = self
                    .nodes
                    .iter()
                    .position(|&i| i == idx)
                    .ok_or_else(|| LinearError::PowerIntoBoundary(name.into()))?;
                let mut b = DVector::zeros(self.nodes.len());
                b[p] = 1.0;
                Ok(b)
            }
        }
    }

    /// Complex response x = (i 2πf C + K)⁻¹ b.
    pub fn response(&self, b: &DVector<f64>, frequency: f64) -> Result<DVector<Complex<f64>>, LinearError> {
        let w = 2.0 * std::f64::consts::PI * frequency;
        let n = self.nodes.len();
        let a = DMatrix::from_fn(n, n, |p, q| {
            let im = if p == q { w * self.capacitance[p] } else { 0.0 };
            Complex::new(self.conductance[(p, q)], im)
        });
        let rhs = b.map(|v| Complex::new(v, 0.0));
        let x = a.lu().solve(&rhs).ok_or(LinearError::Singular { frequency })?;
        if x.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(LinearError::Singular { frequency });
        }
        Ok(x)
    }

    /// Static response K⁻¹ b.
    pub fn dc_response(&self, b: &DVector<f64>) -> Result<DVector<f64>, LinearError> {
        self.conductance
            .clone()
            .lu()
            .solve(b)
            .filter(|x| x.iter().all(|v| v.is_finite()))
            .ok_or(LinearError::Singular { frequency: 0.0 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainSpectrum {
    pub input: Input,
    pub frequencies: Vec<f64>,
    pub ids: Vec<String>,
    /// `gain[k][i]`: node `i` at frequency `k`.
    pub gain: Vec<Vec<f64>>,
    pub phase: Vec<Vec<f64>>,
}

impl GainSpectrum {
    pub fn node_gain(&self, id: &str) -> Option<Vec<f64>> {
        let i = self.ids.iter().position(|n| n == id)?;
        Some(self.gain.iter().map(|row| row[i]).collect())
    }

    /// `frequency_hz,node_id,gain,phase_rad` preceded by a comment naming
    /// the gain unit.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# input {} gain unit {}\nfrequency_hz,node_id,gain,phase_rad\n", self.input, self.input.unit());
        for (k, f) in self.frequencies.iter().enumerate() {
            for (i, id) in self.ids.iter().enumerate() {
                writeln!(s, "{f:e},{id},{:e},{:e}", self.gain[k][i], self.phase[k][i]).unwrap();
            }
        }
        s
    }
}

/// `points` log-spaced frequencies from `fmin` to `fmax` inclusive.
pub fn log_frequency_grid(fmin: f64, fmax: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![fmin];
    }
    let (a, b) = (fmin.log10(), fmax.log10());
    (0..points)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (points - 1) as f64))
        .collect()
}

pub const DEFAULT_FMIN: f64 = 1e-6;
pub const DEFAULT_FMAX: f64 = 1e-1;
pub const DEFAULT_POINTS: usize = 61;

/// Gain magnitude and phase of every non-boundary node per frequency.
pub fn frequency_response(sys: &LinearizedSystem, input: &Input, freqs: &[f64]) -> Result<GainSpectrum, LinearError> {
    if freqs.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(LinearError::BadFrequency);
    }
    let mut frequencies = freqs.to_vec();
    frequencies.sort_by(f64::total_cmp);
    let b = sys.input_column(input)?;
    let rows = frequencies
        .par_iter()
        .map(|&f| sys.response(&b, f))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GainSpectrum {
        input: input.clone(),
        frequencies,
        ids: sys.ids.clone(),
        gain: rows.iter().map(|x| x.iter().map(|c| c.norm()).collect()).collect(),
        phase: rows.iter().map(|x| x.iter().map(|c| c.arg()).collect()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcGainCheck {
    pub ids: Vec<String>,
    pub linear: Vec<f64>,
    /// Central difference of re-solved nonlinear steady states.
    pub nonlinear: Vec<f64>,
}

impl DcGainCheck {
    /// Largest |linear - nonlinear| / |nonlinear| over nodes whose gain is
    /// at least `floor` times the largest gain; smaller gains are below the
    /// resolution of the re-solved states.
    pub fn max_relative_error(&self, floor: f64) -> f64 {
        let top = self.nonlinear.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        self.linear
            .iter()
            .zip(&self.nonlinear)
            .filter(|(_, nl)| nl.abs() > floor * top)
            .map(|(l, nl)| ((l - nl) / nl).abs())
            .fold(0.0, f64::max)
    }
}

/// Compares the linearized static gain with a central difference of the
/// nonlinear steady state perturbed by ±`delta` (K or W).
pub fn dc_gain_check(
    net: &Network,
    t_bar: &[f64],
    loads: &[f64],
    input: &Input,
    delta: f64,
    opts: &SolveOptions,
) -> Result<DcGainCheck, LinearError> {
    let sys = linearize(net, t_bar, loads, opts.tol_residual.max(1e-6))?;
    let linear = sys.dc_response(&sys.input_column(input)?)?;
    let idx = net.index_of(input.node()).ok_or_else(|| LinearError::UnknownNode(input.node().into()))?;
    let solve = |sign: f64| -> Result<Vec<f64>, LinearError> {
        let mut perturbed = net.clone();
        let mut q = loads.to_vec();
        match input {
            Input::Boundary(_) => perturbed.initial[idx] += sign * delta,
            Input::Power(_) => q[idx] += sign * delta,
        }
        let guess = perturbed.with_boundaries(t_bar);
        Ok(solve_steady_newton(&perturbed, Some(&guess), &q, opts)?.temperatures)
    };
    let (up, down) = (solve(1.0)?, solve(-1.0)?);
    Ok(DcGainCheck {
        ids: sys.ids.clone(),
        linear: linear.iter().copied().collect(),
        nonlinear: sys.nodes.iter().map(|&i| (up[i] - down[i]) / (2.0 * delta)).collect(),
    })
}

/// Fractional length (and resonance frequency) instability of a cavity
/// whose spacer sees `gain · amplitude` of temperature swing.
pub fn cavity_instability(gain: f64, amplitude: f64, cte: f64) -> f64 {
    cte.abs() * gain * amplitude
}

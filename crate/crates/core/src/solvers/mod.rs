//! Steady-state and transient solution of the nodal energy balance.

mod steady;
mod transient;

use thiserror::Error;

use crate::network::NetworkError;

pub use steady::{
    close_arithmetic_nodes, initial_guess, solve_steady, solve_steady_iterative, solve_steady_newton, SteadySolution,
};
pub use transient::{solve_transient, LoadSource, StepStats, TransientResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Newton,
    Iterative,
    CrankNicolson,
    Bdf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Max-norm of the unknowns' net power at convergence, W.
    pub tol_residual: f64,
    /// Max-norm of the last temperature update at convergence, K.
    pub tol_dt: f64,
    /// Newton iteration limit.
    pub max_iter: usize,
    /// Sweep limit of the iterative solver.
    pub max_sweeps: usize,
    /// Newton step scale (capped at 1), or relaxation factor of the
    /// iterative solver.
    pub damping: f64,
    /// s
    pub dt_initial: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Local error tolerance, K.
    pub error_tol_abs: f64,
    pub error_tol_rel: f64,
    pub method: Method,
    /// Stop a transient once max |dT/dt| falls below this rate, K/s.
    pub steady_rate: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol_residual: 1e-9,
            tol_dt: 1e-6,
            max_iter: 200,
            max_sweeps: 1_000_000,
            damping: 1.0,
            dt_initial: 1.0,
            dt_min: 1e-9,
            dt_max: f64::INFINITY,
            error_tol_abs: 1e-4,
            error_tol_rel: 1e-6,
            method: Method::Newton,
            steady_rate: None,
        }
    }
}

impl SolveOptions {
    pub fn with_method(method: Method) -> Self {
        SolveOptions {
            method,
            ..SolveOptions::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let positive = [
            ("tol_residual", self.tol_residual),
            ("tol_dt", self.tol_dt),
            ("dt_initial", self.dt_initial),
            ("dt_min", self.dt_min),
            ("dt_max", self.dt_max),
            ("error_tol_abs", self.error_tol_abs),
            ("error_tol_rel", self.error_tol_rel),
        ];
        for (name, v) in positive {
            if v.is_nan() || v <= 0.0 {
                return Err(SolveError::InvalidOptions(format!("{name} must be > 0")));
            }
        }
        // Newton clamps the factor to 1; the iterative solver may over-relax.
        if !(self.damping > 0.0 && self.damping < 2.0) {
            return Err(SolveError::InvalidOptions("damping must lie in (0, 2)".into()));
        }
        if !(self.dt_min <= self.dt_initial && self.dt_initial <= self.dt_max) {
            return Err(SolveError::InvalidOptions("need dt_min <= dt_initial <= dt_max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("singular Jacobian at node '{node}' (no path to a fixed temperature?)")]
    Singular { node: String },
    #[error("no convergence after {iterations} iterations, residual {residual:e} W")]
    Diverged {
        iterations: usize,
        residual: f64,
        /// Best state found, all nodes, K.
        best: Vec<f64>,
        /// Residual max-norm per iteration.
        history: Vec<f64>,
    },
    #[error("arithmetic node '{node}' did not converge (residual {residual:e} W)")]
    ArithmeticClosure { node: String, residual: f64 },
    #[error("step size underflow at t = {time} s (dt = {dt:e} s)")]
    StepUnderflow { time: f64, dt: f64, state: Vec<f64> },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

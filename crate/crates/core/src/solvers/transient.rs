//! Adaptive implicit integration of C(T) dT/dt = R(T, t) over the
//! diffusion nodes. Arithmetic nodes are closed algebraically at every
//! right-hand-side evaluation, so the integrator only ever sees an ODE.
//!
//! Both methods estimate the local error from the second divided difference
//! of dT/dt over the last three points (y''' ≈ 2 f[t0, t1, t2]). After the
//! start and after every load discontinuity the history is dropped and one
//! implicit Euler step is taken, which also damps the ringing Crank-Nicolson
//! would otherwise show on a stiff jump.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use super::steady::close_arithmetic_nodes;
use super::{Method, SolveError, SolveOptions};
use crate::model::NodeKind;
use crate::network::Network;

/// Extra time-dependent node power on top of the model's own loads, such as
/// orbital environment fluxes.
pub trait LoadSource: Sync {
    /// Adds power in W per node at time `t` to `out`.
    fn add_power(&self, t: f64, out: &mut [f64]);

    /// Times in `(t0, t1)` where the power jumps.
    fn breakpoints(&self, _t0: f64, _t1: f64) -> Vec<f64> {
        Vec::new()
    }

    /// Longest step that resolves the power variation starting at `t`, s.
    fn max_step(&self, _t: f64) -> f64 {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub jacobian_evaluations: usize,
    pub newton_iterations: usize,
    /// Time at which the steady-rate stop criterion was met.
    pub steady_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientResult {
    pub ids: Vec<String>,
    pub times: Vec<f64>,
    /// All nodes per output time, K.
    pub temperatures: Vec<Vec<f64>>,
    pub stats: StepStats,
    /// max |dT/dt| over the diffusion nodes at the last accepted step, K/s.
    pub final_rate: f64,
}

impl TransientResult {
    pub fn series(&self, node: usize) -> Vec<f64> {
        self.temperatures.iter().map(|row| row[node]).collect()
    }

    pub fn last(&self) -> &[f64] {
        self.temperatures.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Long-format CSV: `time_s,node_id,temperature_K`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("time_s,node_id,temperature_K\n");
        for (t, row) in self.times.iter().zip(&self.temperatures) {
            for (id, v) in self.ids.iter().zip(row) {
                writeln!(s, "{t:e},{id},{v:e}").unwrap();
            }
        }
        s
    }
}

struct Point {
    t: f64,
    y: DVector<f64>,
    f: DVector<f64>,
}

struct Integrator<'a> {
    net: &'a Network,
    extra: Option<&'a dyn LoadSource>,
    opts: &'a SolveOptions,
    diff: Vec<usize>,
    arith: Vec<usize>,
    /// Working full temperature vector; arithmetic entries warm-start the closure.
    work: Vec<f64>,
    stats: StepStats,
}

impl<'a> Integrator<'a> {
    fn loads(&self, t: f64) -> Vec<f64> {
        let mut q = self.net.loads_at(t);
        if let Some(x) = self.extra {
            x.add_power(t, &mut q);
        }
        q
    }

    /// dT/dt of the diffusion nodes and the closed full state.
    fn eval(&mut self, t: f64, y: &DVector<f64>) -> Result<(DVector<f64>, Vec<f64>), SolveError> {
        let loads = self.loads(t);
        let mut full = self.work.clone();
        for (k, &i) in self.diff.iter().enumerate() {
            full[i] = y[k];
        }
        close_arithmetic_nodes(self.net, &mut full, &loads, self.opts)?;
        for &i in &self.arith {
            self.work[i] = full[i];
        }
        let mut r = vec![0.0; self.net.len()];
        self.net.residual_into(&full, &loads, &mut r);
        let f = DVector::from_iterator(
            self.diff.len(),
            self.diff.iter().map(|&i| r[i] / self.net.capacity_at(i, full[i]).0),
        );
        Ok((f, full))
    }

    /// ∂f/∂y with the arithmetic nodes eliminated by a Schur complement.
    fn jacobian(&mut self, full: &[f64], f: &DVector<f64>) -> Result<DMatrix<f64>, SolveError> {
        self.stats.jacobian_evaluations += 1;
        let j = self.net.jacobian(full);
        let (d, a) = (&self.diff, &self.arith);
        let mut s = DMatrix::from_fn(d.len(), d.len(), |p, q| j[(d[p], d[q])]);
        if !a.is_empty() {
            let j_aa = DMatrix::from_fn(a.len(), a.len(), |p, q| j[(a[p], a[q])]);
            let j_ad = DMatrix::from_fn(a.len(), d.len(), |p, q| j[(a[p], d[q])]);
            let j_da = DMatrix::from_fn(d.len(), a.len(), |p, q| j[(d[p], a[q])]);
            let x = j_aa.lu().solve(&j_ad).ok_or_else(|| SolveError::Singular {
                node: self.net.ids[a[0]].clone(),
            })?;
            s -= j_da * x;
        }
        for (p, &i) in d.iter().enumerate() {
            let (c, dc) = self.net.capacity_at(i, full[i]);
            s.row_mut(p).scale_mut(1.0 / c);
            s[(p, p)] -= f[p] * dc / c;
        }
        Ok(s)
    }

    fn weight(&self, y: &DVector<f64>) -> DVector<f64> {
        y.map(|v| self.opts.error_tol_abs + self.opts.error_tol_rel * v.abs())
    }

    /// Solves y = c + γ h f(t1, y) by Newton. `None` signals a failed step.
    fn implicit(
        &mut self,
        t1: f64,
        h: f64,
        gamma: f64,
        c: &DVector<f64>,
        start: DVector<f64>,
    ) -> Result<Option<(DVector<f64>, DVector<f64>)>, SolveError> {
        let n = start.len();
        let mut y = start;
        let mut last_dy: Option<f64> = None;
        for _ in 0..12 {
            let (f, full) = match self.eval(t1, &y) {
                Ok(v) => v,
                Err(SolveError::ArithmeticClosure { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            if last_dy.is_some_and(|d| d <= 1e-3) {
                return Ok(Some((y, f)));
            }
            let g = &y - c - &f * (gamma * h);
            let jf = self.jacobian(&full, &f)?;
            let a = DMatrix::identity(n, n) - jf * (gamma * h);
            let Some(dy) = a.lu().solve(&(-g)) else {
                return Ok(None);
            };
            self.stats.newton_iterations += 1;
            let w = self.weight(&y);
            y += &dy;
            if y.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Ok(None);
            }
            last_dy = Some(dy.component_div(&w).amax());
        }
        Ok(None)
    }
}

fn hermite(a: &Point, b: &Point, t: f64) -> DVector<f64> {
    let h = b.t - a.t;
    let s = (t - a.t) / h;
    let (s2, s3) = (s * s, s * s * s);
    &a.y * (2.0 * s3 - 3.0 * s2 + 1.0)
        + &a.f * (h * (s3 - 2.0 * s2 + s))
        + &b.y * (3.0 * s2 - 2.0 * s3)
        + &b.f * (h * (s3 - s2))
}

/// Integrates from `t_start` to `t_end` with Crank-Nicolson or variable-step
/// BDF2 (`opts.method`; other methods select BDF2).
///
/// `initial` holds all node temperatures; boundary entries are replaced by
/// the fixed values. Results are reported at `output_times` by cubic Hermite
/// interpolation, or at every accepted step when `output_times` is empty.
pub fn solve_transient(
    net: &Network,
    initial: &[f64],
    t_start: f64,
    t_end: f64,
    output_times: &[f64],
    opts: &SolveOptions,
    extra: Option<&dyn LoadSource>,
) -> Result<TransientResult, SolveError> {
    opts.validate()?;
    if !(t_end >= t_start) {
        return Err(SolveError::InvalidOptions("t_end must not precede t_start".into()));
    }
    let cn = opts.method == Method::CrankNicolson;
    let mut it = Integrator {
        net,
        extra,
        opts,
        diff: net.indices_of(NodeKind::Diffusion),
        arith: net.indices_of(NodeKind::Arithmetic),
        work: net.with_boundaries(initial),
        stats: StepStats::default(),
    };
    let mut outputs: Vec<f64> = output_times
        .iter()
        .copied()
        .filter(|&t| t >= t_start && t <= t_end)
        .collect();
    outputs.sort_by(f64::total_cmp);
    outputs.dedup();
    let every_step = output_times.is_empty();

    let y0 = DVector::from_iterator(it.diff.len(), it.diff.iter().map(|&i| it.work[i]));
    let (f0, full0) = it.eval(t_start, &y0)?;
    let mut times = Vec::new();
    let mut temps = Vec::new();
    let mut next_out = 0;
    if every_step || outputs.first() == Some(&t_start) {
        times.push(t_start);
        temps.push(full0.clone());
        next_out = usize::from(!every_step);
    }
    let mut final_rate = f0.amax();
    if t_end == t_start || it.diff.is_empty() {
        for &t in &outputs[next_out..] {
            let (_, full) = it.eval(t, &y0)?;
            times.push(t);
            temps.push(full);
        }
        return Ok(TransientResult {
            ids: net.ids.clone(),
            times,
            temperatures: temps,
            stats: it.stats,
            final_rate,
        });
    }

    let mut breaks = net.breakpoints(t_start, t_end);
    if let Some(x) = extra {
        breaks.extend(x.breakpoints(t_start, t_end));
    }
    breaks.push(t_end);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut next_break = 0;

    let mut cur = Point {
        t: t_start,
        y: y0,
        f: f0,
    };
    let mut prev: Option<Point> = None;
    let mut h = opts.dt_initial.min(opts.dt_max);
    let span = t_end - t_start;
    let tiny = 1e-12 * span.max(1.0);

    while cur.t < t_end - tiny {
        while breaks[next_break] <= cur.t + tiny {
            next_break += 1;
        }
        let target = breaks[next_break];
        let mut step = h.min(extra.map_or(f64::INFINITY, |x| x.max_step(cur.t)));
        let mut hits = false;
        if cur.t + step >= target - tiny {
            step = target - cur.t;
            hits = true;
        } else if cur.t + 1.5 * step > target {
            step = 0.5 * (target - cur.t);
        }
        if step < opts.dt_min && !hits {
            return Err(SolveError::StepUnderflow {
                time: cur.t,
                dt: step,
                state: it.work.clone(),
            });
        }
        let t1 = cur.t + step;

        let (c, gamma, order) = match &prev {
            None => (cur.y.clone(), 1.0, 1),
            Some(p) if cn => {
                let _ = p;
                (&cur.y + &cur.f * (0.5 * step), 0.5, 2)
            }
            Some(p) => {
                let w = step / (cur.t - p.t);
                let den = 1.0 + 2.0 * w;
                let c = &cur.y * ((1.0 + w).powi(2) / den) - &p.y * (w * w / den);
                (c, (1.0 + w) / den, 2)
            }
        };
        let predicted = &cur.y + &cur.f * step;
        let start = if predicted.iter().zip(cur.y.iter()).all(|(p, y)| *p > 0.5 * y && *p < 2.0 * y) {
            predicted
        } else {
            cur.y.clone()
        };
        let Some((y1, f1)) = it.implicit(t1, step, gamma, &c, start)? else {
            it.stats.rejected += 1;
            h = 0.25 * step;
            if h < opts.dt_min {
                return Err(SolveError::StepUnderflow {
                    time: cur.t,
                    dt: h,
                    state: it.work.clone(),
                });
            }
            continue;
        };

        let lte: DVector<f64> = match &prev {
            None => (&f1 - &cur.f).abs() * (0.5 * step),
            Some(p) => {
                let hp = cur.t - p.t;
                let d2 = ((&f1 - &cur.f) / step - (&cur.f - &p.f) / hp) / (step + hp);
                let y3 = d2.abs() * 2.0;
                if cn {
                    y3 * (step.powi(3) / 12.0)
                } else {
                    y3 * (step * step * (step + hp).powi(2) / (2.0 * step + hp) / 6.0)
                }
            }
        };
        // Error per unit step: the local error may use a share step/horizon
        // of the tolerance, so accumulated error stays near error_tol and
        // scales linearly with it. The floor keeps the short steps forced by
        // fast load ramps from underflowing.
        let horizon = if opts.steady_rate.is_some() { t1 - t_start } else { span };
        let share = (step / horizon).clamp(1e-4, 1.0);
        let err = lte.component_div(&it.weight(&y1)).amax() / share;
        let factor = if err == 0.0 {
            2.0
        } else {
            (0.9 * err.powf(-1.0 / order as f64)).clamp(0.2, 2.0)
        };
        if err > 1.0 {
            it.stats.rejected += 1;
            h = step * factor;
            if h < opts.dt_min {
                return Err(SolveError::StepUnderflow {
                    time: cur.t,
                    dt: h,
                    state: it.work.clone(),
                });
            }
            continue;
        }

        it.stats.accepted += 1;
        let next = Point { t: t1, y: y1, f: f1 };
        final_rate = next.f.amax();
        let steady = opts.steady_rate.is_some_and(|r| final_rate < r);
        if every_step {
            let (_, full) = it.eval(t1, &next.y)?;
            times.push(t1);
            temps.push(full);
        } else {
            while next_out < outputs.len() && outputs[next_out] <= t1 + tiny {
                let t = outputs[next_out];
                let y = if (t - t1).abs() <= tiny { next.y.clone() } else { hermite(&cur, &next, t) };
                let (_, full) = it.eval(t, &y)?;
                times.push(t);
                temps.push(full);
                next_out += 1;
            }
            if steady && times.last().is_none_or(|&t| t < t1) {
                let (_, full) = it.eval(t1, &next.y)?;
                times.push(t1);
                temps.push(full);
            }
        }
        // grow from the natural step, not one shortened to land on a break
        h = (if hits { h.max(step) } else { step } * factor).min(opts.dt_max);
        let restart = hits && target < t_end;
        if restart {
            // dT/dt just after the jump
            let t_after = t1 + tiny;
            let (f_after, _) = it.eval(t_after, &next.y)?;
            cur = Point { t: t1, y: next.y, f: f_after };
            prev = None;
        } else {
            prev = Some(std::mem::replace(&mut cur, next));
        }
        if steady {
            it.stats.steady_at = Some(t1);
            break;
        }
    }

    Ok(TransientResult {
        ids: net.ids.clone(),
        times,
        temperatures: temps,
        stats: it.stats,
        final_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Capacity, Conductor, HeatLoad, LoadKind, Model, RadCouplings, RadEntry, ThermalNode};
    use crate::solvers::solve_steady_newton;

    fn rc_model() -> Network {
        let m = Model {
            constants: Default::default(),
            materials: vec![],
            nodes: vec![
                ThermalNode::boundary("spacecraft", 100.0),
                ThermalNode::diffusion("n", Capacity::Fixed(100.0), 110.0),
            ],
            faces: vec![],
            conductors: vec![Conductor::constant("c", "n", "spacecraft", 1.0)],
            loads: vec![],
            orbit: None,
            rad_couplings: None,
        };
        Network::from_model(&m).unwrap()
    }

    fn radiator(with_arith: bool) -> Network {
        let mut nodes = vec![
            ThermalNode::boundary("space", 3.0),
            ThermalNode::diffusion("n", Capacity::Fixed(50.0), 300.0),
        ];
        let mut entries = vec![RadEntry {
            from: "n".into(),
            to: "space".into(),
            gr: 0.02,
            stderr: None,
        }];
        let mut conductors = vec![];
        if with_arith {
            nodes.push(ThermalNode::arithmetic("shell"));
            entries.push(RadEntry {
                from: "shell".into(),
                to: "space".into(),
                gr: 0.05,
                stderr: None,
            });
            conductors.push(Conductor::constant("c", "n", "shell", 0.05));
        }
        let m = Model {
            constants: Default::default(),
            materials: vec![],
            nodes,
            faces: vec![],
            conductors,
            loads: vec![],
            orbit: None,
            rad_couplings: Some(RadCouplings {
                seed: None,
                rays: Default::default(),
                entries,
            }),
        };
        Network::from_model(&m).unwrap()
    }

    #[test]
    fn first_order_decay() {
        let net = rc_model();
        for method in [Method::CrankNicolson, Method::Bdf] {
            let opts = SolveOptions {
                error_tol_abs: 1e-6,
                ..SolveOptions::with_method(method)
            };
            let r = solve_transient(&net, &[100.0, 110.0], 0.0, 100.0, &[100.0], &opts, None).unwrap();
            let offset = r.temperatures[0][1] - 100.0;
            let exact = 10.0 * (-1f64).exp();
            assert!(((offset - exact) / exact).abs() < 1e-3, "{method:?}: {offset}");
        }
    }

    #[test]
    fn zero_span_returns_initial() {
        let net = rc_model();
        let r = solve_transient(&net, &[100.0, 110.0], 5.0, 5.0, &[5.0], &SolveOptions::default(), None).unwrap();
        assert_eq!(r.times, vec![5.0]);
        assert_eq!(r.temperatures[0], vec![100.0, 110.0]);
    }

    #[test]
    fn radiative_cooldown_self_convergence() {
        let net = radiator(false);
        let outs = [600.0, 3600.0, 7200.0];
        let reference = |method| {
            let opts = SolveOptions {
                error_tol_abs: 1e-8,
                error_tol_rel: 1e-12,
                dt_initial: 1e-3,
                ..SolveOptions::with_method(method)
            };
            solve_transient(&net, &[3.0, 300.0], 0.0, 7200.0, &outs, &opts, None).unwrap()
        };
        let fine = reference(Method::Bdf);
        for method in [Method::CrankNicolson, Method::Bdf] {
            let r = solve_transient(&net, &[3.0, 300.0], 0.0, 7200.0, &outs, &SolveOptions::with_method(method), None).unwrap();
            for (a, b) in r.temperatures.iter().zip(&fine.temperatures) {
                assert!((a[1] - b[1]).abs() < 1e-3, "{method:?}: {} vs {}", a[1], b[1]);
            }
        }
    }

    fn deviation(net: &Network, opts: &SolveOptions, reference: &TransientResult) -> f64 {
        let r = solve_transient(net, &[3.0, 300.0], 0.0, 3600.0, &[3600.0], opts, None).unwrap();
        (r.temperatures[0][1] - reference.temperatures[0][1]).abs()
    }

    #[test]
    fn error_scales_with_tolerance() {
        let net = radiator(false);
        let fine = SolveOptions {
            error_tol_abs: 1e-8,
            error_tol_rel: 1e-12,
            dt_initial: 1e-2,
            ..SolveOptions::with_method(Method::Bdf)
        };
        let reference = solve_transient(&net, &[3.0, 300.0], 0.0, 3600.0, &[3600.0], &fine, None).unwrap();
        for method in [Method::CrankNicolson, Method::Bdf] {
            let at = |tol: f64| {
                let o = SolveOptions {
                    error_tol_abs: tol,
                    error_tol_rel: tol * 1e-2,
                    ..SolveOptions::with_method(method)
                };
                deviation(&net, &o, &reference)
            };
            let (coarse, half) = (at(1e-4), at(5e-5));
            assert!(coarse <= 1e-4 * 10.0);
            // tolerance-proportional control targets exactly 2
            assert!(coarse / half >= 1.9, "{method:?}: {coarse} / {half}");
        }
    }

    #[test]
    fn crank_nicolson_fixed_step_is_second_order() {
        let net = radiator(false);
        let fine = SolveOptions {
            error_tol_abs: 1e-8,
            error_tol_rel: 1e-12,
            dt_initial: 1e-2,
            ..SolveOptions::with_method(Method::Bdf)
        };
        let reference = solve_transient(&net, &[3.0, 300.0], 0.0, 3600.0, &[3600.0], &fine, None).unwrap();
        let fixed = |dt: f64| SolveOptions {
            dt_initial: dt,
            dt_min: dt,
            dt_max: dt,
            error_tol_abs: 1e6,
            ..SolveOptions::with_method(Method::CrankNicolson)
        };
        let (a, b) = (deviation(&net, &fixed(40.0), &reference), deviation(&net, &fixed(20.0), &reference));
        let ratio = a / b;
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn reaches_steady_state() {
        let mut net = radiator(true);
        net.loads.push((1, HeatLoad::constant("q", "n", 2.0)));
        let steady = solve_steady_newton(&net, None, &net.steady_loads(), &SolveOptions::default()).unwrap();
        for method in [Method::CrankNicolson, Method::Bdf] {
            let opts = SolveOptions {
                steady_rate: Some(1e-8),
                ..SolveOptions::with_method(method)
            };
            let init = [3.0, 300.0, f64::NAN];
            let r = solve_transient(&net, &init, 0.0, 1e9, &[], &opts, None).unwrap();
            assert!(r.stats.steady_at.is_some());
            let last = r.last();
            for i in 1..3 {
                assert!((last[i] - steady.temperatures[i]).abs() < 0.01, "{method:?} node {i}");
            }
        }
    }

    #[test]
    fn cooldown_is_monotone() {
        let net = radiator(true);
        for method in [Method::CrankNicolson, Method::Bdf] {
            let r = solve_transient(&net, &[3.0, 300.0, f64::NAN], 0.0, 2e5, &[], &SolveOptions::with_method(method), None)
                .unwrap();
            for node in 1..3 {
                let s = r.series(node);
                assert!(s.windows(2).all(|w| w[1] <= w[0]), "{method:?} node {node}");
            }
        }
    }

    #[test]
    fn step_load_is_a_breakpoint() {
        let mut net = rc_model();
        let mut load = HeatLoad::constant("q", "n", 0.0);
        load.kind = LoadKind::Timeseries;
        load.power = None;
        load.samples = Some(vec![(0.0, 0.0), (50.0, 0.0), (50.000001, 5.0)]);
        net.loads.push((1, load));
        let opts = SolveOptions {
            error_tol_abs: 1e-7,
            ..SolveOptions::with_method(Method::CrankNicolson)
        };
        let r = solve_transient(&net, &[100.0, 100.0], 0.0, 150.0, &[150.0], &opts, None).unwrap();
        // 5 W into C = 100 J/K through GL = 1 W/K from t = 50 s
        let exact = 100.0 + 5.0 * (1.0 - (-1f64).exp());
        assert!((r.temperatures[0][1] - exact).abs() < 1e-3, "{}", r.temperatures[0][1]);
    }

    #[test]
    fn csv_is_long_format() {
        let net = rc_model();
        let r = solve_transient(&net, &[100.0, 110.0], 0.0, 10.0, &[0.0, 10.0], &SolveOptions::default(), None).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("time_s,node_id,temperature_K\n"));
        assert_eq!(csv.lines().count(), 1 + 2 * 2);
    }
}

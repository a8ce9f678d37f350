use nalgebra::{DMatrix, DVector};

use super::{Method, SolveError, SolveOptions};
use crate::model::NodeKind;
use crate::network::{conductive_flow, radiative_flow, Network};

/// Uniform starting temperature when no boundary coupling can inform a guess.
const FALLBACK_GUESS: f64 = 150.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SteadySolution {
    /// All nodes, K.
    pub temperatures: Vec<f64>,
    pub iterations: usize,
    /// Final residual max-norm over the unknowns, W.
    pub residual: f64,
    pub history: Vec<f64>,
}

/// Uniform guess from the boundary temperatures, weighted by how strongly
/// each boundary couples into the network and blended harmonically. Falls
/// back to 150 K when no boundary has a coupling.
pub fn initial_guess(net: &Network) -> f64 {
    let mut weight = vec![0.0; net.len()];
    for link in &net.links {
        let (ta, tb) = (net.initial[link.a], net.initial[link.b]);
        for (end, t) in [(link.a, ta), (link.b, tb)] {
            if net.kinds[end] == NodeKind::Boundary {
                weight[end] += net.link_conductance(link, t, t).0;
            }
        }
    }
    for rl in &net.rad_links {
        for end in [rl.a, rl.b] {
            if net.kinds[end] == NodeKind::Boundary {
                weight[end] += 4.0 * net.sigma * rl.gr * net.initial[end].powi(3);
            }
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for i in net.indices_of(NodeKind::Boundary) {
        num += weight[i];
        den += weight[i] / net.initial[i];
    }
    if num > 0.0 && den > 0.0 {
        num / den
    } else {
        FALLBACK_GUESS
    }
}

/// Full temperature vector from an optional guess: boundaries pinned,
/// missing or non-finite entries replaced by `fill`.
fn start_vector(net: &Network, guess: Option<&[f64]>, fill: f64) -> Vec<f64> {
    (0..net.len())
        .map(|i| match net.kinds[i] {
            NodeKind::Boundary => net.initial[i],
            _ => match guess.map(|g| g[i]) {
                Some(v) if v.is_finite() && v > 0.0 => v,
                _ => fill,
            },
        })
        .collect()
}

pub(crate) struct NewtonFailure {
    pub error: SolveError,
}

/// Damped Newton on the residual rows `rows`, moving only those nodes.
/// Returns `(iterations, final residual max-norm, history)`.
pub(crate) fn newton_on(
    net: &Network,
    temps: &mut [f64],
    loads: &[f64],
    rows: &[usize],
    opts: &SolveOptions,
) -> Result<(usize, f64, Vec<f64>), NewtonFailure> {
    let m = rows.len();
    let n = net.len();
    let mut full = vec![0.0; n];
    let eval = |t: &[f64], full: &mut [f64]| -> DVector<f64> {
        net.residual_into(t, loads, full);
        DVector::from_iterator(m, rows.iter().map(|&i| full[i]))
    };
    let mut r = eval(temps, &mut full);
    let mut history = vec![r.amax()];
    if m == 0 {
        return Ok((0, 0.0, history));
    }
    let mut best = (r.norm(), temps.to_vec());
    let singular = |node: usize| NewtonFailure {
        error: SolveError::Singular {
            node: net.ids[node].clone(),
        },
    };
    for iter in 1..=opts.max_iter {
        let jac = net.jacobian(temps);
        let mut a = DMatrix::from_fn(m, m, |i, j| jac[(rows[i], rows[j])]);
        let mut rhs = -r.clone();
        for i in 0..m {
            let s = a.row(i).amax();
            if s == 0.0 || !s.is_finite() {
                return Err(singular(rows[i]));
            }
            a.row_mut(i).scale_mut(1.0 / s);
            rhs[i] /= s;
        }
        let lu = a.lu();
        let dx = match lu.solve(&rhs) {
            Some(dx) if dx.iter().all(|v| v.is_finite()) => dx,
            _ => {
                let u = lu.u();
                let k = (0..m)
                    .min_by(|&p, &q| u[(p, p)].abs().total_cmp(&u[(q, q)].abs()))
                    .unwrap_or(0);
                return Err(singular(rows[k]));
            }
        };
        // keep every temperature above a tenth of its current value
        let mut alpha: f64 = 1.0;
        for (k, &i) in rows.iter().enumerate() {
            if dx[k] < 0.0 {
                alpha = alpha.min(0.9 * temps[i] / -dx[k]);
            }
        }
        alpha *= opts.damping.min(1.0);
        let f0 = r.norm();
        let base: Vec<f64> = rows.iter().map(|&i| temps[i]).collect();
        let trial_r = loop {
            for (k, &i) in rows.iter().enumerate() {
                temps[i] = base[k] + alpha * dx[k];
            }
            let rt = eval(temps, &mut full);
            if rt.norm() <= (1.0 - 1e-4 * alpha) * f0 || alpha < 1e-10 {
                break rt;
            }
            alpha *= 0.5;
        };
        r = trial_r;
        let step = alpha * dx.amax();
        let res = r.amax();
        history.push(res);
        if r.norm() < best.0 {
            best = (r.norm(), temps.to_vec());
        }
        if res <= opts.tol_residual && step <= opts.tol_dt {
            return Ok((iter, res, history));
        }
    }
    let residual = *history.last().unwrap();
    Err(NewtonFailure {
        error: SolveError::Diverged {
            iterations: opts.max_iter,
            residual,
            best: best.1,
            history,
        },
    })
}

/// Newton's method with a dense direct solve over all diffusion and
/// arithmetic nodes. Without a guess, starts from [`initial_guess`] and
/// retries from a uniform 150 K if that fails.
pub fn solve_steady_newton(
    net: &Network,
    guess: Option<&[f64]>,
    loads: &[f64],
    opts: &SolveOptions,
) -> Result<SteadySolution, SolveError> {
    opts.validate()?;
    let rows = net.unknowns();
    let run = |start: Vec<f64>| -> Result<SteadySolution, SolveError> {
        let mut t = start;
        let (iterations, residual, history) = newton_on(net, &mut t, loads, &rows, opts).map_err(|f| f.error)?;
        Ok(SteadySolution {
            temperatures: t,
            iterations,
            residual,
            history,
        })
    };
    match guess {
        Some(g) => run(start_vector(net, Some(g), initial_guess(net))),
        None => {
            let blend = initial_guess(net);
            match run(start_vector(net, None, blend)) {
                Err(SolveError::Diverged { .. }) if blend != FALLBACK_GUESS => {
                    run(start_vector(net, None, FALLBACK_GUESS))
                }
                other => other,
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Edge {
    Link(usize),
    Rad(usize),
}

/// Net power into node `i` and its derivative with respect to T_i.
fn local_balance(net: &Network, adj: &[Edge], i: usize, temps: &[f64], load: f64) -> (f64, f64) {
    let (mut r, mut d) = (load, 0.0);
    for e in adj {
        match *e {
            Edge::Link(k) => {
                let link = &net.links[k];
                let (ta, tb) = (temps[link.a], temps[link.b]);
                let (g, dg) = net.link_conductance(link, ta, tb);
                let q = conductive_flow(g, ta, tb);
                if link.a == i {
                    r -= q;
                    d -= g + 0.5 * dg * (ta - tb);
                } else {
                    r += q;
                    d -= g - 0.5 * dg * (ta - tb);
                }
            }
            Edge::Rad(k) => {
                let rl = &net.rad_links[k];
                let q = radiative_flow(rl.gr, temps[rl.a], temps[rl.b], net.sigma);
                r += if rl.a == i { -q } else { q };
                d -= 4.0 * net.sigma * rl.gr * temps[i].powi(3);
            }
        }
    }
    (r, d)
}

/// Nonlinear Gauss-Seidel: each sweep solves every unknown's own balance
/// by scalar Newton with the other temperatures frozen, relaxed by
/// `opts.damping`.
pub fn solve_steady_iterative(
    net: &Network,
    guess: Option<&[f64]>,
    loads: &[f64],
    opts: &SolveOptions,
) -> Result<SteadySolution, SolveError> {
    opts.validate()?;
    let rows = net.unknowns();
    let mut adj: Vec<Vec<Edge>> = vec![Vec::new(); net.len()];
    for (k, l) in net.links.iter().enumerate() {
        adj[l.a].push(Edge::Link(k));
        adj[l.b].push(Edge::Link(k));
    }
    for (k, l) in net.rad_links.iter().enumerate() {
        adj[l.a].push(Edge::Rad(k));
        adj[l.b].push(Edge::Rad(k));
    }
    let mut t = start_vector(net, guess, initial_guess(net));
    let mut full = vec![0.0; net.len()];
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, t.clone());
    for sweep in 1..=opts.max_sweeps {
        let mut change: f64 = 0.0;
        for &i in &rows {
            let old = t[i];
            for _ in 0..50 {
                let (r, d) = local_balance(net, &adj[i], i, &t, loads[i]);
                if d == 0.0 {
                    return Err(SolveError::Singular { node: net.ids[i].clone() });
                }
                let step = (-r / d).max(-0.9 * t[i]);
                t[i] += step;
                if step.abs() <= 1e-3 * opts.tol_dt * (1.0 + t[i].abs()) {
                    break;
                }
            }
            t[i] = old + opts.damping * (t[i] - old);
            change = change.max((t[i] - old).abs());
        }
        net.residual_into(&t, loads, &mut full);
        let res = rows.iter().fold(0.0f64, |m, &i| m.max(full[i].abs()));
        history.push(res);
        if res < best.0 {
            best = (res, t.clone());
        }
        if !res.is_finite() {
            break;
        }
        if res <= opts.tol_residual && change <= opts.tol_dt {
            return Ok(SteadySolution {
                temperatures: t,
                iterations: sweep,
                residual: res,
                history,
            });
        }
    }
    Err(SolveError::Diverged {
        iterations: history.len(),
        residual: history.last().copied().unwrap_or(f64::NAN),
        best: best.1,
        history,
    })
}

/// Dispatches on `opts.method`; transient methods fall back to Newton.
pub fn solve_steady(net: &Network, guess: Option<&[f64]>, loads: &[f64], opts: &SolveOptions) -> Result<SteadySolution, SolveError> {
    match opts.method {
        Method::Iterative => solve_steady_iterative(net, guess, loads, opts),
        _ => solve_steady_newton(net, guess, loads, opts),
    }
}

/// Solves the balance of every arithmetic node with all other temperatures
/// held at their values in `temps`. Arithmetic entries of `temps` serve as
/// the starting point (non-finite entries are replaced) and receive the
/// result.
pub fn close_arithmetic_nodes(net: &Network, temps: &mut [f64], loads: &[f64], opts: &SolveOptions) -> Result<usize, SolveError> {
    let rows = net.indices_of(NodeKind::Arithmetic);
    if rows.is_empty() {
        return Ok(0);
    }
    let mut fill = None;
    for &i in &rows {
        if !(temps[i].is_finite() && temps[i] > 0.0) {
            temps[i] = *fill.get_or_insert_with(|| initial_guess(net));
        }
    }
    match newton_on(net, temps, loads, &rows, opts) {
        Ok((iters, _, _)) => Ok(iters),
        Err(f) => match f.error {
            SolveError::Diverged { .. } => {
                let mut full = vec![0.0; net.len()];
                net.residual_into(temps, loads, &mut full);
                let worst = rows
                    .iter()
                    .copied()
                    .max_by(|&a, &b| full[a].abs().total_cmp(&full[b].abs()))
                    .unwrap();
                Err(SolveError::ArithmeticClosure {
                    node: net.ids[worst].clone(),
                    residual: full[worst],
                })
            }
            e => Err(e),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Capacity, Conductor, HeatLoad, MaterialTable, Model, RadCouplings, RadEntry, ThermalNode, STEFAN_BOLTZMANN};

    fn rad(from: &str, to: &str, gr: f64) -> RadEntry {
        RadEntry {
            from: from.into(),
            to: to.into(),
            gr,
            stderr: None,
        }
    }

    fn model(nodes: Vec<ThermalNode>, conductors: Vec<Conductor>, entries: Vec<RadEntry>, loads: Vec<HeatLoad>) -> Network {
        let m = Model {
            constants: Default::default(),
            materials: vec![MaterialTable::constant("unit", 1.0, 1.0)],
            nodes,
            faces: vec![],
            conductors,
            loads,
            orbit: None,
            rad_couplings: Some(RadCouplings {
                seed: None,
                rays: Default::default(),
                entries,
            }),
        };
        m.validate().unwrap();
        Network::from_model(&m).unwrap()
    }

    fn quartic() -> Network {
        model(
            vec![ThermalNode::boundary("space", 3.0), ThermalNode::diffusion("n", Capacity::Fixed(1.0), 300.0)],
            vec![],
            vec![rad("n", "space", 0.01)],
            vec![HeatLoad::constant("q", "n", 1.0)],
        )
    }

    fn chain() -> Network {
        let mesh = crate::model::subdivide_chain("s", 1.0, 1e-4, "unit", 1.0, 5, "hot", "cold", 200.0).unwrap();
        let mut nodes = vec![ThermalNode::boundary("hot", 293.15), ThermalNode::boundary("cold", 30.0)];
        nodes.extend(mesh.nodes.clone());
        model(nodes, mesh.conductors, vec![], vec![])
    }

    fn symmetric_pair() -> Network {
        model(
            vec![
                ThermalNode::boundary("space", 3.0),
                ThermalNode::diffusion("a", Capacity::Fixed(1.0), 100.0),
                ThermalNode::diffusion("b", Capacity::Fixed(1.0), 200.0),
            ],
            vec![],
            vec![rad("a", "b", 0.5), rad("a", "space", 0.02), rad("b", "space", 0.02)],
            vec![HeatLoad::constant("qa", "a", 2.0), HeatLoad::constant("qb", "b", 2.0)],
        )
    }

    fn expected_quartic() -> f64 {
        (1.0 / (STEFAN_BOLTZMANN * 0.01) + 3f64.powi(4)).powf(0.25)
    }

    #[test]
    fn newton_quartic_root() {
        let net = quartic();
        let s = solve_steady_newton(&net, None, &net.steady_loads(), &SolveOptions::default()).unwrap();
        assert!((s.temperatures[1] - expected_quartic()).abs() < 1e-6);
        assert!((s.temperatures[1] - 204.93).abs() < 5e-3);
    }

    #[test]
    fn newton_linear_chain_profile() {
        let net = chain();
        let s = solve_steady_newton(&net, None, &net.steady_loads(), &SolveOptions::default()).unwrap();
        // node k sits at (k - 1/2)/5 of the bar
        for k in 1..=5 {
            let x = (k as f64 - 0.5) / 5.0;
            let exact = 293.15 + (30.0 - 293.15) * x;
            assert!((s.temperatures[k + 1] - exact).abs() < 1e-9, "{k}");
        }
        assert!(s.iterations <= 2);
    }

    #[test]
    fn symmetric_pair_equal() {
        let net = symmetric_pair();
        let s = solve_steady_newton(&net, None, &net.steady_loads(), &SolveOptions::default()).unwrap();
        assert!((s.temperatures[1] - s.temperatures[2]).abs() < 1e-9);
    }

    #[test]
    fn iterative_agrees_with_newton() {
        for net in [quartic(), chain(), symmetric_pair()] {
            let loads = net.steady_loads();
            let a = solve_steady_newton(&net, None, &loads, &SolveOptions::default()).unwrap();
            let b = solve_steady_iterative(&net, None, &loads, &SolveOptions::default()).unwrap();
            for (x, y) in a.temperatures.iter().zip(&b.temperatures) {
                assert!((x - y).abs() < 1e-3, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn isolated_node_is_singular() {
        let net = model(
            vec![ThermalNode::boundary("space", 3.0), ThermalNode::diffusion("lone", Capacity::Fixed(1.0), 10.0)],
            vec![],
            vec![],
            vec![],
        );
        let err = solve_steady_newton(&net, None, &net.steady_loads(), &SolveOptions::default()).unwrap_err();
        assert_eq!(err, SolveError::Singular { node: "lone".into() });
    }

    #[test]
    fn divergence_reports_best_state() {
        let net = quartic();
        let opts = SolveOptions {
            max_iter: 1,
            ..SolveOptions::default()
        };
        match solve_steady_newton(&net, Some(&[3.0, 1000.0]), &net.steady_loads(), &opts) {
            Err(SolveError::Diverged { best, history, .. }) => {
                assert_eq!(best.len(), 2);
                assert_eq!(history.len(), 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn arithmetic_closure_examples() {
        let opts = SolveOptions::default();
        let bath = model(
            vec![
                ThermalNode::boundary("w1", 300.0),
                ThermalNode::boundary("w2", 300.0),
                ThermalNode::arithmetic("x"),
            ],
            vec![],
            vec![rad("x", "w1", 1.0), rad("x", "w2", 1.0)],
            vec![],
        );
        let mut t = vec![300.0, 300.0, f64::NAN];
        close_arithmetic_nodes(&bath, &mut t, &[0.0; 3], &opts).unwrap();
        assert!((t[2] - 300.0).abs() < 1e-9);

        let hot_cold = model(
            vec![ThermalNode::boundary("hot", 400.0), ThermalNode::boundary("cold", 1e-3), ThermalNode::arithmetic("x")],
            vec![],
            vec![rad("x", "hot", 1.0), rad("x", "cold", 1.0)],
            vec![],
        );
        let mut t = vec![400.0, 0.0, 250.0];
        close_arithmetic_nodes(&hot_cold, &mut t, &[0.0; 3], &opts).unwrap();
        assert!((t[2] - (0.5 * 400f64.powi(4)).powf(0.25)).abs() < 1e-6);
        assert!((t[2] - 336.36).abs() < 5e-3);

        let conductive = model(
            vec![ThermalNode::boundary("a", 100.0), ThermalNode::boundary("b", 200.0), ThermalNode::arithmetic("x")],
            vec![Conductor::constant("c1", "x", "a", 1.0), Conductor::constant("c2", "x", "b", 1.0)],
            vec![],
            vec![],
        );
        let mut t = vec![100.0, 200.0, f64::NAN];
        close_arithmetic_nodes(&conductive, &mut t, &[0.0; 3], &opts).unwrap();
        assert!((t[2] - 150.0).abs() < 1e-9);
    }

    #[test]
    fn guess_blends_boundaries() {
        let net = chain();
        let g = initial_guess(&net);
        // equal weights: harmonic mean of 293.15 and 30
        let hm = 2.0 / (1.0 / 293.15 + 1.0 / 30.0);
        assert!((g - hm).abs() < 1e-9);
        let lone = model(
            vec![ThermalNode::boundary("space", 3.0), ThermalNode::diffusion("n", Capacity::Fixed(1.0), 10.0)],
            vec![],
            vec![],
            vec![],
        );
        assert_eq!(initial_guess(&lone), FALLBACK_GUESS);
    }
}

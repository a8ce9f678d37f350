use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use thermnet::linear::{frequency_response, linearize, log_frequency_grid, Input};
use thermnet::model::{Model, NodeKind};
use thermnet::network::{heat_flow_report, Network};
use thermnet::orbit::{orbital_period, quasi_stationary_run, CycleSummary, Environment, OrbitError, OrbitSpec};
use thermnet::radiative::{compute_exchange_factors, compute_raw_exchange_factors, symmetrize, RayBudget, Scene};
use thermnet::solvers::{solve_steady, solve_transient, Method, SolveOptions, SteadySolution};

use crate::manifest::{self, RunManifest};
use crate::{Cli, Command, Failure, OrbitArgs, Scenario, SteadyMethod, TransientMethod};

/// A model file as read from disk.
pub struct Loaded {
    pub path: PathBuf,
    pub text: String,
    pub model: Model,
}

pub fn load_model(path: Option<&Path>) -> Result<Loaded, Failure> {
    let path = path.ok_or_else(|| Failure::usage(anyhow!("--model is required")))?;
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read model file {}", path.display()))
        .map_err(Failure::Usage)?;
    let model = Model::from_json(&text)
        .with_context(|| format!("invalid model file {}", path.display()))
        .map_err(Failure::Usage)?;
    Ok(Loaded {
        path: path.to_path_buf(),
        text,
        model,
    })
}

/// What a finished command produced.
pub struct Product {
    files: Vec<(String, String)>,
    /// Headline node temperatures (steady, final or at the orbit reference).
    pub temperatures: Option<Vec<(String, f64)>>,
    /// Failure discovered after partial results were assembled.
    failure: Option<Failure>,
}

impl Product {
    fn new() -> Product {
        Product {
            files: Vec::new(),
            temperatures: None,
            failure: None,
        }
    }

    fn file(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Sweep(args) => crate::sweep::run(cli, args),
        cmd => {
            let loaded = load_model(cli.model.as_deref())?;
            execute(&loaded, cmd, &cli.out, cli.seed, cli.threads).map(|_| ())
        }
    }
}

/// Runs one command and writes its outputs plus a manifest into `out`.
pub fn execute(
    loaded: &Loaded,
    cmd: &Command,
    out: &Path,
    seed: u64,
    threads: Option<usize>,
) -> Result<Option<Vec<(String, f64)>>, Failure> {
    let started_at = manifest::unix_now();
    let clock = Instant::now();
    let model = &loaded.model;
    let mut product = match cmd {
        Command::Radk(a) => radk(model, seed, a.rays, a.rays_high)?,
        Command::SolveSteady(a) => steady(model, seed, a.method, a.tol)?,
        Command::SolveTransient(a) => transient(model, seed, a)?,
        Command::Transfer(a) => transfer(model, seed, a)?,
        Command::Heatflow(_) => heatflow(model, seed)?,
        Command::Orbit(a) => orbit(model, seed, a)?,
        Command::Sweep(_) => return Err(Failure::usage(anyhow!("sweeps cannot be nested"))),
    };

    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create {}", out.display()))
        .map_err(Failure::Usage)?;
    for (name, contents) in &product.files {
        std::fs::write(out.join(name), contents)
            .with_context(|| format!("cannot write {name}"))
            .map_err(Failure::Usage)?;
    }
    let options = serde_json::to_value(cmd).expect("options serialize");
    let m = RunManifest {
        command: options["command"].as_str().unwrap_or_default(),
        model_file: loaded.path.display().to_string(),
        model_sha256: manifest::sha256_hex(loaded.text.as_bytes()),
        seed,
        threads,
        options: options.clone(),
        version: env!("CARGO_PKG_VERSION"),
        started_at,
        wall_clock_s: clock.elapsed().as_secs_f64(),
        outputs: product.files.iter().map(|(n, _)| n.clone()).collect(),
    };
    manifest::write(out, &m).context("cannot write manifest").map_err(Failure::Usage)?;
    match product.failure.take() {
        Some(f) => Err(f),
        None => Ok(product.temperatures),
    }
}

/// Network with inline couplings, or couplings traced now when the model
/// has active faces but no stored block.
fn network(model: &Model, seed: u64) -> Result<Network, Failure> {
    let net = if model.rad_couplings.is_none() && model.faces.iter().any(|f| f.active) {
        let scene = Scene::from_model(model).map_err(Failure::usage)?;
        let block = compute_exchange_factors(&scene, &RayBudget::default(), seed).to_block();
        Network::with_couplings(model, Some(&block))
    } else {
        Network::from_model(model)
    };
    net.map_err(Failure::usage)
}

fn named(net: &Network, temps: &[f64]) -> Vec<(String, f64)> {
    net.ids.iter().cloned().zip(temps.iter().copied()).collect()
}

fn temperature_csv(net: &Network, temps: &[f64]) -> String {
    let mut s = String::from("node_id,temperature_K\n");
    for (id, t) in net.ids.iter().zip(temps) {
        writeln!(s, "{id},{t}").unwrap();
    }
    s
}

fn radk(model: &Model, seed: u64, rays: Option<u64>, rays_high: Option<u64>) -> Result<Product, Failure> {
    let scene = Scene::from_model(model).map_err(Failure::usage)?;
    let mut budget = RayBudget::default();
    if let Some(r) = rays {
        budget.default = r;
        budget.high_accuracy = budget.high_accuracy.max(r);
    }
    if let Some(r) = rays_high {
        budget.high_accuracy = r;
    }
    let raw = compute_raw_exchange_factors(&scene, &budget, seed);
    if raw.capped_rays > 0 {
        eprintln!("warning: {} rays hit the bounce cap", raw.capped_rays);
    }
    let block = symmetrize(&raw).to_block();
    let mut p = Product::new();
    p.file("rad_couplings.json", serde_json::to_string_pretty(&block).expect("block serializes") + "\n");
    let mut csv = String::from("entry,gr_m2,stderr_m2,rays\n");
    for (from, to, gr, se, n) in raw.diagnostics() {
        writeln!(csv, "{from}->{to},{gr:e},{se:e},{n}").unwrap();
    }
    p.file("radk_diagnostics.csv", csv);
    Ok(p)
}

fn steady_solution(net: &Network, method: SteadyMethod, tol: f64) -> Result<SteadySolution, Failure> {
    let mut opts = SolveOptions::with_method(match method {
        SteadyMethod::Newton => Method::Newton,
        SteadyMethod::Iterative => Method::Iterative,
    });
    opts.tol_residual = tol;
    solve_steady(net, None, &net.steady_loads(), &opts).map_err(Failure::solver)
}

fn steady(model: &Model, seed: u64, method: SteadyMethod, tol: f64) -> Result<Product, Failure> {
    let net = network(model, seed)?;
    let sol = steady_solution(&net, method, tol)?;
    eprintln!("converged in {} iterations, residual {:e} W", sol.iterations, sol.residual);
    let mut p = Product::new();
    p.file("steady.csv", temperature_csv(&net, &sol.temperatures));
    p.temperatures = Some(named(&net, &sol.temperatures));
    Ok(p)
}

fn transient_method(m: TransientMethod) -> Method {
    match m {
        TransientMethod::Cn => Method::CrankNicolson,
        TransientMethod::Bdf => Method::Bdf,
    }
}

fn transient(model: &Model, seed: u64, a: &crate::TransientArgs) -> Result<Product, Failure> {
    let net = network(model, seed)?;
    let mut opts = SolveOptions::with_method(transient_method(a.method));
    opts.dt_initial = a.dt0;
    opts.dt_max = a.dt_max.unwrap_or(f64::INFINITY);
    opts.error_tol_abs = a.atol;
    opts.error_tol_rel = a.rtol;
    opts.steady_rate = a.steady_rate;
    opts.validate().map_err(Failure::usage)?;
    if !(a.t_end >= a.t_start) {
        return Err(Failure::usage(anyhow!("--t-end must not precede --t-start")));
    }
    let grid = match a.output_every {
        Some(dt) if dt > 0.0 => output_grid(a.t_start, a.t_end, dt),
        Some(_) => return Err(Failure::usage(anyhow!("--output-every must be > 0"))),
        None => Vec::new(),
    };
    let r = solve_transient(&net, &net.initial, a.t_start, a.t_end, &grid, &opts, None).map_err(Failure::solver)?;
    eprintln!(
        "{} steps accepted, {} rejected{}",
        r.stats.accepted,
        r.stats.rejected,
        r.stats.steady_at.map(|t| format!(", steady at {t} s")).unwrap_or_default()
    );
    let mut p = Product::new();
    p.file("transient.csv", r.to_csv());
    p.temperatures = Some(named(&net, r.last()));
    Ok(p)
}

fn output_grid(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    let n = ((t1 - t0) / dt).floor() as usize;
    let mut g: Vec<f64> = (0..=n).map(|k| t0 + k as f64 * dt).collect();
    if g.last().is_some_and(|&t| t < t1) {
        g.push(t1);
    }
    g
}

fn transfer(model: &Model, seed: u64, a: &crate::TransferArgs) -> Result<Product, Failure> {
    let input: Input = a.input.parse().map_err(Failure::usage)?;
    if !(a.fmin > 0.0 && a.fmax >= a.fmin && a.fmax.is_finite()) || a.points == 0 {
        return Err(Failure::usage(anyhow!("need 0 < fmin <= fmax and points >= 1")));
    }
    let net = network(model, seed)?;
    match net.index_of(input.node()) {
        None => return Err(Failure::usage(anyhow!("unknown node '{}'", input.node()))),
        Some(i) => {
            let boundary = net.kinds[i] == NodeKind::Boundary;
            if boundary != matches!(input, Input::Boundary(_)) {
                return Err(Failure::usage(anyhow!("input {input} does not match the node kind")));
            }
        }
    }
    let sol = steady_solution(&net, SteadyMethod::Newton, 1e-9)?;
    let sys = linearize(&net, &sol.temperatures, &net.steady_loads(), 1e-6).map_err(Failure::solver)?;
    let spectrum = frequency_response(&sys, &input, &log_frequency_grid(a.fmin, a.fmax, a.points)).map_err(Failure::solver)?;
    let mut p = Product::new();
    p.file("transfer.csv", spectrum.to_csv());
    p.file("steady.csv", temperature_csv(&net, &sol.temperatures));
    p.temperatures = Some(named(&net, &sol.temperatures));
    Ok(p)
}

fn heatflow(model: &Model, seed: u64) -> Result<Product, Failure> {
    let net = network(model, seed)?;
    let sol = steady_solution(&net, SteadyMethod::Newton, 1e-9)?;
    let report = heat_flow_report(&net, &sol.temperatures, &net.steady_loads(), None).map_err(Failure::solver)?;
    let mut groups = String::from("from_group,to_group,watts\n");
    for a in &report.groups {
        for b in &report.groups {
            let q = report.group_flow(a, b).map_err(Failure::solver)?;
            if a != b && q > 0.0 {
                writeln!(groups, "{a},{b},{q:e}").unwrap();
            }
        }
    }
    let mut p = Product::new();
    p.file("heatflow.csv", report.to_csv());
    p.file("heatflow.dot", report.to_dot());
    p.file("group_flows.csv", groups);
    p.file("steady.csv", temperature_csv(&net, &sol.temperatures));
    p.temperatures = Some(named(&net, &sol.temperatures));
    Ok(p)
}

fn summary_csv(ids: &[String], cycles: &[CycleSummary]) -> String {
    let mut s = String::from("cycle,node_id,T_at_reference_K,max_T_K,min_T_K\n");
    for c in cycles {
        for (i, id) in ids.iter().enumerate() {
            writeln!(s, "{},{id},{:e},{:e},{:e}", c.cycle, c.at_reference[i], c.max[i], c.min[i]).unwrap();
        }
    }
    s
}

fn orbit(model: &Model, seed: u64, a: &OrbitArgs) -> Result<Product, Failure> {
    let net = network(model, seed)?;
    let mut opts = SolveOptions::with_method(transient_method(a.method));
    let mut p = Product::new();
    match a.scenario {
        Scenario::L2 => {
            // far from any planet: no environmental input, only the
            // internal dissipation and the boundary temperatures
            let mut initial = net.initial.clone();
            for (i, t) in initial.iter_mut().enumerate() {
                if net.kinds[i] != NodeKind::Boundary {
                    *t = a.start_temperature;
                }
            }
            opts.steady_rate = Some(a.steady_rate);
            let t_end = a.max_days * 86400.0;
            let grid = output_grid(0.0, t_end, 3600.0);
            let r = solve_transient(&net, &initial, 0.0, t_end, &grid, &opts, None).map_err(Failure::solver)?;
            let final_t = r.last().to_vec();
            let mut s = String::from("node_id,final_K,settled_after_s\n");
            for (i, id) in net.ids.iter().enumerate() {
                // last sample outside the band, plus one
                let series = r.series(i);
                let k = series.iter().rposition(|t| (t - final_t[i]).abs() > a.settle_band).map_or(0, |k| k + 1);
                writeln!(s, "{id},{},{}", final_t[i], r.times[k.min(r.times.len() - 1)]).unwrap();
            }
            p.file("transient.csv", r.to_csv());
            p.file("l2_summary.csv", s);
            p.temperatures = Some(named(&net, &final_t));
            if r.stats.steady_at.is_none() {
                p.failure = Some(Failure::solver(anyhow!(
                    "no steady state within {} days (max |dT/dt| = {:e} K/s)",
                    a.max_days,
                    r.final_rate
                )));
            }
        }
        Scenario::Heo => {
            let spec = OrbitSpec::from_model(model).unwrap_or_else(|| {
                let c = &model.constants;
                OrbitSpec {
                    ir_temperature: c.planet_ir_temperature,
                    albedo: c.albedo,
                    solar_flux: c.solar_flux,
                    sigma: c.sigma,
                    ..OrbitSpec::highly_elliptical()
                }
            });
            let env = Environment::new(model, spec)
                .and_then(|e| e.bind(&net))
                .map_err(Failure::usage)?;
            let period = orbital_period(&env.spec);
            let t_ref = env.spec.next_periapsis(0.0);
            let info = |cycles: usize, converged: bool, change: f64| {
                serde_json::json!({
                    "period_s": period,
                    "reference_time_s": t_ref,
                    "cycles": cycles,
                    "converged": converged,
                    "last_change_K": change,
                })
            };
            match quasi_stationary_run(&net, &env, &net.initial, a.cycles_max, a.tol, a.samples, &opts) {
                Ok(run) => {
                    let change = match run.cycles.as_slice() {
                        [.., a, b] => a.at_reference.iter().zip(&b.at_reference).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
                        _ => f64::NAN,
                    };
                    p.file("transient.csv", run.last.to_csv());
                    p.file("orbit_summary.csv", run.summary_csv());
                    p.file("orbit.json", info(run.cycles.len(), true, change).to_string() + "\n");
                    let reference = &run.cycles.last().expect("at least one cycle").at_reference;
                    p.temperatures = Some(named(&net, reference));
                }
                Err(OrbitError::NotConverged { cycles, last_change }) => {
                    p.file("orbit_summary.csv", summary_csv(&net.ids, &cycles));
                    p.file("orbit.json", info(cycles.len(), false, last_change).to_string() + "\n");
                    p.failure = Some(Failure::solver(anyhow!(
                        "not periodic after {} cycles (last change {last_change:e} K)",
                        cycles.len()
                    )));
                }
                Err(OrbitError::Invalid(m)) => return Err(Failure::usage(anyhow!(m))),
                Err(e) => return Err(Failure::solver(e)),
            }
        }
    }
    Ok(p)
}

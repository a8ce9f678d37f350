//! Two-body orbits, eclipse geometry, environmental fluxes on external faces
//! and the periodic (quasi-stationary) orbital driver.
//!
//! Inertial frame: planet-centred, x towards the vernal equinox, z along the
//! planet's pole. Distances in km, time in s.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::{any_perpendicular, Vec3};
use crate::model::{Attitude, Model, NodeKind, OrbitElements, SunModel};
use crate::network::{EnvPower, Network};
use crate::solvers::{solve_transient, LoadSource, SolveError, SolveOptions, TransientResult};

const YEAR: f64 = 365.25 * 86400.0;
/// Azimuthal patches per curved face for flux integration.
const PATCH_SEGMENTS: usize = 24;
/// Largest true-anomaly advance per integration step, rad.
const ANOMALY_STEP: f64 = 5.0 * PI / 180.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("invalid orbit: {0}")]
    Invalid(String),
    #[error("no periodic state after {} cycles (last change {last_change:.3e} K)", cycles.len())]
    NotConverged { cycles: Vec<CycleSummary>, last_change: f64 },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSpec {
    /// km³/s²
    pub mu: f64,
    /// km
    pub radius: f64,
    /// Planet infrared temperature (unit emissivity), K.
    pub ir_temperature: f64,
    pub albedo: f64,
    pub elements: OrbitElements,
    /// Solar flux at the planet, W/m².
    pub solar_flux: f64,
    pub sun: SunModel,
    pub attitude: Attitude,
    pub sigma: f64,
}

impl OrbitSpec {
    /// Orbit block of a model with the model's environment constants.
    pub fn from_model(m: &Model) -> Option<OrbitSpec> {
        let o = m.orbit.as_ref()?;
        Some(OrbitSpec {
            mu: o.body.mu,
            radius: o.body.radius,
            ir_temperature: m.constants.planet_ir_temperature,
            albedo: m.constants.albedo,
            elements: o.elements.clone(),
            solar_flux: m.constants.solar_flux,
            sun: o.sun.clone(),
            attitude: o.attitude,
            sigma: m.constants.sigma,
        })
    }

    /// Earth orbit with the given elements and default environment.
    pub fn earth(elements: OrbitElements) -> OrbitSpec {
        let c = crate::model::Constants::default();
        OrbitSpec {
            mu: 398600.44,
            radius: 6371.0,
            ir_temperature: c.planet_ir_temperature,
            albedo: c.albedo,
            elements,
            solar_flux: c.solar_flux,
            sun: SunModel::default(),
            attitude: Attitude::SunOriented,
            sigma: c.sigma,
        }
    }

    /// Highly elliptical science orbit: 600 000 km by 600 km at 63.4°.
    pub fn highly_elliptical() -> OrbitSpec {
        OrbitSpec::earth(OrbitElements {
            apogee_altitude: 600_000.0,
            perigee_altitude: 600.0,
            inclination: 63.4,
            argument_of_periapsis: 0.0,
            raan: 0.0,
            true_anomaly_epoch: 0.0,
        })
    }

    pub fn validate(&self) -> Result<(), OrbitError> {
        let e = &self.elements;
        let bad = |m: &str| Err(OrbitError::Invalid(m.into()));
        if !(self.mu > 0.0 && self.radius > 0.0) {
            return bad("mu and radius must be > 0");
        }
        if !(e.perigee_altitude >= 0.0 && e.apogee_altitude >= e.perigee_altitude) {
            return bad("need apogee >= perigee >= 0");
        }
        if !(self.solar_flux > 0.0) {
            return bad("solar flux must be > 0");
        }
        if !(0.0..=1.0).contains(&self.albedo) {
            return bad("albedo must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn semi_major_axis(&self) -> f64 {
        self.radius + 0.5 * (self.elements.apogee_altitude + self.elements.perigee_altitude)
    }

    pub fn eccentricity(&self) -> f64 {
        let ra = self.radius + self.elements.apogee_altitude;
        let rp = self.radius + self.elements.perigee_altitude;
        (ra - rp) / (ra + rp)
    }

    /// rad/s
    pub fn mean_motion(&self) -> f64 {
        (self.mu / self.semi_major_axis().powi(3)).sqrt()
    }

    fn mean_anomaly_at_epoch(&self) -> f64 {
        let e = self.eccentricity();
        let nu = self.elements.true_anomaly_epoch.to_radians();
        let ecc = 2.0 * (((1.0 - e) / (1.0 + e)).sqrt() * (0.5 * nu).tan()).atan();
        (ecc - e * ecc.sin()).rem_euclid(TAU)
    }

    /// First periapsis passage at or after `t`.
    pub fn next_periapsis(&self, t: f64) -> f64 {
        let n = self.mean_motion();
        let m = (self.mean_anomaly_at_epoch() + n * t).rem_euclid(TAU);
        if m == 0.0 {
            t
        } else {
            t + (TAU - m) / n
        }
    }

    /// Time after periapsis at which true anomaly `nu` (rad, in [0, 2π]) is
    /// reached.
    pub fn time_since_periapsis(&self, nu: f64) -> f64 {
        if nu >= TAU {
            return TAU / self.mean_motion();
        }
        let e = self.eccentricity();
        let half = 0.5 * nu;
        let ecc = (2.0 * ((1.0 - e).sqrt() * half.sin()).atan2((1.0 + e).sqrt() * half.cos())).rem_euclid(TAU);
        (ecc - e * ecc.sin()) / self.mean_motion()
    }

    /// Eccentric anomaly at `t`.
    fn eccentric_anomaly(&self, t: f64) -> f64 {
        let e = self.eccentricity();
        let m = (self.mean_anomaly_at_epoch() + self.mean_motion() * t).rem_euclid(TAU);
        let mut ecc = if e > 0.8 { PI } else { m };
        for _ in 0..100 {
            let d = (ecc - e * ecc.sin() - m) / (1.0 - e * ecc.cos());
            ecc -= d;
            if d.abs() < 1e-12 {
                break;
            }
        }
        ecc
    }

    pub fn true_anomaly(&self, t: f64) -> f64 {
        let e = self.eccentricity();
        let ecc = self.eccentric_anomaly(t);
        2.0 * (((1.0 + e) / (1.0 - e)).sqrt() * (0.5 * ecc).tan()).atan()
    }

    /// Perifocal to inertial rotation columns (towards periapsis, 90° ahead).
    fn perifocal_axes(&self) -> (Vec3, Vec3) {
        let (o, i, w) = (
            self.elements.raan.to_radians(),
            self.elements.inclination.to_radians(),
            self.elements.argument_of_periapsis.to_radians(),
        );
        let (co, so, ci, si, cw, sw) = (o.cos(), o.sin(), i.cos(), i.sin(), w.cos(), w.sin());
        let p = Vec3::new(co * cw - so * sw * ci, so * cw + co * sw * ci, sw * si);
        let q = Vec3::new(-co * sw - so * cw * ci, -so * sw + co * cw * ci, cw * si);
        (p, q)
    }

    /// Unit vector from the planet towards the sun.
    pub fn sun_direction(&self, t: f64) -> Vec3 {
        match &self.sun {
            SunModel::Fixed { direction } => Vec3::from(*direction).normalize(),
            SunModel::CircularEcliptic {
                longitude_at_epoch,
                obliquity,
            } => {
                let l = longitude_at_epoch.to_radians() + TAU * t / YEAR;
                let eps = obliquity.to_radians();
                Vec3::new(l.cos(), l.sin() * eps.cos(), l.sin() * eps.sin())
            }
        }
    }

    /// Time to advance `ANOMALY_STEP` of true anomaly from `t`, s.
    fn anomaly_step_time(&self, t: f64) -> f64 {
        let a = self.semi_major_axis();
        let e = self.eccentricity();
        let r = kepler_propagate(self, t).norm();
        let h = (self.mu * a * (1.0 - e * e)).sqrt();
        ANOMALY_STEP * r * r / h
    }
}

pub fn orbital_period(spec: &OrbitSpec) -> f64 {
    TAU * (spec.semi_major_axis().powi(3) / spec.mu).sqrt()
}

/// Inertial position in km at time `t` after epoch.
pub fn kepler_propagate(spec: &OrbitSpec, t: f64) -> Vec3 {
    let a = spec.semi_major_axis();
    let e = spec.eccentricity();
    let ecc = spec.eccentric_anomaly(t);
    let (p, q) = spec.perifocal_axes();
    p * (a * (ecc.cos() - e)) + q * (a * (1.0 - e * e).sqrt() * ecc.sin())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eclipse {
    Sunlit,
    Umbra,
}

/// Cylindrical shadow behind the planet.
pub fn eclipse_state(position: &Vec3, sun_direction: &Vec3, planet_radius: f64) -> Eclipse {
    let s = sun_direction.normalize();
    let along = position.dot(&s);
    if along < 0.0 && (position - s * along).norm() < planet_radius {
        Eclipse::Umbra
    } else {
        Eclipse::Sunlit
    }
}

/// View factor from a planar element at distance `r` from the planet centre
/// to the planet sphere, `tilt` being the angle between the element normal
/// and the nadir direction.
pub fn planet_view_factor(r: f64, planet_radius: f64, tilt: f64) -> f64 {
    let h = (r / planet_radius).max(1.0);
    let half = (1.0 / h).asin();
    let tilt = tilt.abs().min(PI);
    if tilt <= 0.5 * PI - half {
        return tilt.cos() / (h * h);
    }
    if tilt >= 0.5 * PI + half {
        return 0.0;
    }
    // planet horizon cuts the element's hemisphere
    let x = (h * h - 1.0).sqrt();
    let (s, c) = tilt.sin_cos();
    let f = 0.5 - ((x / (h * s)).min(1.0)).asin() / PI
        + (c * (-x * c / s).clamp(-1.0, 1.0).acos() - x * (1.0 - h * h * c * c).max(0.0).sqrt()) / (PI * h * h);
    f.max(0.0)
}

/// Body axes in the inertial frame for the given attitude.
fn body_axes(attitude: Attitude, position: &Vec3, sun: &Vec3) -> [Vec3; 3] {
    let ez = match attitude {
        Attitude::FixedInertial => return [Vec3::x(), Vec3::y(), Vec3::z()],
        Attitude::SunOriented => -sun,
        Attitude::Nadir => position.normalize(),
    };
    let ex = any_perpendicular(&ez);
    [ex, ez.cross(&ex), ez]
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceEnv {
    pub face: String,
    pub node: String,
    pub solar: f64,
    pub albedo: f64,
    pub planetary_ir: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvLoadsAtTime {
    pub faces: Vec<FaceEnv>,
    pub eclipse: Eclipse,
    /// km
    pub radius: f64,
    /// Angle between the planet-to-spacecraft and planet-to-sun directions, rad.
    pub sun_angle: f64,
}

#[derive(Debug, Clone)]
struct ExternalFace {
    id: String,
    node: String,
    alpha: f64,
    epsilon: f64,
    /// Body-frame (area, outward normal) patches.
    patches: Vec<(f64, Vec3)>,
}

/// Environmental fluxes on a model's external faces along an orbit.
#[derive(Debug, Clone)]
pub struct Environment {
    pub spec: OrbitSpec,
    faces: Vec<ExternalFace>,
    /// Network index per face, when bound to a network.
    nodes: Vec<usize>,
    n_nodes: usize,
}

impl Environment {
    pub fn new(model: &Model, spec: OrbitSpec) -> Result<Environment, OrbitError> {
        spec.validate()?;
        let mut faces = Vec::new();
        for f in model.faces.iter().filter(|f| f.external) {
            let placed = f.placed().map_err(|e| OrbitError::Invalid(format!("face {}: {e}", f.id)))?;
            let sign = f.side.sign();
            faces.push(ExternalFace {
                id: f.id.clone(),
                node: f.node.clone(),
                alpha: f.alpha,
                epsilon: f.epsilon,
                patches: placed
                    .normal_patches(PATCH_SEGMENTS)
                    .into_iter()
                    .map(|(a, n)| (a, n * sign))
                    .collect(),
            });
        }
        Ok(Environment {
            spec,
            faces,
            nodes: Vec::new(),
            n_nodes: 0,
        })
    }

    /// Resolves face nodes against `net` so the environment can act as a
    /// load source. Faces on boundary nodes are dropped.
    pub fn bind(mut self, net: &Network) -> Result<Environment, OrbitError> {
        self.nodes.clear();
        let mut kept = Vec::new();
        for f in std::mem::take(&mut self.faces) {
            let i = net
                .index_of(&f.node)
                .ok_or_else(|| OrbitError::Invalid(format!("face {} references unknown node {}", f.id, f.node)))?;
            if net.kinds[i] != NodeKind::Boundary {
                self.nodes.push(i);
                kept.push(f);
            }
        }
        self.faces = kept;
        self.n_nodes = net.len();
        Ok(self)
    }

    pub fn has_faces(&self) -> bool {
        !self.faces.is_empty()
    }

    pub fn loads_at(&self, t: f64) -> EnvLoadsAtTime {
        let spec = &self.spec;
        let pos = kepler_propagate(spec, t);
        let sun = spec.sun_direction(t);
        let r = pos.norm();
        let up = pos / r;
        let eclipse = eclipse_state(&pos, &sun, spec.radius);
        let lit = if eclipse == Eclipse::Sunlit { 1.0 } else { 0.0 };
        let axes = body_axes(spec.attitude, &pos, &sun);
        let ir_flux = spec.sigma * spec.ir_temperature.powi(4);
        let albedo_flux = spec.solar_flux * spec.albedo * up.dot(&sun).max(0.0);
        let faces = self
            .faces
            .iter()
            .map(|f| {
                let (mut solar, mut albedo, mut ir) = (0.0, 0.0, 0.0);
                for (area, nb) in &f.patches {
                    let n = axes[0] * nb.x + axes[1] * nb.y + axes[2] * nb.z;
                    let fp = planet_view_factor(r, spec.radius, n.dot(&(-up)).clamp(-1.0, 1.0).acos());
                    solar += spec.solar_flux * f.alpha * area * n.dot(&sun).max(0.0) * lit;
                    albedo += albedo_flux * f.alpha * area * fp;
                    ir += ir_flux * f.epsilon * area * fp;
                }
                FaceEnv {
                    face: f.id.clone(),
                    node: f.node.clone(),
                    solar,
                    albedo,
                    planetary_ir: ir,
                }
            })
            .collect();
        EnvLoadsAtTime {
            faces,
            eclipse,
            radius: r,
            sun_angle: up.dot(&sun).clamp(-1.0, 1.0).acos(),
        }
    }

    /// Per-node solar and planetary (albedo plus infrared) power; needs [`Environment::bind`].
    pub fn node_power(&self, t: f64) -> EnvPower {
        let mut p = EnvPower {
            solar: vec![0.0; self.n_nodes],
            planetary: vec![0.0; self.n_nodes],
        };
        for (f, &i) in self.loads_at(t).faces.iter().zip(&self.nodes) {
            p.solar[i] += f.solar;
            p.planetary[i] += f.albedo + f.planetary_ir;
        }
        p
    }

    /// Eclipse entry and exit times in `(t0, t1)`.
    pub fn eclipse_transitions(&self, t0: f64, t1: f64) -> Vec<f64> {
        let state = |t: f64| eclipse_state(&kepler_propagate(&self.spec, t), &self.spec.sun_direction(t), self.spec.radius);
        let mut out = Vec::new();
        let mut a = t0;
        let mut sa = state(a);
        while a < t1 {
            // an umbra pass lasts at least the time to sweep a few degrees
            let b = (a + 0.25 * self.spec.anomaly_step_time(a)).min(t1);
            let sb = state(b);
            if sb != sa {
                let (mut lo, mut hi) = (a, b);
                while hi - lo > 1e-6 * (1.0 + hi.abs() * 1e-9) {
                    let mid = 0.5 * (lo + hi);
                    if state(mid) == sa {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                if hi > t0 && hi < t1 {
                    out.push(hi);
                }
            }
            a = b;
            sa = sb;
        }
        out
    }
}

impl LoadSource for Environment {
    fn add_power(&self, t: f64, out: &mut [f64]) {
        if self.faces.is_empty() {
            return;
        }
        for (f, &i) in self.loads_at(t).faces.iter().zip(&self.nodes) {
            out[i] += f.solar + f.albedo + f.planetary_ir;
        }
    }

    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        if self.faces.is_empty() {
            return Vec::new();
        }
        self.eclipse_transitions(t0, t1)
    }

    fn max_step(&self, t: f64) -> f64 {
        if self.faces.is_empty() {
            f64::INFINITY
        } else {
            self.spec.anomaly_step_time(t)
        }
    }
}

/// Per-node statistics of one orbit.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleSummary {
    pub cycle: usize,
    /// At the reference position closing the cycle.
    pub at_reference: Vec<f64>,
    pub max: Vec<f64>,
    pub min: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicRun {
    pub cycles: Vec<CycleSummary>,
    /// The converged cycle, from one reference passage to the next.
    pub last: TransientResult,
    pub period: f64,
    /// Time of the reference (periapsis) passage opening the last cycle.
    pub reference_time: f64,
}

impl PeriodicRun {
    /// `cycle,node_id,T_at_reference_K,max_T_K,min_T_K`
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("cycle,node_id,T_at_reference_K,max_T_K,min_T_K\n");
        for c in &self.cycles {
            for (i, id) in self.last.ids.iter().enumerate() {
                writeln!(s, "{},{id},{:e},{:e},{:e}", c.cycle, c.at_reference[i], c.max[i], c.min[i]).unwrap();
            }
        }
        s
    }
}

/// Integrates whole orbits, starting at the first periapsis passage, until
/// every node temperature at periapsis changes by less than `tol` K between
/// consecutive cycles.
///
/// Each cycle is sampled at `samples_per_orbit` equal steps of true anomaly,
/// which crowds samples around periapsis, or at every accepted step when it
/// is zero.
pub fn quasi_stationary_run(
    net: &Network,
    env: &Environment,
    initial: &[f64],
    cycles_max: usize,
    tol: f64,
    samples_per_orbit: usize,
    opts: &SolveOptions,
) -> Result<PeriodicRun, OrbitError> {
    if !(tol > 0.0) {
        return Err(OrbitError::Invalid("tol must be > 0".into()));
    }
    let period = orbital_period(&env.spec);
    let t_ref = env.spec.next_periapsis(0.0);
    let mut state = net.with_boundaries(initial);
    if t_ref > 0.0 {
        let r = solve_transient(net, &state, 0.0, t_ref, &[t_ref], opts, Some(env))?;
        state = r.last().to_vec();
    }
    let mut cycles = Vec::new();
    let mut last_change = f64::INFINITY;
    for k in 0..cycles_max {
        let t0 = t_ref + k as f64 * period;
        let grid: Vec<f64> = match samples_per_orbit {
            0 => Vec::new(),
            n => (0..=n)
                .map(|j| t0 + env.spec.time_since_periapsis(TAU * j as f64 / n as f64).min(period))
                .collect(),
        };
        let r = solve_transient(net, &state, t0, t0 + period, &grid, opts, Some(env))?;
        let end = r.last().to_vec();
        let mut max = end.clone();
        let mut min = end.clone();
        for row in &r.temperatures {
            for i in 0..row.len() {
                max[i] = max[i].max(row[i]);
                min[i] = min[i].min(row[i]);
            }
        }
        last_change = net
            .unknowns()
            .into_iter()
            .map(|i| (end[i] - state[i]).abs())
            .fold(0.0, f64::max);
        cycles.push(CycleSummary {
            cycle: k + 1,
            at_reference: end.clone(),
            max,
            min,
        });
        state = end;
        if last_change < tol {
            return Ok(PeriodicRun {
                cycles,
                last: r,
                period,
                reference_time: t0,
            });
        }
    }
    Err(OrbitError::NotConverged { cycles, last_change })
}

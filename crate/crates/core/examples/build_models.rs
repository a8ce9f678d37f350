//! Regenerates the shipped example models under `models/`.
//!
//!     cargo run --release -p thermnet --example build_models [out_dir]
//!
//! The instrument model's radiative couplings are computed here with the
//! default seed and ray budget and stored inline, together with a few
//! couplings the surface model does not represent (strut lateral radiation,
//! internal MLI exchange).

use std::f64::consts::PI;
use std::path::PathBuf;

use thermnet::geometry::{Pose, Primitive, Side};
use thermnet::model::{
    subdivide_chain, Attitude, Capacity, CentralBody, Conductor, HeatLoad, MaterialCapacity, MaterialTable, Model,
    OrbitConfig, OrbitElements, RadCouplings, RadEntry, SunModel, SurfaceFace, ThermalNode, SPACE,
};
use thermnet::orbit::{orbital_period, OrbitSpec};
use thermnet::radiative::{compute_exchange_factors, RayBudget, Scene, DEFAULT_SEED};

const ROOM: f64 = 293.15;

fn empty(nodes: Vec<ThermalNode>) -> Model {
    Model {
        constants: Default::default(),
        materials: vec![],
        nodes,
        faces: vec![],
        conductors: vec![],
        loads: vec![],
        orbit: None,
        rad_couplings: None,
    }
}

fn entry(from: &str, to: &str, gr: f64) -> RadEntry {
    RadEntry {
        from: from.into(),
        to: to.into(),
        gr,
        stderr: None,
    }
}

fn couplings(entries: Vec<RadEntry>) -> Option<RadCouplings> {
    Some(RadCouplings {
        seed: None,
        rays: Default::default(),
        entries,
    })
}

fn two_node() -> Model {
    let mut m = empty(vec![
        ThermalNode::boundary("space", 3.0),
        ThermalNode::diffusion("plate", Capacity::Fixed(50.0), ROOM),
    ]);
    m.loads.push(HeatLoad::constant("heater", "plate", 1.0));
    m.rad_couplings = couplings(vec![entry("plate", "space", 0.01)]);
    m
}

fn single_capacitor() -> Model {
    let mut m = empty(vec![
        ThermalNode::boundary("spacecraft", 100.0),
        ThermalNode::diffusion("mass", Capacity::Fixed(100.0), 110.0),
    ]);
    m.conductors.push(Conductor::constant("link", "mass", "spacecraft", 1.0));
    m
}

fn linear_chain() -> Model {
    let mut nodes = vec![ThermalNode::boundary("hot", 300.0), ThermalNode::boundary("cold", 100.0)];
    let mut conductors = vec![];
    let mut prev = "hot".to_string();
    for k in 1..=5 {
        let id = format!("n{k}");
        nodes.push(ThermalNode::diffusion(&id, Capacity::Fixed(10.0), 200.0));
        conductors.push(Conductor::constant(&format!("c{k}"), &prev, &id, 2.0));
        prev = id;
    }
    conductors.push(Conductor::constant("c6", &prev, "cold", 2.0));
    let mut m = empty(nodes);
    m.conductors = conductors;
    m
}

fn black(id: &str, node: &str, primitive: Primitive, pose: Pose, side: Side) -> SurfaceFace {
    SurfaceFace::new(id, node, primitive, pose, side, 1.0, 1.0)
}

fn coaxial_discs() -> Model {
    let disc = Primitive::Disc { radius: 0.5 };
    let mut m = empty(vec![
        ThermalNode::boundary("space", 3.0),
        ThermalNode::diffusion("lower", Capacity::Fixed(100.0), 300.0),
        ThermalNode::diffusion("upper", Capacity::Fixed(100.0), 300.0),
    ]);
    m.faces = vec![
        black("lower_face", "lower", disc.clone(), Pose::default(), Side::Front),
        black("upper_face", "upper", disc, Pose::at([0.0, 0.0, 1.0]), Side::Back),
    ];
    m.loads.push(HeatLoad::constant("heater", "lower", 10.0));
    m
}

/// Unit cube of inward-facing black squares, one node per wall.
fn black_cube() -> Model {
    let sq = Primitive::Rectangle { width: 1.0, height: 1.0 };
    let walls: [(&str, [f64; 3], [f64; 3]); 6] = [
        ("bottom", [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]),
        ("top", [0.5, 0.5, 1.0], [0.0, 0.0, -1.0]),
        ("west", [0.0, 0.5, 0.5], [1.0, 0.0, 0.0]),
        ("east", [1.0, 0.5, 0.5], [-1.0, 0.0, 0.0]),
        ("south", [0.5, 0.0, 0.5], [0.0, 1.0, 0.0]),
        ("north", [0.5, 1.0, 0.5], [0.0, -1.0, 0.0]),
    ];
    let mut nodes = vec![ThermalNode::boundary("space", 3.0)];
    let mut faces = vec![];
    for (name, origin, axis) in walls {
        if name == "bottom" {
            nodes.push(ThermalNode::boundary(name, 300.0));
        } else {
            nodes.push(ThermalNode::diffusion(name, Capacity::Fixed(200.0), 300.0));
        }
        faces.push(black(&format!("{name}_in"), name, sq.clone(), Pose::with_axis(origin, axis), Side::Front));
    }
    let mut m = empty(nodes);
    m.faces = faces;
    m.loads.push(HeatLoad::constant("heater", "top", 5.0));
    m
}

fn orbit_toy() -> Model {
    let elements = OrbitElements {
        apogee_altitude: 400.0,
        perigee_altitude: 400.0,
        inclination: 51.6,
        argument_of_periapsis: 0.0,
        raan: 0.0,
        true_anomaly_epoch: 0.0,
    };
    let period = orbital_period(&OrbitSpec::earth(elements.clone()));
    let mut m = empty(vec![
        ThermalNode::boundary("spacecraft", 100.0),
        ThermalNode::diffusion("box", Capacity::Fixed(2000.0), 100.0),
    ]);
    m.conductors.push(Conductor::constant("mount", "box", "spacecraft", 1.0));
    m.loads.push(HeatLoad::sinusoid("orbital_heating", "box", 2.0, 1.0, 1.0 / period));
    m.orbit = Some(OrbitConfig {
        body: CentralBody::default(),
        elements,
        sun: SunModel::default(),
        attitude: Attitude::SunOriented,
    });
    m
}

fn gfrp() -> MaterialTable {
    MaterialTable {
        name: "gfrp".into(),
        conductivity: vec![(4.0, 0.06), (10.0, 0.1), (20.0, 0.14), (50.0, 0.2), (100.0, 0.3), (200.0, 0.45), (300.0, 0.6)],
        specific_heat: vec![(4.0, 1.0), (10.0, 7.0), (20.0, 30.0), (50.0, 120.0), (100.0, 300.0), (200.0, 650.0), (300.0, 1000.0)],
    }
}

fn aluminium() -> MaterialTable {
    MaterialTable {
        name: "aluminium".into(),
        conductivity: vec![(4.0, 150.0), (10.0, 370.0), (20.0, 680.0), (50.0, 520.0), (100.0, 300.0), (200.0, 237.0), (300.0, 237.0)],
        specific_heat: vec![(4.0, 0.26), (10.0, 1.4), (20.0, 8.9), (50.0, 142.0), (100.0, 481.0), (200.0, 797.0), (300.0, 902.0)],
    }
}

fn zerodur() -> MaterialTable {
    MaterialTable {
        name: "zerodur".into(),
        conductivity: vec![(4.0, 0.06), (10.0, 0.1), (20.0, 0.16), (50.0, 0.35), (100.0, 0.7), (200.0, 1.2), (300.0, 1.46)],
        specific_heat: vec![(4.0, 0.2), (10.0, 2.5), (20.0, 15.0), (50.0, 120.0), (100.0, 300.0), (200.0, 600.0), (300.0, 800.0)],
    }
}

fn steel() -> MaterialTable {
    MaterialTable {
        name: "steel".into(),
        conductivity: vec![(4.0, 0.3), (10.0, 0.8), (20.0, 2.0), (50.0, 5.5), (100.0, 9.0), (200.0, 13.0), (300.0, 15.0)],
        specific_heat: vec![(4.0, 2.0), (10.0, 5.0), (20.0, 12.0), (50.0, 100.0), (100.0, 250.0), (200.0, 400.0), (300.0, 480.0)],
    }
}

fn quartz() -> MaterialTable {
    MaterialTable {
        name: "quartz".into(),
        conductivity: vec![(4.0, 0.1), (10.0, 0.12), (20.0, 0.15), (50.0, 0.4), (100.0, 0.7), (200.0, 1.1), (300.0, 1.4)],
        specific_heat: vec![(4.0, 0.05), (10.0, 0.8), (20.0, 8.0), (50.0, 80.0), (100.0, 250.0), (200.0, 550.0), (300.0, 740.0)],
    }
}

/// Alternative bench material, selectable with a sweep over
/// `nodes[bench].capacity.material`.
fn silicon_carbide() -> MaterialTable {
    MaterialTable {
        name: "sic".into(),
        conductivity: vec![(4.0, 2.0), (10.0, 20.0), (20.0, 100.0), (50.0, 400.0), (100.0, 450.0), (200.0, 250.0), (300.0, 180.0)],
        specific_heat: vec![(4.0, 0.002), (10.0, 0.03), (20.0, 0.3), (50.0, 8.0), (100.0, 80.0), (200.0, 400.0), (300.0, 680.0)],
    }
}

fn material(name: &str, mass: f64) -> Capacity {
    Capacity::Material(MaterialCapacity {
        material: name.into(),
        mass,
    })
}

/// Shield heights and radii in m above the spacecraft top surface.
const SHIELDS: [(f64, f64); 3] = [(0.25, 0.65), (0.45, 0.55), (0.6, 0.45)];
/// Axial strut nodes per section, spacecraft side first.
const STRUT_NODES: [usize; 4] = [13, 7, 3, 3];
const STRUT_DIAMETER: f64 = 0.03;
const STRUT_WALL: f64 = 0.001;
const STRUT_EPS: f64 = 0.85;
/// Share of a strut's lateral emission that escapes to space.
const STRUT_SKY: f64 = 0.7;
/// Effective emissivity of a 20-layer blanket.
const MLI_EPS: f64 = 0.01;
const BENCH_Z: f64 = 0.75;
const BENCH_R: f64 = 0.25;

fn instrument() -> Model {
    let mut m = empty(vec![
        ThermalNode::boundary("spacecraft", ROOM).in_group("spacecraft"),
        ThermalNode::boundary("space", 3.0),
        ThermalNode::diffusion("sc_mli", Capacity::Fixed(800.0), ROOM).in_group("spacecraft"),
    ]);
    m.materials = vec![gfrp(), aluminium(), zerodur(), silicon_carbide(), steel(), quartz()];
    let mut extra = vec![];

    m.conductors.push(Conductor::constant("sc_blanket", "spacecraft", "sc_mli", 0.05));
    m.faces.push(SurfaceFace {
        external: true,
        ..SurfaceFace::new("sc_mli_top", "sc_mli", Primitive::Disc { radius: 1.0 }, Pose::default(), Side::Front, 0.8, 0.8)
    });

    for (k, (z, r)) in SHIELDS.iter().enumerate() {
        let s = format!("shield{}", k + 1);
        let mli = format!("{s}_mli");
        // 1 mm aluminium plate
        let mass = PI * r * r * 1e-3 * 2700.0;
        m.nodes.push(ThermalNode::diffusion(&s, material("aluminium", mass), ROOM).in_group(&s));
        m.nodes.push(ThermalNode::arithmetic(&mli).in_group(&s));
        let disc = Primitive::Disc { radius: *r };
        let pose = Pose::at([0.0, 0.0, *z]);
        m.faces.push(SurfaceFace {
            external: true,
            ..SurfaceFace::new(&format!("{s}_top"), &s, disc.clone(), pose.clone(), Side::Front, 0.95, 0.85)
        });
        m.faces.push(SurfaceFace::new(&format!("{s}_bottom"), &mli, disc, pose, Side::Back, 0.03, 0.03));
        extra.push(entry(&mli, &s, MLI_EPS * PI * r * r));
    }

    m.nodes.push(ThermalNode::diffusion("bench", material("zerodur", 8.0), ROOM).in_group("bench"));
    let bench_low = Pose::at([0.0, 0.0, BENCH_Z - 0.01]);
    m.faces.push(SurfaceFace::new("bench_bottom", "bench", Primitive::Disc { radius: BENCH_R }, bench_low.clone(), Side::Back, 0.8, 0.8));
    m.faces.push(SurfaceFace::new(
        "bench_rim",
        "bench",
        Primitive::Cylinder { radius: BENCH_R, height: 0.01 },
        bench_low,
        Side::Front,
        0.8,
        0.8,
    ));
    let bench_top = Pose::at([0.0, 0.0, BENCH_Z]);
    m.faces.push(SurfaceFace {
        external: true,
        ..SurfaceFace::new("bench_top_gold", "bench", Primitive::Disc { radius: 0.1 }, bench_top.clone(), Side::Front, 0.02, 0.02)
    });
    m.faces.push(SurfaceFace {
        external: true,
        ..SurfaceFace::new(
            "bench_top_outer",
            "bench",
            Primitive::Annulus { inner_radius: 0.1, outer_radius: BENCH_R },
            bench_top,
            Side::Front,
            0.8,
            0.8,
        )
    });

    // black test volume just above the gold centre of the bench
    m.nodes.push(ThermalNode::arithmetic("test_volume").in_group("bench"));
    let tv = |id: &str, p: Primitive, z: f64, side: Side| SurfaceFace {
        high_accuracy: true,
        ..SurfaceFace::new(id, "test_volume", p, Pose::at([0.0, 0.0, z]), side, 1.0, 1.0)
    };
    m.faces.push(tv("tv_side", Primitive::Cylinder { radius: 0.01, height: 0.02 }, BENCH_Z + 0.01, Side::Front));
    m.faces.push(tv("tv_cap_top", Primitive::Disc { radius: 0.01 }, BENCH_Z + 0.03, Side::Front));
    m.faces.push(tv("tv_cap_bottom", Primitive::Disc { radius: 0.01 }, BENCH_Z + 0.01, Side::Back));

    m.nodes.push(ThermalNode::diffusion("detector_chip", material("quartz", 1e-3), ROOM).in_group("bench"));
    m.nodes.push(ThermalNode::diffusion("preproc_chip", material("quartz", 5e-3), ROOM).in_group("shield1"));
    m.conductors.push(Conductor::constant("detector_mount", "detector_chip", "bench", 0.05));
    m.conductors.push(Conductor::constant("preproc_mount", "preproc_chip", "shield1", 2.8));
    m.conductors.push(Conductor::constant("preproc_cable", "spacecraft", "preproc_chip", 1e-4));
    m.loads.push(HeatLoad::constant("preproc_dissipation", "preproc_chip", 10e-3));
    m.loads.push(HeatLoad::constant("detector_dissipation", "detector_chip", 1e-3));
    m.loads.push(HeatLoad::constant("mirror_dissipation", "bench", 0.2e-3));

    let harness = subdivide_chain("harness", 0.8, 2e-7, "steel", 0.01, 8, "preproc_chip", "detector_chip", ROOM).unwrap();
    let harness_groups = ["shield1", "shield1", "shield2", "shield2", "shield3", "shield3", "bench", "bench"];
    for (node, g) in harness.nodes.into_iter().zip(harness_groups) {
        m.nodes.push(node.in_group(g));
    }
    m.conductors.extend(harness.conductors);

    // three struts from the spacecraft rim to the bench, each split at the
    // shields into sections joined by titanium fittings
    let levels = [0.0, SHIELDS[0].0, SHIELDS[1].0, SHIELDS[2].0, BENCH_Z];
    let radii = [0.9, 0.6, 0.45, 0.33, 0.2];
    let level_group = ["spacecraft", "shield1", "shield2", "shield3", "bench"];
    let attach = ["spacecraft", "shield1", "shield2", "shield3", "bench"];
    let area = PI * STRUT_DIAMETER * STRUT_WALL;
    for s in 1..=3 {
        for (k, group) in level_group.iter().enumerate() {
            let j = format!("strut{s}_j{k}");
            m.nodes.push(ThermalNode::arithmetic(&j).in_group(group));
            m.conductors.push(Conductor::constant(&format!("strut{s}_fitting{k}"), &j, attach[k], 0.02));
        }
        for (sec, &n) in STRUT_NODES.iter().enumerate() {
            let dz = levels[sec + 1] - levels[sec];
            let dr = radii[sec] - radii[sec + 1];
            let length = (dz * dz + dr * dr).sqrt();
            let mass = area * length * 1900.0;
            let chain = subdivide_chain(
                &format!("strut{s}_sec{}", sec + 1),
                length,
                area,
                "gfrp",
                mass,
                n,
                &format!("strut{s}_j{sec}"),
                &format!("strut{s}_j{}", sec + 1),
                ROOM,
            )
            .unwrap();
            let group = level_group[sec + 1];
            for node in chain.nodes {
                let gr = STRUT_EPS * PI * STRUT_DIAMETER * (length / n as f64) * STRUT_SKY;
                extra.push(entry(&node.id, SPACE, gr));
                m.nodes.push(node.in_group(group));
            }
            m.conductors.extend(chain.conductors);
        }
    }

    m.orbit = Some(OrbitConfig {
        body: CentralBody::default(),
        elements: OrbitElements {
            apogee_altitude: 600_000.0,
            perigee_altitude: 600.0,
            inclination: 63.4,
            argument_of_periapsis: 0.0,
            raan: 0.0,
            true_anomaly_epoch: 0.0,
        },
        sun: SunModel::default(),
        attitude: Attitude::SunOriented,
    });

    let scene = Scene::from_model(&m).unwrap();
    let mut block = compute_exchange_factors(&scene, &RayBudget::default(), DEFAULT_SEED).to_block();
    block.entries.extend(extra);
    m.rad_couplings = Some(block);
    m
}

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models"));
    std::fs::create_dir_all(&out).unwrap();
    let models = [
        ("example_two_node", two_node()),
        ("single_capacitor", single_capacitor()),
        ("linear_chain", linear_chain()),
        ("coaxial_discs", coaxial_discs()),
        ("black_cube", black_cube()),
        ("orbit_toy", orbit_toy()),
        ("shielded_instrument", instrument()),
    ];
    for (name, m) in models {
        m.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        let path = out.join(format!("{name}.json"));
        std::fs::write(&path, m.to_json() + "\n").unwrap();
        println!("{}", path.display());
    }
}

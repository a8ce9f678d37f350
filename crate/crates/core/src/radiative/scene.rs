use std::collections::HashMap;
use std::f64::consts::PI;

use rand::Rng;

use crate::geometry::{any_perpendicular, PlacedPrimitive, Side, Vec3};
use crate::model::{Model, ModelError, Reflection, SurfaceFace};

/// Reflections allowed before a ray is forced to be absorbed where it is.
pub const MAX_BOUNCES: u32 = 64;

/// Minimum ray parameter accepted as a hit, in m.
const T_MIN: f64 = 1e-9;

/// One face-side taking part in ray exchange.
#[derive(Debug, Clone)]
pub struct SceneFace {
    pub id: String,
    pub node: String,
    pub surface: usize,
    pub side: Side,
    pub alpha: f64,
    pub epsilon: f64,
    pub reflection: Reflection,
    pub area: f64,
    pub high_accuracy: bool,
}

/// A placed primitive with up to one face on each side. A side without a
/// face is transparent.
#[derive(Debug, Clone)]
pub struct SceneSurface {
    pub shape: PlacedPrimitive,
    pub front: Option<usize>,
    pub back: Option<usize>,
}

/// Immutable ray-tracing scene built from the active faces of a model.
#[derive(Debug, Clone, Default)]
pub struct Scene {
    pub surfaces: Vec<SceneSurface>,
    pub faces: Vec<SceneFace>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub emitting_face: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Absorbed { face: usize, capped: bool },
    Escaped,
}

impl Scene {
    pub fn from_model(model: &Model) -> Result<Scene, ModelError> {
        Scene::from_faces(model.faces.iter().filter(|f| f.active))
    }

    /// Faces sharing an identical primitive and pose are bound to the same
    /// surface, one per side.
    pub fn from_faces<'a>(faces: impl IntoIterator<Item = &'a SurfaceFace>) -> Result<Scene, ModelError> {
        let mut scene = Scene::default();
        let mut by_shape: HashMap<String, usize> = HashMap::new();
        for f in faces {
            let shape = f.placed().map_err(|message| ModelError::Invalid {
                path: format!("faces[{}].primitive", f.id),
                message,
            })?;
            let key = serde_json::to_string(&(&f.primitive, &f.pose)).expect("serializable");
            let surface = *by_shape.entry(key).or_insert_with(|| {
                scene.surfaces.push(SceneSurface {
                    shape,
                    front: None,
                    back: None,
                });
                scene.surfaces.len() - 1
            });
            let index = scene.faces.len();
            let slot = match f.side {
                Side::Front => &mut scene.surfaces[surface].front,
                Side::Back => &mut scene.surfaces[surface].back,
            };
            if let Some(other) = slot {
                return Err(ModelError::Invalid {
                    path: format!("faces[{}].side", f.id),
                    message: format!("side already taken by face '{}'", scene.faces[*other].id),
                });
            }
            *slot = Some(index);
            scene.faces.push(SceneFace {
                id: f.id.clone(),
                node: f.node.clone(),
                surface,
                side: f.side,
                alpha: f.alpha,
                epsilon: f.epsilon,
                reflection: f.reflection,
                area: f.area(),
                high_accuracy: f.high_accuracy,
            });
        }
        Ok(scene)
    }

    pub fn face_index(&self, id: &str) -> Option<usize> {
        self.faces.iter().position(|f| f.id == id)
    }

    /// Nearest surface hit beyond `T_MIN`: `(surface, t, front normal)`.
    fn nearest_hit(&self, origin: &Vec3, dir: &Vec3) -> Option<(usize, f64, Vec3)> {
        let mut best: Option<(usize, f64, Vec3)> = None;
        for (s, surf) in self.surfaces.iter().enumerate() {
            if let Some(hit) = surf.shape.intersect(origin, dir, T_MIN) {
                if best.is_none_or(|(_, t, _)| hit.t < t) {
                    best = Some((s, hit.t, hit.front_normal));
                }
            }
        }
        best
    }
}

/// Cosine-weighted direction about the unit normal `n`.
pub fn cosine_direction<R: Rng + ?Sized>(n: &Vec3, rng: &mut R) -> Vec3 {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let r = u1.sqrt();
    let phi = 2.0 * PI * u2;
    let t = any_perpendicular(n);
    let b = n.cross(&t);
    let z = (1.0 - u1).max(0.0).sqrt();
    (t * (r * phi.cos()) + b * (r * phi.sin()) + n * z).normalize()
}

/// Lambertian emission from a face: origin uniform over the face area,
/// direction cosine-weighted about the normal of the emitting side.
pub fn sample_emission<R: Rng + ?Sized>(scene: &Scene, face: usize, rng: &mut R) -> Ray {
    let f = &scene.faces[face];
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let (origin, front) = scene.surfaces[f.surface].shape.sample(u1, u2);
    let normal = front * f.side.sign();
    Ray {
        origin,
        direction: cosine_direction(&normal, rng),
        emitting_face: face,
        weight: 1.0,
    }
}

/// Follows a ray through absorptions and reflections until it is absorbed
/// or leaves the scene.
pub fn trace_ray<R: Rng + ?Sized>(scene: &Scene, ray: Ray, rng: &mut R) -> Termination {
    let mut origin = ray.origin;
    let mut dir = ray.direction;
    let mut bounces = 0u32;
    loop {
        let Some((s, t, front)) = scene.nearest_hit(&origin, &dir) else {
            return Termination::Escaped;
        };
        let point = origin + dir * t;
        let surf = &scene.surfaces[s];
        let hit_front = dir.dot(&front) < 0.0;
        let face = if hit_front { surf.front } else { surf.back };
        let Some(fi) = face else {
            // transparent side
            origin = point;
            continue;
        };
        let f = &scene.faces[fi];
        let u: f64 = rng.random();
        if u < f.alpha {
            return Termination::Absorbed {
                face: fi,
                capped: false,
            };
        }
        if bounces >= MAX_BOUNCES {
            return Termination::Absorbed {
                face: fi,
                capped: true,
            };
        }
        bounces += 1;
        let side_normal = if hit_front { front } else { -front };
        dir = match f.reflection {
            Reflection::Diffuse => cosine_direction(&side_normal, rng),
            Reflection::Specular => (dir - side_normal * (2.0 * dir.dot(&side_normal))).normalize(),
        };
        origin = point;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose, Primitive};
    use crate::radiative::Substreams;

    fn square(id: &str, side: Side) -> SurfaceFace {
        SurfaceFace::new(
            id,
            "n",
            Primitive::Rectangle { width: 1.0, height: 1.0 },
            Pose::default(),
            side,
            1.0,
            1.0,
        )
    }

    #[test]
    fn emission_statistics_on_unit_square() {
        let face = square("sq", Side::Front);
        let scene = Scene::from_faces([&face]).unwrap();
        let streams = Substreams::new(42);
        let n = 100_000;
        let (mut sx, mut sy, mut sc) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let ray = sample_emission(&scene, 0, &mut streams.stream(0, i));
            assert!((ray.direction.norm() - 1.0).abs() < 1e-12);
            sx += ray.origin.x;
            sy += ray.origin.y;
            sc += ray.direction.z;
        }
        let nf = n as f64;
        let se_pos = 1.0 / (12.0 * nf).sqrt();
        assert!((sx / nf).abs() < 3.0 * se_pos);
        assert!((sy / nf).abs() < 3.0 * se_pos);
        // cos θ under cosine weighting has mean 2/3 and variance 1/18
        let se_cos = (1.0f64 / 18.0 / nf).sqrt();
        assert!((sc / nf - 2.0 / 3.0).abs() < 3.0 * se_cos);
    }

    #[test]
    fn back_side_emits_into_lower_hemisphere() {
        let face = square("sq", Side::Back);
        let scene = Scene::from_faces([&face]).unwrap();
        let streams = Substreams::new(1);
        for i in 0..2000 {
            let ray = sample_emission(&scene, 0, &mut streams.stream(0, i));
            assert!(ray.direction.z < 0.0);
        }
    }

    #[test]
    fn empty_scene_escapes() {
        let scene = Scene::default();
        let ray = Ray {
            origin: Vec3::zeros(),
            direction: Vec3::z(),
            emitting_face: 0,
            weight: 1.0,
        };
        let mut rng = Substreams::new(0).stream(0, 0);
        assert_eq!(trace_ray(&scene, ray, &mut rng), Termination::Escaped);
    }

    #[test]
    fn half_absorbing_plate() {
        let mut plate = SurfaceFace::new(
            "plate",
            "n",
            Primitive::Disc { radius: 1.0 },
            Pose::at([0.0, 0.0, 1.0]),
            Side::Back,
            0.5,
            0.5,
        );
        plate.reflection = Reflection::Diffuse;
        let scene = Scene::from_faces([&plate]).unwrap();
        let streams = Substreams::new(5);
        let n = 100_000u64;
        let mut absorbed = 0u64;
        for i in 0..n {
            let ray = Ray {
                origin: Vec3::zeros(),
                direction: Vec3::z(),
                emitting_face: 0,
                weight: 1.0,
            };
            if let Termination::Absorbed { .. } = trace_ray(&scene, ray, &mut streams.stream(1, i)) {
                absorbed += 1;
            }
        }
        let p = absorbed as f64 / n as f64;
        assert!((p - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt(), "{p}");
    }

    #[test]
    fn black_faces_absorb_at_first_hit() {
        let lower = SurfaceFace::new("lo", "n", Primitive::Disc { radius: 1.0 }, Pose::default(), Side::Front, 1.0, 1.0);
        let upper = SurfaceFace::new(
            "up",
            "n",
            Primitive::Disc { radius: 1.0 },
            Pose::at([0.0, 0.0, 0.1]),
            Side::Back,
            1.0,
            1.0,
        );
        let scene = Scene::from_faces([&lower, &upper]).unwrap();
        let streams = Substreams::new(2);
        for i in 0..1000 {
            let mut rng = streams.stream(0, i);
            let ray = sample_emission(&scene, 0, &mut rng);
            match trace_ray(&scene, ray, &mut rng) {
                Termination::Absorbed { face, capped } => {
                    assert_eq!(face, 1);
                    assert!(!capped);
                }
                Termination::Escaped => {}
            }
        }
    }

    #[test]
    fn mirror_box_rays_hit_the_cap() {
        // two perfect parallel mirrors: a ray bouncing between them is capped
        let mut lower = SurfaceFace::new("lo", "n", Primitive::Disc { radius: 1e3 }, Pose::default(), Side::Front, 0.0, 0.0);
        lower.reflection = Reflection::Specular;
        let mut upper = lower.clone();
        upper.id = "up".into();
        upper.pose = Pose::at([0.0, 0.0, 1.0]);
        upper.side = Side::Back;
        let scene = Scene::from_faces([&lower, &upper]).unwrap();
        let ray = Ray {
            origin: Vec3::new(0.0, 0.0, 0.5),
            direction: Vec3::z(),
            emitting_face: 0,
            weight: 1.0,
        };
        let mut rng = Substreams::new(0).stream(0, 0);
        assert!(matches!(trace_ray(&scene, ray, &mut rng), Termination::Absorbed { capped: true, .. }));
    }

    #[test]
    fn shared_side_rejected() {
        let a = square("a", Side::Front);
        let b = square("b", Side::Front);
        assert!(Scene::from_faces([&a, &b]).is_err());
    }
}

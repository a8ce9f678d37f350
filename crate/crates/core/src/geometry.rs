//! Analytic surface primitives used by the geometric model.
//!
//! Every primitive is defined in a local frame and placed in the model by a
//! rigid-body [`Pose`]. Planar primitives lie in the local xy-plane with their
//! front side facing local +z; cylinders and cones run along local +z from
//! `z = 0` to `z = height` with the front side facing outward.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

/// Relative slack applied to in-bounds tests so rays striking a shared edge
/// are not lost between two adjoining primitives.
const EDGE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    /// Centered rectangle, `width` along local x and `height` along local y.
    Rectangle { width: f64, height: f64 },
    Disc { radius: f64 },
    Annulus { inner_radius: f64, outer_radius: f64 },
    /// Open cylinder mantle (no caps).
    Cylinder { radius: f64, height: f64 },
    /// Open conical frustum mantle; `base_radius` at z = 0, `top_radius` at z = height.
    Cone {
        base_radius: f64,
        top_radius: f64,
        height: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Front,
    Back,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Front => 1.0,
            Side::Back => -1.0,
        }
    }
}

fn default_z_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

fn is_default_z_axis(v: &[f64; 3]) -> bool {
    *v == default_z_axis()
}

/// Placement of a primitive's local frame in the model frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    #[serde(default)]
    pub origin: [f64; 3],
    #[serde(default = "default_z_axis", skip_serializing_if = "is_default_z_axis")]
    pub z_axis: [f64; 3],
    /// Optional local x direction; orthogonalized against `z_axis`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_axis: Option<[f64; 3]>,
}

impl Default for Pose {
    fn default() -> Self {
        Pose {
            origin: [0.0; 3],
            z_axis: default_z_axis(),
            x_axis: None,
        }
    }
}

impl Pose {
    pub fn at(origin: [f64; 3]) -> Self {
        Pose {
            origin,
            ..Pose::default()
        }
    }

    pub fn with_axis(origin: [f64; 3], z_axis: [f64; 3]) -> Self {
        Pose {
            origin,
            z_axis,
            x_axis: None,
        }
    }

    pub fn frame(&self) -> Result<Frame, String> {
        let ez = Vec3::from(self.z_axis);
        let nz = ez.norm();
        if !(nz.is_finite() && nz > 0.0) {
            return Err("z_axis must be a finite non-zero vector".into());
        }
        let ez = ez / nz;
        let ex = match self.x_axis {
            Some(x) => {
                let x = Vec3::from(x);
                let x = x - ez * x.dot(&ez);
                let n = x.norm();
                if !(n.is_finite() && n > 1e-12) {
                    return Err("x_axis must not be parallel to z_axis".into());
                }
                x / n
            }
            None => any_perpendicular(&ez),
        };
        let ey = ez.cross(&ex);
        let origin = Vec3::from(self.origin);
        if !origin.iter().all(|c| c.is_finite()) {
            return Err("origin must be finite".into());
        }
        Ok(Frame { origin, ex, ey, ez })
    }
}

/// Unit vector perpendicular to `n` (assumed normalized).
pub fn any_perpendicular(n: &Vec3) -> Vec3 {
    let helper = if n.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    n.cross(&helper).normalize()
}

/// Orthonormal frame: `origin` plus local axes expressed in model coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub origin: Vec3,
    pub ex: Vec3,
    pub ey: Vec3,
    pub ez: Vec3,
}

impl Frame {
    pub fn point_to_world(&self, p: &Vec3) -> Vec3 {
        self.origin + self.ex * p.x + self.ey * p.y + self.ez * p.z
    }

    pub fn dir_to_world(&self, d: &Vec3) -> Vec3 {
        self.ex * d.x + self.ey * d.y + self.ez * d.z
    }

    pub fn point_to_local(&self, p: &Vec3) -> Vec3 {
        let r = p - self.origin;
        Vec3::new(r.dot(&self.ex), r.dot(&self.ey), r.dot(&self.ez))
    }

    pub fn dir_to_local(&self, d: &Vec3) -> Vec3 {
        Vec3::new(d.dot(&self.ex), d.dot(&self.ey), d.dot(&self.ez))
    }
}

/// A ray/primitive hit: distance along the ray and the front-side normal there.
#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub t: f64,
    pub front_normal: Vec3,
}

impl Primitive {
    pub fn validate(&self) -> Result<(), String> {
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("{name} must be > 0 (got {v})"))
            }
        };
        match *self {
            Primitive::Rectangle { width, height } => {
                pos("width", width)?;
                pos("height", height)
            }
            Primitive::Disc { radius } => pos("radius", radius),
            Primitive::Annulus {
                inner_radius,
                outer_radius,
            } => {
                if !(inner_radius.is_finite() && inner_radius >= 0.0) {
                    return Err(format!("inner_radius must be >= 0 (got {inner_radius})"));
                }
                pos("outer_radius", outer_radius)?;
                if inner_radius >= outer_radius {
                    return Err("inner_radius must be smaller than outer_radius".into());
                }
                Ok(())
            }
            Primitive::Cylinder { radius, height } => {
                pos("radius", radius)?;
                pos("height", height)
            }
            Primitive::Cone {
                base_radius,
                top_radius,
                height,
            } => {
                pos("height", height)?;
                if !(base_radius.is_finite() && base_radius >= 0.0)
                    || !(top_radius.is_finite() && top_radius >= 0.0)
                {
                    return Err("cone radii must be >= 0".into());
                }
                if base_radius == 0.0 && top_radius == 0.0 {
                    return Err("cone needs at least one non-zero radius".into());
                }
                Ok(())
            }
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Primitive::Rectangle { width, height } => width * height,
            Primitive::Disc { radius } => PI * radius * radius,
            Primitive::Annulus {
                inner_radius,
                outer_radius,
            } => PI * (outer_radius * outer_radius - inner_radius * inner_radius),
            Primitive::Cylinder { radius, height } => 2.0 * PI * radius * height,
            Primitive::Cone {
                base_radius,
                top_radius,
                height,
            } => {
                let slant = (height * height + (top_radius - base_radius).powi(2)).sqrt();
                PI * (base_radius + top_radius) * slant
            }
        }
    }

    /// Maps two uniform variates to a point distributed uniformly over the
    /// surface; returns the local point and local front normal.
    pub fn sample_local(&self, u1: f64, u2: f64) -> (Vec3, Vec3) {
        match *self {
            Primitive::Rectangle { width, height } => (
                Vec3::new((u1 - 0.5) * width, (u2 - 0.5) * height, 0.0),
                Vec3::z(),
            ),
            Primitive::Disc { radius } => {
                let r = radius * u1.sqrt();
                let phi = 2.0 * PI * u2;
                (Vec3::new(r * phi.cos(), r * phi.sin(), 0.0), Vec3::z())
            }
            Primitive::Annulus {
                inner_radius,
                outer_radius,
            } => {
                let r2 = inner_radius * inner_radius
                    + u1 * (outer_radius * outer_radius - inner_radius * inner_radius);
                let r = r2.sqrt();
                let phi = 2.0 * PI * u2;
                (Vec3::new(r * phi.cos(), r * phi.sin(), 0.0), Vec3::z())
            }
            Primitive::Cylinder { radius, height } => {
                let phi = 2.0 * PI * u2;
                let (s, c) = phi.sin_cos();
                (
                    Vec3::new(radius * c, radius * s, u1 * height),
                    Vec3::new(c, s, 0.0),
                )
            }
            Primitive::Cone {
                base_radius,
                top_radius,
                height,
            } => {
                let dr = top_radius - base_radius;
                let (rho, z) = if dr.abs() <= 1e-14 * base_radius.max(top_radius) {
                    (base_radius, u1 * height)
                } else {
                    // area density grows linearly with radius
                    let rho =
                        (base_radius * base_radius + u1 * (top_radius * top_radius - base_radius * base_radius)).sqrt();
                    (rho, (rho - base_radius) / dr * height)
                };
                let phi = 2.0 * PI * u2;
                let (s, c) = phi.sin_cos();
                (
                    Vec3::new(rho * c, rho * s, z),
                    Vec3::new(height * c, height * s, -dr).normalize(),
                )
            }
        }
    }

    /// Nearest intersection with `t > t_min` of a ray given in local coordinates.
    pub fn intersect_local(&self, o: &Vec3, d: &Vec3, t_min: f64) -> Option<Hit> {
        match *self {
            Primitive::Rectangle { width, height } => {
                let t = plane_t(o, d, t_min)?;
                let p = o + d * t;
                let hx = 0.5 * width * (1.0 + EDGE_SLACK);
                let hy = 0.5 * height * (1.0 + EDGE_SLACK);
                (p.x.abs() <= hx && p.y.abs() <= hy).then_some(Hit {
                    t,
                    front_normal: Vec3::z(),
                })
            }
            Primitive::Disc { radius } => {
                let t = plane_t(o, d, t_min)?;
                let p = o + d * t;
                let r2 = p.x * p.x + p.y * p.y;
                (r2 <= radius * radius * (1.0 + EDGE_SLACK)).then_some(Hit {
                    t,
                    front_normal: Vec3::z(),
                })
            }
            Primitive::Annulus {
                inner_radius,
                outer_radius,
            } => {
                let t = plane_t(o, d, t_min)?;
                let p = o + d * t;
                let r2 = p.x * p.x + p.y * p.y;
                (r2 <= outer_radius * outer_radius * (1.0 + EDGE_SLACK)
                    && r2 >= inner_radius * inner_radius * (1.0 - EDGE_SLACK))
                    .then_some(Hit {
                        t,
                        front_normal: Vec3::z(),
                    })
            }
            Primitive::Cylinder { radius, height } => {
                let a = d.x * d.x + d.y * d.y;
                let b = 2.0 * (o.x * d.x + o.y * d.y);
                let c = o.x * o.x + o.y * o.y - radius * radius;
                let zmax = height * (1.0 + EDGE_SLACK);
                let zmin = -height * EDGE_SLACK;
                quadratic_roots(a, b, c)
                    .into_iter()
                    .flatten()
                    .filter(|&t| t > t_min)
                    .find_map(|t| {
                        let p = o + d * t;
                        (p.z >= zmin && p.z <= zmax).then(|| Hit {
                            t,
                            front_normal: Vec3::new(p.x, p.y, 0.0).normalize(),
                        })
                    })
            }
            Primitive::Cone {
                base_radius,
                top_radius,
                height,
            } => {
                let k = (top_radius - base_radius) / height;
                let rho_o = base_radius + k * o.z;
                let a = d.x * d.x + d.y * d.y - k * k * d.z * d.z;
                let b = 2.0 * (o.x * d.x + o.y * d.y - k * rho_o * d.z);
                let c = o.x * o.x + o.y * o.y - rho_o * rho_o;
                let zmax = height * (1.0 + EDGE_SLACK);
                let zmin = -height * EDGE_SLACK;
                quadratic_roots(a, b, c)
                    .into_iter()
                    .flatten()
                    .filter(|&t| t > t_min)
                    .find_map(|t| {
                        let p = o + d * t;
                        if p.z < zmin || p.z > zmax {
                            return None;
                        }
                        let rho = base_radius + k * p.z;
                        let n = Vec3::new(p.x, p.y, -k * rho);
                        let nn = n.norm();
                        (nn > 0.0).then(|| Hit {
                            t,
                            front_normal: n / nn,
                        })
                    })
            }
        }
    }

    /// Splits the surface into patches of uniform orientation for flux
    /// integration; returns `(area, local front normal)` pairs.
    pub fn normal_patches(&self, azimuth_segments: usize) -> Vec<(f64, Vec3)> {
        let area = self.area();
        match *self {
            Primitive::Rectangle { .. } | Primitive::Disc { .. } | Primitive::Annulus { .. } => {
                vec![(area, Vec3::z())]
            }
            Primitive::Cylinder { .. } | Primitive::Cone { .. } => {
                let n = azimuth_segments.max(1);
                (0..n)
                    .map(|k| {
                        let u2 = (k as f64 + 0.5) / n as f64;
                        let (_, normal) = self.sample_local(0.5, u2);
                        (area / n as f64, normal)
                    })
                    .collect()
            }
        }
    }
}

fn plane_t(o: &Vec3, d: &Vec3, t_min: f64) -> Option<f64> {
    if d.z.abs() < 1e-300 {
        return None;
    }
    let t = -o.z / d.z;
    (t > t_min && t.is_finite()).then_some(t)
}

/// Real roots of `a t² + b t + c = 0`, ascending; handles the degenerate
/// linear case.
fn quadratic_roots(a: f64, b: f64, c: f64) -> [Option<f64>; 2] {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return [None, None];
    }
    if a.abs() <= 1e-14 * scale {
        if b == 0.0 {
            return [None, None];
        }
        return [Some(-c / b), None];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return [None, None];
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    let (t1, t2) = if q == 0.0 {
        (0.0, 0.0)
    } else {
        (q / a, c / q)
    };
    if t1 <= t2 {
        [Some(t1), Some(t2)]
    } else {
        [Some(t2), Some(t1)]
    }
}

/// A primitive placed in the model frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedPrimitive {
    pub primitive: Primitive,
    pub frame: Frame,
}

impl PlacedPrimitive {
    pub fn new(primitive: Primitive, pose: &Pose) -> Result<Self, String> {
        primitive.validate()?;
        Ok(PlacedPrimitive {
            primitive,
            frame: pose.frame()?,
        })
    }

    pub fn area(&self) -> f64 {
        self.primitive.area()
    }

    /// World-space point and front normal for two uniform variates.
    pub fn sample(&self, u1: f64, u2: f64) -> (Vec3, Vec3) {
        let (p, n) = self.primitive.sample_local(u1, u2);
        (self.frame.point_to_world(&p), self.frame.dir_to_world(&n))
    }

    pub fn intersect(&self, origin: &Vec3, dir: &Vec3, t_min: f64) -> Option<Hit> {
        let o = self.frame.point_to_local(origin);
        let d = self.frame.dir_to_local(dir);
        self.primitive.intersect_local(&o, &d, t_min).map(|h| Hit {
            t: h.t,
            front_normal: self.frame.dir_to_world(&h.front_normal),
        })
    }

    /// World-space `(area, front normal)` patches.
    pub fn normal_patches(&self, azimuth_segments: usize) -> Vec<(f64, Vec3)> {
        self.primitive
            .normal_patches(azimuth_segments)
            .into_iter()
            .map(|(a, n)| (a, self.frame.dir_to_world(&n)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn placed(p: Primitive) -> PlacedPrimitive {
        PlacedPrimitive::new(p, &Pose::default()).unwrap()
    }

    #[test]
    fn areas() {
        assert_eq!(placed(Primitive::Rectangle { width: 2.0, height: 3.0 }).area(), 6.0);
        let cone = Primitive::Cone {
            base_radius: 1.0,
            top_radius: 1.0,
            height: 2.0,
        };
        let cyl = Primitive::Cylinder { radius: 1.0, height: 2.0 };
        assert!((cone.area() - cyl.area()).abs() < 1e-12);
    }

    #[test]
    fn disc_hit_from_both_sides() {
        let d = placed(Primitive::Disc { radius: 1.0 });
        let down = d
            .intersect(&Vec3::new(0.2, 0.0, 1.0), &Vec3::new(0.0, 0.0, -1.0), 1e-9)
            .unwrap();
        assert!((down.t - 1.0).abs() < 1e-15);
        assert!(Vec3::new(0.0, 0.0, -1.0).dot(&down.front_normal) < 0.0);
        let miss = d.intersect(&Vec3::new(1.5, 0.0, 1.0), &Vec3::new(0.0, 0.0, -1.0), 1e-9);
        assert!(miss.is_none());
    }

    #[test]
    fn cylinder_inside_hits_far_wall() {
        let c = placed(Primitive::Cylinder { radius: 1.0, height: 1.0 });
        let h = c
            .intersect(&Vec3::new(1.0, 0.0, 0.5), &Vec3::new(-1.0, 0.0, 0.0), 1e-9)
            .unwrap();
        assert!((h.t - 2.0).abs() < 1e-12);
        assert!((h.front_normal - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn cone_normal_and_hit() {
        // 45 degree frustum from r=1 at z=0 to r=0.5 at z=0.5
        let c = placed(Primitive::Cone {
            base_radius: 1.0,
            top_radius: 0.5,
            height: 0.5,
        });
        let h = c
            .intersect(&Vec3::new(5.0, 0.0, 0.25), &Vec3::new(-1.0, 0.0, 0.0), 1e-9)
            .unwrap();
        assert!((h.t - 4.25).abs() < 1e-12);
        let expect = Vec3::new(1.0, 0.0, 1.0).normalize();
        assert!((h.front_normal - expect).norm() < 1e-12);
        // the local x axis is arbitrary about z, so check the polar tilt only
        let (_, n) = c.sample(0.3, 0.0);
        assert!((n.z - expect.z).abs() < 1e-12 && (n.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pose_rotates_normal() {
        let p = PlacedPrimitive::new(
            Primitive::Disc { radius: 1.0 },
            &Pose::with_axis([0.0, 0.0, 2.0], [1.0, 0.0, 0.0]),
        )
        .unwrap();
        let (pt, n) = p.sample(0.25, 0.1);
        assert!((n - Vec3::x()).norm() < 1e-15);
        assert!(pt.x.abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(Primitive::Disc { radius: 0.0 }.validate().is_err());
        assert!(Primitive::Annulus {
            inner_radius: 2.0,
            outer_radius: 1.0
        }
        .validate()
        .is_err());
        assert!(Pose::with_axis([0.0; 3], [0.0; 3]).frame().is_err());
    }
}

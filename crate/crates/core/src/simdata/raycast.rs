//! Analytic ray casting against planes, vertical cylinders and spheres.

use nalgebra::Vector3;

use crate::geom::{CameraIntrinsics, RigidTransform};
use crate::raster::{DepthKind, DepthMap, Image};
use crate::rng::mix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Material {
    Ground,
    Trunk,
    Post,
    Canopy,
    Wall,
}

impl Material {
    fn albedo(self) -> [f64; 3] {
        match self {
            Material::Ground => [0.42, 0.36, 0.22],
            Material::Trunk => [0.35, 0.24, 0.15],
            Material::Post => [0.62, 0.60, 0.55],
            Material::Canopy => [0.18, 0.48, 0.16],
            Material::Wall => [0.55, 0.50, 0.45],
        }
    }

    fn noise_salt(self) -> u64 {
        match self {
            Material::Ground => 0x11,
            Material::Trunk => 0x23,
            Material::Post => 0x37,
            Material::Canopy => 0x41,
            Material::Wall => 0x59,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// Infinite plane through `point` with unit `normal`.
    Plane {
        point: Vector3<f64>,
        normal: Vector3<f64>,
        material: Material,
    },
    /// Vertical (world y) cylinder centered at `(x, z)` between heights `y0..y1`.
    Cylinder {
        x: f64,
        z: f64,
        radius: f64,
        y0: f64,
        y1: f64,
        material: Material,
    },
    Sphere {
        center: Vector3<f64>,
        radius: f64,
        material: Material,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub t: f64,
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub material: Material,
}

const T_EPS: f64 = 1e-9;

impl Primitive {
    /// Smallest `t > 0` with `origin + t·dir` on the surface. `dir` need not be unit.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        match *self {
            Primitive::Plane {
                point,
                normal,
                material,
            } => {
                let denom = normal.dot(dir);
                if denom.abs() < 1e-15 {
                    return None;
                }
                let t = normal.dot(&(point - origin)) / denom;
                (t > T_EPS).then(|| Hit {
                    t,
                    point: origin + dir * t,
                    normal: if denom < 0.0 { normal } else { -normal },
                    material,
                })
            }
            Primitive::Cylinder {
                x,
                z,
                radius,
                y0,
                y1,
                material,
            } => {
                let (ox, oz) = (origin.x - x, origin.z - z);
                let a = dir.x * dir.x + dir.z * dir.z;
                if a < 1e-18 {
                    return None;
                }
                let b = 2.0 * (ox * dir.x + oz * dir.z);
                let c = ox * ox + oz * oz - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                    if t > T_EPS {
                        let p = origin + dir * t;
                        if p.y >= y0 && p.y <= y1 {
                            let n = Vector3::new(p.x - x, 0.0, p.z - z) / radius;
                            return Some(Hit {
                                t,
                                point: p,
                                normal: n,
                                material,
                            });
                        }
                    }
                }
                None
            }
            Primitive::Sphere {
                center,
                radius,
                material,
            } => {
                let oc = origin - center;
                let a = dir.norm_squared();
                let b = 2.0 * oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)]
                    .into_iter()
                    .find(|&t| t > T_EPS)
                    .map(|t| {
                        let p = origin + dir * t;
                        Hit {
                            t,
                            point: p,
                            normal: (p - center) / radius,
                            material,
                        }
                    })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
    /// Salt for the procedural texture.
    pub texture_seed: u64,
}

impl Scene {
    pub fn nearest_hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for p in &self.primitives {
            if let Some(h) = p.intersect(origin, dir) {
                if best.is_none_or(|b| h.t < b.t) {
                    best = Some(h);
                }
            }
        }
        best
    }

    /// Camera-frame depth along the ray through continuous pixel `(u, v)`, 0 for sky.
    pub fn depth_at(&self, k: &CameraIntrinsics, pose: &RigidTransform, u: f64, v: f64) -> f64 {
        let dir_cam = Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        let dir = pose.apply_direction(&dir_cam);
        // With unit camera-z component, the ray parameter is the camera-frame depth.
        self.nearest_hit(&pose.translation, &dir).map_or(0.0, |h| h.t)
    }

    fn shade(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> [f64; 3] {
        let Some(hit) = self.nearest_hit(origin, dir) else {
            let up = dir.y / dir.norm();
            let s = (0.5 + 0.5 * up).clamp(0.0, 1.0);
            return [0.55 + 0.25 * s, 0.70 + 0.2 * s, 0.92];
        };
        let sun = Vector3::new(0.3, 0.8, -0.5).normalize();
        let lambert = hit.normal.dot(&sun).max(0.0);
        let salt = self.texture_seed ^ hit.material.noise_salt();
        let tex = 0.55 * value_noise(&(hit.point / 0.12), salt)
            + 0.30 * value_noise(&(hit.point / 0.4), salt.rotate_left(17))
            + 0.15 * value_noise(&(hit.point / 1.5), salt.rotate_left(31));
        let m = 0.45 + 0.8 * tex;
        let light = 0.35 + 0.65 * lambert;
        let a = hit.material.albedo();
        [
            (a[0] * m * light).clamp(0.0, 1.0),
            (a[1] * m * light).clamp(0.0, 1.0),
            (a[2] * m * light).clamp(0.0, 1.0),
        ]
    }

    /// Shaded image (supersampled `ss × ss` per pixel) and exact depth at pixel centers.
    pub fn render(&self, k: &CameraIntrinsics, pose: &RigidTransform, supersample: usize) -> (Image, DepthMap) {
        let ss = supersample.max(1);
        let mut image = Image::new(k.width, k.height);
        let mut depth = DepthMap::zeros(k.width, k.height, DepthKind::Dense);
        let origin = pose.translation;
        for v in 0..k.height {
            for u in 0..k.width {
                depth.set(u, v, self.depth_at(k, pose, u as f64, v as f64));
                let mut acc = [0.0; 3];
                for sy in 0..ss {
                    for sx in 0..ss {
                        let du = (sx as f64 + 0.5) / ss as f64 - 0.5;
                        let dv = (sy as f64 + 0.5) / ss as f64 - 0.5;
                        let dir_cam = Vector3::new(
                            (u as f64 + du - k.cx) / k.fx,
                            (v as f64 + dv - k.cy) / k.fy,
                            1.0,
                        );
                        let c = self.shade(&origin, &pose.apply_direction(&dir_cam));
                        for ch in 0..3 {
                            acc[ch] += c[ch];
                        }
                    }
                }
                let n = (ss * ss) as f64;
                image.set_pixel(u, v, [acc[0] / n, acc[1] / n, acc[2] / n]);
            }
        }
        (image, depth)
    }
}

fn lattice(ix: i64, iy: i64, iz: i64, salt: u64) -> f64 {
    let h = mix64(salt ^ mix64((ix as u64) ^ mix64((iy as u64) ^ mix64(iz as u64))));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Trilinear value noise in `[0, 1)` on the integer lattice.
pub fn value_noise(p: &Vector3<f64>, salt: u64) -> f64 {
    let (fx, fy, fz) = (p.x.floor(), p.y.floor(), p.z.floor());
    let (tx, ty, tz) = (smooth(p.x - fx), smooth(p.y - fy), smooth(p.z - fz));
    let (ix, iy, iz) = (fx as i64, fy as i64, fz as i64);
    let mut acc = 0.0;
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let w = (if dx == 1 { tx } else { 1.0 - tx })
                    * (if dy == 1 { ty } else { 1.0 - ty })
                    * (if dz == 1 { tz } else { 1.0 - tz });
                acc += w * lattice(ix + dx, iy + dy, iz + dz, salt);
            }
        }
    }
    acc
}

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::Scene;
use crate::cloud::PointCloud;
use crate::geom::RigidTransform;

/// A spinning multi-line LiDAR. `pose` maps sensor coordinates to world.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarSensor {
    pub pose: RigidTransform,
    pub n_lines: usize,
    pub azimuth_step_deg: f64,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    /// Azimuth window, degrees, 0 = sensor forward, positive to the left.
    pub azimuth_min_deg: f64,
    pub azimuth_max_deg: f64,
    pub max_range: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarPattern {
    pub n_lines: usize,
    pub azimuth_step_deg: f64,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub azimuth_min_deg: f64,
    pub azimuth_max_deg: f64,
    pub max_range: f64,
}

impl Default for LidarPattern {
    /// 32 lines over +10.67°..-30.67° elevation.
    fn default() -> Self {
        Self {
            n_lines: 32,
            azimuth_step_deg: 1.0,
            elevation_min_deg: -30.67,
            elevation_max_deg: 10.67,
            azimuth_min_deg: -70.0,
            azimuth_max_deg: 70.0,
            max_range: 100.0,
        }
    }
}

impl LidarPattern {
    /// Same field of view with 8 lines and a 2° azimuth step. On an image
    /// about 80 pixels across this leaves several rows between beams, close
    /// to the pixel density a 32-line sensor gives on a full-size image.
    pub fn desk() -> Self {
        Self {
            n_lines: 8,
            azimuth_step_deg: 2.0,
            ..Self::default()
        }
    }
}

impl LidarSensor {
    pub fn new(pose: RigidTransform, pattern: LidarPattern) -> Self {
        Self {
            pose,
            n_lines: pattern.n_lines,
            azimuth_step_deg: pattern.azimuth_step_deg,
            elevation_min_deg: pattern.elevation_min_deg,
            elevation_max_deg: pattern.elevation_max_deg,
            azimuth_min_deg: pattern.azimuth_min_deg,
            azimuth_max_deg: pattern.azimuth_max_deg,
            max_range: pattern.max_range,
        }
    }

    fn elevations(&self) -> Vec<f64> {
        if self.n_lines <= 1 {
            return vec![0.5 * (self.elevation_min_deg + self.elevation_max_deg)];
        }
        let step = (self.elevation_max_deg - self.elevation_min_deg) / (self.n_lines - 1) as f64;
        (0..self.n_lines).map(|i| self.elevation_min_deg + step * i as f64).collect()
    }

    fn azimuths(&self) -> Vec<f64> {
        let step = self.azimuth_step_deg.abs().max(1e-6);
        let n = ((self.azimuth_max_deg - self.azimuth_min_deg) / step).floor() as usize;
        (0..=n).map(|i| self.azimuth_min_deg + step * i as f64).collect()
    }
}

/// Rotation taking LiDAR axes (x fwd, y left, z up) to camera axes (x right, y down, z fwd).
pub fn camera_from_lidar_rotation() -> Matrix3<f64> {
    Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0)
}

/// One cloud per sensor, in that sensor's own frame. Misses are omitted.
pub fn simulate_lidar(scene: &Scene, sensors: &[LidarSensor]) -> Vec<PointCloud> {
    sensors
        .iter()
        .map(|s| {
            let origin = s.pose.translation;
            let mut points = Vec::new();
            for el in s.elevations() {
                let (se, ce) = el.to_radians().sin_cos();
                for az in s.azimuths() {
                    let (sa, ca) = az.to_radians().sin_cos();
                    let dir = Vector3::new(ce * ca, ce * sa, se);
                    if let Some(hit) = scene.nearest_hit(&origin, &s.pose.apply_direction(&dir)) {
                        if hit.t <= s.max_range {
                            points.push(dir * hit.t);
                        }
                    }
                }
            }
            PointCloud {
                points,
                frame: s.pose.from_frame.clone(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simdata::{Material, Primitive};

    fn wall_scene() -> Scene {
        Scene {
            primitives: vec![Primitive::Plane {
                point: Vector3::new(0.0, 0.0, 10.0),
                normal: -Vector3::z(),
                material: Material::Wall,
            }],
            texture_seed: 0,
        }
    }

    /// Sensor at the world origin whose forward axis is world +z.
    fn facing_wall() -> LidarSensor {
        let rot = Matrix3::new(0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0);
        let pose = RigidTransform::new(rot, Vector3::zeros(), "lidar", "world").unwrap();
        LidarSensor::new(
            pose,
            LidarPattern {
                n_lines: 33,
                elevation_min_deg: -16.0,
                elevation_max_deg: 16.0,
                ..LidarPattern::default()
            },
        )
    }

    #[test]
    fn wall_ranges() {
        let sensor = facing_wall();
        let clouds = simulate_lidar(&wall_scene(), &[sensor]);
        let cloud = &clouds[0];
        assert!(!cloud.is_empty());
        let mut saw_horizontal = false;
        for p in &cloud.points {
            let range = p.norm();
            assert!(range >= 10.0 - 1e-9);
            if p.y.abs() < 1e-12 && p.z.abs() < 1e-12 {
                assert!((range - 10.0).abs() < 1e-9);
                saw_horizontal = true;
            }
        }
        assert!(saw_horizontal);
    }

    #[test]
    fn empty_scene_gives_empty_cloud() {
        let clouds = simulate_lidar(&Scene::default(), &[facing_wall()]);
        assert!(clouds[0].is_empty());
    }

    #[test]
    fn lidar_camera_rotation_is_proper() {
        let r = camera_from_lidar_rotation();
        assert!((r.determinant() - 1.0).abs() < 1e-15);
        // LiDAR forward (x) is camera forward (z); LiDAR up (z) is camera -y.
        assert_eq!(r * Vector3::x(), Vector3::z());
        assert_eq!(r * Vector3::z(), -Vector3::y());
    }
}

//! Multi-LiDAR merging and z-buffered projection into sparse depth maps.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geom::{CameraIntrinsics, RigidTransform};
use crate::raster::{DepthKind, DepthMap};

pub const DEFAULT_Z_MIN: f64 = 0.5;
pub const DEFAULT_Z_MAX: f64 = 80.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub frame: String,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>, frame: impl Into<String>) -> Result<Self> {
        if points.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::invalid("point cloud contains non-finite coordinates"));
        }
        Ok(Self {
            points,
            frame: frame.into(),
        })
    }

    pub fn empty(frame: impl Into<String>) -> Self {
        Self {
            points: Vec::new(),
            frame: frame.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, t: &RigidTransform) -> Result<PointCloud> {
        if t.from_frame != self.frame {
            return Err(Error::FrameMismatch {
                expected: t.from_frame.clone(),
                found: self.frame.clone(),
            });
        }
        Ok(PointCloud {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            frame: t.to_frame.clone(),
        })
    }
}

/// Brings every cloud into the common target frame and concatenates them.
/// All extrinsics must share one `to_frame`.
pub fn merge(clouds: &[PointCloud], extrinsics: &[RigidTransform]) -> Result<PointCloud> {
    if clouds.len() != extrinsics.len() {
        return Err(Error::invalid(format!(
            "{} clouds but {} extrinsics",
            clouds.len(),
            extrinsics.len()
        )));
    }
    let Some(first) = extrinsics.first() else {
        return Err(Error::invalid("merge of zero clouds"));
    };
    let target = first.to_frame.clone();
    let mut points = Vec::with_capacity(clouds.iter().map(PointCloud::len).sum());
    for (cloud, t) in clouds.iter().zip(extrinsics) {
        if t.to_frame != target {
            return Err(Error::FrameMismatch {
                expected: target,
                found: t.to_frame.clone(),
            });
        }
        points.extend(cloud.transformed(t)?.points);
    }
    Ok(PointCloud { points, frame: target })
}

/// Pixel hit by a camera-frame point under nearest-pixel rounding, with its depth.
pub fn pixel_of(p: &Vector3<f64>, k: &CameraIntrinsics, z_min: f64, z_max: f64) -> Option<(usize, usize, f64)> {
    if !(p.z >= z_min && p.z <= z_max) {
        return None;
    }
    let (u, v) = k.project(p)?;
    let (u, v) = (u.round(), v.round());
    if u < 0.0 || v < 0.0 || u >= k.width as f64 || v >= k.height as f64 {
        return None;
    }
    Some((u as usize, v as usize, p.z))
}

/// Projects a camera-frame cloud; where several points share a pixel the
/// nearest one wins.
pub fn project(cloud: &PointCloud, k: &CameraIntrinsics, z_min: f64, z_max: f64) -> Result<DepthMap> {
    if !(z_min > 0.0 && z_min < z_max) {
        return Err(Error::invalid(format!("need 0 < z_min < z_max, got {z_min}, {z_max}")));
    }
    let mut out = DepthMap::zeros(k.width, k.height, DepthKind::Sparse);
    for p in &cloud.points {
        if let Some((u, v, z)) = pixel_of(p, k, z_min, z_max) {
            let cur = out.get(u, v);
            if cur == 0.0 || z < cur {
                out.set(u, v, z);
            }
        }
    }
    Ok(out)
}

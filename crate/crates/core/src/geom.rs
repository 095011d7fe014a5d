//! Pinhole intrinsics, rigid sensor extrinsics and the mean canonical camera
//! space.
//!
//! Depth labels from cameras with different focal lengths are brought into a
//! single virtual camera whose focal length is the mean of all registered
//! cameras: `D_mc = (f_mc / f_gt) * D_gt`. Predictions made in that space are
//! mapped back with the inverse factor before they are compared against a
//! label. Only depth is rescaled; image geometry and the principal point are
//! left alone. The scalar focal length is `fx`.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::DepthMap;

/// Relative `fx`/`fy` mismatch above which registration logs a warning.
pub const ANISOTROPY_WARN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square pixels with the principal point at the image center.
    pub fn centered(f: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::invalid(format!("focal lengths must be positive: fx={} fy={}", self.fx, self.fy)));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64 && self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(Error::invalid(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// The scalar focal length used by the canonical transform.
    pub fn focal(&self) -> f64 {
        self.fx
    }

    pub fn anisotropy(&self) -> f64 {
        (self.fx - self.fy).abs() / self.fx
    }

    /// Continuous pixel coordinates of a camera-frame point; `None` behind the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Camera-frame point at depth `z` along the ray through pixel `(u, v)`.
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx * z, (v - self.cy) / self.fy * z, z)
    }

    /// Intrinsics of the same camera after resizing the image by `s`.
    ///
    /// Pixel centres sit at integer coordinates, so a resize maps
    /// `u ↦ (u + ½)·s − ½`.
    pub fn scaled(&self, s: f64, width: usize, height: usize) -> CameraIntrinsics {
        CameraIntrinsics {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: (self.cx + 0.5) * s - 0.5,
            cy: (self.cy + 0.5) * s - 0.5,
            width,
            height,
        }
    }

    /// Intrinsics of a crop whose top-left corner is `(x0, y0)`.
    pub fn cropped(&self, x0: usize, y0: usize, width: usize, height: usize) -> CameraIntrinsics {
        CameraIntrinsics {
            cx: self.cx - x0 as f64,
            cy: self.cy - y0 as f64,
            width,
            height,
            ..*self
        }
    }
}

/// Maps points from `from_frame` coordinates into `to_frame` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub from_frame: String,
    pub to_frame: String,
}

const ORTHO_TOL: f64 = 1e-9;

impl RigidTransform {
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        from_frame: impl Into<String>,
        to_frame: impl Into<String>,
    ) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if err > ORTHO_TOL {
            return Err(Error::invalid(format!("rotation is not orthonormal (error {err:e})")));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(Error::invalid(format!("rotation determinant is {det}, expected 1")));
        }
        if translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("translation must be finite"));
        }
        Ok(Self {
            rotation,
            translation,
            from_frame: from_frame.into(),
            to_frame: to_frame.into(),
        })
    }

    pub fn identity(from_frame: impl Into<String>, to_frame: impl Into<String>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            from_frame: from_frame.into(),
            to_frame: to_frame.into(),
        }
    }

    pub fn translation(t: Vector3<f64>, from_frame: impl Into<String>, to_frame: impl Into<String>) -> Self {
        Self {
            translation: t,
            ..Self::identity(from_frame, to_frame)
        }
    }

    /// Rotation about `axis` by `angle` radians, followed by translation `t`.
    pub fn from_axis_angle(
        axis: Vector3<f64>,
        angle: f64,
        t: Vector3<f64>,
        from_frame: impl Into<String>,
        to_frame: impl Into<String>,
    ) -> Self {
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        Self {
            rotation: *rot.matrix(),
            translation: t,
            from_frame: from_frame.into(),
            to_frame: to_frame.into(),
        }
    }

    /// Builds from a row-major 3x4 `[R | t]` matrix.
    pub fn from_row_major_3x4(m: &[f64; 12], from_frame: &str, to_frame: &str) -> Result<Self> {
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let translation = Vector3::new(m[3], m[7], m[11]);
        Self::new(rotation, translation, from_frame, to_frame)
    }

    pub fn to_row_major_3x4(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ]
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply_direction(&self, d: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * d
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            translation: -(rt * self.translation),
            rotation: rt,
            from_frame: self.to_frame.clone(),
            to_frame: self.from_frame.clone(),
        }
    }

    /// Largest entry-wise difference between the two transforms.
    pub fn max_abs_diff(&self, other: &RigidTransform) -> f64 {
        let r = (self.rotation - other.rotation).abs().max();
        let t = (self.translation - other.translation).abs().max();
        r.max(t)
    }
}

/// `a ∘ b`: applies `b` first, then `a`. Requires `a.from_frame == b.to_frame`.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> Result<RigidTransform> {
    if a.from_frame != b.to_frame {
        return Err(Error::FrameMismatch {
            expected: a.from_frame.clone(),
            found: b.to_frame.clone(),
        });
    }
    Ok(RigidTransform {
        rotation: a.rotation * b.rotation,
        translation: a.rotation * b.translation + a.translation,
        from_frame: b.from_frame.clone(),
        to_frame: a.to_frame.clone(),
    })
}

/// The virtual camera shared by every training source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalSpace {
    pub f_mc: f64,
    pub source_focals: Vec<f64>,
}

impl CanonicalSpace {
    /// Depth scale factor from a camera with focal `f_gt` into this space.
    pub fn factor_to(&self, f_gt: f64) -> Result<f64> {
        check_focal(f_gt)?;
        Ok(self.f_mc / f_gt)
    }

    /// Depth scale factor from this space back to a camera with focal `f_gt`.
    pub fn factor_from(&self, f_gt: f64) -> Result<f64> {
        check_focal(f_gt)?;
        Ok(f_gt / self.f_mc)
    }

    /// Registers one focal per camera; warns on strongly non-square pixels.
    pub fn from_cameras(cameras: &[CameraIntrinsics]) -> Result<Self> {
        for k in cameras {
            if k.anisotropy() >= ANISOTROPY_WARN {
                log::warn!(
                    "camera fx={} fy={} differs by {:.1}%; canonical scaling uses fx",
                    k.fx,
                    k.fy,
                    100.0 * k.anisotropy()
                );
            }
        }
        mean_focal(&cameras.iter().map(|k| k.focal()).collect::<Vec<_>>())
    }
}

fn check_focal(f: f64) -> Result<()> {
    if f > 0.0 && f.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("focal length must be positive and finite, got {f}")))
    }
}

pub fn mean_focal(focals: &[f64]) -> Result<CanonicalSpace> {
    if focals.is_empty() {
        return Err(Error::invalid("mean focal of an empty camera list"));
    }
    for &f in focals {
        check_focal(f)?;
    }
    let f_mc = focals.iter().sum::<f64>() / focals.len() as f64;
    Ok(CanonicalSpace {
        f_mc,
        source_focals: focals.to_vec(),
    })
}

fn scale_valid(depth: &DepthMap, factor: f64) -> DepthMap {
    let mut out = depth.clone();
    for d in &mut out.values {
        if *d > 0.0 {
            *d *= factor;
        }
    }
    out
}

/// Label depth from a camera with focal `f_gt` into the canonical space.
pub fn to_canonical(depth: &DepthMap, f_gt: f64, space: &CanonicalSpace) -> Result<DepthMap> {
    Ok(scale_valid(depth, space.factor_to(f_gt)?))
}

/// Canonical-space depth back into a camera with focal `f_gt`.
pub fn from_canonical(depth: &DepthMap, f_gt: f64, space: &CanonicalSpace) -> Result<DepthMap> {
    Ok(scale_valid(depth, space.factor_from(f_gt)?))
}

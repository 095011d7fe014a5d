//! Dense depth from a rectified stereo pair.
//!
//! Block matching minimizes the sum of absolute differences over a
//! `(2r+1)²` grayscale window, refines the winning integer disparity with a
//! parabola through the neighbouring costs, and discards pixels whose left
//! and right disparities disagree by more than the configured threshold.
//! Depth follows from `D = f·B / d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::CameraIntrinsics;
use crate::raster::{DepthKind, DepthMap, GrayImage, Image};

pub const DEFAULT_DENSE_CAP: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoRig {
    pub intrinsics: CameraIntrinsics,
    /// Meters.
    pub baseline: f64,
    pub max_disparity: usize,
    pub block_radius: usize,
    /// Maximum allowed |d_left - d_right| in pixels.
    pub lr_threshold: f64,
}

impl StereoRig {
    pub fn new(intrinsics: CameraIntrinsics, baseline: f64) -> Result<Self> {
        let rig = Self {
            intrinsics,
            baseline,
            max_disparity: 64,
            block_radius: 3,
            lr_threshold: 1.0,
        };
        rig.validate()?;
        Ok(rig)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.baseline > 0.0 && self.baseline.is_finite()) {
            return Err(Error::invalid(format!("baseline must be positive, got {}", self.baseline)));
        }
        if self.max_disparity < 1 || self.block_radius < 1 {
            return Err(Error::invalid("max_disparity and block_radius must be >= 1"));
        }
        self.intrinsics.validate()
    }
}

/// Per-pixel disparity in pixels; values `<= 0` are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl DisparityMap {
    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.width + u]
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&d| d > 0.0).count()
    }
}

/// SAD costs for every disparity `0..=max_d`, `cost[d][v*w+u]`, `INFINITY`
/// where the window leaves either image.
fn cost_volume(left: &GrayImage, right: &GrayImage, r: usize, max_d: usize) -> Vec<Vec<f64>> {
    let (w, h) = (left.width, left.height);
    let mut volume = Vec::with_capacity(max_d + 1);
    // Integral image of |L(u,v) - R(u-d,v)|, one row/column of padding.
    let mut integral = vec![0.0f64; (w + 1) * (h + 1)];
    for d in 0..=max_d {
        for v in 0..h {
            let mut row = 0.0;
            for u in 0..w {
                let ad = if u >= d {
                    (left.data[v * w + u] - right.data[v * w + u - d]).abs()
                } else {
                    0.0
                };
                row += ad;
                integral[(v + 1) * (w + 1) + u + 1] = integral[v * (w + 1) + u + 1] + row;
            }
        }
        let mut cost = vec![f64::INFINITY; w * h];
        if h > 2 * r && w > 2 * r {
            for v in r..h - r {
                for u in (r + d).max(r)..w - r {
                    let (u0, u1, v0, v1) = (u - r, u + r + 1, v - r, v + r + 1);
                    let s = integral[v1 * (w + 1) + u1] - integral[v0 * (w + 1) + u1] - integral[v1 * (w + 1) + u0]
                        + integral[v0 * (w + 1) + u0];
                    cost[v * w + u] = s;
                }
            }
        }
        volume.push(cost);
    }
    volume
}

/// Index of the smallest finite cost (first on ties) with sub-pixel refinement.
fn best_disparity(costs: impl Fn(usize) -> f64, max_d: usize) -> Option<f64> {
    let mut best = None;
    let mut best_cost = f64::INFINITY;
    for d in 0..=max_d {
        let c = costs(d);
        if c < best_cost {
            best_cost = c;
            best = Some(d);
        }
    }
    let d = best?;
    let mut refined = d as f64;
    if d > 0 && d < max_d {
        let (cm, cp) = (costs(d - 1), costs(d + 1));
        if cm.is_finite() && cp.is_finite() {
            let denom = cm - 2.0 * best_cost + cp;
            if denom > 0.0 {
                refined += (0.5 * (cm - cp) / denom).clamp(-0.5, 0.5);
            }
        }
    }
    Some(refined)
}

pub fn match_gray(left: &GrayImage, right: &GrayImage, rig: &StereoRig) -> Result<DisparityMap> {
    rig.validate()?;
    if left.width != right.width || left.height != right.height {
        return Err(Error::invalid(format!(
            "stereo images differ in size: {}x{} vs {}x{}",
            left.width, left.height, right.width, right.height
        )));
    }
    let (w, h) = (left.width, left.height);
    let max_d = rig.max_disparity.min(w.saturating_sub(1));
    let r = rig.block_radius;
    let volume = cost_volume(left, right, r, max_d);

    // Right-view disparity at (u', v): cost of matching R(u') with L(u' + d).
    let mut right_disp = vec![f64::NAN; w * h];
    for v in 0..h {
        for u in 0..w {
            let costs = |d: usize| {
                if u + d < w {
                    volume[d][v * w + u + d]
                } else {
                    f64::INFINITY
                }
            };
            if let Some(d) = best_disparity(costs, max_d) {
                right_disp[v * w + u] = d;
            }
        }
    }

    let mut values = vec![0.0; w * h];
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            let Some(d) = best_disparity(|d| volume[d][i], max_d) else {
                continue;
            };
            if d <= 0.0 {
                continue;
            }
            let ur = u as f64 - d;
            let ur = ur.round();
            if ur < 0.0 {
                continue;
            }
            let dr = right_disp[v * w + ur as usize];
            if dr.is_nan() || (d - dr).abs() > rig.lr_threshold {
                continue;
            }
            values[i] = d;
        }
    }
    Ok(DisparityMap {
        width: w,
        height: h,
        values,
    })
}

/// Block matching on RGB images via their luma.
pub fn match_pair(left: &Image, right: &Image, rig: &StereoRig) -> Result<DisparityMap> {
    if left.width != right.width || left.height != right.height {
        return Err(Error::invalid("stereo images differ in size"));
    }
    match_gray(&left.to_gray(), &right.to_gray(), rig)
}

pub fn disparity_to_depth(dp: &DisparityMap, rig: &StereoRig, z_max: f64) -> DepthMap {
    let fb = rig.intrinsics.focal() * rig.baseline;
    let values = dp
        .values
        .iter()
        .map(|&d| {
            if d > 0.0 {
                let z = fb / d;
                if z <= z_max {
                    z
                } else {
                    0.0
                }
            } else {
                0.0
            }
        })
        .collect();
    DepthMap {
        width: dp.width,
        height: dp.height,
        kind: DepthKind::Dense,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::mix64;

    fn rig(w: usize, h: usize, f: f64, b: f64) -> StereoRig {
        StereoRig::new(CameraIntrinsics::centered(f, w, h).unwrap(), b).unwrap()
    }

    /// Random dyadic texture so offsets and differences stay exact.
    fn texture(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut g = GrayImage::new(w, h);
        for (i, p) in g.data.iter_mut().enumerate() {
            *p = (mix64(seed ^ i as u64) % 256) as f64 / 512.0;
        }
        g
    }

    fn shifted(src: &GrayImage, shift: usize) -> GrayImage {
        let mut out = src.clone();
        for v in 0..src.height {
            for u in 0..src.width {
                out.data[v * src.width + u] = src.get((u + shift).min(src.width - 1), v);
            }
        }
        out
    }

    #[test]
    fn identical_images_are_invalid() {
        let g = texture(48, 32, 1);
        let d = match_gray(&g, &g, &rig(48, 32, 50.0, 0.5)).unwrap();
        assert_eq!(d.valid_count(), 0);
    }

    #[test]
    fn pure_shift_recovered() {
        let left = texture(64, 40, 2);
        let right = shifted(&left, 7);
        let mut r = rig(64, 40, 50.0, 0.5);
        r.max_disparity = 20;
        let d = match_gray(&left, &right, &r).unwrap();
        for v in 4..36 {
            for u in 28..60 {
                // Parabola refinement on white noise moves the estimate within the winning pixel.
                let got = d.get(u, v);
                assert!((got - 7.0).abs() <= 0.5, "({u},{v}) -> {got}");
            }
        }
    }

    #[test]
    fn constant_offset_invariance() {
        let left = texture(64, 40, 3);
        let right = shifted(&left, 5);
        let mut r = rig(64, 40, 50.0, 0.5);
        r.max_disparity = 16;
        let a = match_gray(&left, &right, &r).unwrap();
        let add = |g: &GrayImage| GrayImage {
            data: g.data.iter().map(|x| x + 0.25).collect(),
            ..g.clone()
        };
        let b = match_gray(&add(&left), &add(&right), &r).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn size_mismatch_is_error() {
        let r = rig(64, 40, 50.0, 0.5);
        assert!(match_gray(&texture(64, 40, 1), &texture(60, 40, 1), &r).is_err());
    }

    #[test]
    fn disparity_to_depth_examples() {
        let r = rig(8, 8, 700.0, 0.54);
        let dp = DisparityMap {
            width: 3,
            height: 1,
            values: vec![7.0, 0.0, -1.0],
        };
        let d = disparity_to_depth(&dp, &r, 120.0);
        assert!((d.values[0] - 54.0).abs() < 1e-12);
        assert_eq!(&d.values[1..], &[0.0, 0.0]);

        let r = rig(8, 8, 700.0, 0.5);
        let dp = DisparityMap {
            width: 1,
            height: 1,
            values: vec![2.5],
        };
        assert_eq!(disparity_to_depth(&dp, &r, 120.0).values[0], 0.0);
    }

    #[test]
    fn depth_strictly_decreasing_in_disparity() {
        let r = rig(8, 8, 700.0, 0.5);
        let dp = DisparityMap {
            width: 100,
            height: 1,
            values: (1..=100).map(|i| i as f64 * 0.37).collect(),
        };
        let d = disparity_to_depth(&dp, &r, f64::INFINITY);
        assert!(d.values.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn analytic_round_trip_exact() {
        let r = rig(8, 8, 700.0, 0.5);
        for z in [2.0, 5.0, 20.0, 40.0, 100.0] {
            let dp = DisparityMap {
                width: 1,
                height: 1,
                values: vec![700.0 * 0.5 / z],
            };
            assert_eq!(disparity_to_depth(&dp, &r, 120.0).values[0], z);
        }
    }

    #[test]
    fn rig_validation() {
        let k = CameraIntrinsics::centered(50.0, 32, 32).unwrap();
        assert!(StereoRig::new(k, 0.0).is_err());
        let mut r = StereoRig::new(k, 0.5).unwrap();
        r.block_radius = 0;
        assert!(r.validate().is_err());
    }
}

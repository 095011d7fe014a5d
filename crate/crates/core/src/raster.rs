//! Image-shaped containers shared across the pipeline.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthKind {
    Sparse,
    Dense,
}

/// Per-pixel metric depth in meters, row-major. Exactly `0.0` marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub kind: DepthKind,
    pub values: Vec<f64>,
}

impl DepthMap {
    pub fn zeros(width: usize, height: usize, kind: DepthKind) -> Self {
        Self {
            width,
            height,
            kind,
            values: vec![0.0; width * height],
        }
    }

    pub fn from_values(width: usize, height: usize, kind: DepthKind, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::invalid(format!(
                "depth map {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("depth values must be finite and >= 0, found {v}")));
        }
        Ok(Self {
            width,
            height,
            kind,
            values,
        })
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, d: f64) {
        self.values[v * self.width + u] = d;
    }

    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.get(u, v) > 0.0
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&d| d > 0.0).count()
    }

    pub fn mask(&self) -> Vec<bool> {
        self.values.iter().map(|&d| d > 0.0).collect()
    }

    /// Invalidates every pixel deeper than `cap`.
    pub fn capped(&self, cap: f64) -> DepthMap {
        let mut out = self.clone();
        for d in &mut out.values {
            if *d > cap {
                *d = 0.0;
            }
        }
        out
    }

    pub fn same_shape(&self, other: &DepthMap) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Three-channel image with intensities in `[0, 1]`, interleaved RGB, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    #[inline]
    pub fn pixel(&self, u: usize, v: usize) -> [f64; 3] {
        let i = 3 * (v * self.width + u);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, u: usize, v: usize, rgb: [f64; 3]) {
        let i = 3 * (v * self.width + u);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Luma with weights 0.299, 0.587, 0.114.
    pub fn to_gray(&self) -> GrayImage {
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect();
        GrayImage {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Planar `[3, H, W]` layout for the network input.
    pub fn to_planar(&self) -> Vec<f64> {
        let n = self.width * self.height;
        let mut out = vec![0.0; 3 * n];
        for (i, p) in self.data.chunks_exact(3).enumerate() {
            out[i] = p[0];
            out[n + i] = p[1];
            out[2 * n + i] = p[2];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_and_wrong_length() {
        assert!(DepthMap::from_values(2, 1, DepthKind::Dense, vec![1.0, -1.0]).is_err());
        assert!(DepthMap::from_values(2, 2, DepthKind::Dense, vec![1.0]).is_err());
        assert!(DepthMap::from_values(1, 1, DepthKind::Dense, vec![f64::NAN]).is_err());
    }

    #[test]
    fn cap_invalidates_far_pixels() {
        let d = DepthMap::from_values(3, 1, DepthKind::Sparse, vec![10.0, 90.0, 0.0]).unwrap();
        assert_eq!(d.capped(80.0).values, vec![10.0, 0.0, 0.0]);
    }

    #[test]
    fn luma_weights() {
        let mut img = Image::new(1, 1);
        img.set_pixel(0, 0, [1.0, 0.0, 0.0]);
        assert!((img.to_gray().get(0, 0) - 0.299).abs() < 1e-15);
        img.set_pixel(0, 0, [1.0, 1.0, 1.0]);
        assert!((img.to_gray().get(0, 0) - 1.0).abs() < 1e-12);
    }
}

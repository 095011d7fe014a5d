//! Random resize and aligned crop.
//!
//! The image is resized bilinearly by `s`; depth labels are resized with
//! nearest sampling and divided by `s`. Holding the focal length fixed while
//! dividing depth by `s` gives the same canonical-space depth as scaling the
//! focal length by `s`, so `f_gt` of an augmented sample is the source focal.

use crate::error::{Error, Result};
use crate::geom::CameraIntrinsics;
use crate::raster::{DepthMap, Image};
use crate::rng::Stream;
use crate::simdata::{DatasetTag, SampleRecord};

/// Network-ready sample: labels in the acquisition camera of focal `f_gt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub image: Image,
    pub sparse: DepthMap,
    pub dense: Option<DepthMap>,
    pub f_gt: f64,
    pub tag: DatasetTag,
}

impl TrainSample {
    pub fn from_record(r: &SampleRecord) -> Self {
        Self {
            image: r.image.clone(),
            sparse: r.sparse.clone(),
            dense: r.dense.clone(),
            f_gt: r.intrinsics.focal(),
            tag: r.dataset_tag,
        }
    }
}

/// The resize and crop drawn for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub scale: f64,
    pub resized_width: usize,
    pub resized_height: usize,
    pub x0: usize,
    pub y0: usize,
    pub crop: usize,
}

impl AugmentParams {
    /// Draws `s ~ U[lo, hi]` and a crop origin. The scale is raised if needed
    /// so the resized image still covers the crop.
    pub fn draw(width: usize, height: usize, range: [f64; 2], crop: usize, rng: &mut Stream) -> Result<Self> {
        if width < crop || height < crop {
            return Err(Error::invalid(format!("{width}x{height} image is smaller than crop {crop}")));
        }
        let min_scale = crop as f64 / width.min(height) as f64;
        let scale = rng.range(range[0], range[1]).max(min_scale);
        let rw = ((width as f64 * scale).round() as usize).max(crop);
        let rh = ((height as f64 * scale).round() as usize).max(crop);
        let x0 = rng.below(rw - crop + 1);
        let y0 = rng.below(rh - crop + 1);
        Ok(Self {
            scale,
            resized_width: rw,
            resized_height: rh,
            x0,
            y0,
            crop,
        })
    }

    /// Intrinsics of the augmented view.
    pub fn intrinsics(&self, k: &CameraIntrinsics) -> CameraIntrinsics {
        k.scaled(self.scale, self.resized_width, self.resized_height)
            .cropped(self.x0, self.y0, self.crop, self.crop)
    }

    /// Source coordinate of output pixel `i` along an axis offset by `origin`.
    fn source(&self, i: usize, origin: usize) -> f64 {
        (i + origin) as f64 / self.scale + 0.5 / self.scale - 0.5
    }
}

/// Bilinear sample with edge clamping.
fn bilinear(img: &Image, x: f64, y: f64) -> [f64; 3] {
    let x = x.clamp(0.0, (img.width - 1) as f64);
    let y = y.clamp(0.0, (img.height - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(img.width - 1), (y0 + 1).min(img.height - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let (a, b, c, d) = (img.pixel(x0, y0), img.pixel(x1, y0), img.pixel(x0, y1), img.pixel(x1, y1));
    std::array::from_fn(|i| (a[i] * (1.0 - fx) + b[i] * fx) * (1.0 - fy) + (c[i] * (1.0 - fx) + d[i] * fx) * fy)
}

pub fn resize_crop_image(img: &Image, p: &AugmentParams) -> Image {
    let mut out = Image::new(p.crop, p.crop);
    for v in 0..p.crop {
        let y = p.source(v, p.y0);
        for u in 0..p.crop {
            out.set_pixel(u, v, bilinear(img, p.source(u, p.x0), y));
        }
    }
    out
}

/// Nearest resize and crop; valid depths are divided by the scale.
pub fn resize_crop_depth(d: &DepthMap, p: &AugmentParams) -> DepthMap {
    let mut out = DepthMap::zeros(p.crop, p.crop, d.kind);
    let near = |x: f64, n: usize| (x.round().max(0.0) as usize).min(n - 1);
    for v in 0..p.crop {
        let sv = near(p.source(v, p.y0), d.height);
        for u in 0..p.crop {
            let z = d.get(near(p.source(u, p.x0), d.width), sv);
            if z > 0.0 {
                out.set(u, v, z / p.scale);
            }
        }
    }
    out
}

pub fn apply(sample: &TrainSample, p: &AugmentParams) -> TrainSample {
    TrainSample {
        image: resize_crop_image(&sample.image, p),
        sparse: resize_crop_depth(&sample.sparse, p),
        dense: sample.dense.as_ref().map(|d| resize_crop_depth(d, p)),
        f_gt: sample.f_gt,
        tag: sample.tag,
    }
}

pub fn augment(sample: &TrainSample, range: [f64; 2], crop: usize, rng: &mut Stream) -> Result<TrainSample> {
    let p = AugmentParams::draw(sample.image.width, sample.image.height, range, crop, rng)?;
    Ok(apply(sample, &p))
}

/// Centre crop without resizing, for evaluation at training resolution.
pub fn center_crop(sample: &TrainSample, crop: usize) -> Result<TrainSample> {
    let (w, h) = (sample.image.width, sample.image.height);
    if w < crop || h < crop {
        return Err(Error::invalid(format!("{w}x{h} image is smaller than crop {crop}")));
    }
    let p = AugmentParams {
        scale: 1.0,
        resized_width: w,
        resized_height: h,
        x0: (w - crop) / 2,
        y0: (h - crop) / 2,
        crop,
    };
    Ok(apply(sample, &p))
}

//! File formats: PFM depth, binary PPM/PGM images, text point clouds,
//! TOML calibration and run manifests.
//!
//! PFM stores 32-bit floats, so depth written to disk is rounded to `f32`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geom::{CameraIntrinsics, RigidTransform};
use crate::raster::{DepthKind, DepthMap, GrayImage, Image};
use crate::simdata::{DatasetTag, SampleRecord};

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Whitespace-separated header tokens, skipping `#` comments. Returns the
/// tokens and the offset just past the single whitespace byte that ends the
/// last one.
fn header_tokens(bytes: &[u8], count: usize) -> Option<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return None;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    (i < bytes.len()).then_some((tokens, i + 1))
}

fn dims(w: &str, h: &str) -> Option<(usize, usize)> {
    let (w, h) = (w.parse().ok()?, h.parse().ok()?);
    (w > 0 && h > 0).then_some((w, h))
}

// PFM

/// Single-channel little-endian PFM, rows stored bottom to top.
pub fn encode_pfm(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(width * height * 4);
    for v in (0..height).rev() {
        for &x in &values[v * width..(v + 1) * width] {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

/// Decodes a single-channel PFM of either byte order into top-to-bottom rows.
pub fn decode_pfm(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<f64>), String> {
    let (tok, off) = header_tokens(bytes, 4).ok_or("truncated PFM header")?;
    match tok[0].as_str() {
        "Pf" => {}
        "PF" => return Err("three-channel PFM is not a depth map".into()),
        m => return Err(format!("bad PFM magic `{m}`")),
    }
    let (w, h) = dims(&tok[1], &tok[2]).ok_or("bad PFM dimensions")?;
    let scale: f64 = tok[3].parse().map_err(|_| format!("bad PFM scale `{}`", tok[3]))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(format!("bad PFM scale `{scale}`"));
    }
    let little = scale < 0.0;
    let body = &bytes[off..];
    if body.len() != w * h * 4 {
        return Err(format!("PFM body has {} bytes, expected {}", body.len(), w * h * 4));
    }
    let mut values = vec![0.0; w * h];
    for (i, c) in body.chunks_exact(4).enumerate() {
        let b = [c[0], c[1], c[2], c[3]];
        let x = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (row, col) = (i / w, i % w);
        values[(h - 1 - row) * w + col] = x as f64;
    }
    Ok((w, h, values))
}

pub fn write_pfm(path: impl AsRef<Path>, depth: &DepthMap) -> Result<()> {
    write(path.as_ref(), &encode_pfm(depth.width, depth.height, &depth.values))
}

/// Reads a depth map; non-finite and negative values become invalid (0).
pub fn read_pfm(path: impl AsRef<Path>, kind: DepthKind) -> Result<DepthMap> {
    let path = path.as_ref();
    let (w, h, mut values) = decode_pfm(&read(path)?).map_err(|e| Error::parse(path, e))?;
    values.iter_mut().filter(|d| !(d.is_finite() && **d > 0.0)).for_each(|d| *d = 0.0);
    DepthMap::from_values(w, h, kind, values)
}

// PPM / PGM

fn quantize(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|&x| quantize(x)));
    out
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|&x| quantize(x)));
    out
}

/// Decodes binary P6 or P5 with maxval up to 255. Gray input is replicated
/// into three channels.
pub fn decode_pnm(bytes: &[u8]) -> std::result::Result<Image, String> {
    let (tok, off) = header_tokens(bytes, 4).ok_or("truncated PNM header")?;
    let channels = match tok[0].as_str() {
        "P6" => 3,
        "P5" => 1,
        m => return Err(format!("unsupported PNM magic `{m}`; expected P6 or P5")),
    };
    let (w, h) = dims(&tok[1], &tok[2]).ok_or("bad PNM dimensions")?;
    let maxval: u32 = tok[3].parse().map_err(|_| "bad PNM maxval")?;
    if !(1..=255).contains(&maxval) {
        return Err(format!("maxval {maxval} is not supported"));
    }
    let body = &bytes[off..];
    if body.len() != w * h * channels {
        return Err(format!("PNM body has {} bytes, expected {}", body.len(), w * h * channels));
    }
    let m = maxval as f64;
    let data = if channels == 3 {
        body.iter().map(|&b| b as f64 / m).collect()
    } else {
        body.iter().flat_map(|&b| [b as f64 / m; 3]).collect()
    };
    Ok(Image { width: w, height: h, data })
}

pub fn write_ppm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    write(path.as_ref(), &encode_ppm(img))
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    write(path.as_ref(), &encode_pgm(img))
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    decode_pnm(&read(path)?).map_err(|e| Error::parse(path, e))
}

// Point clouds

/// Header `n_points frame`, then one `x y z` line per point. Rust's float
/// formatting is shortest-round-trip decimal, so the text is lossless.
pub fn format_cloud(cloud: &PointCloud) -> String {
    let mut s = format!("{} {}\n", cloud.len(), cloud.frame);
    for p in &cloud.points {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    s
}

pub fn parse_cloud(text: &str) -> std::result::Result<PointCloud, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or("empty point cloud file")?;
    let mut head = header.split_whitespace();
    let n: usize = head.next().and_then(|t| t.parse().ok()).ok_or("header must start with the point count")?;
    let frame = head.next().ok_or("header is missing the frame name")?;
    if head.next().is_some() {
        return Err("header has extra fields".into());
    }
    let mut points = Vec::with_capacity(n);
    for (i, line) in lines.enumerate() {
        let xyz: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format!("point {i}: {e}"))?;
        if xyz.len() != 3 {
            return Err(format!("point {i} has {} coordinates", xyz.len()));
        }
        points.push(Vector3::new(xyz[0], xyz[1], xyz[2]));
    }
    if points.len() != n {
        return Err(format!("header declares {n} points, found {}", points.len()));
    }
    PointCloud::new(points, frame).map_err(|e| e.to_string())
}

pub fn write_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    write(path.as_ref(), format_cloud(cloud).as_bytes())
}

pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    parse_cloud(&read_text(path)?).map_err(|e| Error::parse(path, e))
}

// Calibration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtrinsicEntry {
    pub from: String,
    pub to: String,
    /// Row-major `[R | t]`.
    pub matrix: [f64; 12],
}

/// Camera intrinsics plus one extrinsic per sensor.
///
/// ```toml
/// fx = 60.0
/// fy = 60.0
/// cx = 40.0
/// cy = 40.0
/// width = 80
/// height = 80
///
/// [[extrinsics]]
/// from = "lidar0"
/// to = "camera"
/// matrix = [1.0, 0.0, 0.0, 0.0,  0.0, 1.0, 0.0, 0.0,  0.0, 0.0, 1.0, 0.0]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub extrinsics: Vec<ExtrinsicEntry>,
}

impl Calibration {
    pub fn new(k: &CameraIntrinsics, extrinsics: &[RigidTransform]) -> Self {
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            extrinsics: extrinsics
                .iter()
                .map(|t| ExtrinsicEntry {
                    from: t.from_frame.clone(),
                    to: t.to_frame.clone(),
                    matrix: t.to_row_major_3x4(),
                })
                .collect(),
        }
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
    }

    pub fn transforms(&self) -> Result<Vec<RigidTransform>> {
        self.extrinsics
            .iter()
            .map(|e| RigidTransform::from_row_major_3x4(&e.matrix, &e.from, &e.to))
            .collect()
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let c: Self = toml::from_str(text).map_err(|e| e.message().to_string())?;
        c.intrinsics().map_err(|e| e.to_string())?;
        c.transforms().map_err(|e| e.to_string())?;
        Ok(c)
    }

    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&read_text(path)?).map_err(|e| Error::parse(path, e))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write(path.as_ref(), self.to_text()?.as_bytes())
    }
}

// Manifests

pub const MANIFEST_NAME: &str = "manifest.txt";

/// FNV-1a over the bytes, as 16 hex digits.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSample {
    pub id: String,
    pub dataset_tag: DatasetTag,
    pub focal: f64,
}

/// One per artifact directory. Everything except `wall_time_s` is a pure
/// function of the inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub version: String,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<ManifestSample>,
}

impl RunManifest {
    pub fn new(command: &str, config_text: &str, seed: u64) -> Self {
        Self {
            command: command.into(),
            config_hash: content_hash(config_text.as_bytes()),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").into(),
            wall_time_s: 0.0,
            samples: Vec::new(),
        }
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::invalid(e.to_string()))?;
        write(&dir.as_ref().join(MANIFEST_NAME), text.as_bytes())
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_NAME);
        toml::from_str(&read_text(&path)?).map_err(|e| Error::parse(&path, e.message().to_string()))
    }
}

// Dataset directories

pub const CALIB_NAME: &str = "calib.txt";

/// Writes `NNNN.ppm`, `NNNN.sparse.pfm`, `NNNN.dense.pfm` when present,
/// `NNNN.exact.pfm` when present, and `calib.txt`. Records must share one
/// camera. Returns the manifest entries and the written file names.
pub fn write_dataset(
    dir: impl AsRef<Path>,
    records: &[SampleRecord],
    first_index: usize,
    extrinsics: &[RigidTransform],
) -> Result<(Vec<ManifestSample>, Vec<String>)> {
    let dir = dir.as_ref();
    let k = records.first().ok_or_else(|| Error::invalid("no records to write"))?.intrinsics;
    if records.iter().any(|r| r.intrinsics != k) {
        return Err(Error::invalid("records in one dataset directory must share intrinsics"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut samples = Vec::with_capacity(records.len());
    let mut files = vec![CALIB_NAME.to_string()];
    Calibration::new(&k, extrinsics).write(dir.join(CALIB_NAME))?;
    for (i, r) in records.iter().enumerate() {
        let id = format!("{:04}", first_index + i);
        let mut put = |name: String, res: Result<()>| -> Result<()> {
            res?;
            files.push(name);
            Ok(())
        };
        let name = format!("{id}.ppm");
        put(name.clone(), write_ppm(dir.join(&name), &r.image))?;
        let name = format!("{id}.sparse.pfm");
        put(name.clone(), write_pfm(dir.join(&name), &r.sparse))?;
        if let Some(d) = &r.dense {
            let name = format!("{id}.dense.pfm");
            put(name.clone(), write_pfm(dir.join(&name), d))?;
        }
        if let Some(d) = &r.exact {
            let name = format!("{id}.exact.pfm");
            put(name.clone(), write_pfm(dir.join(&name), d))?;
        }
        samples.push(ManifestSample {
            id,
            dataset_tag: r.dataset_tag,
            focal: k.focal(),
        });
    }
    Ok((samples, files))
}

/// Loads every sample listed in the directory's manifest.
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let dir = dir.as_ref();
    let manifest = RunManifest::read(dir)?;
    if manifest.samples.is_empty() {
        return Err(Error::parse(dir.join(MANIFEST_NAME), "manifest lists no samples"));
    }
    let k = Calibration::read(dir.join(CALIB_NAME))?.intrinsics()?;
    manifest
        .samples
        .iter()
        .map(|s| {
            let image = read_image(dir.join(format!("{}.ppm", s.id)))?;
            let sparse = read_pfm(dir.join(format!("{}.sparse.pfm", s.id)), DepthKind::Sparse)?;
            let dense = match s.dataset_tag {
                DatasetTag::DenseAndSparse => Some(read_pfm(dir.join(format!("{}.dense.pfm", s.id)), DepthKind::Dense)?),
                DatasetTag::SparseOnly => None,
            };
            let exact_path = dir.join(format!("{}.exact.pfm", s.id));
            let exact = if exact_path.exists() {
                Some(read_pfm(&exact_path, DepthKind::Dense)?)
            } else {
                None
            };
            let shapes = [Some(&sparse), dense.as_ref(), exact.as_ref()];
            if (image.width, image.height) != (k.width, k.height)
                || shapes.iter().flatten().any(|d| (d.width, d.height) != (k.width, k.height))
            {
                return Err(Error::parse(dir, format!("sample {} does not match the calibrated size", s.id)));
            }
            Ok(SampleRecord {
                image,
                sparse,
                dense,
                exact,
                intrinsics: k,
                dataset_tag: s.dataset_tag,
            })
        })
        .collect()
}

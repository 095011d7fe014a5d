//! Small convolutional encoder-decoder predicting positive depth in the mean
//! canonical camera space.
//!
//! Each encoder level is a stride-2 3×3 convolution with ReLU. The decoder
//! mirrors it: nearest ×2 upsampling, a 3×3 convolution with ReLU, and an
//! additive skip from the encoder level of the same resolution. A final 3×3
//! head maps to one channel, and `softplus(·)·depth_scale` makes it positive.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Encoder widths; each level halves the resolution.
    pub widths: Vec<usize>,
    /// Meters; the output is `softplus(head)·depth_scale`.
    pub depth_scale: f64,
    /// Appends a normalized row-index channel to the image.
    pub row_channel: bool,
    /// Starts the head at zero, so the initial prediction is `ln 2·depth_scale` everywhere.
    pub zero_head: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            widths: vec![16, 32],
            depth_scale: 30.0,
            row_channel: false,
            zero_head: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config(format!("bad encoder widths {:?}", self.widths)));
        }
        if self.widths[0] < 2 {
            return Err(Error::Config("first encoder width must be >= 2".into()));
        }
        if !(self.depth_scale > 0.0 && self.depth_scale.is_finite()) {
            return Err(Error::Config(format!("depth_scale must be positive, got {}", self.depth_scale)));
        }
        Ok(())
    }

    fn in_channels(&self) -> usize {
        3 + usize::from(self.row_channel)
    }

    /// Spatial size must be divisible by this.
    pub fn stride(&self) -> usize {
        1 << self.widths.len()
    }

    /// `(name, [out, in, 3, 3] or [out])` for every parameter, in order.
    fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut conv = |name: String, cin: usize, cout: usize| {
            out.push((format!("{name}.weight"), vec![cout, cin, 3, 3]));
            out.push((format!("{name}.bias"), vec![cout]));
        };
        let w = &self.widths;
        let mut cin = self.in_channels();
        for (i, &c) in w.iter().enumerate() {
            conv(format!("enc{i}"), cin, c);
            cin = c;
        }
        for i in (0..w.len()).rev() {
            let cout = if i == 0 { w[0] / 2 } else { w[i - 1] };
            conv(format!("dec{i}"), w[i], cout);
        }
        conv("head".into(), w[0] / 2, 1);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthNet {
    pub config: ModelConfig,
    pub params: Vec<Param>,
}

/// Parameter handles on one tape, parallel to [`DepthNet::params`].
#[derive(Debug, Clone)]
pub struct Bound {
    pub vars: Vec<Var>,
}

impl DepthNet {
    /// Kaiming fan-in uniform weights, `U(-√(6/fan_in), √(6/fan_in))`, zero biases.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Stream::new(seed);
        let params = config
            .layout()
            .into_iter()
            .map(|(name, shape)| {
                let mut value = Tensor::zeros(&shape);
                let zero = name.ends_with(".bias") || (config.zero_head && name.starts_with("head."));
                if !zero {
                    let fan_in: usize = shape[1..].iter().product();
                    let bound = (6.0 / fan_in as f64).sqrt();
                    for x in value.data_mut() {
                        *x = rng.range(-bound, bound);
                    }
                }
                Param { name, value }
            })
            .collect();
        Ok(Self { config, params })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// One line per layer and the total parameter count.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        for p in &self.params {
            s.push_str(&format!("{:<14} {:?} {}\n", p.name, p.value.shape(), p.value.numel()));
        }
        s.push_str(&format!("total parameters: {}\n", self.parameter_count()));
        s
    }

    pub fn is_encoder(name: &str) -> bool {
        name.starts_with("enc")
    }

    /// Puts the parameters on `tape`; frozen encoder parameters become constants.
    pub fn bind(&self, tape: &mut Tape, freeze_encoder: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if freeze_encoder && Self::is_encoder(&p.name) {
                    tape.constant(p.value.clone())
                } else {
                    tape.leaf(p.value.clone())
                }
            })
            .collect();
        Bound { vars }
    }

    /// Stacks `[H, W, 3]`-interleaved images in `[0, 1]` into the network input.
    pub fn input_tensor(&self, images: &[&crate::raster::Image]) -> Result<Tensor> {
        let first = images.first().ok_or_else(|| Error::invalid("empty batch"))?;
        let (w, h) = (first.width, first.height);
        let s = self.config.stride();
        if w % s != 0 || h % s != 0 || w == 0 || h == 0 {
            return Err(Error::shape("model", format!("{w}x{h} not divisible by {s}")));
        }
        let c = self.config.in_channels();
        let mut data = Vec::with_capacity(images.len() * c * h * w);
        for img in images {
            if (img.width, img.height) != (w, h) {
                return Err(Error::shape("model", "images in a batch differ in size"));
            }
            data.extend(img.to_planar().iter().map(|x| x - 0.5));
            if self.config.row_channel {
                for v in 0..h {
                    let r = (v as f64 + 0.5) / h as f64 - 0.5;
                    data.extend(std::iter::repeat_n(r, w));
                }
            }
        }
        Tensor::new(vec![images.len(), c, h, w], data)
    }

    /// Canonical-space depth `[N, 1, H, W]` for an input built by [`Self::input_tensor`].
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, input: Var) -> Result<Var> {
        let v = &bound.vars;
        let levels = self.config.widths.len();
        let mut feats = Vec::with_capacity(levels);
        let mut h = input;
        for i in 0..levels {
            let y = tape.conv2d(h, v[2 * i], Some(v[2 * i + 1]), 2, 1)?;
            h = tape.relu(y);
            feats.push(h);
        }
        for (j, i) in (0..levels).rev().enumerate() {
            let k = 2 * (levels + j);
            let up = tape.upsample2x(h)?;
            let y = tape.conv2d(up, v[k], Some(v[k + 1]), 1, 1)?;
            h = tape.relu(y);
            if i > 0 {
                h = tape.add(h, feats[i - 1])?;
            }
        }
        let k = 4 * levels;
        let y = tape.conv2d(h, v[k], Some(v[k + 1]), 1, 1)?;
        let y = tape.softplus(y);
        Ok(tape.scale(y, self.config.depth_scale))
    }

    /// Convenience: forward pass without gradients, one `H×W` depth vector per image.
    pub fn predict(&self, images: &[&crate::raster::Image]) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let x = tape.constant(self.input_tensor(images)?);
        let bound = self.bind(&mut tape, true);
        let y = self.forward(&mut tape, &bound, x)?;
        let out = tape.value(y);
        let per = out.numel() / images.len();
        Ok(out.data().chunks(per).map(<[f64]>::to_vec).collect())
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint {
            meta: toml::to_string(&self.config).map_err(|e| Error::Config(e.to_string()))?,
            tensors: self.params.iter().map(|p| (p.name.clone(), p.value.clone())).collect(),
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config: ModelConfig = toml::from_str(&ck.meta).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        let params = config
            .layout()
            .into_iter()
            .map(|(name, shape)| {
                let t = ck
                    .get(&name)
                    .ok_or_else(|| Error::Config(format!("checkpoint lacks parameter `{name}`")))?;
                if t.shape() != shape.as_slice() {
                    return Err(Error::Config(format!("parameter `{name}` has shape {:?}", t.shape())));
                }
                Ok(Param { name, value: t.clone() })
            })
            .collect::<Result<_>>()?;
        Ok(Self { config, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

const MAGIC: &[u8; 8] = b"MCDCKPT\0";
const VERSION: u32 = 1;

/// Versioned container of a text metadata block and named `f64` tensors.
///
/// Layout, all integers little-endian: magic `MCDCKPT\0`; `u32` version;
/// `u32` metadata length and UTF-8 metadata; `u32` tensor count; then per
/// tensor `u32` name length, name, `u32` rank, `u64` per dimension, `u64`
/// element count and that many `f64`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: String,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        b.extend_from_slice(self.meta.as_bytes());
        b.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            b.extend_from_slice(&(name.len() as u32).to_le_bytes());
            b.extend_from_slice(name.as_bytes());
            b.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                b.extend_from_slice(&(d as u64).to_le_bytes());
            }
            b.extend_from_slice(&(t.numel() as u64).to_le_bytes());
            for x in t.data() {
                b.extend_from_slice(&x.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = bytes;
        let bad = |what: &str| Error::parse(path, what.to_string());
        let mut take = |n: usize| -> Result<&[u8]> {
            if r.len() < n {
                return Err(bad("truncated checkpoint"));
            }
            let (head, tail) = r.split_at(n);
            r = tail;
            Ok(head)
        };
        if take(8)? != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
        let u64_at = |b: &[u8]| u64::from_le_bytes(b.try_into().unwrap());
        let version = u32_at(take(4)?);
        if version != VERSION {
            return Err(bad(&format!("unsupported checkpoint version {version}")));
        }
        let n = u32_at(take(4)?) as usize;
        let meta = String::from_utf8(take(n)?.to_vec()).map_err(|_| bad("metadata is not UTF-8"))?;
        let count = u32_at(take(4)?) as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let n = u32_at(take(4)?) as usize;
            let name = String::from_utf8(take(n)?.to_vec()).map_err(|_| bad("tensor name is not UTF-8"))?;
            let rank = u32_at(take(4)?) as usize;
            let shape = (0..rank).map(|_| Ok(u64_at(take(8)?) as usize)).collect::<Result<Vec<_>>>()?;
            let len = u64_at(take(8)?) as usize;
            let raw = take(len.checked_mul(8).ok_or_else(|| bad("tensor too large"))?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            let t = Tensor::new(shape, data).map_err(|e| bad(&e.to_string()))?;
            tensors.push((name, t));
        }
        if !r.is_empty() {
            return Err(bad("trailing bytes after checkpoint"));
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

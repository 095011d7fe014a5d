//! Synthetic stand-ins for the two training sources: a LiDAR-only orchard
//! rig (three side-by-side 32-line sensors) and a stereo rig that also
//! carries one LiDAR.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::lidar::{camera_from_lidar_rotation, LidarPattern, LidarSensor};
use super::{camera_pose, simulate_lidar, stereo_pair, SceneSpec};
use crate::cloud::{self, DEFAULT_Z_MAX, DEFAULT_Z_MIN};
use crate::error::Result;
use crate::geom::{compose, CameraIntrinsics, RigidTransform};
use crate::raster::{DepthMap, Image};
use crate::rng::{mix64, Stream};
use crate::stereo::{self, StereoRig, DEFAULT_DENSE_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetTag {
    SparseOnly,
    DenseAndSparse,
}

impl DatasetTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetTag::SparseOnly => "sparse_only",
            DatasetTag::DenseAndSparse => "dense_and_sparse",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sparse_only" => Some(DatasetTag::SparseOnly),
            "dense_and_sparse" => Some(DatasetTag::DenseAndSparse),
            _ => None,
        }
    }
}

/// One training/evaluation sample. `dense` is present iff the tag is
/// `DenseAndSparse`; `exact` is the simulator's ground truth and is only
/// used for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub image: Image,
    pub sparse: DepthMap,
    pub dense: Option<DepthMap>,
    pub exact: Option<DepthMap>,
    pub intrinsics: CameraIntrinsics,
    pub dataset_tag: DatasetTag,
}

/// Sensor placement for one data source, in camera coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub tag: DatasetTag,
    pub focal: f64,
    /// `(position in camera frame, yaw in degrees, positive to the left)` per LiDAR.
    pub lidars: Vec<([f64; 3], f64)>,
    pub lidar_pattern: LidarPattern,
    /// Stereo baseline in meters; dense labels are only produced when set.
    pub baseline: Option<f64>,
    pub max_disparity: usize,
    pub block_radius: usize,
    /// Left-right consistency tolerance in pixels.
    pub lr_threshold: f64,
}

impl DatasetProfile {
    /// Three 32-line LiDARs: one above the camera and two side-mounted.
    pub fn orchard(focal: f64) -> Self {
        Self {
            tag: DatasetTag::SparseOnly,
            focal,
            lidars: vec![([0.0, -0.25, -0.1], 0.0), ([-0.6, -0.1, -0.3], 25.0), ([0.6, -0.1, -0.3], -25.0)],
            lidar_pattern: LidarPattern::default(),
            baseline: None,
            max_disparity: 64,
            block_radius: 3,
            lr_threshold: 1.0,
        }
    }

    /// Rectified stereo pair plus one roof LiDAR.
    pub fn stereo(focal: f64, baseline: f64) -> Self {
        Self {
            tag: DatasetTag::DenseAndSparse,
            focal,
            lidars: vec![([0.0, -0.3, 0.0], 0.0)],
            lidar_pattern: LidarPattern::default(),
            baseline: Some(baseline),
            max_disparity: 64,
            block_radius: 2,
            lr_threshold: 0.5,
        }
    }

    /// LiDAR-to-camera extrinsics, frames `lidar{i}` → `camera`.
    pub fn extrinsics(&self) -> Vec<RigidTransform> {
        self.lidars
            .iter()
            .enumerate()
            .map(|(i, (pos, yaw))| {
                let yaw_rot = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), yaw.to_radians());
                let rotation: Matrix3<f64> = camera_from_lidar_rotation() * yaw_rot.matrix();
                RigidTransform {
                    rotation,
                    translation: Vector3::from(*pos),
                    from_frame: format!("lidar{i}"),
                    to_frame: "camera".into(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub width: usize,
    pub height: usize,
    pub supersample: usize,
    pub sparse_cap: f64,
    pub dense_cap: f64,
    pub scene: SceneSpec,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 96,
            supersample: 2,
            sparse_cap: DEFAULT_Z_MAX,
            dense_cap: DEFAULT_DENSE_CAP,
            scene: SceneSpec::default(),
        }
    }
}

impl SimConfig {
    pub fn intrinsics(&self, profile: &DatasetProfile) -> Result<CameraIntrinsics> {
        CameraIntrinsics::centered(profile.focal, self.width, self.height)
    }
}

/// Renders sample `index` of a split. Scene layout and camera placement are
/// drawn from a stream seeded by `(seed, index)`.
pub fn generate_record(config: &SimConfig, profile: &DatasetProfile, seed: u64, index: usize) -> Result<SampleRecord> {
    let mut rng = Stream::new(mix64(seed ^ mix64(index as u64 ^ 0xda7a)));
    let base = &config.scene;
    let spec = SceneSpec {
        seed: rng.next_u64(),
        row_spacing: base.row_spacing * rng.range(0.85, 1.3),
        trunk_spacing: base.trunk_spacing * rng.range(0.8, 1.4),
        trunk_height: base.trunk_height * rng.range(0.8, 1.3),
        canopy_radius: base.canopy_radius * rng.range(0.75, 1.3),
        ..base.clone()
    };
    let scene = spec.build()?;
    let lateral = rng.range(-0.4, 0.4);
    let height = rng.range(1.2, 1.8);
    let yaw = rng.range(-0.12, 0.12);
    let pitch = rng.range(0.02, 0.12);
    let pose = camera_pose(Vector3::new(lateral, height, 0.0), yaw, pitch);
    let k = config.intrinsics(profile)?;

    let (image, exact) = scene.render(&k, &pose, config.supersample);

    let extrinsics = profile.extrinsics();
    let sensors: Vec<LidarSensor> = extrinsics
        .iter()
        .map(|e| Ok(LidarSensor::new(compose(&pose, e)?, profile.lidar_pattern)))
        .collect::<Result<_>>()?;
    let clouds = simulate_lidar(&scene, &sensors);
    let merged = cloud::merge(&clouds, &extrinsics)?;
    let sparse = cloud::project(&merged, &k, DEFAULT_Z_MIN, config.sparse_cap)?;

    let dense = match profile.baseline {
        Some(b) => {
            // Center the pair so the left camera sits at `pose`.
            let center = RigidTransform {
                translation: pose.apply(&Vector3::new(b / 2.0, 0.0, 0.0)),
                ..pose.clone()
            };
            let (left, right) = stereo_pair(&scene, &k, &center, b, config.supersample)?;
            let rig = StereoRig {
                intrinsics: k,
                baseline: b,
                max_disparity: profile.max_disparity,
                block_radius: profile.block_radius,
                lr_threshold: profile.lr_threshold,
            };
            let disparity = stereo::match_pair(&left, &right, &rig)?;
            Some(stereo::disparity_to_depth(&disparity, &rig, config.dense_cap))
        }
        None => None,
    };

    Ok(SampleRecord {
        image,
        sparse,
        dense,
        exact: Some(exact),
        intrinsics: k,
        dataset_tag: profile.tag,
    })
}

pub fn generate_split(
    config: &SimConfig,
    profile: &DatasetProfile,
    seed: u64,
    range: std::ops::Range<usize>,
) -> Result<Vec<SampleRecord>> {
    range.map(|i| generate_record(config, profile, seed, i)).collect()
}

//! Simulates two LiDARs on an orchard scene, merges their clouds in the
//! camera frame and projects them to a sparse depth map.

use mcdepth::cloud::{merge, project};
use mcdepth::geom::{compose, CameraIntrinsics, RigidTransform};
use mcdepth::simdata::{camera_from_lidar_rotation, camera_pose, simulate_lidar, LidarPattern, LidarSensor, SceneSpec};
use nalgebra::Vector3;

fn main() -> mcdepth::Result<()> {
    let scene = SceneSpec { seed: 11, ..SceneSpec::default() }.build()?;
    let k = CameraIntrinsics::centered(300.0, 320, 240)?;
    let cam = camera_pose(Vector3::new(0.0, 1.5, 0.0), 0.0, 0.06);

    let mut extrinsics = Vec::new();
    let mut sensors = Vec::new();
    for (i, x) in [-0.4, 0.4].into_iter().enumerate() {
        let frame = format!("lidar{i}");
        let e = RigidTransform::new(camera_from_lidar_rotation(), Vector3::new(x, -0.2, 0.0), frame.as_str(), "camera")?;
        sensors.push(LidarSensor::new(compose(&cam, &e)?, LidarPattern::default()));
        extrinsics.push(e);
    }
    let clouds = simulate_lidar(&scene, &sensors);
    for c in &clouds {
        println!("{}: {} returns", c.frame, c.len());
    }
    let merged = merge(&clouds, &extrinsics)?;
    let sparse = project(&merged, &k, 0.1, 80.0)?;
    let n = sparse.valid_count();
    println!(
        "{} points in {} frame -> {n} labelled pixels ({:.2}% of the image)",
        merged.len(),
        merged.frame,
        100.0 * n as f64 / (k.width * k.height) as f64
    );
    Ok(())
}

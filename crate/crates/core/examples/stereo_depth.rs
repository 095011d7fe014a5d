//! Renders a stereo pair of an orchard row and recovers depth by block
//! matching, compared against the renderer's exact depth.

use mcdepth::geom::CameraIntrinsics;
use mcdepth::metrics::evaluate;
use mcdepth::simdata::{camera_pose, render, stereo_pair, SceneSpec};
use mcdepth::stereo::{disparity_to_depth, match_pair, StereoRig};
use nalgebra::Vector3;

fn main() -> mcdepth::Result<()> {
    let scene = SceneSpec { seed: 4, ..SceneSpec::default() }.build()?;
    let k = CameraIntrinsics::centered(160.0, 160, 120)?;
    let pose = camera_pose(Vector3::new(1.75, 1.5, 0.0), 0.0, 0.08);
    let rig = StereoRig {
        block_radius: 2,
        lr_threshold: 0.5,
        ..StereoRig::new(k, 0.2)?
    };

    let (left, right) = stereo_pair(&scene, &k, &pose, rig.baseline, 2)?;
    let disparity = match_pair(&left, &right, &rig)?;
    let depth = disparity_to_depth(&disparity, &rig, 120.0);
    let (_, exact) = render(&scene, &k, &pose, 2);

    println!("{} of {} pixels passed the left-right check", disparity.valid_count(), k.width * k.height);
    let m = evaluate(&depth, &exact, 120.0)?;
    println!("stereo vs exact: abs_rel {:.4}, rmse {:.3} m, d1 {:.3}", m.abs_rel, m.rmse, m.delta1);
    Ok(())
}

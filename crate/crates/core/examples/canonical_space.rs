//! Depth labels from cameras with different focal lengths mapped into one
//! shared camera and back.

use mcdepth::geom::{from_canonical, mean_focal, to_canonical};
use mcdepth::raster::{DepthKind, DepthMap};

fn main() -> mcdepth::Result<()> {
    let focals = [721.5, 1000.0, 1400.0];
    let space = mean_focal(&focals)?;
    println!("canonical focal f_mc = {:.2}", space.f_mc);

    let label = DepthMap::from_values(3, 1, DepthKind::Sparse, vec![5.0, 0.0, 40.0])?;
    for f in focals {
        let canon = to_canonical(&label, f, &space)?;
        let back = from_canonical(&canon, f, &space)?;
        println!("f = {f:7.1}: canonical {:?}, back {:?}", canon.values, back.values);
    }
    Ok(())
}

//! Standard depth metrics on a prediction against a capped label.

use mcdepth::metrics::{evaluate, render_table, TableRow};
use mcdepth::raster::{DepthKind, DepthMap};

fn main() -> mcdepth::Result<()> {
    let gt = DepthMap::from_values(3, 2, DepthKind::Sparse, vec![2.0, 0.0, 10.0, 25.0, 95.0, 60.0])?;
    let good = DepthMap::from_values(3, 2, DepthKind::Dense, vec![2.1, 3.0, 9.6, 26.0, 90.0, 58.0])?;
    let poor = DepthMap::from_values(3, 2, DepthKind::Dense, vec![3.0, 3.0, 6.0, 40.0, 50.0, 90.0])?;
    let a = evaluate(&good, &gt, 80.0)?;
    let b = evaluate(&poor, &gt, 80.0)?;
    println!("{} valid pixels under the 80 m cap", a.n_valid);
    print!(
        "{}",
        render_table(&[
            TableRow { data: "toy", label: "good", report: &a },
            TableRow { data: "toy", label: "poor", report: &b },
        ])
    );
    Ok(())
}

//! SiLog, its normalized form and the dense-sparse consistency term on a
//! toy prediction, with gradients.

use mcdepth::autodiff::{Tape, Tensor};
use mcdepth::loss::{consistency, silog, DEFAULT_LAMBDA, NORM_EPS};
use mcdepth::raster::{DepthKind, DepthMap};

fn main() -> mcdepth::Result<()> {
    let sparse = DepthMap::from_values(4, 1, DepthKind::Sparse, vec![4.0, 0.0, 0.0, 10.0])?;
    let dense = DepthMap::from_values(4, 1, DepthKind::Dense, vec![4.2, 6.0, 8.1, 9.5])?;

    let mut tape = Tape::new();
    let pred = tape.leaf(Tensor::new(vec![4], vec![5.0, 5.0, 9.0, 9.0])?);
    let l_sp = silog(&mut tape, pred, &sparse, DEFAULT_LAMBDA)?;
    let l_de = silog(&mut tape, pred, &dense, DEFAULT_LAMBDA)?;
    let l_con = consistency(&mut tape, l_sp, l_de, NORM_EPS)?;
    println!("silog sparse {:.6}", tape.scalar(l_sp));
    println!("silog dense  {:.6}", tape.scalar(l_de));
    println!("consistency  {:.6}", tape.scalar(l_con));

    let grads = tape.backward(l_con)?;
    println!("d consistency / d pred = {:?}", grads.wrt(pred).data());
    Ok(())
}

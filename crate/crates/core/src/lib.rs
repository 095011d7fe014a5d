//! Monocular metric-depth training toolkit.

pub mod autodiff;
pub mod cli;
pub mod cloud;
pub mod error;
pub mod experiment;
pub mod geom;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod raster;
pub mod rng;
pub mod simdata;
pub mod stereo;
pub mod train;

pub use error::{Error, Result};

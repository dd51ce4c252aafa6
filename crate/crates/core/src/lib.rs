//! Image segmentation by a small fully convolutional network whose output
//! drives a variational level-set evolution with an optional shape prior,
//! plus the semi-supervised loop that feeds level-set refinements back into
//! the network as training targets.

pub mod data_io;
pub mod error;
pub mod fcn;
pub mod grid;
pub mod levelset;
pub mod metrics;
pub mod sdf;
pub mod shape;
pub mod training;

pub use error::{Error, Result};
pub use grid::{RegularizationParams, ScalarField2D};
pub use fcn::{AdadeltaConfig, FcnModel, LayerSpec};
pub use levelset::{EnergyParams, LevelSetState};
pub use shape::{AffineParams, ShapeContext, ShapeModel};
pub use training::{Sample, TrainConfig};

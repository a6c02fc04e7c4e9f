pub mod circle_map;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod hypothesis;
pub mod koopman;
pub mod noise;
pub mod occupation;
pub mod pair;
pub mod passage;
pub mod poly;
pub mod stats;

pub use circle_map::{distance, wrap, CircleMap, MapBounds, MapSpec};
pub use error::{Error, Result};
pub use noise::{DEFAULT_QUADRATURE_NODES, NoiseQuadrature, NoiseStream, QuadratureKind};
pub use pair::PairState;

pub mod blockmodel;
pub mod clustering;
pub mod distributions;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod ranks;
pub mod rng;
pub mod tolerances;

pub use blockmodel::{BlockModelSpec, Membership, PopulationMatrices};
pub use clustering::{ClusterResult, DimensionMode, DimensionRule, LossReport};
pub use distributions::Distribution;
pub use error::{Error, Result};
pub use experiments::{ExperimentReport, PassFlag, Table};
pub use linalg::{Embedding, OrthogonalMap, SymMatrix};
pub use ranks::{RankMatrix, TieMode};
pub use rng::SeedStream;

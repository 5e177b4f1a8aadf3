pub mod asymptotics;
pub mod exact_moments;
pub mod experiments;
pub mod simulator;
pub mod special;
pub mod weights;

pub use asymptotics::{lil_spec, AsymptoticError, NormalizerKind, RegimeInfo};
pub use exact_moments::{CountKind, MomentError, MomentResult, SeriesOptions};
pub use experiments::{ExperimentConfig, ExperimentError, ExperimentReport, Outcome};
pub use simulator::{OccupancyPath, PathPoint, SimConfig, SimError};
pub use weights::{Family, Regime, WeightError, WeightModel};

//! Monte Carlo laboratory: the two location-scale scenarios with Student-t
//! errors, exact conditional quantiles, integrated squared error, and seeded
//! replication studies of the intermediate and extrapolated estimators.

mod rng;
mod scenario;
mod study;
mod studentt;

pub use rng::{replication_seed, splitmix64, NormalSource, SimRng};
pub use scenario::{generate, Dataset, Scenario};
pub use studentt::{student_t_cdf, student_t_quantile};
pub use study::{
    integrated_squared_error, mise, run_study, CellResult, Estimator, EviSummary, LambdaChoice,
    StudyConfig, StudyReport,
};

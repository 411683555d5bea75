//! Scaling-law analysis over training-run records: loss laws, loss-to-
//! accuracy sigmoids, compute-optimal curves, compute multipliers, optimal
//! filtering rates and batch sizes.

pub mod batch;
pub mod curve;
pub mod filter_law;
pub mod loss_law;
pub mod multiplier;
pub mod optim;
pub mod records;
pub mod sigmoid;
pub mod stats;

pub use batch::{select_batch_size, BatchSizeLaw};
pub use curve::{accuracy_curve, log_grid, loss_curve, ComputeOptimalCurve, CurveKind, CurvePoint};
pub use filter_law::{
    best_observed, fit_optimal_filter_law, FilterLawFit, PowerLawDomain, PowerLawFit,
};
pub use loss_law::{
    fit_loss_law, fit_points, huber_lse_objective, inverse_density_weights, predict_loss, InitGrid,
    LossFitOptions, LossLawFit, LossLawParams, LossPoint, ParamInterval,
};
pub use multiplier::{compute_multiplier, multiplier_matrix, ComputeMultiplier, DEFAULT_BIN_WIDTH};
pub use records::{load_runs, read_runs, write_runs, MetricKind, RunRecord};
pub use sigmoid::{
    accuracy_points, fit_sigmoid, mean_accuracy, predict_accuracy, BenchmarkModel, SigmoidFit,
    SigmoidParams,
};

//! Ensemble statistics, regressions of expansion data and coherence-length maps.

pub mod contour;
pub mod fit;
pub mod lm;
pub mod map;
pub mod stats;

pub use fit::{
    budget_contributions, fit_expansion, fit_noise_budget, BudgetPoint, CurveKind, CurvePoint,
    ExpansionCurve, FitResult,
};
pub use map::{log_grid, scaling_check, ximax_map, Contour, ScalingReport, XiMaxMap, DEFAULT_LEVELS};
pub use stats::{compute_stats, EnsembleStats, StatErrors, StatsOptions, BOOTSTRAP_SEED};

//! Detection quality: empirical ROC curves and their summaries, the
//! baseline detectors, and per-pair comparison reports.

mod methods;
mod roc;

pub use methods::{
    compare, evaluate_method, method_fusion3step, method_interp, method_robust, method_scores,
    method_wc, robust_problem, summarize, Method, MethodOutcome, MethodReport, MethodSettings,
    MethodSummary, Observations, SolverSettings,
};
pub use roc::{auc, diag_distance, roc, roc_from_slices, RocCurve, RocPoint};

mod erf;
mod histogram;
mod metrics;
mod threshold;

pub use erf::{confidence_width, erf, erfc, inverse_erf};
pub use histogram::{emit_histogram, histogram, Histogram};
pub use metrics::{auc_pr, auc_roc, evaluate, fpr_at_95_tpr, MetricsReport};
pub use threshold::{classify, likelihood_threshold, Label, LikelihoodReport, ThresholdSpec};

//! Accelerated evaluation: scenario models fitted from naturalistic traces,
//! importance sampling with a cross-entropy-tuned proposal, and the dynamic
//! vetting verdict built on them.

pub mod ce;
pub mod dynamic;
pub mod estimate;
pub mod model;
pub mod traces;

pub use ce::{cross_entropy_search, CeConfig, CeResult};
pub use dynamic::{
    run_dynamic_vetting, CarFollowingIndicator, DynamicConfig, DynamicError, DynamicReport, PathIndicator,
    ScenarioFamily,
};
pub use estimate::{
    acceleration_factor, crude_mc, is_estimate, Acceleration, Estimate, EvalError, Indicator, Outcome, SeverityFn,
};
pub use model::{Marginal, ModelError, ScenarioModel};
pub use traces::{
    fit_model, generate_traces, read_traces, write_traces, FitConfig, FitError, TraceModelConfig, TraceRecord,
};

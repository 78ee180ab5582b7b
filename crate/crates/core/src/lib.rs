pub mod eval;
pub mod finding;
pub mod ir;
pub mod manifest;
pub mod pipeline;
pub mod sim;
pub mod vetting;
pub mod watchdog;

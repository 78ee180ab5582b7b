//! Closed-loop vehicle simulation: virtual bus, dynamics and episodes.

pub mod bus;
pub mod dynamics;
pub mod episode;
pub mod road;
pub mod scenario;

pub use episode::{
    route_message, run_episode, trajectory_csv, ConfigInvalid, CrashKind, EpisodeConfig, EpisodeResult,
    Intervention, InterventionKind, RoutingOutcome, TrajectorySample,
};
pub use scenario::{Scenario, ScenarioParams};

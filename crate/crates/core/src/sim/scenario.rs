//! Driving scenarios: road, initial ego speed, scripted lead vehicle and
//! traffic-signal schedule.

use serde::{Deserialize, Serialize};

use super::bus::SignalState;
use super::road::{Polyline, Road};

/// Car-following scenario parameters, the quantities drawn from the
/// naturalistic-driving model during accelerated evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// Initial bumper-to-bumper distance, m.
    pub initial_gap: f64,
    /// Initial ego speed, m/s.
    pub ego_speed: f64,
    /// Initial lead speed, m/s.
    pub lead_speed: f64,
    /// Lead braking deceleration once it starts braking, m/s^2 (>= 0).
    pub lead_decel: f64,
    /// Time at which the lead starts braking, s.
    pub decel_onset: f64,
}

impl ScenarioParams {
    pub const DIMENSIONS: [&'static str; 5] =
        ["initial_gap", "ego_speed", "lead_speed", "lead_decel", "decel_onset"];

    pub fn to_vec(&self) -> [f64; 5] {
        [
            self.initial_gap,
            self.ego_speed,
            self.lead_speed,
            self.lead_decel,
            self.decel_onset,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        ScenarioParams {
            initial_gap: v[0],
            ego_speed: v[1],
            lead_speed: v[2],
            lead_decel: v[3],
            decel_onset: v[4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadScript {
    pub initial_gap: f64,
    pub speed: f64,
    pub decel: f64,
    pub onset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub road: Road,
    pub ego_speed: f64,
    pub lead: Option<LeadScript>,
    /// (start time, state) pairs sorted by time; the signal is absent before
    /// the first entry.
    pub signals: Vec<(f64, SignalState)>,
    /// Start with the throttle set to hold the initial speed against drag.
    pub cruise: bool,
}

impl Scenario {
    pub fn car_following(p: &ScenarioParams) -> Self {
        Scenario {
            road: Road::Straight,
            ego_speed: p.ego_speed,
            lead: Some(LeadScript {
                initial_gap: p.initial_gap,
                speed: p.lead_speed,
                decel: p.lead_decel.abs(),
                onset: p.decel_onset,
            }),
            signals: Vec::new(),
            cruise: true,
        }
    }

    pub fn path_following(path: Polyline, ego_speed: f64) -> Self {
        Scenario {
            road: Road::Path(path),
            ego_speed,
            lead: None,
            signals: Vec::new(),
            cruise: true,
        }
    }

    pub fn with_signals(mut self, mut signals: Vec<(f64, SignalState)>) -> Self {
        signals.sort_by(|a, b| a.0.total_cmp(&b.0));
        self.signals = signals;
        self
    }

    pub fn signal_at(&self, t: f64) -> Option<SignalState> {
        self.signals
            .iter()
            .take_while(|(start, _)| *start <= t + 1e-9)
            .last()
            .map(|(_, s)| *s)
    }
}

/// Lead vehicle state along the road's station coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lead {
    pub station: f64,
    pub speed: f64,
    script: LeadScript,
}

impl Lead {
    pub fn new(script: LeadScript, ego_station: f64) -> Self {
        Lead {
            station: ego_station + script.initial_gap,
            speed: script.speed.max(0.0),
            script,
        }
    }

    /// Advances from time `t` to `t + dt`.
    pub fn advance(&mut self, t: f64, dt: f64) {
        let a = if t + 1e-9 >= self.script.onset {
            -self.script.decel
        } else {
            0.0
        };
        self.station += self.speed * dt;
        self.speed = (self.speed + a * dt).max(0.0);
    }
}

//! Runtime safety monitor sitting between apps and actuators.
//!
//! The watchdog predicts time-to-collision from the current gap and closing
//! speed, adjusted for the acceleration a pending command would produce over
//! a short reaction window. Once the prediction drops to the threshold it
//! locks out every app for the rest of the episode and drives a fail-safe
//! controller: full brake, hold the lane, park when stopped.

use serde::{Deserialize, Serialize};

use crate::sim::bus::{BusMessage, Gear, LeadVehicleReport};
use crate::sim::dynamics::{DynamicsParams, VehicleState};
use crate::sim::road::wrap_angle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WatchdogConfig {
    /// Intervene when the predicted time-to-collision is at or below this, s.
    pub ttc_threshold: f64,
    /// Horizon over which a pending command's acceleration is applied, s.
    pub reaction_window: f64,
    /// Lane-hold gains: steering per meter of lateral offset and per radian
    /// of heading error.
    pub lane_gain: f64,
    pub heading_gain: f64,
    pub dynamics: DynamicsParams,
}

impl Default for WatchdogConfig {
    fn default() -> Self {
        WatchdogConfig {
            ttc_threshold: 1.5,
            reaction_window: 0.2,
            lane_gain: 0.3,
            heading_gain: 1.0,
            dynamics: DynamicsParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Monitoring,
    Intervening,
}

/// Pose the fail-safe controller steers back to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneRef {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WatchdogState {
    pub mode: Mode,
    pub lockout_since: Option<f64>,
    pub lane: Option<LaneRef>,
    /// Smallest time-to-collision seen so far.
    pub min_ttc: f64,
    /// Ego state and lead report from the latest check.
    pub last_context: Option<(VehicleState, Option<LeadVehicleReport>)>,
}

impl Default for WatchdogState {
    fn default() -> Self {
        WatchdogState {
            mode: Mode::Monitoring,
            lockout_since: None,
            lane: None,
            min_ttc: f64::INFINITY,
            last_context: None,
        }
    }
}

/// What the watchdog sees when judging a command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Context {
    pub t: f64,
    pub ego: VehicleState,
    pub lead: Option<LeadVehicleReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Pass,
    /// Dropped silently; apps are locked out.
    Decline,
    /// Replaced by fail-safe commands; this is the triggering command.
    Override(Vec<BusMessage>),
}

/// Predicted time-to-collision, seconds; infinite when not closing.
pub fn predict_collision(
    ego: &VehicleState,
    lead: Option<&LeadVehicleReport>,
    pending: Option<&BusMessage>,
    cfg: &WatchdogConfig,
) -> f64 {
    let Some(lead) = lead else {
        return f64::INFINITY;
    };
    let p = &cfg.dynamics;
    let drive = ego.gear == Gear::Drive && ego.engine_on;
    let accel = match pending {
        Some(BusMessage::ThrottleCmd { percent }) if drive => p.k_throttle * percent,
        Some(BusMessage::ThrottleCmd { .. }) => 0.0,
        Some(BusMessage::BrakeCmd { percent }) => -p.k_brake * percent,
        _ => ego.accel_cmd,
    };
    let closing = ego.speed - lead.lead_speed + accel * cfg.reaction_window;
    let gap = lead.gap.max(0.0);
    if closing > 0.0 {
        gap / closing
    } else {
        f64::INFINITY
    }
}

fn lane_hold(lane: &LaneRef, ego: &VehicleState, cfg: &WatchdogConfig) -> f64 {
    let (s, c) = lane.heading.sin_cos();
    let offset = -(ego.x - lane.x) * s + (ego.y - lane.y) * c;
    let err = wrap_angle(ego.heading - lane.heading);
    -cfg.lane_gain * offset - cfg.heading_gain * err
}

fn lock_out(ctx: &Context, state: &WatchdogState) -> WatchdogState {
    WatchdogState {
        mode: Mode::Intervening,
        lockout_since: Some(ctx.t),
        lane: Some(LaneRef {
            x: ctx.ego.x,
            y: ctx.ego.y,
            heading: ctx.ego.heading,
        }),
        ..*state
    }
}

fn observe(state: &WatchdogState, ctx: &Context, ttc: f64) -> WatchdogState {
    WatchdogState {
        min_ttc: state.min_ttc.min(ttc),
        last_context: Some((ctx.ego, ctx.lead)),
        ..*state
    }
}

/// Judges one app command. Non-command messages always pass.
pub fn filter_command(
    cmd: &BusMessage,
    ctx: &Context,
    state: &WatchdogState,
    cfg: &WatchdogConfig,
) -> (Decision, WatchdogState) {
    if !cmd.kind().is_command() {
        return (Decision::Pass, *state);
    }
    if state.mode == Mode::Intervening {
        return (Decision::Decline, *state);
    }
    let ttc = predict_collision(&ctx.ego, ctx.lead.as_ref(), Some(cmd), cfg);
    let state = observe(state, ctx, ttc);
    if ttc > cfg.ttc_threshold {
        return (Decision::Pass, state);
    }
    let locked = lock_out(ctx, &state);
    let cmds = failsafe_tick(&locked, &ctx.ego, cfg);
    (Decision::Override(cmds), locked)
}

/// Per-tick check with no pending command, so a vehicle coasting into a
/// slower lead is caught even when no app publishes anything.
pub fn monitor_tick(ctx: &Context, state: &WatchdogState, cfg: &WatchdogConfig) -> WatchdogState {
    if state.mode == Mode::Intervening {
        return *state;
    }
    let ttc = predict_collision(&ctx.ego, ctx.lead.as_ref(), None, cfg);
    let state = observe(state, ctx, ttc);
    if ttc <= cfg.ttc_threshold {
        lock_out(ctx, &state)
    } else {
        state
    }
}

/// Fail-safe commands for one tick while intervening: brake and hold the
/// lane while moving, park once stopped. The episode releases the app's
/// throttle when lockout begins, so braking has full authority.
pub fn failsafe_tick(state: &WatchdogState, ego: &VehicleState, cfg: &WatchdogConfig) -> Vec<BusMessage> {
    if state.mode != Mode::Intervening {
        return Vec::new();
    }
    if ego.speed <= 0.0 {
        return vec![BusMessage::GearCmd(Gear::Park)];
    }
    let lane = state.lane.unwrap_or(LaneRef {
        x: ego.x,
        y: ego.y,
        heading: ego.heading,
    });
    vec![
        BusMessage::brake(100.0),
        BusMessage::steering(lane_hold(&lane, ego, cfg)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(speed: f64, gap: f64, lead_speed: f64) -> Context {
        Context {
            t: 1.0,
            ego: VehicleState::at(0.0, 0.0, 0.0, speed),
            lead: Some(LeadVehicleReport { gap, lead_speed }),
        }
    }

    #[test]
    fn ttc_includes_pending_acceleration() {
        let cfg = WatchdogConfig::default();
        let c = ctx(20.0, 30.0, 10.0);
        assert_eq!(predict_collision(&c.ego, c.lead.as_ref(), None, &cfg), 3.0);
        let full = BusMessage::throttle(100.0);
        let ttc = predict_collision(&c.ego, c.lead.as_ref(), Some(&full), &cfg);
        assert!((ttc - 30.0 / (10.0 + 4.0 * 0.2)).abs() < 1e-12);
        let brake = BusMessage::brake(100.0);
        let ttc = predict_collision(&c.ego, c.lead.as_ref(), Some(&brake), &cfg);
        assert!((ttc - 30.0 / 8.0).abs() < 1e-12);
        assert!(predict_collision(&c.ego, None, Some(&full), &cfg).is_infinite());
    }

    #[test]
    fn override_then_permanent_lockout() {
        let cfg = WatchdogConfig::default();
        let st = WatchdogState::default();
        let (d, st) = filter_command(&BusMessage::throttle(10.0), &ctx(20.0, 100.0, 10.0), &st, &cfg);
        assert_eq!(d, Decision::Pass);
        let (d, st) = filter_command(&BusMessage::throttle(50.0), &ctx(20.0, 12.0, 10.0), &st, &cfg);
        let Decision::Override(cmds) = d else { panic!("{d:?}") };
        assert_eq!(cmds.len(), 2);
        assert_eq!(cmds[0], BusMessage::brake(100.0));
        assert_eq!(cmds[1].kind(), crate::sim::bus::MessageKind::SteeringCmd);
        assert_eq!(st.mode, Mode::Intervening);
        assert_eq!(st.lockout_since, Some(1.0));
        // Even a harmless command from a safe state is declined now.
        let (d, _) = filter_command(&BusMessage::steering(0.0), &ctx(0.0, 1000.0, 10.0), &st, &cfg);
        assert_eq!(d, Decision::Decline);
    }

    #[test]
    fn failsafe_parks_when_stopped() {
        let cfg = WatchdogConfig::default();
        let st = monitor_tick(&ctx(20.0, 5.0, 0.0), &WatchdogState::default(), &cfg);
        assert_eq!(st.mode, Mode::Intervening);
        let moving = failsafe_tick(&st, &VehicleState::at(0.0, 0.5, 0.0, 5.0), &cfg);
        let BusMessage::SteeringCmd { angle } = moving[1] else { panic!() };
        assert!(angle < 0.0);
        let stopped = failsafe_tick(&st, &VehicleState::at(0.0, 0.0, 0.0, 0.0), &cfg);
        assert_eq!(stopped, vec![BusMessage::GearCmd(Gear::Park)]);
    }
}

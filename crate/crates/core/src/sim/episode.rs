//! Fixed-step closed-loop episodes.
//!
//! Each tick: sensors publish, every app handles every sensor message it
//! subscribes to (apps in configuration order, messages in emission order),
//! commands pass through the watchdog, the last accepted command per
//! actuator wins, and the dynamics advance.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::bus::{BusMessage, LeadVehicleReport, NetSendRecord, VehicleReport};
use super::dynamics::{step, Actuators, DynamicsParams, VehicleState};
use super::road::LANE_HALF_WIDTH;
use super::scenario::{Lead, Scenario};
use crate::ir::{execute_handler, AppFault, AppProgram, AppState, StoreRecord, DEFAULT_FUEL};
use crate::watchdog::{self, Context, Decision, Mode, WatchdogConfig, WatchdogState};

#[derive(Debug, Clone)]
pub struct EpisodeConfig {
    pub dt: f64,
    pub max_steps: usize,
    pub scenario: Scenario,
    pub apps: Vec<Arc<AppProgram>>,
    /// `None` runs without the watchdog.
    pub watchdog: Option<WatchdogConfig>,
    /// Carried into the result; the environment itself is deterministic.
    pub seed: u64,
    pub dynamics: DynamicsParams,
    pub fuel: u64,
    pub record_trajectory: bool,
}

impl EpisodeConfig {
    pub fn new(scenario: Scenario, apps: Vec<Arc<AppProgram>>) -> Self {
        EpisodeConfig {
            dt: 0.05,
            max_steps: 600,
            scenario,
            apps,
            watchdog: None,
            seed: 0,
            dynamics: DynamicsParams::default(),
            fuel: DEFAULT_FUEL,
            record_trajectory: true,
        }
    }

    pub fn with_watchdog(mut self, cfg: Option<WatchdogConfig>) -> Self {
        self.watchdog = cfg;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrashKind {
    Collision,
    RoadDeparture,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub state: VehicleState,
    pub throttle: f64,
    pub brake: f64,
    pub gap: Option<f64>,
    pub cross_track: f64,
    pub intervening: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InterventionKind {
    /// An app command was replaced by fail-safe commands.
    Override { app: String, command: BusMessage },
    /// The per-tick check locked out apps with no command pending.
    Lockout,
    Declined { app: String, command: BusMessage },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intervention {
    pub t: f64,
    pub kind: InterventionKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppEvent<T> {
    pub t: f64,
    pub app: String,
    pub event: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub seed: u64,
    pub steps: usize,
    pub duration: f64,
    pub crashed: bool,
    pub crash_kind: Option<CrashKind>,
    pub crash_time: Option<f64>,
    /// Infinite without a lead vehicle.
    pub min_gap: f64,
    pub min_ttc: f64,
    pub max_cross_track: f64,
    pub loss_of_control: bool,
    pub completed_path: bool,
    pub final_state: VehicleState,
    pub trajectory: Vec<TrajectorySample>,
    pub interventions: Vec<Intervention>,
    pub faults: Vec<AppEvent<AppFault>>,
    pub net_sends: Vec<AppEvent<NetSendRecord>>,
    pub stores: Vec<AppEvent<StoreRecord>>,
}

impl EpisodeResult {
    pub fn intervened(&self) -> bool {
        !self.interventions.is_empty()
    }
}

/// Where a message went after routing.
#[derive(Debug, Clone, PartialEq)]
pub enum RoutingOutcome {
    /// Sensor message handed to these apps (indices into the app list).
    Delivered(Vec<usize>),
    /// Commands that reach the actuators.
    Actuate(Vec<BusMessage>),
    Declined,
}

/// Routes one message. Sensor messages go to subscribed apps; commands go
/// through the watchdog when one is present.
pub fn route_message(
    msg: &BusMessage,
    apps: &[Arc<AppProgram>],
    watchdog: Option<(&mut WatchdogState, &WatchdogConfig, &Context)>,
) -> RoutingOutcome {
    if !msg.kind().is_command() {
        let subs = apps
            .iter()
            .enumerate()
            .filter(|(_, a)| a.handler(msg.kind()).is_some())
            .map(|(i, _)| i)
            .collect();
        return RoutingOutcome::Delivered(subs);
    }
    let Some((state, cfg, ctx)) = watchdog else {
        return RoutingOutcome::Actuate(vec![*msg]);
    };
    let (decision, next) = watchdog::filter_command(msg, ctx, state, cfg);
    *state = next;
    match decision {
        Decision::Pass => RoutingOutcome::Actuate(vec![*msg]),
        Decision::Override(cmds) => RoutingOutcome::Actuate(cmds),
        Decision::Decline => RoutingOutcome::Declined,
    }
}

fn actuate(act: &mut Actuators, cmd: &BusMessage) {
    match *cmd {
        BusMessage::SteeringCmd { angle } => act.steering = angle,
        BusMessage::ThrottleCmd { percent } => act.throttle = percent,
        BusMessage::BrakeCmd { percent } => act.brake = percent,
        BusMessage::GearCmd(g) => act.gear = g,
        BusMessage::EngineCmd { on } => act.engine_on = on,
        _ => {}
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid episode configuration: {0}")]
pub struct ConfigInvalid(pub String);

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), ConfigInvalid> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ConfigInvalid(format!("dt must be positive, got {}", self.dt)));
        }
        if self.max_steps == 0 {
            return Err(ConfigInvalid("max_steps must be positive".into()));
        }
        if !(self.scenario.ego_speed >= 0.0 && self.scenario.ego_speed.is_finite()) {
            return Err(ConfigInvalid(format!("bad ego speed {}", self.scenario.ego_speed)));
        }
        if let Some(l) = &self.scenario.lead {
            let ok = [l.initial_gap, l.speed, l.decel, l.onset].iter().all(|v| v.is_finite());
            if !ok || l.initial_gap <= 0.0 {
                return Err(ConfigInvalid(format!("bad lead script {l:?}")));
            }
        }
        Ok(())
    }
}

pub fn run_episode(cfg: &EpisodeConfig) -> Result<EpisodeResult, ConfigInvalid> {
    cfg.validate()?;
    Ok(simulate(cfg))
}

fn simulate(cfg: &EpisodeConfig) -> EpisodeResult {
    let sc = &cfg.scenario;
    let dp = &cfg.dynamics;
    let (x0, y0, h0) = sc.road.start_pose();
    let mut ego = VehicleState::at(x0, y0, h0, sc.ego_speed.max(0.0));
    let mut act = Actuators::cruising(if sc.cruise { dp.cruise_throttle(ego.speed) } else { 0.0 });
    ego.apply(&act, dp);

    let mut proj = sc.road.project(ego.x, ego.y, None);
    let mut lead = sc.lead.map(|s| Lead::new(s, proj.station));
    let mut app_states: Vec<AppState> = cfg.apps.iter().map(|a| AppState::initial(a)).collect();
    let mut wd = WatchdogState::default();
    let wd_cfg_for_ttc = cfg.watchdog.unwrap_or_default();

    let mut res = EpisodeResult {
        seed: cfg.seed,
        steps: 0,
        duration: 0.0,
        crashed: false,
        crash_kind: None,
        crash_time: None,
        min_gap: f64::INFINITY,
        min_ttc: f64::INFINITY,
        max_cross_track: proj.cross_track.abs(),
        loss_of_control: false,
        completed_path: false,
        final_state: ego,
        trajectory: Vec::new(),
        interventions: Vec::new(),
        faults: Vec::new(),
        net_sends: Vec::new(),
        stores: Vec::new(),
    };
    let gap_of = |lead: &Option<Lead>, station: f64| lead.map(|l| l.station - station);
    let mut gap = gap_of(&lead, proj.station);
    if let Some(g) = gap {
        res.min_gap = g;
    }
    let sample = |t: f64, ego: &VehicleState, act: &Actuators, gap, cte, intervening| TrajectorySample {
        t,
        state: *ego,
        throttle: act.throttle,
        brake: act.brake,
        gap,
        cross_track: cte,
        intervening,
    };
    if cfg.record_trajectory {
        res.trajectory.push(sample(0.0, &ego, &act, gap, proj.cross_track, false));
    }

    for k in 0..cfg.max_steps {
        let t = k as f64 * cfg.dt;
        let lead_report = lead.map(|l| LeadVehicleReport {
            gap: l.station - proj.station,
            lead_speed: l.speed,
        });
        let mut sensors = vec![BusMessage::VehicleReport(VehicleReport {
            x: ego.x,
            y: ego.y,
            heading: ego.heading,
            speed: ego.speed,
            yaw_rate: ego.yaw_rate,
            gear: ego.gear,
            engine_on: ego.engine_on,
        })];
        sensors.extend(lead_report.map(BusMessage::LeadVehicleReport));
        sensors.extend(sc.signal_at(t).map(BusMessage::TrafficSignal));

        let ctx = Context {
            t,
            ego,
            lead: lead_report,
        };
        res.min_ttc = res
            .min_ttc
            .min(watchdog::predict_collision(&ego, lead_report.as_ref(), None, &wd_cfg_for_ttc));

        let mut deliveries: Vec<Vec<&BusMessage>> = vec![Vec::new(); cfg.apps.len()];
        for msg in &sensors {
            if let RoutingOutcome::Delivered(subs) = route_message(msg, &cfg.apps, None) {
                for i in subs {
                    deliveries[i].push(msg);
                }
            }
        }
        for (i, app) in cfg.apps.iter().enumerate() {
            for msg in &deliveries[i] {
                let out = execute_handler(app, &app_states[i], msg, cfg.fuel);
                if let Some(fault) = out.fault {
                    res.faults.push(AppEvent {
                        t,
                        app: app.app_id.clone(),
                        event: fault,
                    });
                    continue;
                }
                app_states[i] = out.state;
                for rec in out.net_sends {
                    res.net_sends.push(AppEvent { t, app: app.app_id.clone(), event: rec });
                }
                for rec in out.stores {
                    res.stores.push(AppEvent { t, app: app.app_id.clone(), event: rec });
                }
                for cmd in &out.publishes {
                    let was = wd.mode;
                    let wd_arg = cfg.watchdog.as_ref().map(|c| (&mut wd, c, &ctx));
                    match route_message(cmd, &cfg.apps, wd_arg) {
                        RoutingOutcome::Actuate(cmds) => {
                            if was == Mode::Monitoring && wd.mode == Mode::Intervening {
                                res.interventions.push(Intervention {
                                    t,
                                    kind: InterventionKind::Override {
                                        app: app.app_id.clone(),
                                        command: *cmd,
                                    },
                                });
                            }
                            for c in &cmds {
                                actuate(&mut act, c);
                            }
                        }
                        RoutingOutcome::Declined => res.interventions.push(Intervention {
                            t,
                            kind: InterventionKind::Declined {
                                app: app.app_id.clone(),
                                command: *cmd,
                            },
                        }),
                        RoutingOutcome::Delivered(_) => {}
                    }
                }
            }
        }
        if let Some(wcfg) = &cfg.watchdog {
            let was = wd.mode;
            wd = watchdog::monitor_tick(&ctx, &wd, wcfg);
            if was == Mode::Monitoring && wd.mode == Mode::Intervening {
                res.interventions.push(Intervention {
                    t,
                    kind: InterventionKind::Lockout,
                });
            }
            if wd.mode == Mode::Intervening {
                act.throttle = 0.0;
            }
            for c in watchdog::failsafe_tick(&wd, &ego, wcfg) {
                actuate(&mut act, &c);
            }
        }

        ego.apply(&act, dp);
        ego = step(&ego, cfg.dt, dp);
        if let Some(l) = lead.as_mut() {
            l.advance(t, cfg.dt);
        }
        let t_next = (k + 1) as f64 * cfg.dt;
        proj = sc.road.project(ego.x, ego.y, Some(proj.segment));
        gap = gap_of(&lead, proj.station);
        res.steps = k + 1;
        res.duration = t_next;
        res.max_cross_track = res.max_cross_track.max(proj.cross_track.abs());
        res.loss_of_control |= ego.loss_of_control;
        if let Some(g) = gap {
            res.min_gap = res.min_gap.min(g);
        }
        if cfg.record_trajectory {
            res.trajectory.push(sample(
                t_next,
                &ego,
                &act,
                gap,
                proj.cross_track,
                wd.mode == Mode::Intervening,
            ));
        }

        let crash = if gap.is_some_and(|g| g <= 0.0) {
            Some(CrashKind::Collision)
        } else if ego.loss_of_control && proj.cross_track.abs() > LANE_HALF_WIDTH {
            Some(CrashKind::RoadDeparture)
        } else {
            None
        };
        if let Some(kind) = crash {
            res.crashed = true;
            res.crash_kind = Some(kind);
            res.crash_time = Some(t_next);
            break;
        }
        if proj.beyond_end {
            res.completed_path = true;
            break;
        }
        if lead.is_some_and(|l| l.speed == 0.0) && ego.speed == 0.0 {
            break;
        }
    }
    res.final_state = ego;
    res
}

/// Trajectory as CSV with header
/// `t,x,y,heading,speed,yaw_rate,steering,throttle,brake,gap,intervention`.
pub fn trajectory_csv(result: &EpisodeResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "t", "x", "y", "heading", "speed", "yaw_rate", "steering", "throttle", "brake", "gap",
        "intervention",
    ])
    .expect("in-memory write");
    for s in &result.trajectory {
        let st = &s.state;
        w.write_record([
            format!("{:.3}", s.t),
            format!("{:.6}", st.x),
            format!("{:.6}", st.y),
            format!("{:.6}", st.heading),
            format!("{:.6}", st.speed),
            format!("{:.6}", st.yaw_rate),
            format!("{:.6}", st.steering),
            format!("{:.3}", s.throttle),
            format!("{:.3}", s.brake),
            s.gap.map(|g| format!("{g:.6}")).unwrap_or_default(),
            u8::from(s.intervening).to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

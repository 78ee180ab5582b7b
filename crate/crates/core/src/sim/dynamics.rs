//! Kinematic bicycle model with lateral-acceleration saturation.

use serde::{Deserialize, Serialize};

use super::bus::{Gear, MAX_STEERING_ANGLE};
use super::road::wrap_angle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    pub wheelbase: f64,
    /// Acceleration per throttle percent, m/s^2.
    pub k_throttle: f64,
    /// Deceleration per brake percent, m/s^2.
    pub k_brake: f64,
    /// Linear drag coefficient, 1/s.
    pub c_drag: f64,
    pub a_lat_max: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        DynamicsParams {
            wheelbase: 2.85,
            k_throttle: 0.04,
            k_brake: 0.1,
            c_drag: 0.01,
            a_lat_max: 6.0,
        }
    }
}

impl DynamicsParams {
    /// Throttle percent that balances drag at speed `v`.
    pub fn cruise_throttle(&self, v: f64) -> f64 {
        (self.c_drag * v / self.k_throttle).clamp(0.0, 100.0)
    }
}

/// Latest value written to each actuator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Actuators {
    pub steering: f64,
    pub throttle: f64,
    pub brake: f64,
    pub gear: Gear,
    pub engine_on: bool,
}

impl Actuators {
    pub fn cruising(throttle: f64) -> Self {
        Actuators {
            steering: 0.0,
            throttle,
            brake: 0.0,
            gear: Gear::Drive,
            engine_on: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub yaw_rate: f64,
    pub steering: f64,
    pub accel_cmd: f64,
    pub gear: Gear,
    pub engine_on: bool,
    /// Latched once the lateral-acceleration limit has been hit.
    pub loss_of_control: bool,
}

impl VehicleState {
    pub fn at(x: f64, y: f64, heading: f64, speed: f64) -> Self {
        VehicleState {
            x,
            y,
            heading,
            speed,
            yaw_rate: 0.0,
            steering: 0.0,
            accel_cmd: 0.0,
            gear: Gear::Drive,
            engine_on: true,
            loss_of_control: false,
        }
    }

    /// Copies actuator settings into the state. Throttle only propels the
    /// car in drive with the engine running.
    pub fn apply(&mut self, act: &Actuators, p: &DynamicsParams) {
        self.steering = act.steering.clamp(-MAX_STEERING_ANGLE, MAX_STEERING_ANGLE);
        self.gear = act.gear;
        self.engine_on = act.engine_on;
        let drive = act.gear == Gear::Drive && act.engine_on;
        let throttle = if drive { act.throttle.clamp(0.0, 100.0) } else { 0.0 };
        self.accel_cmd = p.k_throttle * throttle - p.k_brake * act.brake.clamp(0.0, 100.0);
    }
}

/// Advances the state by `dt` seconds.
pub fn step(s: &VehicleState, dt: f64, p: &DynamicsParams) -> VehicleState {
    let v = s.speed;
    let mut yaw = v / p.wheelbase * s.steering.tan();
    let mut loss = s.loss_of_control;
    if (yaw * v).abs() > p.a_lat_max {
        yaw = yaw.signum() * p.a_lat_max / v;
        loss = true;
    }
    let accel = s.accel_cmd - p.c_drag * v;
    let speed = if s.gear == Gear::Park {
        0.0
    } else {
        (v + accel * dt).max(0.0)
    };
    VehicleState {
        x: s.x + v * s.heading.cos() * dt,
        y: s.y + v * s.heading.sin() * dt,
        heading: wrap_angle(s.heading + yaw * dt),
        speed,
        yaw_rate: yaw,
        loss_of_control: loss,
        ..*s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn straight_coast_decays_by_drag() {
        let p = DynamicsParams::default();
        let mut s = VehicleState::at(0.0, 0.0, 0.0, 20.0);
        s.apply(&Actuators::cruising(0.0), &p);
        let n = s.clone();
        let s1 = step(&n, 0.1, &p);
        assert!((s1.speed - (20.0 - 0.01 * 20.0 * 0.1)).abs() < 1e-12);
        assert!((s1.x - 2.0).abs() < 1e-12);
        assert_eq!(s1.y, 0.0);
    }

    #[test]
    fn cruise_throttle_holds_speed() {
        let p = DynamicsParams::default();
        let mut s = VehicleState::at(0.0, 0.0, 0.0, 15.0);
        s.apply(&Actuators::cruising(p.cruise_throttle(15.0)), &p);
        for _ in 0..100 {
            s = step(&s, 0.05, &p);
        }
        assert!((s.speed - 15.0).abs() < 1e-9);
    }

    #[test]
    fn tight_turn_saturates() {
        let p = DynamicsParams::default();
        let mut s = VehicleState::at(0.0, 0.0, 0.0, 20.0);
        let mut act = Actuators::cruising(0.0);
        act.steering = 0.5;
        s.apply(&act, &p);
        let s1 = step(&s, 0.05, &p);
        assert!(s1.loss_of_control);
        assert!((s1.yaw_rate - 6.0 / 20.0).abs() < 1e-12);
    }

    #[test]
    fn park_stops_and_engine_off_removes_throttle() {
        let p = DynamicsParams::default();
        let mut s = VehicleState::at(0.0, 0.0, 0.0, 0.0);
        let mut act = Actuators::cruising(100.0);
        act.engine_on = false;
        s.apply(&act, &p);
        assert_eq!(step(&s, 0.1, &p).speed, 0.0);
        act.gear = Gear::Park;
        act.engine_on = true;
        s.apply(&act, &p);
        assert_eq!(step(&s, 0.1, &p).speed, 0.0);
    }

    proptest! {
        #[test]
        fn no_throttle_never_speeds_up(
            v in 0.0f64..60.0,
            brake in 0.0f64..100.0,
            steer in -0.6f64..0.6,
            heading in -3.14f64..3.14,
            dt in 0.001f64..0.2,
        ) {
            let p = DynamicsParams::default();
            let mut s = VehicleState::at(0.0, 0.0, heading, v);
            let mut act = Actuators::cruising(0.0);
            act.brake = brake;
            act.steering = steer;
            s.apply(&act, &p);
            let n = step(&s, dt, &p);
            prop_assert!(n.speed <= v + 1e-12);
            prop_assert!(n.speed >= 0.0);
            prop_assert!(n.heading > -std::f64::consts::PI && n.heading <= std::f64::consts::PI);
            prop_assert!((n.yaw_rate * v).abs() <= p.a_lat_max + 1e-9);
        }
    }
}

//! Virtual CAN vocabulary: message kinds, field paths, and typed payloads.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Maximum steering angle accepted on the bus, radians.
pub const MAX_STEERING_ANGLE: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    VehicleReport,
    LeadVehicleReport,
    TrafficSignal,
    SteeringCmd,
    ThrottleCmd,
    BrakeCmd,
    GearCmd,
    EngineCmd,
}

impl MessageKind {
    pub const ALL: [MessageKind; 8] = [
        MessageKind::VehicleReport,
        MessageKind::LeadVehicleReport,
        MessageKind::TrafficSignal,
        MessageKind::SteeringCmd,
        MessageKind::ThrottleCmd,
        MessageKind::BrakeCmd,
        MessageKind::GearCmd,
        MessageKind::EngineCmd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::VehicleReport => "vehicle_report",
            MessageKind::LeadVehicleReport => "lead_vehicle_report",
            MessageKind::TrafficSignal => "traffic_signal",
            MessageKind::SteeringCmd => "steering_cmd",
            MessageKind::ThrottleCmd => "throttle_cmd",
            MessageKind::BrakeCmd => "brake_cmd",
            MessageKind::GearCmd => "gear_cmd",
            MessageKind::EngineCmd => "engine_cmd",
        }
    }

    /// Commands are published by apps and filtered by the watchdog; the rest
    /// are sensor messages emitted by the environment.
    pub fn is_command(self) -> bool {
        matches!(
            self,
            MessageKind::SteeringCmd
                | MessageKind::ThrottleCmd
                | MessageKind::BrakeCmd
                | MessageKind::GearCmd
                | MessageKind::EngineCmd
        )
    }

    pub fn fields(self) -> impl Iterator<Item = Field> {
        Field::ALL.into_iter().filter(move |f| f.kind() == self)
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MessageKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        MessageKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalarType {
    Num,
    Bool,
}

/// Every readable or publishable message field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Field {
    PositionX,
    PositionY,
    PositionHeading,
    Speed,
    YawRate,
    Gear,
    EngineOn,
    Gap,
    LeadSpeed,
    SignalState,
    SteeringAngle,
    ThrottlePercent,
    BrakePercent,
    GearSelect,
    EngineSwitch,
}

impl Field {
    pub const ALL: [Field; 15] = [
        Field::PositionX,
        Field::PositionY,
        Field::PositionHeading,
        Field::Speed,
        Field::YawRate,
        Field::Gear,
        Field::EngineOn,
        Field::Gap,
        Field::LeadSpeed,
        Field::SignalState,
        Field::SteeringAngle,
        Field::ThrottlePercent,
        Field::BrakePercent,
        Field::GearSelect,
        Field::EngineSwitch,
    ];

    pub fn kind(self) -> MessageKind {
        use Field::*;
        match self {
            PositionX | PositionY | PositionHeading | Speed | YawRate | Gear | EngineOn => {
                MessageKind::VehicleReport
            }
            Gap | LeadSpeed => MessageKind::LeadVehicleReport,
            SignalState => MessageKind::TrafficSignal,
            SteeringAngle => MessageKind::SteeringCmd,
            ThrottlePercent => MessageKind::ThrottleCmd,
            BrakePercent => MessageKind::BrakeCmd,
            GearSelect => MessageKind::GearCmd,
            EngineSwitch => MessageKind::EngineCmd,
        }
    }

    /// Field name relative to its message, e.g. `position.x`.
    pub fn name(self) -> &'static str {
        use Field::*;
        match self {
            PositionX => "position.x",
            PositionY => "position.y",
            PositionHeading => "position.heading",
            Speed => "speed",
            YawRate => "yaw_rate",
            Gear => "gear",
            EngineOn => "engine_on",
            Gap => "gap",
            LeadSpeed => "lead_speed",
            SignalState => "state",
            SteeringAngle => "angle",
            ThrottlePercent => "percent",
            BrakePercent => "percent",
            GearSelect => "gear",
            EngineSwitch => "on",
        }
    }

    /// Fully qualified path, e.g. `vehicle_report.position.x`.
    pub fn path(self) -> String {
        format!("{}.{}", self.kind(), self.name())
    }

    pub fn ty(self) -> ScalarType {
        match self {
            Field::EngineOn | Field::EngineSwitch => ScalarType::Bool,
            _ => ScalarType::Num,
        }
    }

    pub fn from_path(path: &str) -> Option<Field> {
        let (kind, name) = path.split_once('.')?;
        let kind: MessageKind = kind.parse().ok()?;
        Field::lookup(kind, name)
    }

    pub fn lookup(kind: MessageKind, name: &str) -> Option<Field> {
        kind.fields().find(|f| f.name() == name)
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.kind(), self.name())
    }
}

/// Runtime scalar: the IR has only numbers and booleans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Num(f64),
    Bool(bool),
}

impl Value {
    pub fn ty(self) -> ScalarType {
        match self {
            Value::Num(_) => ScalarType::Num,
            Value::Bool(_) => ScalarType::Bool,
        }
    }

    pub fn as_num(self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(x),
            Value::Bool(_) => None,
        }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(b),
            Value::Num(_) => None,
        }
    }

    /// Equality used by rule predicates and the IR `eq` op; bit-level for
    /// numbers so that results are reproducible.
    pub fn same(self, other: Value) -> bool {
        match (self, other) {
            (Value::Num(a), Value::Num(b)) => a == b,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{x}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gear {
    Park,
    Drive,
    Reverse,
    Neutral,
}

impl Gear {
    pub fn code(self) -> f64 {
        match self {
            Gear::Park => 0.0,
            Gear::Drive => 1.0,
            Gear::Reverse => 2.0,
            Gear::Neutral => 3.0,
        }
    }

    pub fn from_code(x: f64) -> Option<Gear> {
        match x {
            c if c == 0.0 => Some(Gear::Park),
            c if c == 1.0 => Some(Gear::Drive),
            c if c == 2.0 => Some(Gear::Reverse),
            c if c == 3.0 => Some(Gear::Neutral),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalState {
    Red,
    Yellow,
    Green,
}

impl SignalState {
    pub fn code(self) -> f64 {
        match self {
            SignalState::Red => 0.0,
            SignalState::Yellow => 1.0,
            SignalState::Green => 2.0,
        }
    }
}

/// Symbolic literals accepted wherever a numeric constant is expected
/// (IR `const` and rule predicates).
pub fn named_literal(name: &str) -> Option<Value> {
    let v = match name {
        "true" => return Some(Value::Bool(true)),
        "false" => return Some(Value::Bool(false)),
        "park" => Gear::Park.code(),
        "drive" => Gear::Drive.code(),
        "reverse" => Gear::Reverse.code(),
        "neutral" => Gear::Neutral.code(),
        "red" => SignalState::Red.code(),
        "yellow" => SignalState::Yellow.code(),
        "green" => SignalState::Green.code(),
        _ => return None,
    };
    Some(Value::Num(v))
}

/// Parses a literal token: a named literal or a float.
pub fn parse_literal(tok: &str) -> Option<Value> {
    named_literal(tok).or_else(|| tok.parse::<f64>().ok().map(Value::Num))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleReport {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub yaw_rate: f64,
    pub gear: Gear,
    pub engine_on: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadVehicleReport {
    pub gap: f64,
    pub lead_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSendRecord {
    pub host: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BusMessage {
    VehicleReport(VehicleReport),
    LeadVehicleReport(LeadVehicleReport),
    TrafficSignal(SignalState),
    SteeringCmd { angle: f64 },
    ThrottleCmd { percent: f64 },
    BrakeCmd { percent: f64 },
    GearCmd(Gear),
    EngineCmd { on: bool },
}

fn clamp_percent(p: f64) -> f64 {
    if p.is_nan() {
        0.0
    } else {
        p.clamp(0.0, 100.0)
    }
}

fn clamp_angle(a: f64) -> f64 {
    if a.is_nan() {
        0.0
    } else {
        a.clamp(-MAX_STEERING_ANGLE, MAX_STEERING_ANGLE)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CommandError {
    #[error("{0} is not a command message")]
    NotACommand(MessageKind),
    #[error("missing field {0}")]
    MissingField(Field),
    #[error("field {0} has the wrong type")]
    WrongType(Field),
    #[error("value {1} is not a valid {0}")]
    BadValue(Field, f64),
}

impl BusMessage {
    pub fn steering(angle: f64) -> Self {
        BusMessage::SteeringCmd {
            angle: clamp_angle(angle),
        }
    }

    pub fn throttle(percent: f64) -> Self {
        BusMessage::ThrottleCmd {
            percent: clamp_percent(percent),
        }
    }

    pub fn brake(percent: f64) -> Self {
        BusMessage::BrakeCmd {
            percent: clamp_percent(percent),
        }
    }

    pub fn kind(&self) -> MessageKind {
        match self {
            BusMessage::VehicleReport(_) => MessageKind::VehicleReport,
            BusMessage::LeadVehicleReport(_) => MessageKind::LeadVehicleReport,
            BusMessage::TrafficSignal(_) => MessageKind::TrafficSignal,
            BusMessage::SteeringCmd { .. } => MessageKind::SteeringCmd,
            BusMessage::ThrottleCmd { .. } => MessageKind::ThrottleCmd,
            BusMessage::BrakeCmd { .. } => MessageKind::BrakeCmd,
            BusMessage::GearCmd(_) => MessageKind::GearCmd,
            BusMessage::EngineCmd { .. } => MessageKind::EngineCmd,
        }
    }

    pub fn field(&self, field: Field) -> Option<Value> {
        use Value::*;
        let v = match (self, field) {
            (BusMessage::VehicleReport(r), Field::PositionX) => Num(r.x),
            (BusMessage::VehicleReport(r), Field::PositionY) => Num(r.y),
            (BusMessage::VehicleReport(r), Field::PositionHeading) => Num(r.heading),
            (BusMessage::VehicleReport(r), Field::Speed) => Num(r.speed),
            (BusMessage::VehicleReport(r), Field::YawRate) => Num(r.yaw_rate),
            (BusMessage::VehicleReport(r), Field::Gear) => Num(r.gear.code()),
            (BusMessage::VehicleReport(r), Field::EngineOn) => Bool(r.engine_on),
            (BusMessage::LeadVehicleReport(r), Field::Gap) => Num(r.gap),
            (BusMessage::LeadVehicleReport(r), Field::LeadSpeed) => Num(r.lead_speed),
            (BusMessage::TrafficSignal(s), Field::SignalState) => Num(s.code()),
            (BusMessage::SteeringCmd { angle }, Field::SteeringAngle) => Num(*angle),
            (BusMessage::ThrottleCmd { percent }, Field::ThrottlePercent) => Num(*percent),
            (BusMessage::BrakeCmd { percent }, Field::BrakePercent) => Num(*percent),
            (BusMessage::GearCmd(g), Field::GearSelect) => Num(g.code()),
            (BusMessage::EngineCmd { on }, Field::EngineSwitch) => Bool(*on),
            _ => return None,
        };
        Some(v)
    }

    /// Builds a command from published field assignments, clamping percent
    /// and angle fields into their declared ranges.
    pub fn command_from_fields(
        kind: MessageKind,
        fields: &[(Field, Value)],
    ) -> Result<BusMessage, CommandError> {
        if !kind.is_command() {
            return Err(CommandError::NotACommand(kind));
        }
        let get = |field: Field| -> Result<Value, CommandError> {
            fields
                .iter()
                .rev()
                .find(|(f, _)| *f == field)
                .map(|(_, v)| *v)
                .ok_or(CommandError::MissingField(field))
        };
        let num = |field: Field| -> Result<f64, CommandError> {
            get(field)?.as_num().ok_or(CommandError::WrongType(field))
        };
        Ok(match kind {
            MessageKind::SteeringCmd => BusMessage::steering(num(Field::SteeringAngle)?),
            MessageKind::ThrottleCmd => BusMessage::throttle(num(Field::ThrottlePercent)?),
            MessageKind::BrakeCmd => BusMessage::brake(num(Field::BrakePercent)?),
            MessageKind::GearCmd => {
                let code = num(Field::GearSelect)?;
                BusMessage::GearCmd(
                    Gear::from_code(code).ok_or(CommandError::BadValue(Field::GearSelect, code))?,
                )
            }
            MessageKind::EngineCmd => BusMessage::EngineCmd {
                on: get(Field::EngineSwitch)?
                    .as_bool()
                    .ok_or(CommandError::WrongType(Field::EngineSwitch))?,
            },
            _ => unreachable!("non-command kinds rejected above"),
        })
    }
}

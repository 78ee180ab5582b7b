//! Temporal rule automata loaded from text files.
//!
//! ```text
//! # comment
//! state idle
//! state violation bad
//! start idle
//! on idle publish:engine_cmd.on=false -> violation
//! on idle observe:traffic_signal.state=red -> seen_red
//! ```
//!
//! Transitions from a state are tried in file order and the first match
//! wins; a message matching none leaves the state unchanged.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::bus::{parse_literal, Field, MessageKind, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn as_str(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn eval(self, lhs: Value, rhs: Value) -> bool {
        match (lhs, rhs) {
            (Value::Num(a), Value::Num(b)) => match self {
                CmpOp::Eq => a == b,
                CmpOp::Ne => a != b,
                CmpOp::Lt => a < b,
                CmpOp::Le => a <= b,
                CmpOp::Gt => a > b,
                CmpOp::Ge => a >= b,
            },
            (Value::Bool(a), Value::Bool(b)) => match self {
                CmpOp::Eq => a == b,
                CmpOp::Ne => a != b,
                _ => false,
            },
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub field: Field,
    pub op: CmpOp,
    pub value: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    /// The app publishes a command.
    Publish,
    /// A handler runs on an incoming message.
    Observe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub message: MessageKind,
    pub predicate: Option<Predicate>,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            EventKind::Publish => "publish",
            EventKind::Observe => "observe",
        };
        write!(f, "{k}:{}", self.message)?;
        if let Some(p) = &self.predicate {
            let v = match (p.field, p.value) {
                (Field::GearSelect | Field::Gear, Value::Num(c)) => {
                    ["park", "drive", "reverse", "neutral"]
                        .get(c as usize)
                        .filter(|_| c.fract() == 0.0)
                        .map_or(p.value.to_string(), |s| s.to_string())
                }
                (Field::SignalState, Value::Num(c)) => ["red", "yellow", "green"]
                    .get(c as usize)
                    .filter(|_| c.fract() == 0.0)
                    .map_or(p.value.to_string(), |s| s.to_string()),
                _ => p.value.to_string(),
            };
            write!(f, ".{}{}{}", p.field.name(), p.op.as_str(), v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: usize,
    pub event: Event,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleAutomaton {
    pub rule_id: String,
    pub states: Vec<String>,
    pub start: usize,
    pub bad: Vec<bool>,
    /// In priority order.
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("rule {rule}: line {line}: {message}")]
pub struct RuleError {
    pub rule: String,
    pub line: usize,
    pub message: String,
}

/// Truth of a predicate for one message: known, or unknown when the
/// published value is not a compile-time constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    True,
    False,
    Unknown,
}

fn parse_event(s: &str) -> Result<Event, String> {
    let (kind, rest) = s
        .split_once(':')
        .ok_or_else(|| format!("event {s:?} lacks a `publish:` or `observe:` prefix"))?;
    let kind = match kind {
        "publish" => EventKind::Publish,
        "observe" => EventKind::Observe,
        other => return Err(format!("unknown event kind {other:?}")),
    };
    let (msg, pred) = match rest.split_once('.') {
        Some((m, p)) => (m, Some(p)),
        None => (rest, None),
    };
    let message: MessageKind = msg.parse().map_err(|_| format!("unknown message kind {msg:?}"))?;
    match kind {
        EventKind::Publish if !message.is_command() => {
            return Err(format!("{message} is not a command and cannot be published"))
        }
        EventKind::Observe if message.is_command() => {
            return Err(format!("{message} is a command and cannot be observed"))
        }
        _ => {}
    }
    let predicate = match pred {
        None if kind == EventKind::Observe => {
            return Err("observe events need a field predicate".into());
        }
        None => None,
        Some(p) => {
            let at = p
                .find(['=', '!', '<', '>'])
                .ok_or_else(|| format!("predicate {p:?} has no comparison"))?;
            let (name, rest) = p.split_at(at);
            let (op, lit) = [("!=", CmpOp::Ne), ("<=", CmpOp::Le), (">=", CmpOp::Ge), ("=", CmpOp::Eq), ("<", CmpOp::Lt), (">", CmpOp::Gt)]
                .into_iter()
                .find_map(|(tok, op)| rest.strip_prefix(tok).map(|l| (op, l)))
                .ok_or_else(|| format!("bad comparison in {p:?}"))?;
            let field = Field::lookup(message, name)
                .ok_or_else(|| format!("{message} has no field {name:?}"))?;
            let value = parse_literal(lit).ok_or_else(|| format!("bad literal {lit:?}"))?;
            if value.ty() != field.ty() {
                return Err(format!("literal {lit} does not match the type of {field}"));
            }
            Some(Predicate { field, op, value })
        }
    };
    Ok(Event {
        kind,
        message,
        predicate,
    })
}

pub fn parse_rule(rule_id: &str, text: &str) -> Result<RuleAutomaton, RuleError> {
    let err = |line: usize, message: String| RuleError {
        rule: rule_id.to_string(),
        line,
        message,
    };
    let mut states: Vec<String> = Vec::new();
    let mut bad = Vec::new();
    let mut start = None;
    let mut pending = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        match toks.as_slice() {
            ["state", name] | ["state", name, "bad"] => {
                if states.iter().any(|s| s == name) {
                    return Err(err(line, format!("state {name} declared twice")));
                }
                states.push(name.to_string());
                bad.push(toks.len() == 3);
            }
            ["start", name] => {
                if start.is_some() {
                    return Err(err(line, "second start declaration".into()));
                }
                start = Some((line, name.to_string()));
            }
            ["on", from, event, "->", to] => {
                let event = parse_event(event).map_err(|m| err(line, m))?;
                pending.push((line, from.to_string(), event, to.to_string()));
            }
            _ => return Err(err(line, format!("unrecognized line {content:?}"))),
        }
    }
    let index = |line: usize, name: &str| {
        states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| err(line, format!("undeclared state {name}")))
    };
    let (sl, sname) = start.ok_or_else(|| err(0, "no start state".into()))?;
    let start = index(sl, &sname)?;
    let transitions = pending
        .into_iter()
        .map(|(line, from, event, to)| {
            Ok(Transition {
                from: index(line, &from)?,
                event,
                to: index(line, &to)?,
            })
        })
        .collect::<Result<Vec<_>, RuleError>>()?;
    Ok(RuleAutomaton {
        rule_id: rule_id.to_string(),
        states,
        start,
        bad,
        transitions,
    })
}

impl RuleAutomaton {
    /// Possible successor states for a message of `kind` whose predicate
    /// truth is given by `truth`, each with the transition taken (`None` for
    /// the implicit self-loop).
    pub fn step(
        &self,
        q: usize,
        kind: EventKind,
        message: MessageKind,
        truth: impl Fn(&Predicate) -> Truth,
    ) -> Vec<(usize, Option<usize>)> {
        let mut out = Vec::new();
        for (ti, t) in self.transitions.iter().enumerate() {
            if t.from != q || t.event.kind != kind || t.event.message != message {
                continue;
            }
            match t.event.predicate.as_ref().map_or(Truth::True, &truth) {
                Truth::True => {
                    out.push((t.to, Some(ti)));
                    return out;
                }
                Truth::False => {}
                Truth::Unknown => out.push((t.to, Some(ti))),
            }
        }
        out.push((q, None));
        out
    }

    /// Whether any transition reacts to this event kind and message.
    pub fn mentions(&self, kind: EventKind, message: MessageKind) -> bool {
        self.transitions
            .iter()
            .any(|t| t.event.kind == kind && t.event.message == message)
    }
}

pub const PARK_BEFORE_ENGINE_OFF: &str =
    include_str!("../../../../corpus/rules/park_before_engine_off.rule");
pub const RED_LIGHT: &str = include_str!("../../../../corpus/rules/red_light.rule");

pub fn builtin_rules() -> Vec<RuleAutomaton> {
    vec![
        parse_rule("park_before_engine_off", PARK_BEFORE_ENGINE_OFF).expect("builtin rule parses"),
        parse_rule("red_light", RED_LIGHT).expect("builtin rule parses"),
    ]
}

//! Independent oracles shared by the integration tests. Nothing here calls
//! into the analyses or estimators it is used to check.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::path::{Path, PathBuf};

use avvet::ir::{AppProgram, Handler, Instruction, Terminator};
use avvet::sim::bus::{Field, MessageKind, Value};
use avvet::vetting::rules::{CmpOp, EventKind, RuleAutomaton};

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn corpus_dir() -> PathBuf {
    repo_root().join("corpus")
}

/// Every `.avpkg` directory in the corpus, sorted by name.
pub fn corpus_packages() -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .expect("corpus dir")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "avpkg"))
        .collect();
    out.sort();
    out
}

#[derive(Debug, Clone)]
pub struct Label {
    pub static_verdict: String,
    pub final_verdict: String,
}

/// Expected verdicts from `corpus/labels.toml`, keyed by package name.
pub fn corpus_labels() -> std::collections::BTreeMap<String, Label> {
    let text = std::fs::read_to_string(corpus_dir().join("labels.toml")).expect("labels.toml");
    let table: toml::Table = text.parse().expect("labels parse");
    table
        .iter()
        .map(|(name, v)| {
            let get = |k: &str| v[k].as_str().expect("string label").to_string();
            (name.clone(), Label { static_verdict: get("static"), final_verdict: get("final") })
        })
        .collect()
}

/// Block sequences from a handler's entry, visiting each block at most
/// `max_visits` times. The flag is true for paths ending in a halt; the
/// others are cut off inside a loop and stand for non-terminating runs.
pub fn handler_paths(h: &Handler, max_visits: usize) -> Vec<(Vec<usize>, bool)> {
    fn go(h: &Handler, b: usize, max: usize, path: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, bool)>) {
        if path.iter().filter(|&&x| x == b).count() >= max {
            out.push((path.clone(), false));
            return;
        }
        path.push(b);
        match &h.blocks[b].term {
            Terminator::Halt => out.push((path.clone(), true)),
            Terminator::Jump(t) => go(h, *t, max, path, out),
            Terminator::Branch { then_block, else_block, .. } => {
                go(h, *then_block, max, path, out);
                go(h, *else_block, max, path, out);
            }
        }
        path.pop();
    }
    let mut out = Vec::new();
    go(h, h.entry, max_visits, &mut Vec::new(), &mut out);
    out
}

/// (source field, sink text, `handler/block`) triples.
pub type FlowKey = (Field, String, String);

/// Taint by explicit enumeration: every block path of every handler, run
/// from every reachable global taint state, with overwrite semantics for
/// globals. Runs cut off in a loop still publish their global writes, as
/// the analysis assumes.
pub fn taint_by_paths(p: &AppProgram, sources: &BTreeSet<Field>, max_visits: usize) -> BTreeSet<FlowKey> {
    type G = Vec<BTreeSet<Field>>;
    let paths: Vec<Vec<(Vec<usize>, bool)>> = p.handlers.iter().map(|h| handler_paths(h, max_visits)).collect();
    let mut flows = BTreeSet::new();
    let start: G = vec![BTreeSet::new(); p.globals.len()];
    let mut seen: HashSet<G> = HashSet::from([start.clone()]);
    let mut queue = VecDeque::from([start]);
    while let Some(g0) = queue.pop_front() {
        for (hi, h) in p.handlers.iter().enumerate() {
            for (path, _) in &paths[hi] {
                let mut g = g0.clone();
                let mut l: Vec<BTreeSet<Field>> = vec![BTreeSet::new(); h.locals.len()];
                for &b in path {
                    for ins in &h.blocks[b].body {
                        match ins {
                            Instruction::Const { dst, .. } | Instruction::TableLen { dst, .. } => l[*dst].clear(),
                            Instruction::ReadField { dst, field } => {
                                l[*dst] = sources.iter().filter(|s| *s == field).copied().collect();
                            }
                            Instruction::ReadGlobal { dst, global } => l[*dst] = g[*global].clone(),
                            Instruction::WriteGlobal { global, src } => g[*global] = l[*src].clone(),
                            Instruction::BinOp { dst, a, b, .. } => {
                                let mut t = l[*a].clone();
                                if let Some(b) = b {
                                    t.extend(l[*b].iter().copied());
                                }
                                l[*dst] = t;
                            }
                            Instruction::TableLookup { dst, index, .. } => l[*dst] = l[*index].clone(),
                            Instruction::Publish { .. } => {}
                            Instruction::NetSend { host, values } | Instruction::Store { key: host, values } => {
                                let sink = match ins {
                                    Instruction::NetSend { .. } => format!("net_send({host})"),
                                    _ => format!("storage({host})"),
                                };
                                let loc = format!("{}/{}", h.trigger, h.blocks[b].id);
                                for v in values {
                                    for f in &l[*v] {
                                        flows.insert((*f, sink.clone(), loc.clone()));
                                    }
                                }
                            }
                        }
                    }
                }
                if seen.insert(g.clone()) {
                    queue.push_back(g);
                }
            }
        }
    }
    flows
}

/// Whether `op` holds between two values, written out per type.
fn cmp_holds(op: CmpOp, lhs: Value, rhs: Value) -> bool {
    match (lhs, rhs) {
        (Value::Num(a), Value::Num(b)) => match op {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        },
        (Value::Bool(a), Value::Bool(b)) => match op {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            _ => false,
        },
        _ => false,
    }
}

/// One automaton-visible event of a handler path: the message, and for
/// each published field either its compile-time constant or `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEvent {
    pub kind: EventKind,
    pub message: MessageKind,
    pub fields: Vec<(Field, Option<Value>)>,
}

/// Events of one handler path. A published value counts as a constant only
/// when its most recent definition is a `const` in the same block.
pub fn path_events(h: &Handler, path: &[usize]) -> Vec<PathEvent> {
    let mut out = vec![PathEvent {
        kind: EventKind::Observe,
        message: h.trigger,
        fields: Vec::new(),
    }];
    for &b in path {
        let mut consts: Vec<Option<Value>> = vec![None; h.locals.len()];
        for ins in &h.blocks[b].body {
            if let Instruction::Publish { kind, fields } = ins {
                out.push(PathEvent {
                    kind: EventKind::Publish,
                    message: *kind,
                    fields: fields.iter().map(|(f, v)| (*f, consts[*v])).collect(),
                });
            }
            match ins {
                Instruction::Const { dst, value } => consts[*dst] = Some(*value),
                other => {
                    if let Some(d) = other.def() {
                        consts[d] = None;
                    }
                }
            }
        }
    }
    out
}

/// Automaton successors for one event, first matching transition wins; an
/// undecidable predicate branches both ways.
fn automaton_step(r: &RuleAutomaton, q: usize, ev: &PathEvent) -> Vec<usize> {
    let mut out = Vec::new();
    for t in r.transitions.iter().filter(|t| t.from == q) {
        if t.event.kind != ev.kind || t.event.message != ev.message {
            continue;
        }
        let truth = match &t.event.predicate {
            None => Some(true),
            // Incoming sensor values are not known statically.
            Some(_) if ev.kind == EventKind::Observe => None,
            Some(pred) => match ev.fields.iter().rev().find(|(f, _)| *f == pred.field) {
                None => Some(false),
                Some((_, None)) => None,
                Some((_, Some(v))) => Some(cmp_holds(pred.op, *v, pred.value)),
            },
        };
        match truth {
            Some(true) => {
                out.push(t.to);
                return out;
            }
            Some(false) => {}
            None => out.push(t.to),
        }
    }
    out.push(q);
    out
}

/// Bad automaton states reachable by some sequence of handler invocations,
/// by breadth-first search over automaton states with each handler path
/// unrolled into its event word. Bad states count mid-invocation too, so
/// runs cut off in a loop contribute their events but no next state.
pub fn temporal_by_paths(p: &AppProgram, r: &RuleAutomaton, max_visits: usize) -> BTreeSet<String> {
    let words: Vec<(Vec<PathEvent>, bool)> = p
        .handlers
        .iter()
        .flat_map(|h| {
            handler_paths(h, max_visits)
                .into_iter()
                .map(move |(path, halts)| (path_events(h, &path), halts))
        })
        .collect();
    let mut bad = BTreeSet::new();
    let mut seen = HashSet::from([r.start]);
    let mut queue = VecDeque::from([r.start]);
    while let Some(q0) = queue.pop_front() {
        for (w, halts) in &words {
            let mut cur: BTreeSet<usize> = [q0].into();
            for ev in w {
                cur = cur.iter().flat_map(|&q| automaton_step(r, q, ev)).collect();
                for &q in &cur {
                    if r.bad[q] {
                        bad.insert(r.states[q].clone());
                    }
                }
            }
            for q in cur.into_iter().filter(|_| *halts) {
                if seen.insert(q) {
                    queue.push_back(q);
                }
            }
        }
    }
    bad
}

/// Composite Simpson's rule on `[a, b]` with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

pub fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Lead-brake kinematics with the ego cruising at constant speed until a
/// brake trigger, then braking at `a_max`.
#[derive(Debug, Clone, Copy)]
pub struct LeadBrake {
    pub gap: f64,
    pub ego_speed: f64,
    pub lead_speed: f64,
    pub lead_decel: f64,
    pub onset: f64,
}

impl LeadBrake {
    pub fn lead_pos(&self, t: f64) -> f64 {
        let v = self.lead_speed;
        if t <= self.onset || self.lead_decel == 0.0 {
            return self.gap + v * t;
        }
        let tb = (t - self.onset).min(v / self.lead_decel);
        self.gap + v * self.onset + v * tb - 0.5 * self.lead_decel * tb * tb
    }

    pub fn lead_speed_at(&self, t: f64) -> f64 {
        if t <= self.onset {
            self.lead_speed
        } else {
            (self.lead_speed - self.lead_decel * (t - self.onset)).max(0.0)
        }
    }

    /// First multiple of `tick` at which gap / closing speed drops to
    /// `ttc`, with the ego still cruising.
    pub fn trigger_time(&self, ttc: f64, tick: f64, horizon: f64) -> Option<f64> {
        let mut k = 0usize;
        loop {
            let t = k as f64 * tick;
            if t > horizon {
                return None;
            }
            let gap = self.lead_pos(t) - self.ego_speed * t;
            let closing = self.ego_speed - self.lead_speed_at(t);
            if closing > 0.0 && gap / closing <= ttc {
                return Some(t);
            }
            k += 1;
        }
    }

    /// Smallest gap when the ego brakes at `a_max` from `t_brake` to a stop.
    pub fn min_gap_braking_at(&self, t_brake: f64, a_max: f64) -> f64 {
        let ve = self.ego_speed;
        let ego_pos = |t: f64| {
            if t <= t_brake {
                ve * t
            } else {
                let tb = (t - t_brake).min(ve / a_max);
                ve * t_brake + ve * tb - 0.5 * a_max * tb * tb
            }
        };
        // Once the ego has stopped the gap can only grow.
        let t_end = t_brake + ve / a_max + 0.1;
        let n = 200_000;
        (0..=n)
            .map(|i| {
                let t = t_end * i as f64 / n as f64;
                self.lead_pos(t) - ego_pos(t)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

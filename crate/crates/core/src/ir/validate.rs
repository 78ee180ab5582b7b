use std::collections::BTreeSet;

use super::{AppProgram, BlockIdx, Handler, Instruction, Local, Op, Terminator};
use crate::finding::Finding;
use crate::sim::bus::ScalarType;

/// Per-variable type state for the forward type analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Num,
    Bool,
    /// Different types reach this point along different paths.
    Mixed,
}

impl Ty {
    fn from_scalar(t: ScalarType) -> Ty {
        match t {
            ScalarType::Num => Ty::Num,
            ScalarType::Bool => Ty::Bool,
        }
    }

    fn join(a: Option<Ty>, b: Option<Ty>) -> Option<Ty> {
        match (a, b) {
            (None, x) | (x, None) => x,
            (Some(x), Some(y)) if x == y => Some(x),
            _ => Some(Ty::Mixed),
        }
    }
}

/// Checks handler, CFG and instruction invariants: reachability from entry,
/// definite assignment, operand types, publish completeness.
pub fn validate_program(p: &AppProgram) -> Vec<Finding> {
    let mut findings = Vec::new();
    for h in &p.handlers {
        let loc = |b: BlockIdx| format!("{}/{}", h.trigger, h.blocks[b].id);
        if h.trigger.is_command() {
            findings.push(Finding::reject(
                "non_subscribable_trigger",
                h.trigger.as_str(),
                format!("apps cannot receive {} messages", h.trigger),
            ));
        }
        let reachable = reachable_blocks(h);
        for b in 0..h.blocks.len() {
            if !reachable.contains(&b) {
                findings.push(Finding::reject(
                    "unreachable_block",
                    loc(b),
                    "block is not reachable from the handler entry",
                ));
            }
        }

        let defined = definitely_assigned(h);
        let types = infer_types(p, h);
        for (b, block) in h.blocks.iter().enumerate() {
            if !reachable.contains(&b) {
                continue;
            }
            let mut def = defined[b].clone().unwrap_or_default();
            let mut ty = types[b].clone();
            let name = |l: Local| h.locals[l].as_str();
            let use_check = |l: Local, def: &BTreeSet<Local>, findings: &mut Vec<Finding>| {
                if !def.contains(&l) {
                    findings.push(Finding::reject(
                        "use_before_def",
                        loc(b),
                        format!("`{}` may be read before it is assigned", name(l)),
                    ));
                }
            };
            for ins in &block.body {
                for u in ins.uses() {
                    use_check(u, &def, &mut findings);
                }
                for (what, l, want) in expected_types(p, h, ins, &ty) {
                    if ty[l].is_some_and(|t| t != want) {
                        findings.push(Finding::reject(
                            "type_mismatch",
                            loc(b),
                            format!("{what} `{}` must be {:?}", name(l), want),
                        ));
                    }
                }
                match ins {
                    Instruction::ReadField { field, .. } if field.kind() != h.trigger => {
                        findings.push(Finding::reject(
                            "field_kind_mismatch",
                            loc(b),
                            format!("{field} is not a field of {}", h.trigger),
                        ));
                    }
                    Instruction::Publish { kind, fields } => {
                        if !kind.is_command() {
                            findings.push(Finding::reject(
                                "publish_non_command",
                                loc(b),
                                format!("apps may only publish commands, not {kind}"),
                            ));
                        }
                        for f in kind.fields() {
                            if !fields.iter().any(|(g, _)| *g == f) {
                                findings.push(Finding::reject(
                                    "missing_publish_field",
                                    loc(b),
                                    format!("publish {kind} does not set {}", f.name()),
                                ));
                            }
                        }
                    }
                    _ => {}
                }
                transfer_types(p, h, ins, &mut ty);
                if let Some(d) = ins.def() {
                    def.insert(d);
                }
            }
            if let Terminator::Branch { cond, .. } = block.term {
                use_check(cond, &def, &mut findings);
                if ty[cond].is_some_and(|t| t != Ty::Bool) {
                    findings.push(Finding::reject(
                        "type_mismatch",
                        loc(b),
                        format!("branch condition `{}` is not boolean", name(cond)),
                    ));
                }
            }
        }
    }
    for g in &p.globals {
        if g.name.is_empty() {
            findings.push(Finding::reject("empty_global_name", "globals", "unnamed global"));
        }
    }
    findings.sort();
    findings.dedup();
    findings
}

pub(crate) fn reachable_blocks(h: &Handler) -> BTreeSet<BlockIdx> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![h.entry];
    while let Some(b) = stack.pop() {
        if seen.insert(b) {
            stack.extend(h.blocks[b].term.successors());
        }
    }
    seen
}

/// Forward must-analysis: variables assigned on every path to each block
/// entry. `None` marks blocks not reached by the fixpoint.
fn definitely_assigned(h: &Handler) -> Vec<Option<BTreeSet<Local>>> {
    let n = h.blocks.len();
    let preds = h.predecessors();
    let mut inn: Vec<Option<BTreeSet<Local>>> = vec![None; n];
    inn[h.entry] = Some(BTreeSet::new());
    let out_of = |b: BlockIdx, inn: &[Option<BTreeSet<Local>>]| -> Option<BTreeSet<Local>> {
        let mut s = inn[b].clone()?;
        s.extend(h.blocks[b].body.iter().filter_map(Instruction::def));
        Some(s)
    };
    let mut changed = true;
    while changed {
        changed = false;
        for b in 0..n {
            if b == h.entry {
                continue;
            }
            let mut acc: Option<BTreeSet<Local>> = None;
            for &p in &preds[b] {
                if let Some(o) = out_of(p, &inn) {
                    acc = Some(match acc {
                        None => o,
                        Some(a) => a.intersection(&o).copied().collect(),
                    });
                }
            }
            if acc != inn[b] && acc.is_some() {
                inn[b] = acc;
                changed = true;
            }
        }
    }
    inn
}

fn op_result(op: Op) -> Ty {
    match op {
        Op::Lt | Op::Le | Op::Eq | Op::And | Op::Or => Ty::Bool,
        _ => Ty::Num,
    }
}

fn transfer_types(p: &AppProgram, _h: &Handler, ins: &Instruction, ty: &mut [Option<Ty>]) {
    let result = match ins {
        Instruction::Const { dst, value } => Some((*dst, Ty::from_scalar(value.ty()))),
        Instruction::ReadField { dst, field } => Some((*dst, Ty::from_scalar(field.ty()))),
        Instruction::ReadGlobal { dst, global } => {
            Some((*dst, Ty::from_scalar(p.globals[*global].init.ty())))
        }
        Instruction::BinOp { dst, op, .. } => Some((*dst, op_result(*op))),
        Instruction::TableLookup { dst, .. } | Instruction::TableLen { dst, .. } => {
            Some((*dst, Ty::Num))
        }
        _ => None,
    };
    if let Some((d, t)) = result {
        ty[d] = Some(t);
    }
}

/// Operand type requirements of one instruction: (role, variable, type).
fn expected_types(
    p: &AppProgram,
    _h: &Handler,
    ins: &Instruction,
    ty: &[Option<Ty>],
) -> Vec<(&'static str, Local, Ty)> {
    match ins {
        Instruction::BinOp { op, a, b, .. } => {
            let operand = match op {
                Op::And | Op::Or => Ty::Bool,
                // `eq` compares like with like; mixed operands are caught
                // by requiring the second to match the first.
                Op::Eq => match ty[*a] {
                    Some(Ty::Mixed) => Ty::Num,
                    Some(t) => t,
                    None => return vec![],
                },
                _ => Ty::Num,
            };
            std::iter::once(("operand", *a, operand))
                .chain(b.map(|b| ("operand", b, operand)))
                .collect()
        }
        Instruction::TableLookup { index, .. } => vec![("table index", *index, Ty::Num)],
        Instruction::WriteGlobal { global, src } => {
            vec![("global value", *src, Ty::from_scalar(p.globals[*global].init.ty()))]
        }
        Instruction::Publish { fields, .. } => fields
            .iter()
            .map(|(f, v)| ("published field", *v, Ty::from_scalar(f.ty())))
            .collect(),
        _ => vec![],
    }
}

/// Forward type analysis to a fixpoint; returns the type state at each
/// block entry.
fn infer_types(p: &AppProgram, h: &Handler) -> Vec<Vec<Option<Ty>>> {
    let n = h.blocks.len();
    let width = h.locals.len();
    let mut inn: Vec<Vec<Option<Ty>>> = vec![vec![None; width]; n];
    let mut changed = true;
    while changed {
        changed = false;
        for b in 0..n {
            let mut out = inn[b].clone();
            for ins in &h.blocks[b].body {
                transfer_types(p, h, ins, &mut out);
            }
            for s in h.blocks[b].term.successors() {
                for v in 0..width {
                    let joined = Ty::join(inn[s][v], out[v]);
                    if joined != inn[s][v] {
                        inn[s][v] = joined;
                        changed = true;
                    }
                }
            }
        }
    }
    inn
}

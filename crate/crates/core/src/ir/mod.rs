//! Control-flow-graph intermediate representation for vehicle apps.
//!
//! A program is a set of message handlers; each handler is a list of basic
//! blocks ending in exactly one terminator. Variables, globals, tables and
//! block targets are resolved to indices at parse time so the interpreter
//! never looks anything up by name.

mod interp;
mod parse;
mod validate;

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::sim::bus::{Field, MessageKind, Value};

pub use interp::{execute_handler, AppFault, AppState, HandlerOutcome, StoreRecord, DEFAULT_FUEL};
pub use parse::{parse_program, IrError, IrErrorKind};
pub use validate::validate_program;

/// Index of a local variable within its handler.
pub type Local = usize;
/// Index of a block within its handler.
pub type BlockIdx = usize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Column {
    X,
    Y,
    Heading,
}

impl Column {
    pub fn as_str(self) -> &'static str {
        match self {
            Column::X => "x",
            Column::Y => "y",
            Column::Heading => "heading",
        }
    }

    fn parse(s: &str) -> Option<Column> {
        match s {
            "x" => Some(Column::X),
            "y" => Some(Column::Y),
            "heading" => Some(Column::Heading),
            _ => None,
        }
    }

    pub fn get(self, w: &Waypoint) -> f64 {
        match self {
            Column::X => w.x,
            Column::Y => w.y,
            Column::Heading => w.heading,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Sqrt,
    Abs,
    Min,
    Max,
    Lt,
    Le,
    Eq,
    And,
    Or,
}

impl Op {
    pub const ALL: [Op; 14] = [
        Op::Add,
        Op::Sub,
        Op::Mul,
        Op::Div,
        Op::Pow,
        Op::Sqrt,
        Op::Abs,
        Op::Min,
        Op::Max,
        Op::Lt,
        Op::Le,
        Op::Eq,
        Op::And,
        Op::Or,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Pow => "pow",
            Op::Sqrt => "sqrt",
            Op::Abs => "abs",
            Op::Min => "min",
            Op::Max => "max",
            Op::Lt => "lt",
            Op::Le => "le",
            Op::Eq => "eq",
            Op::And => "and",
            Op::Or => "or",
        }
    }

    fn parse(s: &str) -> Option<Op> {
        Op::ALL.into_iter().find(|op| op.as_str() == s)
    }

    pub fn arity(self) -> usize {
        match self {
            Op::Sqrt | Op::Abs => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Instruction {
    Const { dst: Local, value: Value },
    ReadField { dst: Local, field: Field },
    ReadGlobal { dst: Local, global: usize },
    WriteGlobal { global: usize, src: Local },
    /// `b` is `None` exactly for unary ops.
    BinOp { dst: Local, op: Op, a: Local, b: Option<Local> },
    TableLookup { dst: Local, table: usize, index: Local, column: Column },
    TableLen { dst: Local, table: usize },
    Publish { kind: MessageKind, fields: Vec<(Field, Local)> },
    NetSend { host: String, values: Vec<Local> },
    Store { key: String, values: Vec<Local> },
}

impl Instruction {
    pub fn def(&self) -> Option<Local> {
        match self {
            Instruction::Const { dst, .. }
            | Instruction::ReadField { dst, .. }
            | Instruction::ReadGlobal { dst, .. }
            | Instruction::BinOp { dst, .. }
            | Instruction::TableLookup { dst, .. }
            | Instruction::TableLen { dst, .. } => Some(*dst),
            _ => None,
        }
    }

    pub fn uses(&self) -> Vec<Local> {
        match self {
            Instruction::Const { .. }
            | Instruction::ReadField { .. }
            | Instruction::ReadGlobal { .. }
            | Instruction::TableLen { .. } => vec![],
            Instruction::WriteGlobal { src, .. } => vec![*src],
            Instruction::BinOp { a, b, .. } => std::iter::once(*a).chain(*b).collect(),
            Instruction::TableLookup { index, .. } => vec![*index],
            Instruction::Publish { fields, .. } => fields.iter().map(|(_, v)| *v).collect(),
            Instruction::NetSend { values, .. } | Instruction::Store { values, .. } => values.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Terminator {
    Branch { cond: Local, then_block: BlockIdx, else_block: BlockIdx },
    Jump(BlockIdx),
    Halt,
}

impl Terminator {
    pub fn successors(&self) -> Vec<BlockIdx> {
        match self {
            Terminator::Branch {
                then_block,
                else_block,
                ..
            } => vec![*then_block, *else_block],
            Terminator::Jump(b) => vec![*b],
            Terminator::Halt => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasicBlock {
    pub id: String,
    pub body: Vec<Instruction>,
    pub term: Terminator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handler {
    pub trigger: MessageKind,
    /// Local variable names, indexed by [`Local`].
    pub locals: Vec<String>,
    pub blocks: Vec<BasicBlock>,
    pub entry: BlockIdx,
}

impl Handler {
    pub fn predecessors(&self) -> Vec<Vec<BlockIdx>> {
        let mut preds = vec![Vec::new(); self.blocks.len()];
        for (i, b) in self.blocks.iter().enumerate() {
            for s in b.term.successors() {
                preds[s].push(i);
            }
        }
        preds
    }

    pub fn block_index(&self, id: &str) -> Option<BlockIdx> {
        self.blocks.iter().position(|b| b.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalDecl {
    pub name: String,
    pub init: Value,
}

/// Immutable waypoint table bound from a package asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub asset: String,
    pub rows: Vec<Waypoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppProgram {
    pub app_id: String,
    pub globals: Vec<GlobalDecl>,
    pub tables: Vec<Table>,
    /// Sorted by trigger; at most one handler per message kind.
    pub handlers: Vec<Handler>,
}

impl AppProgram {
    pub fn handler(&self, kind: MessageKind) -> Option<&Handler> {
        self.handlers.iter().find(|h| h.trigger == kind)
    }

    pub fn global_index(&self, name: &str) -> Option<usize> {
        self.globals.iter().position(|g| g.name == name)
    }

    pub fn table_index(&self, name: &str) -> Option<usize> {
        self.tables.iter().position(|t| t.name == name)
    }

    /// Fills the named table with rows, e.g. from a package's path asset.
    pub fn bind_table(&mut self, name: &str, rows: Vec<Waypoint>) -> bool {
        match self.tables.iter_mut().find(|t| t.name == name) {
            Some(t) => {
                t.rows = rows;
                true
            }
            None => false,
        }
    }

    /// Canonical textual form; reparses to an equal program (table rows,
    /// which come from assets, excepted).
    pub fn print(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "app {}", self.app_id);
        for g in &self.globals {
            let _ = writeln!(out, "global {} = {}", g.name, g.init);
        }
        for t in &self.tables {
            let _ = writeln!(out, "table {} \"{}\"", t.name, t.asset);
        }
        for h in &self.handlers {
            let _ = writeln!(out, "\nhandler {}:", h.trigger);
            for b in &h.blocks {
                let _ = writeln!(out, "  block {}:", b.id);
                for ins in &b.body {
                    let _ = writeln!(out, "    {}", InstrDisplay { program: self, handler: h, ins });
                }
                let local = |l: &Local| h.locals[*l].as_str();
                let _ = match &b.term {
                    Terminator::Branch {
                        cond,
                        then_block,
                        else_block,
                    } => writeln!(
                        out,
                        "    branch {} {} {}",
                        local(cond),
                        h.blocks[*then_block].id,
                        h.blocks[*else_block].id
                    ),
                    Terminator::Jump(t) => writeln!(out, "    jump {}", h.blocks[*t].id),
                    Terminator::Halt => writeln!(out, "    halt"),
                };
            }
        }
        out
    }
}

struct InstrDisplay<'a> {
    program: &'a AppProgram,
    handler: &'a Handler,
    ins: &'a Instruction,
}

impl fmt::Display for InstrDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = |i: &Local| self.handler.locals[*i].as_str();
        let values = |vs: &[Local]| vs.iter().map(l).collect::<Vec<_>>().join(" ");
        match self.ins {
            Instruction::Const { dst, value } => write!(f, "{} = const {}", l(dst), value),
            Instruction::ReadField { dst, field } => write!(f, "{} = field {}", l(dst), field),
            Instruction::ReadGlobal { dst, global } => {
                write!(f, "{} = global {}", l(dst), self.program.globals[*global].name)
            }
            Instruction::WriteGlobal { global, src } => {
                write!(f, "setglobal {} {}", self.program.globals[*global].name, l(src))
            }
            Instruction::BinOp { dst, op, a, b } => {
                write!(f, "{} = {} {}", l(dst), op.as_str(), l(a))?;
                if let Some(b) = b {
                    write!(f, " {}", l(b))?;
                }
                Ok(())
            }
            Instruction::TableLookup {
                dst,
                table,
                index,
                column,
            } => write!(
                f,
                "{} = lookup {} {} {}",
                l(dst),
                self.program.tables[*table].name,
                l(index),
                column.as_str()
            ),
            Instruction::TableLen { dst, table } => {
                write!(f, "{} = len {}", l(dst), self.program.tables[*table].name)
            }
            Instruction::Publish { kind, fields } => {
                write!(f, "publish {kind}")?;
                for (field, v) in fields {
                    write!(f, " {}={}", field.name(), l(v))?;
                }
                Ok(())
            }
            Instruction::NetSend { host, values: vs } => {
                write!(f, "netsend \"{host}\"")?;
                if !vs.is_empty() {
                    write!(f, " {}", values(vs))?;
                }
                Ok(())
            }
            Instruction::Store { key, values: vs } => {
                write!(f, "store \"{key}\"")?;
                if !vs.is_empty() {
                    write!(f, " {}", values(vs))?;
                }
                Ok(())
            }
        }
    }
}

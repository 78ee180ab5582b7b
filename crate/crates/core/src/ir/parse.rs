use std::collections::HashMap;

use thiserror::Error;

use super::{
    AppProgram, BasicBlock, Column, GlobalDecl, Handler, Instruction, Local, Op, Table, Terminator,
};
use crate::sim::bus::{parse_literal, Field, MessageKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrErrorKind {
    SyntaxError,
    UnknownMessageKind,
    UnknownField,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind:?} at {line}:{col}: {message}")]
pub struct IrError {
    pub kind: IrErrorKind,
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy)]
struct Tok<'a> {
    text: &'a str,
    col: usize,
}

fn tokenize(line: &str) -> Vec<Tok<'_>> {
    let mut toks = Vec::new();
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if bytes[i] == b'#' {
            break;
        }
        let start = i;
        if bytes[i] == b'"' {
            i += 1;
            while i < bytes.len() && bytes[i] != b'"' {
                i += 1;
            }
            i = (i + 1).min(bytes.len());
        } else {
            while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                i += 1;
            }
        }
        toks.push(Tok {
            text: &line[start..i],
            col: start + 1,
        });
    }
    toks
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Handler under construction: block references are resolved once the whole
/// handler has been read.
struct PendingHandler {
    trigger: MessageKind,
    line: usize,
    locals: Vec<String>,
    local_ids: HashMap<String, Local>,
    blocks: Vec<PendingBlock>,
}

struct PendingBlock {
    id: String,
    line: usize,
    body: Vec<Instruction>,
    term: Option<PendingTerm>,
}

enum PendingTerm {
    Branch(Local, (String, usize, usize), (String, usize, usize)),
    Jump((String, usize, usize)),
    Halt,
}

impl PendingHandler {
    fn local(&mut self, name: impl AsRef<str>) -> Local {
        let name = name.as_ref();
        if let Some(&i) = self.local_ids.get(name) {
            return i;
        }
        let i = self.locals.len();
        self.locals.push(name.to_string());
        self.local_ids.insert(name.to_string(), i);
        i
    }

    fn finish(self) -> Result<Handler, IrError> {
        if self.blocks.is_empty() {
            return Err(err(
                IrErrorKind::SyntaxError,
                self.line,
                1,
                format!("handler {} has no blocks", self.trigger),
            ));
        }
        let index: HashMap<&str, usize> = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.as_str(), i))
            .collect();
        let resolve = |(name, line, col): &(String, usize, usize)| {
            index.get(name.as_str()).copied().ok_or_else(|| {
                err(
                    IrErrorKind::SyntaxError,
                    *line,
                    *col,
                    format!("undefined block {name:?}"),
                )
            })
        };
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let term = match &b.term {
                None => {
                    return Err(err(
                        IrErrorKind::SyntaxError,
                        b.line,
                        1,
                        format!("block {:?} has no terminator", b.id),
                    ))
                }
                Some(PendingTerm::Halt) => Terminator::Halt,
                Some(PendingTerm::Jump(t)) => Terminator::Jump(resolve(t)?),
                Some(PendingTerm::Branch(c, t, e)) => Terminator::Branch {
                    cond: *c,
                    then_block: resolve(t)?,
                    else_block: resolve(e)?,
                },
            };
            blocks.push(BasicBlock {
                id: b.id.clone(),
                body: b.body.clone(),
                term,
            });
        }
        Ok(Handler {
            trigger: self.trigger,
            locals: self.locals,
            blocks,
            entry: 0,
        })
    }
}

fn err(kind: IrErrorKind, line: usize, col: usize, message: impl Into<String>) -> IrError {
    IrError {
        kind,
        line,
        col,
        message: message.into(),
    }
}

/// Parses the line-oriented `.avir` syntax.
///
/// ```text
/// app <id>
/// global <name> = <literal>
/// table <name> "<asset>"
/// handler <message_kind>:
///   block <id>:
///     <dst> = const <literal> | field <path> | global <name>
///     <dst> = <op> <a> [<b>] | lookup <table> <index> <column> | len <table>
///     setglobal <name> <src>
///     publish <kind> <field>=<var> ...
///     netsend "<host>" <var> ...
///     store "<key>" <var> ...
///     branch <cond> <then> <else> | jump <block> | halt
/// ```
///
/// The first block of a handler is its entry.
pub fn parse_program(text: &str) -> Result<AppProgram, IrError> {
    let mut app_id: Option<String> = None;
    let mut globals: Vec<GlobalDecl> = Vec::new();
    let mut tables: Vec<Table> = Vec::new();
    let mut handlers: Vec<Handler> = Vec::new();
    let mut current: Option<PendingHandler> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let toks = tokenize(raw);
        let Some(first) = toks.first().copied() else {
            continue;
        };
        let syntax = |col: usize, msg: String| err(IrErrorKind::SyntaxError, line, col, msg);
        let expect_len = |n: usize| -> Result<(), IrError> {
            if toks.len() == n {
                Ok(())
            } else {
                Err(syntax(
                    first.col,
                    format!("expected {n} tokens, found {}", toks.len()),
                ))
            }
        };
        let ident = |t: Tok<'_>| -> Result<String, IrError> {
            if is_ident(t.text) {
                Ok(t.text.to_string())
            } else {
                Err(syntax(t.col, format!("expected identifier, found {:?}", t.text)))
            }
        };
        let quoted = |t: Tok| -> Result<String, IrError> {
            let s = t.text;
            if s.len() >= 2 && s.starts_with('"') && s.ends_with('"') {
                Ok(s[1..s.len() - 1].to_string())
            } else {
                Err(syntax(t.col, format!("expected quoted string, found {s:?}")))
            }
        };

        match first.text {
            "app" => {
                expect_len(2)?;
                if current.is_some() || app_id.is_some() {
                    return Err(syntax(first.col, "`app` must appear once, before handlers".into()));
                }
                app_id = Some(ident(toks[1])?.to_string());
            }
            "global" | "table" if current.is_some() => {
                return Err(syntax(first.col, "declarations must precede handlers".into()));
            }
            "global" => {
                expect_len(4)?;
                let name = ident(toks[1])?;
                if toks[2].text != "=" {
                    return Err(syntax(toks[2].col, "expected `=`".into()));
                }
                let init = parse_literal(toks[3].text)
                    .ok_or_else(|| syntax(toks[3].col, format!("bad literal {:?}", toks[3].text)))?;
                if globals.iter().any(|g| g.name == name) {
                    return Err(syntax(toks[1].col, format!("global {name:?} declared twice")));
                }
                globals.push(GlobalDecl {
                    name: name.to_string(),
                    init,
                });
            }
            "table" => {
                expect_len(3)?;
                let name = ident(toks[1])?;
                if tables.iter().any(|t| t.name == name) {
                    return Err(syntax(toks[1].col, format!("table {name:?} declared twice")));
                }
                tables.push(Table {
                    name: name.to_string(),
                    asset: quoted(toks[2])?,
                    rows: Vec::new(),
                });
            }
            "handler" => {
                expect_len(2)?;
                let kind_text = toks[1]
                    .text
                    .strip_suffix(':')
                    .ok_or_else(|| syntax(toks[1].col, "expected `:` after message kind".into()))?;
                let trigger: MessageKind = kind_text.parse().map_err(|_| {
                    err(
                        IrErrorKind::UnknownMessageKind,
                        line,
                        toks[1].col,
                        format!("unknown message kind {kind_text:?}"),
                    )
                })?;
                if let Some(done) = current.take() {
                    handlers.push(done.finish()?);
                }
                if handlers.iter().any(|h| h.trigger == trigger) {
                    return Err(syntax(toks[1].col, format!("second handler for {trigger}")));
                }
                current = Some(PendingHandler {
                    trigger,
                    line,
                    locals: Vec::new(),
                    local_ids: HashMap::new(),
                    blocks: Vec::new(),
                });
            }
            "block" => {
                expect_len(2)?;
                let h = current
                    .as_mut()
                    .ok_or_else(|| syntax(first.col, "block outside handler".into()))?;
                let id = toks[1]
                    .text
                    .strip_suffix(':')
                    .filter(|s| is_ident(s))
                    .ok_or_else(|| syntax(toks[1].col, "expected `<id>:`".into()))?;
                if h.blocks.iter().any(|b| b.id == id) {
                    return Err(syntax(toks[1].col, format!("block {id:?} defined twice")));
                }
                h.blocks.push(PendingBlock {
                    id: id.to_string(),
                    line,
                    body: Vec::new(),
                    term: None,
                });
            }
            _ => {
                let h = current
                    .as_mut()
                    .ok_or_else(|| syntax(first.col, "instruction outside handler".into()))?;
                if h.blocks.last().is_none() {
                    return Err(syntax(first.col, "instruction outside block".into()));
                }
                if h.blocks.last().is_some_and(|b| b.term.is_some()) {
                    return Err(syntax(first.col, "instruction after terminator".into()));
                }
                let block_ref = |t: Tok| -> Result<(String, usize, usize), IrError> {
                    Ok((ident(t)?.to_string(), line, t.col))
                };
                let mut term = None;
                let mut ins = None;
                match first.text {
                    "halt" => {
                        expect_len(1)?;
                        term = Some(PendingTerm::Halt);
                    }
                    "jump" => {
                        expect_len(2)?;
                        term = Some(PendingTerm::Jump(block_ref(toks[1])?));
                    }
                    "branch" => {
                        expect_len(4)?;
                        let cond = h.local(ident(toks[1])?);
                        term = Some(PendingTerm::Branch(
                            cond,
                            block_ref(toks[2])?,
                            block_ref(toks[3])?,
                        ));
                    }
                    "setglobal" => {
                        expect_len(3)?;
                        let name = ident(toks[1])?;
                        let global = globals
                            .iter()
                            .position(|g| g.name == name)
                            .ok_or_else(|| syntax(toks[1].col, format!("unknown global {name:?}")))?;
                        let src = h.local(ident(toks[2])?);
                        ins = Some(Instruction::WriteGlobal { global, src });
                    }
                    "publish" => {
                        if toks.len() < 2 {
                            return Err(syntax(first.col, "publish needs a message kind".into()));
                        }
                        let kind: MessageKind = toks[1].text.parse().map_err(|_| {
                            err(
                                IrErrorKind::UnknownMessageKind,
                                line,
                                toks[1].col,
                                format!("unknown message kind {:?}", toks[1].text),
                            )
                        })?;
                        let mut fields = Vec::new();
                        for t in &toks[2..] {
                            let (name, var) = t
                                .text
                                .split_once('=')
                                .ok_or_else(|| syntax(t.col, "expected field=var".into()))?;
                            let field = Field::lookup(kind, name).ok_or_else(|| {
                                err(
                                    IrErrorKind::UnknownField,
                                    line,
                                    t.col,
                                    format!("{kind} has no field {name:?}"),
                                )
                            })?;
                            let var = ident(Tok {
                                text: var,
                                col: t.col + name.len() + 1,
                            })?;
                            fields.push((field, h.local(var)));
                        }
                        ins = Some(Instruction::Publish { kind, fields });
                    }
                    "netsend" | "store" => {
                        if toks.len() < 2 {
                            return Err(syntax(first.col, "missing quoted target".into()));
                        }
                        let target = quoted(toks[1])?;
                        let mut values = Vec::new();
                        for t in &toks[2..] {
                            values.push(h.local(ident(*t)?));
                        }
                        ins = Some(if first.text == "netsend" {
                            Instruction::NetSend {
                                host: target,
                                values,
                            }
                        } else {
                            Instruction::Store { key: target, values }
                        });
                    }
                    _ => {
                        if toks.len() < 3 || toks[1].text != "=" {
                            return Err(syntax(
                                first.col,
                                format!("unknown instruction {:?}", first.text),
                            ));
                        }
                        let dst_name = ident(first)?;
                        let op_tok = toks[2];
                        let operands = &toks[3..];
                        let table_of = |t: Tok| -> Result<usize, IrError> {
                            tables
                                .iter()
                                .position(|tb| tb.name == t.text)
                                .ok_or_else(|| syntax(t.col, format!("unknown table {:?}", t.text)))
                        };
                        let instr = match op_tok.text {
                            "const" => {
                                expect_len(4)?;
                                let value = parse_literal(operands[0].text).ok_or_else(|| {
                                    syntax(operands[0].col, format!("bad literal {:?}", operands[0].text))
                                })?;
                                Instruction::Const {
                                    dst: h.local(dst_name),
                                    value,
                                }
                            }
                            "field" => {
                                expect_len(4)?;
                                let field = Field::from_path(operands[0].text).ok_or_else(|| {
                                    let head = operands[0].text.split('.').next().unwrap_or("");
                                    let kind = if head.parse::<MessageKind>().is_ok() {
                                        IrErrorKind::UnknownField
                                    } else {
                                        IrErrorKind::UnknownMessageKind
                                    };
                                    err(
                                        kind,
                                        line,
                                        operands[0].col,
                                        format!("unknown field {:?}", operands[0].text),
                                    )
                                })?;
                                Instruction::ReadField {
                                    dst: h.local(dst_name),
                                    field,
                                }
                            }
                            "global" => {
                                expect_len(4)?;
                                let name = ident(operands[0])?;
                                let global =
                                    globals.iter().position(|g| g.name == name).ok_or_else(|| {
                                        syntax(operands[0].col, format!("unknown global {name:?}"))
                                    })?;
                                Instruction::ReadGlobal {
                                    dst: h.local(dst_name),
                                    global,
                                }
                            }
                            "lookup" => {
                                expect_len(6)?;
                                let table = table_of(operands[0])?;
                                let index = h.local(ident(operands[1])?);
                                let column = Column::parse(operands[2].text).ok_or_else(|| {
                                    syntax(operands[2].col, format!("unknown column {:?}", operands[2].text))
                                })?;
                                Instruction::TableLookup {
                                    dst: h.local(dst_name),
                                    table,
                                    index,
                                    column,
                                }
                            }
                            "len" => {
                                expect_len(4)?;
                                let table = table_of(operands[0])?;
                                Instruction::TableLen {
                                    dst: h.local(dst_name),
                                    table,
                                }
                            }
                            other => {
                                let op = Op::parse(other).ok_or_else(|| {
                                    syntax(op_tok.col, format!("unknown operation {other:?}"))
                                })?;
                                if operands.len() != op.arity() {
                                    return Err(syntax(
                                        op_tok.col,
                                        format!(
                                            "{other} takes {} operand(s), found {}",
                                            op.arity(),
                                            operands.len()
                                        ),
                                    ));
                                }
                                let dst = h.local(dst_name);
                                let a = h.local(ident(operands[0])?);
                                let b = match operands.get(1) {
                                    Some(t) => Some(h.local(ident(*t)?)),
                                    None => None,
                                };
                                Instruction::BinOp { dst, op, a, b }
                            }
                        };
                        ins = Some(instr);
                    }
                }
                let block = h.blocks.last_mut().expect("checked above");
                if let Some(i) = ins {
                    block.body.push(i);
                }
                if term.is_some() {
                    block.term = term;
                }
            }
        }
    }
    if let Some(done) = current.take() {
        handlers.push(done.finish()?);
    }
    let app_id = app_id.ok_or_else(|| err(IrErrorKind::SyntaxError, 1, 1, "missing `app <id>` line"))?;
    handlers.sort_by_key(|h| h.trigger);
    Ok(AppProgram {
        app_id,
        globals,
        tables,
        handlers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halt_only_handler() {
        let p = parse_program("app a\nhandler vehicle_report:\n  block entry:\n    halt\n").unwrap();
        assert_eq!(p.handlers.len(), 1);
        assert_eq!(p.handlers[0].blocks.len(), 1);
        assert_eq!(p.handlers[0].blocks[0].term, Terminator::Halt);
    }

    #[test]
    fn undefined_block_is_a_syntax_error() {
        let e = parse_program("app a\nhandler vehicle_report:\nblock entry:\n  jump nowhere\n").unwrap_err();
        assert_eq!(e.kind, IrErrorKind::SyntaxError);
        assert_eq!((e.line, e.col), (4, 8));
    }

    #[test]
    fn vocabulary_errors() {
        let e = parse_program("app a\nhandler radar_report:\n").unwrap_err();
        assert_eq!(e.kind, IrErrorKind::UnknownMessageKind);
        let e = parse_program("app a\nhandler vehicle_report:\nblock b:\n x = field vehicle_report.lidar\n halt\n")
            .unwrap_err();
        assert_eq!(e.kind, IrErrorKind::UnknownField);
        let e = parse_program("app a\nhandler vehicle_report:\nblock b:\n x = const 1\n publish steering_cmd torque=x\n halt\n")
            .unwrap_err();
        assert_eq!(e.kind, IrErrorKind::UnknownField);
    }

    #[test]
    fn structural_errors() {
        for text in [
            "handler vehicle_report:\nblock b:\nhalt\n",
            "app a\nhandler vehicle_report:\nblock b:\n x = const 1\n",
            "app a\nhandler vehicle_report:\nblock b:\n halt\n x = const 1\n",
            "app a\nhandler vehicle_report:\nblock b:\n x = sqrt a b\n halt\n",
            "app a\nhandler vehicle_report:\nblock b:\n x = global nope\n halt\n",
            "app a\nhandler vehicle_report:\n",
        ] {
            assert_eq!(parse_program(text).unwrap_err().kind, IrErrorKind::SyntaxError, "{text}");
        }
    }

    #[test]
    fn named_literals_and_comments() {
        let p = parse_program(
            "# header\napp a\nglobal g = park\nhandler vehicle_report:\nblock b: # entry\n x = const red\n halt\n",
        )
        .unwrap();
        assert_eq!(p.globals[0].init, crate::sim::bus::Value::Num(0.0));
        assert_eq!(
            p.handlers[0].blocks[0].body[0],
            Instruction::Const {
                dst: 0,
                value: crate::sim::bus::Value::Num(0.0)
            }
        );
    }
}

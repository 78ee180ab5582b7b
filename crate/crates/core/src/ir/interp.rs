use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AppProgram, BasicBlock, Handler, Instruction, Op, Terminator};
use crate::sim::bus::{BusMessage, CommandError, NetSendRecord, Value};

/// Default per-invocation instruction budget.
pub const DEFAULT_FUEL: u64 = 10_000;

/// Mutable app state carried between handler invocations: the globals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppState {
    pub globals: Vec<Value>,
}

impl AppState {
    pub fn initial(p: &AppProgram) -> Self {
        AppState {
            globals: p.globals.iter().map(|g| g.init).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreRecord {
    pub key: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum AppFault {
    #[error("division by zero in {0}")]
    DivisionByZero(String),
    #[error("index {index} out of range for table {table}")]
    TableIndexOutOfRange { table: String, index: f64 },
    #[error("type error: {0}")]
    TypeError(String),
    #[error("read of unassigned variable {0}")]
    Unassigned(String),
    #[error("bad command: {0}")]
    BadCommand(String),
    #[error("instruction budget exhausted")]
    FuelExhausted,
}

impl From<CommandError> for AppFault {
    fn from(e: CommandError) -> Self {
        AppFault::BadCommand(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandlerOutcome {
    pub state: AppState,
    /// Commands in instruction execution order.
    pub publishes: Vec<BusMessage>,
    pub net_sends: Vec<NetSendRecord>,
    pub stores: Vec<StoreRecord>,
    /// Instructions and terminators executed.
    pub steps: u64,
    pub fuel_exhausted: bool,
    /// When set, the state is unchanged and all outputs were discarded.
    pub fault: Option<AppFault>,
}

impl HandlerOutcome {
    fn empty(state: &AppState) -> Self {
        HandlerOutcome {
            state: state.clone(),
            publishes: Vec::new(),
            net_sends: Vec::new(),
            stores: Vec::new(),
            steps: 0,
            fuel_exhausted: false,
            fault: None,
        }
    }
}

/// Runs the handler for `msg.kind()` with at most `fuel` steps. A fault
/// (including fuel exhaustion) rolls back state and discards outputs.
pub fn execute_handler(
    p: &AppProgram,
    state: &AppState,
    msg: &BusMessage,
    fuel: u64,
) -> HandlerOutcome {
    let mut outcome = HandlerOutcome::empty(state);
    let Some(h) = p.handler(msg.kind()) else {
        return outcome;
    };
    let mut locals: Vec<Option<Value>> = vec![None; h.locals.len()];
    let mut globals = state.globals.clone();
    let mut block = h.entry;

    let result: Result<(), AppFault> = 'run: loop {
        let b = &h.blocks[block];
        let where_ = || format!("{}/{}", h.trigger, b.id);
        for ins in &b.body {
            if outcome.steps == fuel {
                break 'run Err(AppFault::FuelExhausted);
            }
            outcome.steps += 1;
            let step = exec_instr(p, h, b, ins, msg, &mut locals, &mut globals, &mut outcome);
            if let Err(e) = step {
                break 'run Err(e);
            }
        }
        if outcome.steps == fuel {
            break Err(AppFault::FuelExhausted);
        }
        outcome.steps += 1;
        match &b.term {
            Terminator::Halt => break Ok(()),
            Terminator::Jump(t) => block = *t,
            Terminator::Branch {
                cond,
                then_block,
                else_block,
            } => match locals[*cond] {
                Some(Value::Bool(true)) => block = *then_block,
                Some(Value::Bool(false)) => block = *else_block,
                Some(Value::Num(_)) => {
                    break Err(AppFault::TypeError(format!(
                        "branch on number `{}` at {}",
                        h.locals[*cond],
                        where_()
                    )))
                }
                None => break Err(AppFault::Unassigned(h.locals[*cond].clone())),
            },
        }
    };

    match result {
        Ok(()) => outcome.state.globals = globals,
        Err(fault) => {
            outcome.fuel_exhausted = fault == AppFault::FuelExhausted;
            outcome.publishes.clear();
            outcome.net_sends.clear();
            outcome.stores.clear();
            outcome.fault = Some(fault);
        }
    }
    outcome
}

#[allow(clippy::too_many_arguments)]
fn exec_instr(
    p: &AppProgram,
    h: &Handler,
    b: &BasicBlock,
    ins: &Instruction,
    msg: &BusMessage,
    locals: &mut [Option<Value>],
    globals: &mut [Value],
    outcome: &mut HandlerOutcome,
) -> Result<(), AppFault> {
    let where_ = || format!("{}/{}", h.trigger, b.id);
    let get = |locals: &[Option<Value>], l: usize| -> Result<Value, AppFault> {
        locals[l].ok_or_else(|| AppFault::Unassigned(h.locals[l].clone()))
    };
    let num = |locals: &[Option<Value>], l: usize| -> Result<f64, AppFault> {
        get(locals, l)?.as_num().ok_or_else(|| {
            AppFault::TypeError(format!("`{}` is not a number at {}", h.locals[l], where_()))
        })
    };
    let boolean = |locals: &[Option<Value>], l: usize| -> Result<bool, AppFault> {
        get(locals, l)?.as_bool().ok_or_else(|| {
            AppFault::TypeError(format!("`{}` is not a boolean at {}", h.locals[l], where_()))
        })
    };
    let value = match ins {
        Instruction::Const { value, .. } => *value,
        Instruction::ReadField { field, .. } => msg.field(*field).ok_or_else(|| {
            AppFault::TypeError(format!("{field} not present in {}", msg.kind()))
        })?,
        Instruction::ReadGlobal { global, .. } => globals[*global],
        Instruction::WriteGlobal { global, src } => {
            let v = get(locals, *src)?;
            if v.ty() != globals[*global].ty() {
                return Err(AppFault::TypeError(format!(
                    "global {} changes type",
                    p.globals[*global].name
                )));
            }
            globals[*global] = v;
            return Ok(());
        }
        Instruction::BinOp { op, a, b, .. } => {
            let second = || b.expect("binary op has two operands");
            match op {
                Op::And => Value::Bool(boolean(locals, *a)? && boolean(locals, second())?),
                Op::Or => Value::Bool(boolean(locals, *a)? || boolean(locals, second())?),
                Op::Eq => {
                    let (x, y) = (get(locals, *a)?, get(locals, second())?);
                    if x.ty() != y.ty() {
                        return Err(AppFault::TypeError(format!("eq on mixed types at {}", where_())));
                    }
                    Value::Bool(x.same(y))
                }
                Op::Sqrt => Value::Num(num(locals, *a)?.sqrt()),
                Op::Abs => Value::Num(num(locals, *a)?.abs()),
                _ => {
                    let (x, y) = (num(locals, *a)?, num(locals, second())?);
                    match op {
                        Op::Add => Value::Num(x + y),
                        Op::Sub => Value::Num(x - y),
                        Op::Mul => Value::Num(x * y),
                        Op::Div => {
                            if y == 0.0 {
                                return Err(AppFault::DivisionByZero(where_()));
                            }
                            Value::Num(x / y)
                        }
                        Op::Pow => Value::Num(x.powf(y)),
                        Op::Min => Value::Num(x.min(y)),
                        Op::Max => Value::Num(x.max(y)),
                        Op::Lt => Value::Bool(x < y),
                        Op::Le => Value::Bool(x <= y),
                        Op::And | Op::Or | Op::Eq | Op::Sqrt | Op::Abs => unreachable!(),
                    }
                }
            }
        }
        Instruction::TableLookup {
            table, index, column, ..
        } => {
            let t = &p.tables[*table];
            let i = num(locals, *index)?;
            if !(i >= 0.0 && i.fract() == 0.0 && (i as usize) < t.rows.len()) {
                return Err(AppFault::TableIndexOutOfRange {
                    table: t.name.clone(),
                    index: i,
                });
            }
            Value::Num(column.get(&t.rows[i as usize]))
        }
        Instruction::TableLen { table, .. } => Value::Num(p.tables[*table].rows.len() as f64),
        Instruction::Publish { kind, fields } => {
            let values = fields
                .iter()
                .map(|(f, l)| Ok((*f, get(locals, *l)?)))
                .collect::<Result<Vec<_>, AppFault>>()?;
            outcome
                .publishes
                .push(BusMessage::command_from_fields(*kind, &values)?);
            return Ok(());
        }
        Instruction::NetSend { host, values } => {
            let values = values.iter().map(|l| get(locals, *l)).collect::<Result<_, _>>()?;
            outcome.net_sends.push(NetSendRecord {
                host: host.clone(),
                values,
            });
            return Ok(());
        }
        Instruction::Store { key, values } => {
            let values = values.iter().map(|l| get(locals, *l)).collect::<Result<_, _>>()?;
            outcome.stores.push(StoreRecord {
                key: key.clone(),
                values,
            });
            return Ok(());
        }
    };
    let dst = ins.def().expect("value-producing instruction");
    locals[dst] = Some(value);
    Ok(())
}

use std::cmp::Ordering;

use rust_decimal::Decimal;
use thiserror::Error;

use super::{BoolOp, CmpOp, Comparison, Condition, Value};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("missing variable `{0}`")]
    MissingVariable(String),
    #[error("type mismatch on `{var}`: expected {expected}, found {found}")]
    TypeMismatch { var: String, expected: &'static str, found: &'static str },
}

pub(super) fn evaluate<'a, F>(c: &Condition, lookup: F) -> Result<bool, EvalError>
where
    F: Fn(&str) -> Option<&'a Value> + Copy,
{
    match c {
        // Every operand is evaluated so that errors do not depend on operand order.
        Condition::Bool { op, operands } => {
            let mut acc = *op == BoolOp::And;
            for o in operands {
                let v = evaluate(o, lookup)?;
                acc = match op {
                    BoolOp::And => acc && v,
                    BoolOp::Or => acc || v,
                };
            }
            Ok(acc)
        }
        Condition::Not(inner) => Ok(!evaluate(inner, lookup)?),
        Condition::Literal(b) => Ok(*b),
        Condition::Var(name) => match lookup(name) {
            None => Err(EvalError::MissingVariable(name.clone())),
            Some(Value::Bool(b)) => Ok(*b),
            Some(Value::Number(d)) => Ok(!d.is_zero()),
            Some(v @ Value::Str(_)) => {
                Err(EvalError::TypeMismatch { var: name.clone(), expected: "boolean", found: v.type_name() })
            }
        },
        Condition::Compare(cmp) => compare(cmp, lookup),
    }
}

fn as_number(v: &Value) -> Option<Decimal> {
    match v {
        Value::Number(d) => Some(*d),
        Value::Bool(b) => Some(if *b { Decimal::ONE } else { Decimal::ZERO }),
        Value::Str(_) => None,
    }
}

fn compare<'a, F>(cmp: &Comparison, lookup: F) -> Result<bool, EvalError>
where
    F: Fn(&str) -> Option<&'a Value>,
{
    let actual = lookup(&cmp.var).ok_or_else(|| EvalError::MissingVariable(cmp.var.clone()))?;
    let mismatch =
        || EvalError::TypeMismatch { var: cmp.var.clone(), expected: cmp.value.type_name(), found: actual.type_name() };
    // variable's ordering against the literal
    let ord = match (actual, &cmp.value) {
        (Value::Str(a), Value::Str(b)) => a.cmp(b),
        (Value::Str(_), _) | (_, Value::Str(_)) => return Err(mismatch()),
        (a, b) => as_number(a).unwrap().cmp(&as_number(b).unwrap()),
    };
    let ord = if cmp.var_on_left { ord } else { ord.reverse() };
    Ok(match cmp.op {
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Ne => ord != Ordering::Equal,
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Le => ord != Ordering::Greater,
        CmpOp::Gt => ord == Ordering::Greater,
        CmpOp::Ge => ord != Ordering::Less,
    })
}

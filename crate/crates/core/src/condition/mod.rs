//! Gateway condition expressions.
//!
//! Conditions are small boolean formulas over case variables, e.g.
//! `Fasting_Blood_Glucose >= 126 OR HbA1c >= 6.5`. The grammar is documented
//! in `docs/condition-grammar.md`; the [`fmt::Display`] impl is the canonical
//! single-line printer, and its output parses back to the same tree.

mod eval;
mod normalize;
mod parse;

use std::collections::BTreeSet;
use std::fmt;

use rust_decimal::Decimal;

pub use eval::EvalError;
pub use parse::{parse_condition, ConditionParseError};

/// A literal value in a condition or a case attribute.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Value {
    Bool(bool),
    Number(Decimal),
    Str(String),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Bool(_) => "boolean",
            Value::Number(_) => "number",
            Value::Str(_) => "string",
        }
    }

    /// Parses a CSV cell: decimals, then `true`/`false`, else a string.
    pub fn from_cell(cell: &str) -> Value {
        let cell = cell.trim();
        if let Ok(d) = cell.parse::<Decimal>() {
            return Value::Number(d);
        }
        if cell.eq_ignore_ascii_case("true") {
            return Value::Bool(true);
        }
        if cell.eq_ignore_ascii_case("false") {
            return Value::Bool(false);
        }
        Value::Str(cell.to_string())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Number(d) => write!(f, "{d}"),
            Value::Str(s) => {
                f.write_str("\"")?;
                for ch in s.chars() {
                    match ch {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoolOp {
    And,
    Or,
}

impl BoolOp {
    fn keyword(self) -> &'static str {
        match self {
            BoolOp::And => "AND",
            BoolOp::Or => "OR",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    /// The operator that gives the same truth value with operands swapped.
    pub fn mirrored(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            other => other,
        }
    }
}

/// `var op value`, or `value op var` when `var_on_left` is false.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Comparison {
    pub var: String,
    pub op: CmpOp,
    pub value: Value,
    pub var_on_left: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Condition {
    Bool {
        op: BoolOp,
        operands: Vec<Condition>,
    },
    Not(Box<Condition>),
    Compare(Comparison),
    /// A bare variable, coerced to boolean at evaluation time.
    Var(String),
    Literal(bool),
}

impl Condition {
    pub fn and(operands: Vec<Condition>) -> Condition {
        Condition::Bool { op: BoolOp::And, operands }
    }

    pub fn or(operands: Vec<Condition>) -> Condition {
        Condition::Bool { op: BoolOp::Or, operands }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(inner: Condition) -> Condition {
        Condition::Not(Box::new(inner))
    }

    pub fn var(name: impl Into<String>) -> Condition {
        Condition::Var(name.into())
    }

    pub fn compare(var: impl Into<String>, op: CmpOp, value: Value) -> Condition {
        Condition::Compare(Comparison { var: var.into(), op, value, var_on_left: true })
    }

    /// All variable names referenced anywhere in the tree.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_variables(&mut out);
        out
    }

    fn collect_variables(&self, out: &mut BTreeSet<String>) {
        match self {
            Condition::Bool { operands, .. } => {
                for o in operands {
                    o.collect_variables(out);
                }
            }
            Condition::Not(inner) => inner.collect_variables(out),
            Condition::Compare(c) => {
                out.insert(c.var.clone());
            }
            Condition::Var(v) => {
                out.insert(v.clone());
            }
            Condition::Literal(_) => {}
        }
    }

    /// Canonical single-line rendering; same as `to_string()`.
    pub fn canonical(&self) -> String {
        self.to_string()
    }

    pub fn normalize(&self) -> Condition {
        normalize::normalize(self)
    }

    pub fn evaluate<'a, F>(&self, lookup: F) -> Result<bool, EvalError>
    where
        F: Fn(&str) -> Option<&'a Value> + Copy,
    {
        eval::evaluate(self, lookup)
    }
}

/// Structural equality after normalization.
pub fn ast_equal(a: &Condition, b: &Condition) -> bool {
    a.normalize() == b.normalize()
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.var_on_left {
            write!(f, "{} {} {}", self.var, self.op.symbol(), self.value)
        } else {
            write!(f, "{} {} {}", self.value, self.op.symbol(), self.var)
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Bool { op, operands } => {
                for (i, o) in operands.iter().enumerate() {
                    if i > 0 {
                        write!(f, " {} ", op.keyword())?;
                    }
                    match o {
                        Condition::Bool { .. } => write!(f, "({o})")?,
                        _ => write!(f, "{o}")?,
                    }
                }
                Ok(())
            }
            Condition::Not(inner) => match inner.as_ref() {
                Condition::Bool { .. } => write!(f, "NOT ({inner})"),
                _ => write!(f, "NOT {inner}"),
            },
            Condition::Compare(c) => write!(f, "{c}"),
            Condition::Var(v) => f.write_str(v),
            Condition::Literal(b) => write!(f, "{b}"),
        }
    }
}

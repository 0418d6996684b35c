use rust_decimal::Decimal;
use thiserror::Error;

use super::{BoolOp, CmpOp, Comparison, Condition, Value};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("condition parse error at byte {offset}: expected {expected}, found {found}")]
pub struct ConditionParseError {
    pub offset: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(Decimal),
    Str(String),
    True,
    False,
    And,
    Or,
    Not,
    Cmp(CmpOp),
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(d) => format!("number `{d}`"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::True => "`true`".into(),
            Tok::False => "`false`".into(),
            Tok::And => "`AND`".into(),
            Tok::Or => "`OR`".into(),
            Tok::Not => "`NOT`".into(),
            Tok::Cmp(op) => format!("`{}`", op.symbol()),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn err(offset: usize, expected: &str, found: impl Into<String>) -> ConditionParseError {
    ConditionParseError { offset, expected: expected.to_string(), found: found.into() }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ConditionParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let two = |s: &str| text[i..].starts_with(s);
        let tok = if c == b'(' {
            i += 1;
            Tok::LParen
        } else if c == b')' {
            i += 1;
            Tok::RParen
        } else if two("==") {
            i += 2;
            Tok::Cmp(CmpOp::Eq)
        } else if two("!=") {
            i += 2;
            Tok::Cmp(CmpOp::Ne)
        } else if two("<=") {
            i += 2;
            Tok::Cmp(CmpOp::Le)
        } else if two(">=") {
            i += 2;
            Tok::Cmp(CmpOp::Ge)
        } else if two("&&") {
            i += 2;
            Tok::And
        } else if two("||") {
            i += 2;
            Tok::Or
        } else if c == b'<' {
            i += 1;
            Tok::Cmp(CmpOp::Lt)
        } else if c == b'>' {
            i += 1;
            Tok::Cmp(CmpOp::Gt)
        } else if c == b'!' {
            i += 1;
            Tok::Not
        } else if c.is_ascii_digit()
            || (c == b'-' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit() || *b == b'.'))
            || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit))
        {
            i += 1;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            let lit = &text[start..i];
            let d = lit.parse::<Decimal>().map_err(|_| err(start, "decimal literal", lit))?;
            Tok::Number(d)
        } else if c == b'"' || c == b'\'' {
            let quote = c;
            i += 1;
            let mut s = String::new();
            loop {
                let Some(ch) = text[i..].chars().next() else {
                    return Err(err(start, "closing quote", "end of input"));
                };
                i += ch.len_utf8();
                if ch as u32 == quote as u32 {
                    break;
                }
                if ch == '\\' {
                    let Some(esc) = text[i..].chars().next() else {
                        return Err(err(i, "escaped character", "end of input"));
                    };
                    i += esc.len_utf8();
                    s.push(esc);
                } else {
                    s.push(ch);
                }
            }
            Tok::Str(s)
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = &text[start..i];
            match word.to_ascii_lowercase().as_str() {
                "and" => Tok::And,
                "or" => Tok::Or,
                "not" => Tok::Not,
                "true" => Tok::True,
                "false" => Tok::False,
                _ => Tok::Ident(word.to_string()),
            }
        } else {
            let ch = text[i..].chars().next().unwrap_or('?');
            return Err(err(start, "expression", format!("`{ch}`")));
        };
        out.push((start, tok));
    }
    out.push((text.len(), Tok::End));
    Ok(out)
}

type OperandParser = fn(&mut Parser) -> Result<Condition, ConditionParseError>;

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> ConditionParseError {
        err(self.offset(), expected, self.peek().describe())
    }

    fn chain(&mut self, op: BoolOp) -> Result<Condition, ConditionParseError> {
        let (sep, next): (Tok, OperandParser) = match op {
            BoolOp::Or => (Tok::Or, |p| p.chain(BoolOp::And)),
            BoolOp::And => (Tok::And, Parser::unary),
        };
        let mut operands = vec![next(self)?];
        while *self.peek() == sep {
            self.bump();
            operands.push(next(self)?);
        }
        Ok(if operands.len() == 1 { operands.pop().unwrap() } else { Condition::Bool { op, operands } })
    }

    fn unary(&mut self) -> Result<Condition, ConditionParseError> {
        if *self.peek() == Tok::Not {
            self.bump();
            return Ok(Condition::not(self.unary()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Condition, ConditionParseError> {
        let start = self.offset();
        match self.bump() {
            Tok::LParen => {
                let inner = self.chain(BoolOp::Or)?;
                if *self.peek() != Tok::RParen {
                    return Err(self.unexpected("`)`"));
                }
                self.bump();
                Ok(inner)
            }
            Tok::Ident(var) => {
                if let Tok::Cmp(op) = *self.peek() {
                    self.bump();
                    let value = self.literal("literal value")?;
                    Ok(Condition::Compare(Comparison { var, op, value, var_on_left: true }))
                } else {
                    Ok(Condition::Var(var))
                }
            }
            tok @ (Tok::True | Tok::False | Tok::Number(_) | Tok::Str(_)) => {
                let value = match tok {
                    Tok::True => Value::Bool(true),
                    Tok::False => Value::Bool(false),
                    Tok::Number(d) => Value::Number(d),
                    Tok::Str(s) => Value::Str(s),
                    _ => unreachable!(),
                };
                let Tok::Cmp(op) = *self.peek() else {
                    return match value {
                        Value::Bool(b) => Ok(Condition::Literal(b)),
                        _ => Err(self.unexpected("comparison operator")),
                    };
                };
                self.bump();
                let Tok::Ident(var) = self.peek().clone() else {
                    return Err(self.unexpected("identifier"));
                };
                self.bump();
                Ok(Condition::Compare(Comparison { var, op, value, var_on_left: false }))
            }
            other => Err(err(start, "identifier, literal, `NOT` or `(`", other.describe())),
        }
    }

    fn literal(&mut self, expected: &str) -> Result<Value, ConditionParseError> {
        let v = match self.peek().clone() {
            Tok::True => Value::Bool(true),
            Tok::False => Value::Bool(false),
            Tok::Number(d) => Value::Number(d),
            Tok::Str(s) => Value::Str(s),
            _ => return Err(self.unexpected(expected)),
        };
        self.bump();
        Ok(v)
    }
}

/// Parses condition text. No normalization is applied.
pub fn parse_condition(text: &str) -> Result<Condition, ConditionParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    let ast = p.chain(BoolOp::Or)?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected("`AND`, `OR` or end of input"));
    }
    Ok(ast)
}

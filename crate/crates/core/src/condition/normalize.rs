use super::{BoolOp, Comparison, Condition, Value};

/// Syntactic canonicalization: double negation is removed, nested same-operator
/// chains are flattened, operands are sorted by their canonical print, and
/// comparisons are oriented variable-first with the operator mirrored.
///
/// No De Morgan rewriting or other semantic simplification is performed.
pub(super) fn normalize(c: &Condition) -> Condition {
    match c {
        Condition::Not(inner) => match normalize(inner) {
            Condition::Not(x) => *x,
            n => Condition::not(n),
        },
        Condition::Bool { op, operands } => {
            let mut flat = Vec::with_capacity(operands.len());
            for o in operands {
                match normalize(o) {
                    Condition::Bool { op: child, operands: grand } if child == *op => flat.extend(grand),
                    n => flat.push(n),
                }
            }
            match flat.len() {
                0 => Condition::Literal(*op == BoolOp::And),
                1 => flat.pop().unwrap(),
                _ => {
                    let mut keyed: Vec<(String, Condition)> = flat.into_iter().map(|o| (o.to_string(), o)).collect();
                    keyed.sort_by(|a, b| a.0.cmp(&b.0));
                    Condition::Bool { op: *op, operands: keyed.into_iter().map(|(_, o)| o).collect() }
                }
            }
        }
        Condition::Compare(cmp) => {
            let value = match &cmp.value {
                Value::Number(d) => Value::Number(d.normalize()),
                v => v.clone(),
            };
            let op = if cmp.var_on_left { cmp.op } else { cmp.op.mirrored() };
            Condition::Compare(Comparison { var: cmp.var.clone(), op, value, var_on_left: true })
        }
        Condition::Var(_) | Condition::Literal(_) => c.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{ast_equal, parse_condition, CmpOp};
    use super::*;

    fn norm(s: &str) -> Condition {
        parse_condition(s).unwrap().normalize()
    }

    #[test]
    fn commutative_operands_sort_identically() {
        assert_eq!(norm("x >= 5 AND y == 1"), norm("y == 1 AND x >= 5"));
    }

    #[test]
    fn double_negation_removed() {
        assert_eq!(norm("NOT NOT a"), Condition::var("a"));
        assert_eq!(norm("NOT NOT NOT a"), Condition::not(Condition::var("a")));
    }

    #[test]
    fn literal_side_is_swapped() {
        assert_eq!(norm("6.5 <= HbA1c"), Condition::compare("HbA1c", CmpOp::Ge, Value::Number("6.5".parse().unwrap())));
        assert_eq!(norm("3 == x"), norm("x == 3"));
        assert_eq!(norm("3 < x"), norm("x > 3"));
    }

    #[test]
    fn nested_chains_flatten() {
        assert_eq!(norm("(a AND b) AND c"), norm("a AND (c AND b)"));
        assert_eq!(norm("(a AND b) AND c").to_string(), "a AND b AND c");
        // different operators stay nested
        assert_ne!(norm("(a OR b) AND c"), norm("a OR (b AND c)"));
    }

    #[test]
    fn decimal_scale_is_canonical() {
        assert!(ast_equal(&parse_condition("x >= 6.50").unwrap(), &parse_condition("x >= 6.5").unwrap()));
        assert_eq!(norm("x >= 6.50").to_string(), "x >= 6.5");
    }

    #[test]
    fn de_morgan_is_not_applied() {
        assert!(!ast_equal(&parse_condition("NOT (a AND b)").unwrap(), &parse_condition("NOT a OR NOT b").unwrap()));
    }

    #[test]
    fn idempotent_on_samples() {
        for s in ["NOT (b OR a) AND NOT NOT c", "1 < x OR (y AND (z OR w))", "true"] {
            let once = norm(s);
            assert_eq!(once.normalize(), once);
        }
    }
}

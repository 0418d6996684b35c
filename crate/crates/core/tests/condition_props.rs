use std::collections::BTreeMap;

use ambiguity_core::condition::{ast_equal, parse_condition, CmpOp, Comparison, Condition, Value};
use ambiguity_core::Decimal;
use proptest::prelude::*;
use proptest::sample::Index;

const BOOLS: [&str; 4] = ["a", "b", "c", "d"];
const NUMS: [&str; 2] = ["x", "y"];

fn number() -> impl Strategy<Value = Decimal> {
    (-6i64..=6, 0u32..=2).prop_map(|(m, scale)| Decimal::new(m * 10i64.pow(scale) / 2, scale))
}

fn cmp_op() -> impl Strategy<Value = CmpOp> {
    prop::sample::select(CmpOp::ALL.to_vec())
}

fn bool_leaf() -> impl Strategy<Value = Condition> {
    prop_oneof![
        4 => prop::sample::select(BOOLS.to_vec()).prop_map(Condition::var),
        1 => any::<bool>().prop_map(Condition::Literal),
    ]
}

fn mixed_leaf() -> impl Strategy<Value = Condition> {
    prop_oneof![
        2 => bool_leaf(),
        3 => (prop::sample::select(NUMS.to_vec()), cmp_op(), number(), any::<bool>()).prop_map(|(v, op, n, left)| {
            Condition::Compare(Comparison { var: v.into(), op, value: Value::Number(n), var_on_left: left })
        }),
        1 => (prop::sample::select(BOOLS.to_vec()), any::<bool>(), any::<bool>()).prop_map(|(v, b, eq)| {
            let op = if eq { CmpOp::Eq } else { CmpOp::Ne };
            Condition::Compare(Comparison { var: v.into(), op, value: Value::Bool(b), var_on_left: true })
        }),
    ]
}

fn tree(leaf: BoxedStrategy<Condition>) -> impl Strategy<Value = Condition> {
    leaf.prop_recursive(4, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..=4).prop_map(Condition::and),
            prop::collection::vec(inner.clone(), 2..=4).prop_map(Condition::or),
            inner.prop_map(Condition::not),
        ]
    })
}

fn condition() -> impl Strategy<Value = Condition> {
    tree(mixed_leaf().boxed())
}

fn bool_condition() -> impl Strategy<Value = Condition> {
    tree(bool_leaf().boxed())
}

fn env() -> impl Strategy<Value = BTreeMap<String, Value>> {
    (prop::array::uniform4(any::<bool>()), number(), number()).prop_map(|(bs, x, y)| {
        let mut m: BTreeMap<String, Value> =
            BOOLS.iter().zip(bs).map(|(k, b)| (k.to_string(), Value::Bool(b))).collect();
        m.insert("x".into(), Value::Number(x));
        m.insert("y".into(), Value::Number(y));
        m
    })
}

fn eval(c: &Condition, env: &BTreeMap<String, Value>) -> bool {
    c.evaluate(|k| env.get(k)).expect("generated conditions are well-typed")
}

/// Shuffles every operand list and flips comparison sides, using `picks` as
/// the source of choices.
fn permute(c: &Condition, picks: &mut impl Iterator<Item = Index>) -> Condition {
    match c {
        Condition::Bool { op, operands } => {
            let mut ops: Vec<Condition> = operands.iter().map(|o| permute(o, picks)).collect();
            for i in (1..ops.len()).rev() {
                let j = picks.next().map_or(0, |p| p.index(i + 1));
                ops.swap(i, j);
            }
            Condition::Bool { op: *op, operands: ops }
        }
        Condition::Not(inner) => Condition::not(permute(inner, picks)),
        Condition::Compare(cmp) if picks.next().is_some_and(|p| p.index(2) == 1) => {
            Condition::Compare(Comparison { op: cmp.op.mirrored(), var_on_left: !cmp.var_on_left, ..cmp.clone() })
        }
        other => other.clone(),
    }
}

fn truth_table(c: &Condition) -> Vec<bool> {
    (0..16u8)
        .map(|bits| {
            let env: BTreeMap<String, Value> =
                BOOLS.iter().enumerate().map(|(i, k)| (k.to_string(), Value::Bool(bits >> i & 1 == 1))).collect();
            eval(c, &env)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn normalization_is_idempotent(c in condition()) {
        let n = c.normalize();
        prop_assert_eq!(n.normalize(), n);
    }

    #[test]
    fn normalization_preserves_truth(c in condition(), e in env()) {
        prop_assert_eq!(eval(&c, &e), eval(&c.normalize(), &e));
    }

    #[test]
    fn canonical_print_reparses(c in condition()) {
        let printed = c.to_string();
        prop_assert_eq!(parse_condition(&printed).unwrap(), c.clone());
        let n = c.normalize();
        prop_assert_eq!(parse_condition(&n.canonical()).unwrap(), n);
    }

    #[test]
    fn permutations_are_ast_equal(c in condition(), picks in prop::collection::vec(any::<Index>(), 64)) {
        let p = permute(&c, &mut picks.into_iter());
        prop_assert!(ast_equal(&c, &p), "{} vs {}", c, p);
    }

    #[test]
    fn ast_equality_implies_same_truth_table(
        a in bool_condition(),
        b in bool_condition(),
        picks in prop::collection::vec(any::<Index>(), 64),
    ) {
        let pa = permute(&a, &mut picks.into_iter());
        prop_assert_eq!(truth_table(&a), truth_table(&pa));
        if ast_equal(&a, &b) {
            prop_assert_eq!(truth_table(&a), truth_table(&b));
        }
    }
}

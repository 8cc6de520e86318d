use std::sync::Arc;

use dolisp::kernel::{EvalConfig, Interp, Mode};
use dolisp::loops::{l_less, lex_fix, MeasureValue};
use dolisp::sexpr::{read_one, show, Integer, Symbol, Value};
use dolisp::stobj_table::{StobjTable, TableField, TableRepr};
use dolisp::stobjs::{FieldKind, FieldSpec, Stobj, StobjSpec};
use proptest::prelude::*;

fn value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Nil),
        Just(Value::T),
        any::<i64>().prop_map(Value::int),
        "[0-9]{19,30}".prop_map(|d| Value::Int(Integer::parse(&d).unwrap())),
        "[A-Z][A-Z0-9*+-]{0,6}".prop_map(|s| Value::sym(&s)),
        ":[A-Z]{1,5}".prop_map(|s| Value::sym(&s)),
        "[a-z \\\\\"]{0,8}".prop_map(|s| Value::string(&s)),
    ];
    leaf.prop_recursive(4, 32, 5, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..5).prop_map(Value::list),
            (inner.clone(), inner).prop_map(|(a, d)| Value::cons(a, d)),
        ]
    })
}

proptest! {
    #[test]
    fn reader_round_trips(v in value()) {
        let text = show(&v);
        let back = read_one(&text).unwrap();
        prop_assert_eq!(&back, &v, "{}", text);
    }

    #[test]
    fn lex_fix_is_idempotent(v in value()) {
        let once = lex_fix(&v);
        prop_assert_eq!(lex_fix(&once.to_value()), once);
    }
}

#[derive(Clone, Debug)]
enum Op {
    Put(usize, i64),
    Rem(usize),
    Clear,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0..5usize, -9..9i64).prop_map(|(k, v)| Op::Put(k, v)),
        2 => (0..5usize).prop_map(Op::Rem),
        1 => Just(Op::Clear),
    ]
}

fn spec(k: usize) -> Arc<StobjSpec> {
    Arc::new(StobjSpec::new(
        Symbol::intern(&format!("CHILD{k}")),
        vec![FieldSpec {
            name: Symbol::intern(&format!("CHILD{k}-V")),
            kind: FieldKind::Scalar {
                initial: Value::Nil,
                integer: false,
            },
        }],
    ))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Read-over-write, rem-cancels-put and count, against an alist.
    #[test]
    fn table_matches_alist_model(ops in prop::collection::vec(op(), 0..120)) {
        let specs: Vec<_> = (0..5).map(spec).collect();
        for repr in [TableRepr::Alist, TableRepr::Hash] {
            let mut t = TableField::new(repr);
            let mut model: Vec<(usize, i64)> = Vec::new();
            for o in &ops {
                match *o {
                    Op::Put(k, v) => {
                        t.put(specs[k].name.clone(), Stobj::create(&specs[k], repr).update_scalar(0, Value::int(v), false));
                        model.insert(0, (k, v));
                        prop_assert_eq!(t.get(&specs[k].name).map(|c| c.scalar(0)), Some(Value::int(v)));
                    }
                    Op::Rem(k) => {
                        t.rem(&specs[k].name);
                        model.retain(|(x, _)| *x != k);
                        prop_assert!(!t.boundp(&specs[k].name));
                    }
                    Op::Clear => {
                        t.clear();
                        model.clear();
                    }
                }
                for (k, s) in specs.iter().enumerate() {
                    let want = model.iter().find(|(x, _)| *x == k).map(|(_, v)| Value::int(*v));
                    prop_assert_eq!(t.get(&s.name).map(|c| c.scalar(0)), want);
                }
                let mut keys: Vec<usize> = model.iter().map(|(k, _)| *k).collect();
                keys.sort();
                keys.dedup();
                prop_assert_eq!(t.count(), keys.len());
            }
        }
    }
}

fn all_lists(max_len: usize, below: i64) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for l in &frontier {
            for d in 0..below {
                let mut m: Vec<i64> = l.clone();
                m.push(d);
                next.push(m);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn mv(l: &[i64]) -> MeasureValue {
    MeasureValue(l.iter().map(|&n| Integer::from(n)).collect())
}

/// Ordinal reading: a list of length n is an ordinal below omega^n, so the
/// comparison is by length, then lexicographic.
fn oracle_less(a: &[i64], b: &[i64]) -> bool {
    (a.len(), a) < (b.len(), b)
}

#[test]
fn l_less_matches_ordinal_order_exhaustively() {
    let lists = all_lists(3, 4);
    assert_eq!(lists.len(), 1 + 4 + 16 + 64);
    for a in &lists {
        assert!(!l_less(&mv(a), &mv(a)));
        for b in &lists {
            assert_eq!(l_less(&mv(a), &mv(b)), oracle_less(a, b), "{a:?} {b:?}");
            if a != b {
                assert!(l_less(&mv(a), &mv(b)) ^ l_less(&mv(b), &mv(a)));
            }
        }
    }
    for a in &lists {
        for b in &lists {
            if !l_less(&mv(a), &mv(b)) {
                continue;
            }
            for c in &lists {
                if l_less(&mv(b), &mv(c)) {
                    assert!(l_less(&mv(a), &mv(c)), "{a:?} {b:?} {c:?}");
                }
            }
        }
    }
}

fn eval(mode: Mode, src: &str) -> String {
    let mut i = Interp::new(EvalConfig::with_mode(mode));
    let mut last = String::new();
    for r in i.run_source(src).unwrap() {
        last = r.printed;
    }
    last
}

fn lisp_list(xs: &[i64]) -> String {
    let items: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
    format!("'({})", items.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn paths_agree_on_list_loops(xs in prop::collection::vec(-1000i64..1000, 0..12), k in -5i64..5) {
        let src = format!(
            "(loop$ WITH l = {} WITH s = 0 WITH n = 0 DO
               (if (consp l)
                   (progn (mv-setq (s n) (mv (+ s (* {k} (car l))) (1+ n))) (setq l (cdr l)))
                 (return (list s n))))",
            lisp_list(&xs)
        );
        let want = format!("({} {})", xs.iter().map(|x| x * k).sum::<i64>(), xs.len());
        prop_assert_eq!(eval(Mode::Logical, &src), want.clone());
        prop_assert_eq!(eval(Mode::Native, &src), want);
    }

    #[test]
    fn paths_agree_on_stobj_loops(xs in prop::collection::vec(0i64..100, 0..10)) {
        let src = format!(
            "(defstobj st fld)
             (loop$ WITH lst = {} DO :VALUES (st)
               (if (consp lst)
                   (progn (setq st (update-fld (cons (car lst) (fld st)) st))
                          (setq lst (cdr lst)))
                 (return st)))
             (fld st)",
            lisp_list(&xs)
        );
        let rev: Vec<i64> = xs.iter().rev().cloned().collect();
        let want = if rev.is_empty() { "NIL".to_string() } else { lisp_list(&rev)[1..].to_string() };
        prop_assert_eq!(eval(Mode::Logical, &src), want.clone());
        prop_assert_eq!(eval(Mode::Native, &src), want);
    }

    /// The do$ trace replays the loop step by step.
    #[test]
    fn trace_follows_the_loop(xs in prop::collection::vec(0i64..50, 0..8)) {
        let src = format!(
            "(loop$ WITH sum = 0 WITH lst = {} DO
               (if (consp lst)
                   (let ((sq (* (car lst) (car lst))))
                     (progn (setq sum (+ sq sum)) (setq lst (cdr lst))))
                 (return sum)))",
            lisp_list(&xs)
        );
        let mut i = Interp::new(EvalConfig::with_mode(Mode::Logical));
        i.enable_trace();
        i.eval_str(&src).unwrap();
        let trace = i.take_trace();
        let steps = &trace[0].steps;
        prop_assert_eq!(steps.len(), xs.len() + 1);
        let mut sum = 0;
        for (k, step) in steps.iter().enumerate() {
            let rest = if k < xs.len() { lisp_list(&xs[k + 1..])[1..].to_string() } else { "NIL".into() };
            let rest = if rest == "()" { "NIL".to_string() } else { rest };
            if k < xs.len() {
                sum += xs[k] * xs[k];
                prop_assert_eq!(step.show_triple(), format!("(NIL NIL ((SUM . {sum}) (LST . {rest})))"));
            } else {
                prop_assert_eq!(step.show_triple(), format!("(:RETURN {sum} ((SUM . {sum}) (LST . NIL)))"));
            }
        }
        let chain = trace[0].measure_chain();
        prop_assert!(chain.windows(2).all(|w| l_less(&w[1], &w[0])));
    }
}

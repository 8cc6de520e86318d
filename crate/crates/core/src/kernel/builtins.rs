//! The builtin function table. Each builtin is total in the logic; those with
//! guards report a violation when guard checking is on and otherwise fall
//! back to their logical completion (non-numbers act as 0, `car` of an atom
//! is NIL, and so on).

use crate::loops::{l_less, lex_fix};
use crate::sexpr::{Integer, Value};
use crate::stobj_table::hons_assoc_equal;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builtin {
    Car,
    Cdr,
    Cons,
    Consp,
    Plus,
    Minus,
    Times,
    OnePlus,
    OneMinus,
    Lt,
    Le,
    Gt,
    Ge,
    NumEq,
    Not,
    Eq,
    Equal,
    Natp,
    Nfix,
    Zp,
    Len,
    MemberEqual,
    TrueListFix,
    HonsAssocEqual,
    AssocEqSafe,
    List,
    Atom,
    Null,
    Integerp,
    Acl2Numberp,
    Symbolp,
    Stringp,
    Cadr,
    Cddr,
    Caddr,
    LexFix,
    LLess,
    Implies,
    Eql,
    Endp,
    Append,
    Reverse,
    Max,
    Min,
    // Builtins that need the interpreter; dispatched by the evaluator.
    Apply,
    Cw,
    OfType,
}

pub const BUILTINS: &[(&str, Builtin)] = &[
    ("CAR", Builtin::Car),
    ("CDR", Builtin::Cdr),
    ("CONS", Builtin::Cons),
    ("CONSP", Builtin::Consp),
    ("+", Builtin::Plus),
    ("-", Builtin::Minus),
    ("*", Builtin::Times),
    ("1+", Builtin::OnePlus),
    ("1-", Builtin::OneMinus),
    ("<", Builtin::Lt),
    ("<=", Builtin::Le),
    (">", Builtin::Gt),
    (">=", Builtin::Ge),
    ("=", Builtin::NumEq),
    ("NOT", Builtin::Not),
    ("EQ", Builtin::Eq),
    ("EQUAL", Builtin::Equal),
    ("NATP", Builtin::Natp),
    ("NFIX", Builtin::Nfix),
    ("ZP", Builtin::Zp),
    ("LEN", Builtin::Len),
    ("MEMBER-EQUAL", Builtin::MemberEqual),
    ("TRUE-LIST-FIX", Builtin::TrueListFix),
    ("HONS-ASSOC-EQUAL", Builtin::HonsAssocEqual),
    ("ASSOC-EQ-SAFE", Builtin::AssocEqSafe),
    ("LIST", Builtin::List),
    ("ATOM", Builtin::Atom),
    ("NULL", Builtin::Null),
    ("INTEGERP", Builtin::Integerp),
    ("ACL2-NUMBERP", Builtin::Acl2Numberp),
    ("SYMBOLP", Builtin::Symbolp),
    ("STRINGP", Builtin::Stringp),
    ("CADR", Builtin::Cadr),
    ("CDDR", Builtin::Cddr),
    ("CADDR", Builtin::Caddr),
    ("LEX-FIX", Builtin::LexFix),
    ("L<", Builtin::LLess),
    ("IMPLIES", Builtin::Implies),
    ("EQL", Builtin::Eql),
    ("ENDP", Builtin::Endp),
    ("APPEND", Builtin::Append),
    ("REVERSE", Builtin::Reverse),
    ("MAX", Builtin::Max),
    ("MIN", Builtin::Min),
    ("APPLY$", Builtin::Apply),
    ("CW", Builtin::Cw),
    ("OF-TYPE$", Builtin::OfType),
];

/// Argument count bounds: (min, max), `None` meaning variadic.
pub fn arity(b: Builtin) -> (usize, Option<usize>) {
    use Builtin::*;
    match b {
        List => (0, None),
        Plus | Times => (0, None),
        Minus => (1, Some(2)),
        Cw => (1, None),
        Cons | Lt | Le | Gt | Ge | NumEq | Eq | Equal | MemberEqual | HonsAssocEqual
        | AssocEqSafe | LLess | Implies | Apply | Eql | Append | Max | Min => (2, Some(2)),
        OfType => (3, Some(3)),
        _ => (1, Some(1)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinError {
    /// `predicate` is false of argument `arg`.
    Guard { predicate: &'static str, arg: usize },
}

type BResult = Result<Value, BuiltinError>;

fn guard(
    ok: bool,
    checking: bool,
    predicate: &'static str,
    arg: usize,
) -> Result<(), BuiltinError> {
    if ok || !checking {
        Ok(())
    } else {
        Err(BuiltinError::Guard { predicate, arg })
    }
}

fn num(v: &Value) -> Integer {
    v.as_int().cloned().unwrap_or(Integer::ZERO)
}

fn numbers(args: &[Value], checking: bool) -> Result<Vec<Integer>, BuiltinError> {
    args.iter()
        .enumerate()
        .map(|(i, a)| {
            guard(a.as_int().is_some(), checking, "ACL2-NUMBERP", i)?;
            Ok(num(a))
        })
        .collect()
}

fn is_listp(v: &Value) -> bool {
    matches!(v, Value::Cons(_) | Value::Nil)
}

pub fn natp(v: &Value) -> bool {
    v.as_int().is_some_and(|n| n.is_natural())
}

pub fn nfix(v: &Value) -> Integer {
    match v.as_int() {
        Some(n) if n.is_natural() => n.clone(),
        _ => Integer::ZERO,
    }
}

/// `zp`: true of 0 and of every non-natural.
pub fn zp(v: &Value) -> bool {
    !natp(v) || num(v).is_zero()
}

pub fn true_list_fix(v: &Value) -> Value {
    Value::list(v.iter().cloned().collect::<Vec<_>>())
}

/// First pair whose key is the identical symbol; non-pairs skipped.
pub fn assoc_eq_safe(key: &Value, alist: &Value) -> Value {
    for entry in alist.iter() {
        if let Value::Cons(c) = entry {
            if eq_atoms(&c.car, key) {
                return entry.clone();
            }
        }
    }
    Value::Nil
}

fn eq_atoms(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Sym(x), Value::Sym(y)) => x.same(y),
        (Value::Nil, Value::Nil) | (Value::T, Value::T) => true,
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Cons(x), Value::Cons(y)) => std::sync::Arc::ptr_eq(x, y),
        (Value::Stobj(x), Value::Stobj(y)) => x.ptr_eq(y),
        _ => false,
    }
}

fn is_symbol(v: &Value) -> bool {
    matches!(v, Value::Sym(_) | Value::Nil | Value::T)
}

/// Evaluates a pure builtin. `Apply`, `Cw` and `OfType` are handled by the
/// evaluator and never reach here.
pub fn call(b: Builtin, args: &[Value], checking: bool) -> BResult {
    use Builtin::*;
    let a0 = || args[0].clone();
    Ok(match b {
        Car => {
            guard(is_listp(&args[0]), checking, "LISTP", 0)?;
            args[0].car()
        }
        Cdr => {
            guard(is_listp(&args[0]), checking, "LISTP", 0)?;
            args[0].cdr()
        }
        Cadr => args[0].cdr().car(),
        Cddr => args[0].cdr().cdr(),
        Caddr => args[0].cdr().cdr().car(),
        Cons => Value::cons(a0(), args[1].clone()),
        Consp => Value::bool(args[0].is_cons()),
        Atom => Value::bool(!args[0].is_cons()),
        Null | Not => Value::bool(args[0].is_nil()),
        Plus => Value::Int(
            numbers(args, checking)?
                .iter()
                .fold(Integer::ZERO, |acc, n| acc.add(n)),
        ),
        Times => Value::Int(
            numbers(args, checking)?
                .iter()
                .fold(Integer::Small(1), |acc, n| acc.mul(n)),
        ),
        Minus => {
            let ns = numbers(args, checking)?;
            Value::Int(match ns.as_slice() {
                [x] => x.neg(),
                [x, y] => x.sub(y),
                _ => unreachable!("arity checked"),
            })
        }
        OnePlus => Value::Int(numbers(args, checking)?[0].add(&Integer::Small(1))),
        OneMinus => Value::Int(numbers(args, checking)?[0].sub(&Integer::Small(1))),
        Lt | Le | Gt | Ge | NumEq => {
            let ns = numbers(args, checking)?;
            let (x, y) = (&ns[0], &ns[1]);
            Value::bool(match b {
                Lt => x < y,
                Le => x <= y,
                Gt => x > y,
                Ge => x >= y,
                _ => x == y,
            })
        }
        Eq => {
            guard(
                is_symbol(&args[0]) || is_symbol(&args[1]),
                checking,
                "SYMBOLP",
                0,
            )?;
            Value::bool(eq_atoms(&args[0], &args[1]))
        }
        Equal => Value::bool(args[0] == args[1]),
        Natp => Value::bool(natp(&args[0])),
        Integerp | Acl2Numberp => Value::bool(args[0].as_int().is_some()),
        Symbolp => Value::bool(is_symbol(&args[0])),
        Stringp => Value::bool(matches!(args[0], Value::Str(_))),
        Nfix => Value::Int(nfix(&args[0])),
        Zp => {
            guard(natp(&args[0]), checking, "NATP", 0)?;
            Value::bool(zp(&args[0]))
        }
        Len => Value::Int(Integer::from(args[0].len())),
        MemberEqual => {
            guard(args[1].is_proper_list(), checking, "TRUE-LISTP", 1)?;
            let mut cur = args[1].clone();
            loop {
                match &cur {
                    Value::Cons(c) if c.car == args[0] => break cur.clone(),
                    Value::Cons(c) => cur = c.cdr.clone(),
                    _ => break Value::Nil,
                }
            }
        }
        TrueListFix => true_list_fix(&args[0]),
        HonsAssocEqual => hons_assoc_equal(&args[0], &args[1]),
        AssocEqSafe => assoc_eq_safe(&args[0], &args[1]),
        List => Value::list(args.to_vec()),
        LexFix => lex_fix(&args[0]).to_value(),
        LLess => Value::bool(l_less(&lex_fix(&args[0]), &lex_fix(&args[1]))),
        Implies => Value::bool(args[0].is_nil() || args[1].truthy()),
        Eql => {
            let eqlable = |v: &Value| is_symbol(v) || v.as_int().is_some();
            guard(
                eqlable(&args[0]) || eqlable(&args[1]),
                checking,
                "EQLABLEP",
                0,
            )?;
            Value::bool(eq_atoms(&args[0], &args[1]))
        }
        Endp => {
            guard(is_listp(&args[0]), checking, "LISTP", 0)?;
            Value::bool(!args[0].is_cons())
        }
        Append => {
            guard(args[0].is_proper_list(), checking, "TRUE-LISTP", 0)?;
            let items: Vec<Value> = args[0].iter().cloned().collect();
            items
                .into_iter()
                .rev()
                .fold(args[1].clone(), |acc, x| Value::cons(x, acc))
        }
        Reverse => {
            guard(args[0].is_proper_list(), checking, "TRUE-LISTP", 0)?;
            args[0]
                .iter()
                .fold(Value::Nil, |acc, x| Value::cons(x.clone(), acc))
        }
        Max | Min => {
            let ns = numbers(args, checking)?;
            let pick_first = if b == Max {
                ns[0] >= ns[1]
            } else {
                ns[0] <= ns[1]
            };
            Value::Int(ns[usize::from(!pick_first)].clone())
        }
        Apply | Cw | OfType => unreachable!("evaluator builtin {b:?}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sexpr::read_one;

    fn run(b: Builtin, args: &[Value]) -> Value {
        call(b, args, true).unwrap()
    }

    #[test]
    fn nfix_coerces_negatives() {
        assert_eq!(run(Builtin::Nfix, &[Value::int(-3)]), Value::int(0));
        assert_eq!(run(Builtin::Nfix, &[Value::int(5)]), Value::int(5));
        assert_eq!(run(Builtin::Nfix, &[Value::sym("X")]), Value::int(0));
    }

    #[test]
    fn hons_assoc_equal_on_empty() {
        assert_eq!(
            run(Builtin::HonsAssocEqual, &[Value::sym("SWITCH"), Value::Nil]),
            Value::Nil
        );
    }

    /// zp against its definition (or (not (natp x)) (= x 0)).
    #[test]
    fn zp_matches_definition() {
        assert_eq!(run(Builtin::Zp, &[Value::int(0)]), Value::T);
        assert_eq!(run(Builtin::Zp, &[Value::int(4)]), Value::Nil);
        for x in [
            Value::int(-2),
            Value::int(0),
            Value::int(3),
            Value::Nil,
            Value::string("a"),
        ] {
            let reference = !natp(&x) || x == Value::int(0);
            assert_eq!(
                call(Builtin::Zp, &[x], false).unwrap(),
                Value::bool(reference)
            );
        }
        assert_eq!(
            call(Builtin::Zp, &[Value::int(-1)], true),
            Err(BuiltinError::Guard {
                predicate: "NATP",
                arg: 0
            })
        );
    }

    #[test]
    fn assoc_eq_safe_first_match() {
        let alist = read_one("((sum . 30) (lst . nil))").unwrap();
        assert_eq!(
            assoc_eq_safe(&Value::sym("SUM"), &alist),
            read_one("(sum . 30)").unwrap()
        );
        assert_eq!(assoc_eq_safe(&Value::sym("SUM"), &Value::Nil), Value::Nil);
        let shadowed = read_one("((x . 1) (x . 2))").unwrap();
        assert_eq!(
            assoc_eq_safe(&Value::sym("X"), &shadowed).cdr(),
            Value::int(1)
        );
    }

    #[test]
    fn arithmetic_guards_and_completions() {
        assert_eq!(
            call(Builtin::Plus, &[Value::int(1), Value::string("a")], true),
            Err(BuiltinError::Guard {
                predicate: "ACL2-NUMBERP",
                arg: 1
            })
        );
        assert_eq!(
            call(Builtin::Plus, &[Value::int(1), Value::string("a")], false).unwrap(),
            Value::int(1)
        );
        assert_eq!(run(Builtin::Minus, &[Value::int(5)]), Value::int(-5));
        assert_eq!(
            call(Builtin::Car, &[Value::int(5)], false).unwrap(),
            Value::Nil
        );
    }

    #[test]
    fn member_equal_and_true_list_fix() {
        let l = read_one("(a b c)").unwrap();
        assert_eq!(
            run(Builtin::MemberEqual, &[Value::sym("B"), l.clone()]),
            read_one("(b c)").unwrap()
        );
        assert_eq!(run(Builtin::MemberEqual, &[Value::sym("Z"), l]), Value::Nil);
        assert_eq!(
            true_list_fix(&read_one("(1 2 . 3)").unwrap()),
            read_one("(1 2)").unwrap()
        );
    }

    #[test]
    fn list_helpers() {
        let l = read_one("(1 2 3)").unwrap();
        assert_eq!(
            run(Builtin::Reverse, std::slice::from_ref(&l)),
            read_one("(3 2 1)").unwrap()
        );
        assert_eq!(
            run(Builtin::Append, &[l.clone(), read_one("(4)").unwrap()]),
            read_one("(1 2 3 4)").unwrap()
        );
        assert_eq!(
            run(Builtin::Max, &[Value::int(3), Value::int(7)]),
            Value::int(7)
        );
        assert_eq!(
            run(Builtin::Min, &[Value::int(3), Value::int(7)]),
            Value::int(3)
        );
        assert_eq!(run(Builtin::Endp, &[Value::Nil]), Value::T);
        assert!(call(Builtin::Endp, &[Value::int(1)], true).is_err());
        assert!(call(Builtin::Eql, &[l.clone(), l], true).is_err());
    }
}

//! Lexicographic measures and measure guessing.

use std::fmt;

use crate::error::{Error, Result};
use crate::kernel::builtins::nfix;
use crate::sexpr::{Integer, Symbol, Value};

use super::parse::{DoSpec, Stmt};

/// A proper list of naturals, compared by `l<`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeasureValue(pub Vec<Integer>);

impl MeasureValue {
    pub fn to_value(&self) -> Value {
        Value::list(self.0.iter().cloned().map(Value::Int).collect::<Vec<_>>())
    }
}

impl fmt::Display for MeasureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_value())
    }
}

/// A natural becomes a one-element list, a proper list is fixed
/// elementwise with `nfix`, anything else is `(0)`.
pub fn lex_fix(v: &Value) -> MeasureValue {
    match v {
        Value::Int(n) if n.is_natural() => MeasureValue(vec![n.clone()]),
        Value::Nil => MeasureValue(Vec::new()),
        Value::Cons(_) if v.is_proper_list() => MeasureValue(v.iter().map(nfix).collect()),
        _ => MeasureValue(vec![Integer::ZERO]),
    }
}

/// Shorter lists are smaller; equal lengths compare at the first difference.
pub fn l_less(a: &MeasureValue, b: &MeasureValue) -> bool {
    if a.0.len() != b.0.len() {
        return a.0.len() < b.0.len();
    }
    for (x, y) in a.0.iter().zip(&b.0) {
        if x != y {
            return x < y;
        }
    }
    false
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Descent {
    Count,
    Cdr,
}

fn descent_of(var: &Symbol, e: &Value) -> Option<Descent> {
    let items = e.to_vec()?;
    let is_var = |x: &Value| matches!(x, Value::Sym(s) if s == var);
    match (items.first()?.symbol_name()?, items.as_slice()) {
        ("1-", [_, x]) if is_var(x) => Some(Descent::Count),
        ("-", [_, x, Value::Int(k)]) if is_var(x) && k.is_natural() && !k.is_zero() => {
            Some(Descent::Count)
        }
        ("CDR", [_, x]) if is_var(x) => Some(Descent::Cdr),
        _ => None,
    }
}

/// Guesses a measure from how WITH variables are updated: a variable counted
/// down by `(1- v)` or `(- v k)` gives `(nfix v)`, one walked by `(cdr v)`
/// gives `(len v)`. Exactly one such variable must exist.
pub fn guess_measure(spec: &DoSpec, body: &Stmt, finally: Option<&Stmt>) -> Result<Value> {
    let mut candidates: Vec<(Symbol, Descent)> = Vec::new();
    for w in &spec.with {
        let mut kinds: Vec<Option<Descent>> = Vec::new();
        let mut collect = |s: &Stmt| {
            match s {
                Stmt::Setq(v, e) if *v == w.var => kinds.push(descent_of(v, e)),
                Stmt::MvSetq(vs, _) if vs.contains(&w.var) => kinds.push(None),
                _ => {}
            }
            false
        };
        body.any(&mut collect);
        if let Some(f) = finally {
            f.any(&mut collect);
        }
        if let Some(Some(first)) = kinds.first() {
            if kinds.iter().all(|k| *k == Some(*first)) {
                candidates.push((w.var.clone(), *first));
            }
        }
    }
    match candidates.as_slice() {
        [(v, Descent::Count)] => Ok(Value::list([Value::sym("NFIX"), Value::Sym(v.clone())])),
        [(v, Descent::Cdr)] => Ok(Value::list([Value::sym("LEN"), Value::Sym(v.clone())])),
        _ => Err(Error::LoopSyntax(
            "no measure could be guessed for this DO loop; supply one with :MEASURE".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sexpr::read_one;

    fn m(xs: &[i64]) -> MeasureValue {
        MeasureValue(xs.iter().map(|&x| Integer::from(x)).collect())
    }

    #[test]
    fn lex_fix_normalizes() {
        assert_eq!(lex_fix(&Value::int(4)), m(&[4]));
        assert_eq!(lex_fix(&read_one("(2 x)").unwrap()), m(&[2, 0]));
        assert_eq!(lex_fix(&Value::int(-3)), m(&[0]));
        assert_eq!(lex_fix(&Value::string("s")), m(&[0]));
        assert_eq!(lex_fix(&read_one("(1 . 2)").unwrap()), m(&[0]));
    }

    #[test]
    fn l_less_orders() {
        assert!(l_less(&m(&[0]), &m(&[1])));
        assert!(!l_less(&m(&[1]), &m(&[1])));
        assert!(l_less(&m(&[2]), &m(&[1, 0])));
        assert!(l_less(&m(&[1, 5]), &m(&[2, 0])));
    }
}

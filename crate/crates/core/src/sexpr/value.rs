use std::collections::HashSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex, OnceLock};

use super::Integer;
use crate::stobjs::Stobj;

/// An interned symbol. Two symbols are identical iff their names are equal,
/// so equality and hashing go through the interned pointer.
#[derive(Clone)]
pub struct Symbol(Arc<str>);

fn interner() -> &'static Mutex<HashSet<Arc<str>>> {
    static TABLE: OnceLock<Mutex<HashSet<Arc<str>>>> = OnceLock::new();
    TABLE.get_or_init(|| Mutex::new(HashSet::new()))
}

impl Symbol {
    /// Interns `name` verbatim (no case folding; the reader upcases).
    pub fn intern(name: &str) -> Symbol {
        let mut table = interner().lock().unwrap_or_else(|e| e.into_inner());
        if let Some(existing) = table.get(name) {
            return Symbol(existing.clone());
        }
        let arc: Arc<str> = Arc::from(name);
        table.insert(arc.clone());
        Symbol(arc)
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    pub fn is_keyword(&self) -> bool {
        self.0.starts_with(':')
    }

    /// Identity test; equivalent to `==` but spelled out for `eq`-style lookups.
    pub fn same(&self, other: &Symbol) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

impl PartialEq for Symbol {
    fn eq(&self, other: &Self) -> bool {
        self.same(other)
    }
}

impl Eq for Symbol {}

impl Hash for Symbol {
    fn hash<H: Hasher>(&self, state: &mut H) {
        (Arc::as_ptr(&self.0) as *const u8 as usize).hash(state)
    }
}

impl PartialOrd for Symbol {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Symbol {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.name().cmp(other.name())
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug)]
pub struct Cons {
    pub car: Value,
    pub cdr: Value,
}

/// The object-language universe. NIL is both false and the empty list.
#[derive(Clone, Debug, Default)]
pub enum Value {
    #[default]
    Nil,
    T,
    Int(Integer),
    Str(Arc<str>),
    Sym(Symbol),
    Cons(Arc<Cons>),
    /// A live single-threaded object; prints as `<NAME>`.
    Stobj(Stobj),
}

impl Value {
    pub fn sym(name: &str) -> Value {
        Value::Sym(Symbol::intern(name))
    }

    pub fn int(n: i64) -> Value {
        Value::Int(Integer::from(n))
    }

    pub fn string(s: &str) -> Value {
        Value::Str(Arc::from(s))
    }

    pub fn bool(b: bool) -> Value {
        if b {
            Value::T
        } else {
            Value::Nil
        }
    }

    pub fn cons(car: Value, cdr: Value) -> Value {
        Value::Cons(Arc::new(Cons { car, cdr }))
    }

    pub fn list<I>(items: I) -> Value
    where
        I: IntoIterator<Item = Value>,
        I::IntoIter: DoubleEndedIterator,
    {
        items
            .into_iter()
            .rev()
            .fold(Value::Nil, |acc, v| Value::cons(v, acc))
    }

    pub fn is_nil(&self) -> bool {
        matches!(self, Value::Nil)
    }

    pub fn truthy(&self) -> bool {
        !self.is_nil()
    }

    pub fn is_cons(&self) -> bool {
        matches!(self, Value::Cons(_))
    }

    pub fn as_symbol(&self) -> Option<&Symbol> {
        match self {
            Value::Sym(s) => Some(s),
            _ => None,
        }
    }

    /// Symbol view that also covers `T` and `NIL`, which are symbols in the
    /// object language even though they have dedicated variants here.
    pub fn symbol_name(&self) -> Option<&str> {
        match self {
            Value::Sym(s) => Some(s.name()),
            Value::Nil => Some("NIL"),
            Value::T => Some("T"),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<&Integer> {
        match self {
            Value::Int(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_stobj(&self) -> Option<&Stobj> {
        match self {
            Value::Stobj(s) => Some(s),
            _ => None,
        }
    }

    pub fn car(&self) -> Value {
        match self {
            Value::Cons(c) => c.car.clone(),
            _ => Value::Nil,
        }
    }

    pub fn cdr(&self) -> Value {
        match self {
            Value::Cons(c) => c.cdr.clone(),
            _ => Value::Nil,
        }
    }

    pub fn is_proper_list(&self) -> bool {
        let mut cur = self;
        loop {
            match cur {
                Value::Nil => return true,
                Value::Cons(c) => cur = &c.cdr,
                _ => return false,
            }
        }
    }

    /// Iterates the cars of a list, stopping at the first non-cons tail.
    pub fn iter(&self) -> ListIter<'_> {
        ListIter { cur: self }
    }

    /// Elements of a proper list, or `None` for an improper one.
    pub fn to_vec(&self) -> Option<Vec<Value>> {
        if !self.is_proper_list() {
            return None;
        }
        Some(self.iter().cloned().collect())
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        !self.is_cons()
    }

    /// True when `self` is a cons whose head is the symbol `name`.
    pub fn is_form(&self, head: &Symbol) -> bool {
        match self {
            Value::Cons(c) => matches!(&c.car, Value::Sym(s) if s == head),
            _ => false,
        }
    }

    /// Pointer identity for conses, value identity for atoms.
    pub fn ptr_key(&self) -> Option<usize> {
        match self {
            Value::Cons(c) => Some(Arc::as_ptr(c) as usize),
            _ => None,
        }
    }

    pub fn contains_stobj(&self) -> bool {
        match self {
            Value::Stobj(_) => true,
            Value::Cons(c) => c.car.contains_stobj() || c.cdr.contains_stobj(),
            _ => false,
        }
    }
}

pub struct ListIter<'a> {
    cur: &'a Value,
}

impl<'a> Iterator for ListIter<'a> {
    type Item = &'a Value;

    fn next(&mut self) -> Option<&'a Value> {
        match self.cur {
            Value::Cons(c) => {
                self.cur = &c.cdr;
                Some(&c.car)
            }
            _ => None,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Nil, Value::Nil) | (Value::T, Value::T) => true,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::Sym(a), Value::Sym(b)) => a == b,
            (Value::Cons(a), Value::Cons(b)) => {
                Arc::ptr_eq(a, b) || (a.car == b.car && a.cdr == b.cdr)
            }
            (Value::Stobj(a), Value::Stobj(b)) => a.logically_equal(b),
            _ => false,
        }
    }
}

impl From<Symbol> for Value {
    fn from(s: Symbol) -> Self {
        Value::Sym(s)
    }
}

impl From<Integer> for Value {
    fn from(n: Integer) -> Self {
        Value::Int(n)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::bool(b)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::show(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interning_is_identity() {
        let a = Symbol::intern("SWITCH");
        let b = Symbol::intern(&String::from("SWITCH"));
        assert!(a.same(&b));
        assert!(!a.same(&Symbol::intern("SWITCHP")));
    }

    #[test]
    fn list_helpers() {
        let l = Value::list([Value::int(1), Value::int(2)]);
        assert!(l.is_proper_list());
        assert_eq!(l.len(), 2);
        assert_eq!(l.car(), Value::int(1));
        let dotted = Value::cons(Value::int(1), Value::int(2));
        assert!(!dotted.is_proper_list());
        assert_eq!(dotted.to_vec(), None);
        assert_eq!(Value::Nil.car(), Value::Nil);
    }
}

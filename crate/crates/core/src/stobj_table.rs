//! Stobj-table fields: maps from stobj names to stobj instances.
//!
//! The logical model is an association list consulted with
//! `hons-assoc-equal`; the execution model is a hash table keyed by the
//! interned symbol. Both implement [`StobjTable`], and a table field holds
//! whichever one the owning interpreter runs with.

use std::collections::{HashMap, HashSet};

use crate::sexpr::{Symbol, Value};
use crate::stobjs::Stobj;

/// Operations generated for a stobj-table field `tbl`: `tbl-get`, `tbl-put`,
/// `tbl-boundp`, `tbl-rem`, `tbl-count` and `tbl-clear`. There is no `get?`.
pub trait StobjTable {
    /// Bound child, if any. Callers supply the default on a miss.
    fn get(&self, key: &Symbol) -> Option<Stobj>;
    fn put(&mut self, key: Symbol, child: Stobj);
    fn boundp(&self, key: &Symbol) -> bool;
    fn rem(&mut self, key: &Symbol);
    fn count(&self) -> usize;
    fn clear(&mut self);
    /// Bound keys, sorted by name.
    fn keys(&self) -> Vec<Symbol>;

    /// `tbl-get` with a lazily evaluated default.
    fn get_or(&self, key: &Symbol, default: impl FnOnce() -> Stobj) -> Stobj
    where
        Self: Sized,
    {
        self.get(key).unwrap_or_else(default)
    }
}

/// The logical model: an alist of `(NAME . child)` pairs.
#[derive(Clone, Debug, Default)]
pub struct AlistTable {
    alist: Value,
}

/// `hons-assoc-equal`: total alist lookup, first match wins, non-pair
/// entries skipped.
pub fn hons_assoc_equal(key: &Value, alist: &Value) -> Value {
    for entry in alist.iter() {
        if let Value::Cons(c) = entry {
            if &c.car == key {
                return entry.clone();
            }
        }
    }
    Value::Nil
}

impl AlistTable {
    pub fn new() -> Self {
        AlistTable { alist: Value::Nil }
    }

    pub fn as_alist(&self) -> &Value {
        &self.alist
    }

    fn without(&self, key: &Symbol) -> Value {
        let kept: Vec<Value> = self
            .alist
            .iter()
            .filter(|e| !matches!(&e.car(), Value::Sym(k) if k == key))
            .cloned()
            .collect();
        Value::list(kept)
    }
}

impl StobjTable for AlistTable {
    fn get(&self, key: &Symbol) -> Option<Stobj> {
        match hons_assoc_equal(&Value::Sym(key.clone()), &self.alist) {
            Value::Cons(pair) => pair.cdr.as_stobj().cloned(),
            _ => None,
        }
    }

    fn put(&mut self, key: Symbol, child: Stobj) {
        // Drop any shadowed entry so the alist stays a function.
        let rest = if self.boundp(&key) {
            self.without(&key)
        } else {
            self.alist.clone()
        };
        self.alist = Value::cons(Value::cons(Value::Sym(key), Value::Stobj(child)), rest);
    }

    fn boundp(&self, key: &Symbol) -> bool {
        hons_assoc_equal(&Value::Sym(key.clone()), &self.alist).is_cons()
    }

    fn rem(&mut self, key: &Symbol) {
        if self.boundp(key) {
            self.alist = self.without(key);
        }
    }

    fn count(&self) -> usize {
        let mut seen = HashSet::new();
        for e in self.alist.iter() {
            if let Value::Sym(k) = e.car() {
                seen.insert(k);
            }
        }
        seen.len()
    }

    fn clear(&mut self) {
        self.alist = Value::Nil;
    }

    fn keys(&self) -> Vec<Symbol> {
        let mut seen = HashSet::new();
        let mut keys: Vec<Symbol> = self
            .alist
            .iter()
            .filter_map(|e| e.car().as_symbol().cloned())
            .filter(|k| seen.insert(k.clone()))
            .collect();
        keys.sort();
        keys
    }
}

/// The execution model: a hash table keyed by interned symbol.
#[derive(Clone, Debug, Default)]
pub struct HashTable {
    map: HashMap<Symbol, Stobj>,
}

const INITIAL_CAPACITY: usize = 8;

impl HashTable {
    pub fn new() -> Self {
        HashTable {
            map: HashMap::with_capacity(INITIAL_CAPACITY),
        }
    }

    /// Removes and returns a child, leaving its slot empty.
    pub fn take(&mut self, key: &Symbol) -> Option<Stobj> {
        self.map.remove(key)
    }
}

impl StobjTable for HashTable {
    fn get(&self, key: &Symbol) -> Option<Stobj> {
        self.map.get(key).cloned()
    }

    fn put(&mut self, key: Symbol, child: Stobj) {
        self.map.insert(key, child);
    }

    fn boundp(&self, key: &Symbol) -> bool {
        self.map.contains_key(key)
    }

    fn rem(&mut self, key: &Symbol) {
        self.map.remove(key);
    }

    fn count(&self) -> usize {
        self.map.len()
    }

    fn clear(&mut self) {
        self.map.clear();
    }

    fn keys(&self) -> Vec<Symbol> {
        let mut keys: Vec<Symbol> = self.map.keys().cloned().collect();
        keys.sort();
        keys
    }
}

/// Which model a freshly created table field uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableRepr {
    Alist,
    Hash,
}

#[derive(Clone, Debug)]
pub enum TableField {
    Alist(AlistTable),
    Hash(HashTable),
}

impl TableField {
    pub fn new(repr: TableRepr) -> Self {
        match repr {
            TableRepr::Alist => TableField::Alist(AlistTable::new()),
            TableRepr::Hash => TableField::Hash(HashTable::new()),
        }
    }

    pub fn repr(&self) -> TableRepr {
        match self {
            TableField::Alist(_) => TableRepr::Alist,
            TableField::Hash(_) => TableRepr::Hash,
        }
    }

    /// Removes every key naming a retracted stobj, then recurses into the
    /// children that remain. Returns the number of keys removed.
    pub fn retract(&mut self, undone: &HashSet<Symbol>, in_place: bool) -> usize {
        let mut removed = 0;
        for key in self.keys() {
            if undone.contains(&key) {
                self.rem(&key);
                removed += 1;
            }
        }
        for key in self.keys() {
            if let Some(child) = self.get(&key) {
                let (child2, n) = child.retract_tables(undone, in_place);
                removed += n;
                if n > 0 && !in_place {
                    self.put(key, child2);
                }
            }
        }
        removed
    }
}

impl StobjTable for TableField {
    fn get(&self, key: &Symbol) -> Option<Stobj> {
        match self {
            TableField::Alist(t) => t.get(key),
            TableField::Hash(t) => t.get(key),
        }
    }

    fn put(&mut self, key: Symbol, child: Stobj) {
        match self {
            TableField::Alist(t) => t.put(key, child),
            TableField::Hash(t) => t.put(key, child),
        }
    }

    fn boundp(&self, key: &Symbol) -> bool {
        match self {
            TableField::Alist(t) => t.boundp(key),
            TableField::Hash(t) => t.boundp(key),
        }
    }

    fn rem(&mut self, key: &Symbol) {
        match self {
            TableField::Alist(t) => t.rem(key),
            TableField::Hash(t) => t.rem(key),
        }
    }

    fn count(&self) -> usize {
        match self {
            TableField::Alist(t) => t.count(),
            TableField::Hash(t) => t.count(),
        }
    }

    fn clear(&mut self) {
        match self {
            TableField::Alist(t) => t.clear(),
            TableField::Hash(t) => t.clear(),
        }
    }

    fn keys(&self) -> Vec<Symbol> {
        match self {
            TableField::Alist(t) => t.keys(),
            TableField::Hash(t) => t.keys(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stobjs::{FieldKind, FieldSpec, StobjSpec};
    use std::sync::Arc;

    fn switch_spec() -> Arc<StobjSpec> {
        Arc::new(StobjSpec::new(
            Symbol::intern("SWITCH"),
            vec![FieldSpec {
                name: Symbol::intern("FLD"),
                kind: FieldKind::Scalar {
                    initial: Value::Nil,
                    integer: false,
                },
            }],
        ))
    }

    fn both() -> [TableField; 2] {
        [
            TableField::new(TableRepr::Alist),
            TableField::new(TableRepr::Hash),
        ]
    }

    #[test]
    fn get_miss_uses_default() {
        let spec = switch_spec();
        for t in both() {
            let child = t.get_or(&spec.name, || Stobj::create(&spec, TableRepr::Alist));
            assert_eq!(child.logical_view(), Value::list([Value::Nil]));
            assert!(!t.boundp(&spec.name));
        }
    }

    #[test]
    fn put_then_get_and_count() {
        let spec = switch_spec();
        let other = Symbol::intern("OTHER");
        for mut t in both() {
            let child = Stobj::create(&spec, TableRepr::Alist).update_scalar(0, Value::T, false);
            t.put(spec.name.clone(), child.clone());
            assert_eq!(t.count(), 1);
            assert!(t.get(&spec.name).unwrap().logically_equal(&child));
            assert!(t.get(&other).is_none());
            t.rem(&spec.name);
            assert!(!t.boundp(&spec.name));
            assert_eq!(t.count(), 0);
            t.put(spec.name.clone(), child.clone());
            t.clear();
            assert_eq!(t.count(), 0);
        }
    }

    #[test]
    fn hons_assoc_equal_skips_non_pairs() {
        let alist = Value::list([Value::int(3), Value::cons(Value::sym("A"), Value::int(1))]);
        assert_eq!(
            hons_assoc_equal(&Value::sym("A"), &alist),
            Value::cons(Value::sym("A"), Value::int(1))
        );
        assert_eq!(
            hons_assoc_equal(&Value::sym("SWITCH"), &Value::Nil),
            Value::Nil
        );
    }
}

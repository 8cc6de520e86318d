//! Stobj definitions and live instances.
//!
//! An instance is logically the list of its field values. At run time it is
//! a shared cell: the in-place discipline mutates the cell and hands back the
//! same handle, while the applicative discipline copies the fields and hands
//! back a fresh handle. Syntactic single-threadedness makes the two agree.

use std::collections::HashSet;
use std::fmt;
use std::sync::{Arc, Mutex, MutexGuard};

use crate::sexpr::{Symbol, Value};
use crate::stobj_table::{StobjTable, TableField, TableRepr};

#[derive(Clone, Debug)]
pub enum FieldKind {
    Scalar { initial: Value, integer: bool },
    Table,
}

#[derive(Clone, Debug)]
pub struct FieldSpec {
    pub name: Symbol,
    pub kind: FieldKind,
}

impl FieldSpec {
    pub fn accessor(&self) -> Symbol {
        self.name.clone()
    }

    pub fn updater(&self) -> Symbol {
        Symbol::intern(&format!("UPDATE-{}", self.name))
    }

    pub fn table_op(&self, op: &str) -> Symbol {
        Symbol::intern(&format!("{}-{op}", self.name))
    }
}

#[derive(Debug)]
pub struct StobjSpec {
    pub name: Symbol,
    pub fields: Vec<FieldSpec>,
    pub creator: Symbol,
    pub recognizer: Symbol,
}

/// A function generated by `defstobj`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StobjOp {
    Create,
    Recognize,
    Access(usize),
    Update(usize),
    TableGet(usize),
    TablePut(usize),
    TableBoundp(usize),
    TableRem(usize),
    TableCount(usize),
    TableClear(usize),
}

pub const TABLE_OPS: [&str; 6] = ["GET", "PUT", "BOUNDP", "REM", "COUNT", "CLEAR"];

impl StobjSpec {
    pub fn new(name: Symbol, fields: Vec<FieldSpec>) -> Self {
        let creator = Symbol::intern(&format!("CREATE-{name}"));
        let recognizer = Symbol::intern(&format!("{name}P"));
        StobjSpec {
            name,
            fields,
            creator,
            recognizer,
        }
    }

    /// Every generated function with its role.
    pub fn generated(&self) -> Vec<(Symbol, StobjOp)> {
        let mut out = vec![
            (self.creator.clone(), StobjOp::Create),
            (self.recognizer.clone(), StobjOp::Recognize),
        ];
        for (i, f) in self.fields.iter().enumerate() {
            match f.kind {
                FieldKind::Scalar { .. } => {
                    out.push((f.accessor(), StobjOp::Access(i)));
                    out.push((f.updater(), StobjOp::Update(i)));
                }
                FieldKind::Table => {
                    let ops = [
                        StobjOp::TableGet(i),
                        StobjOp::TablePut(i),
                        StobjOp::TableBoundp(i),
                        StobjOp::TableRem(i),
                        StobjOp::TableCount(i),
                        StobjOp::TableClear(i),
                    ];
                    for (suffix, op) in TABLE_OPS.iter().zip(ops) {
                        out.push((f.table_op(suffix), op));
                    }
                }
            }
        }
        out
    }

    pub fn has_table(&self) -> bool {
        self.fields
            .iter()
            .any(|f| matches!(f.kind, FieldKind::Table))
    }

    /// Recognizer over logical values: a proper list of the right arity whose
    /// scalar fields respect their types. A table field's recognizer is T.
    pub fn recognizes(&self, x: &Value) -> bool {
        if let Value::Stobj(st) = x {
            return st.name() == &self.name;
        }
        let Some(items) = x.to_vec() else {
            return false;
        };
        items.len() == self.fields.len()
            && self.fields.iter().zip(&items).all(|(f, v)| match &f.kind {
                FieldKind::Scalar { integer: true, .. } => v.as_int().is_some(),
                FieldKind::Scalar { .. } => !v.contains_stobj(),
                FieldKind::Table => true,
            })
    }

    pub fn logical_initial(&self) -> Value {
        Value::list(self.fields.iter().map(|f| match &f.kind {
            FieldKind::Scalar { initial, .. } => initial.clone(),
            FieldKind::Table => Value::Nil,
        }))
    }
}

#[derive(Clone, Debug)]
pub enum Field {
    Scalar(Value),
    Table(TableField),
}

/// One-field stobjs are stored as the bare field.
#[derive(Clone, Debug)]
enum Layout {
    Bare(Field),
    Record(Vec<Field>),
}

impl Layout {
    fn field(&self, i: usize) -> &Field {
        match self {
            Layout::Bare(f) => f,
            Layout::Record(fs) => &fs[i],
        }
    }

    fn field_mut(&mut self, i: usize) -> &mut Field {
        match self {
            Layout::Bare(f) => f,
            Layout::Record(fs) => &mut fs[i],
        }
    }

    fn fields(&self) -> Vec<&Field> {
        match self {
            Layout::Bare(f) => vec![f],
            Layout::Record(fs) => fs.iter().collect(),
        }
    }
}

struct StobjCell {
    spec: Arc<StobjSpec>,
    body: Mutex<Layout>,
}

/// Handle to a live stobj instance.
#[derive(Clone)]
pub struct Stobj(Arc<StobjCell>);

impl fmt::Debug for Stobj {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}> {}", self.name(), self.logical_view())
    }
}

impl Stobj {
    /// The creator: every scalar at its initial value, every table empty.
    pub fn create(spec: &Arc<StobjSpec>, repr: TableRepr) -> Stobj {
        let fields: Vec<Field> = spec
            .fields
            .iter()
            .map(|f| match &f.kind {
                FieldKind::Scalar { initial, .. } => Field::Scalar(initial.clone()),
                FieldKind::Table => Field::Table(TableField::new(repr)),
            })
            .collect();
        Stobj::from_fields(spec.clone(), fields)
    }

    fn from_fields(spec: Arc<StobjSpec>, mut fields: Vec<Field>) -> Stobj {
        let layout = if fields.len() == 1 {
            Layout::Bare(fields.pop().expect("one field"))
        } else {
            Layout::Record(fields)
        };
        Stobj(Arc::new(StobjCell {
            spec,
            body: Mutex::new(layout),
        }))
    }

    fn body(&self) -> MutexGuard<'_, Layout> {
        self.0.body.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn name(&self) -> &Symbol {
        &self.0.spec.name
    }

    pub fn spec(&self) -> &Arc<StobjSpec> {
        &self.0.spec
    }

    pub fn ptr_eq(&self, other: &Stobj) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    pub fn addr(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn is_bare(&self) -> bool {
        matches!(*self.body(), Layout::Bare(_))
    }

    pub fn scalar(&self, i: usize) -> Value {
        match self.body().field(i) {
            Field::Scalar(v) => v.clone(),
            Field::Table(_) => Value::Nil,
        }
    }

    /// Returns the updated instance: `self` when `in_place`, otherwise a copy.
    pub fn update_scalar(&self, i: usize, v: Value, in_place: bool) -> Stobj {
        self.modify(in_place, |layout| *layout.field_mut(i) = Field::Scalar(v))
    }

    pub fn with_table<R>(&self, i: usize, f: impl FnOnce(&TableField) -> R) -> R {
        match self.body().field(i) {
            Field::Table(t) => f(t),
            Field::Scalar(_) => unreachable!("field {i} of {} is not a table", self.name()),
        }
    }

    pub fn update_table(&self, i: usize, in_place: bool, f: impl FnOnce(&mut TableField)) -> Stobj {
        self.modify(in_place, |layout| match layout.field_mut(i) {
            Field::Table(t) => f(t),
            Field::Scalar(_) => unreachable!("field {i} is not a table"),
        })
    }

    fn modify(&self, in_place: bool, f: impl FnOnce(&mut Layout)) -> Stobj {
        if in_place {
            f(&mut self.body());
            self.clone()
        } else {
            let mut copy = self.body().clone();
            f(&mut copy);
            Stobj(Arc::new(StobjCell {
                spec: self.0.spec.clone(),
                body: Mutex::new(copy),
            }))
        }
    }

    /// The logical view: a list of field values, with each table field shown
    /// as an alist of `(NAME . child-view)` sorted by name.
    pub fn logical_view(&self) -> Value {
        let body = self.body().clone();
        Value::list(
            body.fields()
                .into_iter()
                .map(field_view)
                .collect::<Vec<_>>(),
        )
    }

    pub fn logically_equal(&self, other: &Stobj) -> bool {
        self.ptr_eq(other)
            || (self.name() == other.name() && self.logical_view() == other.logical_view())
    }

    /// Copies the whole tree of instances, using `repr` for every table.
    pub fn deep_copy(&self, repr: TableRepr) -> Stobj {
        let body = self.body().clone();
        let fields = body
            .fields()
            .into_iter()
            .map(|f| match f {
                Field::Scalar(v) => Field::Scalar(v.clone()),
                Field::Table(t) => {
                    let mut copy = TableField::new(repr);
                    for k in t.keys() {
                        if let Some(child) = t.get(&k) {
                            copy.put(k, child.deep_copy(repr));
                        }
                    }
                    Field::Table(copy)
                }
            })
            .collect();
        Stobj::from_fields(self.0.spec.clone(), fields)
    }

    /// Removes undone stobj names from every table reachable from `self`.
    pub fn retract_tables(&self, undone: &HashSet<Symbol>, in_place: bool) -> (Stobj, usize) {
        if !self.0.spec.has_table() {
            return (self.clone(), 0);
        }
        let mut removed = 0;
        let updated = self.modify(in_place, |layout| {
            let n = match layout {
                Layout::Bare(f) => vec![f],
                Layout::Record(fs) => fs.iter_mut().collect(),
            };
            for field in n {
                if let Field::Table(t) = field {
                    removed += t.retract(undone, in_place);
                }
            }
        });
        (updated, removed)
    }

    /// Addresses of this instance and every instance reachable through its
    /// tables, for single-owner checking.
    pub fn collect_instances(&self, out: &mut Vec<(usize, Symbol)>) {
        out.push((self.addr(), self.name().clone()));
        let body = self.body().clone();
        for f in body.fields() {
            if let Field::Table(t) = f {
                for k in t.keys() {
                    if let Some(child) = t.get(&k) {
                        child.collect_instances(out);
                    }
                }
            }
        }
    }

    /// Table representations in use anywhere in this tree.
    pub fn table_reprs(&self, out: &mut Vec<TableRepr>) {
        let body = self.body().clone();
        for f in body.fields() {
            if let Field::Table(t) = f {
                out.push(t.repr());
                for k in t.keys() {
                    if let Some(child) = t.get(&k) {
                        child.table_reprs(out);
                    }
                }
            }
        }
    }
}

fn field_view(f: &Field) -> Value {
    match f {
        Field::Scalar(v) => v.clone(),
        Field::Table(t) => Value::list(
            t.keys()
                .into_iter()
                .filter_map(|k| {
                    t.get(&k)
                        .map(|child| Value::cons(Value::Sym(k), child.logical_view()))
                })
                .collect::<Vec<_>>(),
        ),
    }
}

/// Scalar value check for `:type integer` fields.
pub fn scalar_type_ok(kind: &FieldKind, v: &Value) -> bool {
    match kind {
        FieldKind::Scalar { integer: true, .. } => matches!(v, Value::Int(_)),
        _ => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(name: &str, fields: &[(&str, FieldKind)]) -> Arc<StobjSpec> {
        Arc::new(StobjSpec::new(
            Symbol::intern(name),
            fields
                .iter()
                .map(|(n, k)| FieldSpec {
                    name: Symbol::intern(n),
                    kind: k.clone(),
                })
                .collect(),
        ))
    }

    fn scalar() -> FieldKind {
        FieldKind::Scalar {
            initial: Value::Nil,
            integer: false,
        }
    }

    #[test]
    fn handles_are_send() {
        fn is_send<T: Send + Sync>() {}
        is_send::<Stobj>();
    }

    #[test]
    fn creator_yields_initial_view() {
        let sw = spec("SWITCH", &[("FLD", scalar())]);
        let st = Stobj::create(&sw, TableRepr::Hash);
        assert!(st.is_bare());
        assert_eq!(st.logical_view(), Value::list([Value::Nil]));
        assert!(sw.recognizes(&st.logical_view()));
        assert!(sw.recognizes(&Value::Stobj(st)));
        assert!(!sw.recognizes(&Value::list([Value::Nil, Value::Nil])));
    }

    #[test]
    fn in_place_and_copying_updates() {
        let two = spec("TWO", &[("A2", scalar()), ("B2", scalar())]);
        let st = Stobj::create(&two, TableRepr::Alist);
        assert!(!st.is_bare());
        let copy = st.update_scalar(0, Value::int(1), false);
        assert!(!copy.ptr_eq(&st));
        assert_eq!(st.scalar(0), Value::Nil);
        assert_eq!(copy.scalar(0), Value::int(1));
        assert_eq!(copy.scalar(1), Value::Nil);
        let same = st.update_scalar(1, Value::int(2), true);
        assert!(same.ptr_eq(&st));
        assert_eq!(st.scalar(1), Value::int(2));
    }

    #[test]
    fn generated_names() {
        let t = spec("STOBJ-TABLE", &[("TBL", FieldKind::Table)]);
        let names: Vec<String> = t.generated().iter().map(|(s, _)| s.to_string()).collect();
        assert_eq!(
            names,
            [
                "CREATE-STOBJ-TABLE",
                "STOBJ-TABLEP",
                "TBL-GET",
                "TBL-PUT",
                "TBL-BOUNDP",
                "TBL-REM",
                "TBL-COUNT",
                "TBL-CLEAR"
            ]
        );
        // table fields satisfy their recognizer unconditionally
        assert!(t.recognizes(&Value::list([Value::int(7)])));
    }
}

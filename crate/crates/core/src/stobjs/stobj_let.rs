//! `stobj-let`: borrow children out of a parent's stobj-table, run a
//! producer with them, write updated children back, then run a consumer.
//!
//! ```text
//! (stobj-let ((child (tbl-get 'child parent (create-child))) ...)
//!            (out ...)
//!            producer
//!            consumer)
//! ```

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernel::{Callable, Env, Interp, World};
use crate::sexpr::{Symbol, Value};
use crate::stobj_table::StobjTable;

use super::{Stobj, StobjOp, StobjSpec};

#[derive(Debug, Clone)]
pub struct ChildBinding {
    pub child: Symbol,
    /// Index of the parent's table field.
    pub field: usize,
    pub spec: Arc<StobjSpec>,
}

#[derive(Debug, Clone)]
pub struct StobjLet {
    pub parent: Symbol,
    pub parent_spec: Arc<StobjSpec>,
    pub bindings: Vec<ChildBinding>,
    pub outputs: Vec<Symbol>,
    pub producer: Value,
    pub consumer: Value,
}

impl StobjLet {
    pub fn child(&self, name: &Symbol) -> Option<&ChildBinding> {
        self.bindings.iter().find(|b| &b.child == name)
    }
}

fn err(msg: impl Into<String>) -> Error {
    Error::Stobj(format!("stobj-let: {}", msg.into()))
}

pub fn parse_stobj_let(form: &Value, world: &World) -> Result<StobjLet> {
    let items = form.to_vec().ok_or_else(|| err("malformed form"))?;
    if items.len() != 5 {
        return Err(err(format!(
            "expected (stobj-let bindings outputs producer consumer), got {form}"
        )));
    }
    let raw = items[1]
        .to_vec()
        .filter(|b| !b.is_empty())
        .ok_or_else(|| err("bindings must be a non-empty list"))?;
    let mut parent: Option<(Symbol, Arc<StobjSpec>)> = None;
    let mut bindings: Vec<ChildBinding> = Vec::new();
    for b in &raw {
        let (child, field, spec, p, pspec) = parse_binding(b, world)?;
        match &parent {
            None => parent = Some((p, pspec)),
            Some((q, _)) if *q != p => {
                return Err(err(format!(
                    "all children must come from one parent, but both {q} and {p} appear"
                )))
            }
            Some(_) => {}
        }
        if bindings.iter().any(|x| x.child == child) {
            return Err(err(format!("child {child} is bound twice")));
        }
        bindings.push(ChildBinding { child, field, spec });
    }
    let (parent, parent_spec) = parent.expect("non-empty bindings");
    let outputs = items[2]
        .to_vec()
        .filter(|o| !o.is_empty())
        .ok_or_else(|| err("outputs must be a non-empty list of variables"))?
        .iter()
        .map(|o| {
            o.as_symbol()
                .filter(|s| !s.is_keyword())
                .cloned()
                .ok_or_else(|| err(format!("output {o} is not a variable")))
        })
        .collect::<Result<Vec<_>>>()?;
    for (i, o) in outputs.iter().enumerate() {
        if outputs[..i].contains(o) {
            return Err(err(format!("output {o} is listed twice")));
        }
        if *o == parent {
            return Err(err(format!("the parent {parent} cannot be an output")));
        }
    }
    Ok(StobjLet {
        parent,
        parent_spec,
        bindings,
        outputs,
        producer: items[3].clone(),
        consumer: items[4].clone(),
    })
}

type Parsed = (Symbol, usize, Arc<StobjSpec>, Symbol, Arc<StobjSpec>);

fn parse_binding(b: &Value, world: &World) -> Result<Parsed> {
    let parts = b
        .to_vec()
        .filter(|p| p.len() == 2)
        .ok_or_else(|| err(format!("malformed binding {b}")))?;
    let child = parts[0]
        .as_symbol()
        .ok_or_else(|| err(format!("malformed binding {b}")))?
        .clone();
    let access = parts[1]
        .to_vec()
        .ok_or_else(|| err(format!("malformed accessor in {b}")))?;
    let op_name = access.first().and_then(Value::as_symbol);
    let (pspec, field) = match op_name.and_then(|n| world.lookup(n)) {
        Some(Callable::Stobj(spec, StobjOp::TableGet(i))) => (spec.clone(), *i),
        _ => {
            return Err(err(format!(
                "binding {b}: the accessor must be a stobj-table get"
            )))
        }
    };
    if access.len() != 4 {
        return Err(err(format!(
            "binding {b}: expected (get 'key parent (create-key))"
        )));
    }
    let key = match &access[1] {
        Value::Cons(_) if access[1].is_form(&Symbol::intern("QUOTE")) => access[1].cdr().car(),
        _ => {
            return Err(err(format!(
                "binding {b}: the key must be a quoted stobj name"
            )))
        }
    };
    let key = key
        .as_symbol()
        .ok_or_else(|| err(format!("binding {b}: the key must be a quoted stobj name")))?
        .clone();
    let spec = world
        .stobj(&key)
        .ok_or_else(|| err(format!("binding {b}: {key} is not a defined stobj")))?
        .clone();
    if child != key {
        return Err(err(format!(
            "binding {b}: the child variable must be named {key}, the key"
        )));
    }
    let parent = access[2]
        .as_symbol()
        .ok_or_else(|| err(format!("binding {b}: the parent must be a stobj variable")))?
        .clone();
    if parent != pspec.name {
        return Err(err(format!(
            "binding {b}: {} belongs to stobj {}, not {parent}",
            op_name.expect("checked"),
            pspec.name
        )));
    }
    let default = access[3].to_vec().unwrap_or_default();
    let creator_ok = default.len() == 1
        && matches!(default[0].as_symbol().and_then(|n| world.lookup(n)),
            Some(Callable::Stobj(s, StobjOp::Create)) if s.name == key);
    if !creator_ok {
        return Err(err(format!(
            "binding {b}: the default must be ({}), the creator for {key}",
            spec.creator
        )));
    }
    Ok((child, field, spec, parent, pspec))
}

/// Evaluates a parsed stobj-let in `env`.
pub(crate) fn eval_stobj_let(interp: &mut Interp, sl: &StobjLet, env: &mut Env) -> Result<Value> {
    let parent = match crate::kernel::lookup_var(env, &sl.parent) {
        Some(Value::Stobj(p)) if p.name() == &sl.parent => p,
        _ => {
            return Err(err(format!(
                "the parent {} is not bound to a live stobj",
                sl.parent
            )))
        }
    };
    let repr = interp.table_repr();
    let base = env.len();
    for b in &sl.bindings {
        // A miss creates a fresh child; the creator is pure so this is only
        // done when needed.
        let child = parent
            .with_table(b.field, |t| t.get(&b.child))
            .unwrap_or_else(|| Stobj::create(&b.spec, repr));
        env.push((b.child.clone(), Value::Stobj(child)));
    }
    let produced = interp.eval(&sl.producer, env);
    env.truncate(base);
    let produced = produced?;
    let values: Vec<Value> = if sl.outputs.len() == 1 {
        vec![produced]
    } else {
        match produced.to_vec() {
            Some(v) if v.len() == sl.outputs.len() => v,
            _ => {
                return Err(err(format!(
                    "producer returned {produced}, expected {} values",
                    sl.outputs.len()
                )))
            }
        }
    };
    let in_place = interp.in_place();
    let mut parent = parent;
    let mut plain: Vec<(Symbol, Value)> = Vec::new();
    for (out, v) in sl.outputs.iter().zip(values) {
        match sl.child(out) {
            Some(b) => {
                let child = match &v {
                    Value::Stobj(c) if b.spec.recognizes(&v) => c.clone(),
                    _ => {
                        return Err(Error::Stobj(format!(
                            "{}: value {v} for key {} does not satisfy {}",
                            sl.parent_spec.fields[b.field].table_op("PUT"),
                            b.child,
                            b.spec.recognizer
                        )))
                    }
                };
                parent = parent.update_table(b.field, in_place, |t| t.put(b.child.clone(), child));
            }
            None => plain.push((out.clone(), v)),
        }
    }
    let base = env.len();
    env.push((sl.parent.clone(), Value::Stobj(parent)));
    env.extend(plain);
    let result = interp.eval(&sl.consumer, env);
    env.truncate(base);
    result
}

//! The event world: an append-only log of definitions with undo.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use super::builtins::{Builtin, BUILTINS};
use crate::error::{Error, Result};
use crate::sexpr::{Symbol, Value};
use crate::stobjs::{StobjOp, StobjSpec};

const SPECIAL_FORMS: [&str; 23] = [
    "QUOTE",
    "IF",
    "LET",
    "LET*",
    "MV-LET",
    "MV",
    "AND",
    "OR",
    "COND",
    "PROG2$",
    "LOOP$",
    "STOBJ-LET",
    "DECLARE",
    "LAMBDA",
    "PROGN",
    "SETQ",
    "MV-SETQ",
    "RETURN",
    "LOOP-FINISH",
    "DEFUN",
    "DEFSTOBJ",
    "ENCAPSULATE",
    "DEFATTACH",
];

/// A user function. `stobjs_in[i]` names the stobj expected at formal `i`;
/// `stobjs_out` is the result shape.
#[derive(Debug)]
pub struct Function {
    pub name: Symbol,
    pub formals: Vec<Symbol>,
    pub stobjs_in: Vec<Option<Symbol>>,
    pub stobjs_out: Vec<Option<Symbol>>,
    pub guard: Option<Value>,
    pub measure: Option<Value>,
    pub body: Value,
}

/// A constrained function known only by its shape.
#[derive(Debug, Clone)]
pub struct Signature {
    pub name: Symbol,
    pub inputs: Vec<Option<Symbol>>,
    pub outputs: Vec<Option<Symbol>>,
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shape = |s: &Option<Symbol>| s.as_ref().map_or("*".to_string(), |x| x.to_string());
        let ins: Vec<String> = self.inputs.iter().map(shape).collect();
        let outs: Vec<String> = self.outputs.iter().map(shape).collect();
        let out = if outs.len() == 1 {
            outs[0].clone()
        } else {
            format!("(MV {})", outs.join(" "))
        };
        if ins.is_empty() {
            write!(f, "(({}) => {out})", self.name)
        } else {
            write!(f, "(({} {}) => {out})", self.name, ins.join(" "))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: Symbol,
    pub term: Value,
}

#[derive(Debug, Clone)]
pub enum Callable {
    Builtin(Builtin),
    Defun(Arc<Function>),
    Stobj(Arc<StobjSpec>, StobjOp),
    Constrained(Arc<Signature>),
}

#[derive(Debug, Clone)]
pub enum EventPayload {
    Defun(Arc<Function>),
    Defstobj(Arc<StobjSpec>),
    Signatures {
        sigs: Vec<Arc<Signature>>,
        constraints: Vec<Constraint>,
    },
    Defattach(Vec<(Symbol, Symbol)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Defun,
    Defstobj,
    Signature,
    Defattach,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Defun => "defun",
            EventKind::Defstobj => "defstobj",
            EventKind::Signature => "signature",
            EventKind::Defattach => "defattach",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Event {
    pub index: u64,
    pub payload: EventPayload,
}

impl Event {
    pub fn kind(&self) -> EventKind {
        match self.payload {
            EventPayload::Defun(_) => EventKind::Defun,
            EventPayload::Defstobj(_) => EventKind::Defstobj,
            EventPayload::Signatures { .. } => EventKind::Signature,
            EventPayload::Defattach(_) => EventKind::Defattach,
        }
    }

    /// Names introduced (or, for defattach, attached).
    pub fn names(&self) -> Vec<Symbol> {
        match &self.payload {
            EventPayload::Defun(f) => vec![f.name.clone()],
            EventPayload::Defstobj(s) => vec![s.name.clone()],
            EventPayload::Signatures { sigs, .. } => sigs.iter().map(|s| s.name.clone()).collect(),
            EventPayload::Defattach(pairs) => pairs.iter().map(|(f, _)| f.clone()).collect(),
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = match &self.payload {
            EventPayload::Defattach(pairs) => {
                pairs.iter().map(|(a, b)| format!("({a} {b})")).collect()
            }
            _ => self.names().iter().map(|n| n.to_string()).collect(),
        };
        write!(
            f,
            "{:>4}  {:<9} {}",
            self.index,
            self.kind(),
            names.join(" ")
        )
    }
}

#[derive(Clone, Debug)]
pub struct World {
    events: Vec<Event>,
    next_index: u64,
    callables: HashMap<Symbol, Callable>,
    stobjs: BTreeMap<Symbol, Arc<StobjSpec>>,
    attachments: HashMap<Symbol, Symbol>,
    constraints: Vec<Constraint>,
}

impl Default for World {
    fn default() -> Self {
        World::new()
    }
}

impl World {
    pub fn new() -> World {
        let mut w = World {
            events: Vec::new(),
            next_index: 1,
            callables: HashMap::new(),
            stobjs: BTreeMap::new(),
            attachments: HashMap::new(),
            constraints: Vec::new(),
        };
        w.install_builtins();
        w
    }

    fn install_builtins(&mut self) {
        for (name, b) in BUILTINS {
            self.callables
                .insert(Symbol::intern(name), Callable::Builtin(*b));
        }
    }

    pub fn lookup(&self, name: &Symbol) -> Option<&Callable> {
        self.callables.get(name)
    }

    pub fn stobj(&self, name: &Symbol) -> Option<&Arc<StobjSpec>> {
        self.stobjs.get(name)
    }

    pub fn is_stobj(&self, name: &Symbol) -> bool {
        self.stobjs.contains_key(name)
    }

    /// Current stobj names, sorted.
    pub fn stobj_names(&self) -> Vec<Symbol> {
        self.stobjs.keys().cloned().collect()
    }

    pub fn attachment(&self, name: &Symbol) -> Option<&Symbol> {
        self.attachments.get(name)
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Index the next event will receive. Never reused, even after undo.
    pub fn next_index(&self) -> u64 {
        self.next_index
    }

    /// The most recent event introducing `name`.
    pub fn event_index_of(&self, name: &Symbol) -> Option<u64> {
        self.events
            .iter()
            .rev()
            .find(|e| e.kind() != EventKind::Defattach && e.names().contains(name))
            .map(|e| e.index)
    }

    fn name_in_use(&self, name: &Symbol) -> bool {
        self.callables.contains_key(name)
            || self.stobjs.contains_key(name)
            || SPECIAL_FORMS.contains(&name.name())
    }

    fn ensure_fresh(&self, name: &Symbol, what: &str) -> Result<()> {
        if self.name_in_use(name) {
            Err(Error::World(format!(
                "{what} {name}: the name {name} is already in use"
            )))
        } else {
            Ok(())
        }
    }

    /// Validates and appends an event, returning its index.
    pub fn add_event(&mut self, payload: EventPayload) -> Result<u64> {
        self.validate(&payload)?;
        self.register(&payload);
        let index = self.next_index;
        self.next_index += 1;
        self.events.push(Event { index, payload });
        Ok(index)
    }

    fn validate(&self, payload: &EventPayload) -> Result<()> {
        match payload {
            EventPayload::Defun(f) => self.ensure_fresh(&f.name, "defun"),
            EventPayload::Defstobj(spec) => {
                self.ensure_fresh(&spec.name, "defstobj")?;
                let mut seen = Vec::new();
                for (name, _) in spec.generated() {
                    self.ensure_fresh(&name, "defstobj")?;
                    if seen.contains(&name) || name == spec.name {
                        return Err(Error::World(format!(
                            "defstobj {}: generated name {name} collides",
                            spec.name
                        )));
                    }
                    seen.push(name);
                }
                Ok(())
            }
            EventPayload::Signatures { sigs, .. } => {
                for (i, s) in sigs.iter().enumerate() {
                    self.ensure_fresh(&s.name, "encapsulate")?;
                    if sigs[..i].iter().any(|t| t.name == s.name) {
                        return Err(Error::World(format!(
                            "encapsulate: {} is declared twice",
                            s.name
                        )));
                    }
                    for st in s.inputs.iter().chain(&s.outputs).flatten() {
                        if !self.is_stobj(st) {
                            return Err(Error::World(format!(
                                "encapsulate: signature {s} mentions {st}, which is not a stobj"
                            )));
                        }
                    }
                }
                Ok(())
            }
            EventPayload::Defattach(pairs) => {
                for (f, g) in pairs {
                    self.check_attachment(f, g)?;
                }
                Ok(())
            }
        }
    }

    fn check_attachment(&self, f: &Symbol, g: &Symbol) -> Result<()> {
        let Some(Callable::Constrained(sig)) = self.lookup(f) else {
            return Err(Error::Attachment(format!(
                "defattach: {f} is not a constrained function"
            )));
        };
        let Some(Callable::Defun(fun)) = self.lookup(g) else {
            return Err(Error::Attachment(format!(
                "defattach: {g} is not a defined function"
            )));
        };
        if fun.stobjs_in != sig.inputs || fun.stobjs_out != sig.outputs {
            let got = Signature {
                name: g.clone(),
                inputs: fun.stobjs_in.clone(),
                outputs: fun.stobjs_out.clone(),
            };
            return Err(Error::Attachment(format!(
                "defattach: shape mismatch attaching {g} to {f}: expected {sig}, got {got}"
            )));
        }
        Ok(())
    }

    fn register(&mut self, payload: &EventPayload) {
        match payload {
            EventPayload::Defun(f) => {
                self.callables
                    .insert(f.name.clone(), Callable::Defun(f.clone()));
            }
            EventPayload::Defstobj(spec) => {
                for (name, op) in spec.generated() {
                    self.callables
                        .insert(name, Callable::Stobj(spec.clone(), op));
                }
                self.stobjs.insert(spec.name.clone(), spec.clone());
            }
            EventPayload::Signatures { sigs, constraints } => {
                for s in sigs {
                    self.callables
                        .insert(s.name.clone(), Callable::Constrained(s.clone()));
                }
                self.constraints.extend(constraints.iter().cloned());
            }
            EventPayload::Defattach(pairs) => {
                for (f, g) in pairs {
                    self.attachments.insert(f.clone(), g.clone());
                }
            }
        }
    }

    /// Removes every event with index at least `index` and rebuilds the
    /// registries. Returns the stobj names whose definitions were undone.
    pub fn undo(&mut self, index: u64) -> Result<Vec<Symbol>> {
        if !self.events.iter().any(|e| e.index == index) {
            return Err(Error::World(format!("no event with index {index}")));
        }
        let keep = self.events.iter().take_while(|e| e.index < index).count();
        let undone: Vec<Symbol> = self.events[keep..]
            .iter()
            .filter_map(|e| match &e.payload {
                EventPayload::Defstobj(s) => Some(s.name.clone()),
                _ => None,
            })
            .collect();
        let kept: Vec<Event> = self.events.drain(..).take(keep).collect();
        self.callables.clear();
        self.stobjs.clear();
        self.attachments.clear();
        self.constraints.clear();
        self.install_builtins();
        for e in &kept {
            self.register(&e.payload);
        }
        self.events = kept;
        Ok(undone)
    }
}

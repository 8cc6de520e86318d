use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::builtins::{self, arity, Builtin, BuiltinError};
use super::world::{Callable, EventPayload, Function, World};
use crate::error::{Error, GuardViolation, LinearityReport, LoopCheck, LoopGuardFailure, Result};
use crate::loops::{self, l_less, lex_fix, CompiledLoop, LoopTrace, MeasureValue};
use crate::refinement;
use crate::sexpr::{read_spanned, show, Symbol, Value};
use crate::stobj_table::{StobjTable, TableRepr};
use crate::stobjs::{
    self, parse_defstobj, parse_stobj_let, scalar_type_ok, stobj_formals, Checker, Stobj, StobjOp,
    StobjSpec,
};

/// Variable bindings, most recent last.
pub type Env = Vec<(Symbol, Value)>;

pub fn lookup_var(env: &Env, name: &Symbol) -> Option<Value> {
    env.iter()
        .rev()
        .find(|(k, _)| k == name)
        .map(|(_, v)| v.clone())
}

/// Logical: loops run through `do$`, stobjs update by copying, tables are
/// alists. Native: loops run imperatively, stobjs update in place, tables are
/// hash tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Logical,
    Native,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Logical => "logical",
            Mode::Native => "native",
        })
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "logical" => Ok(Mode::Logical),
            "native" => Ok(Mode::Native),
            _ => Err(format!("unknown mode {s}")),
        }
    }
}

/// Deliberate native-path bugs, for testing the differential harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NativeFault {
    /// The first `setq` executed by a native loop is dropped.
    IgnoreFirstSetq,
}

#[derive(Clone, Debug)]
pub struct EvalConfig {
    pub mode: Mode,
    pub guard_check: bool,
    /// Iteration cap for native loops.
    pub native_cap: u64,
    /// Whether native loops check `:GUARD` and `OF-TYPE`.
    pub native_checks: bool,
    pub max_depth: usize,
    pub fault: Option<NativeFault>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            mode: Mode::Logical,
            guard_check: true,
            native_cap: 10_000_000,
            native_checks: true,
            max_depth: 10_000,
            fault: None,
        }
    }
}

impl EvalConfig {
    pub fn with_mode(mode: Mode) -> Self {
        EvalConfig {
            mode,
            ..EvalConfig::default()
        }
    }
}

/// A closed `(LAMBDA (formals) body)`.
#[derive(Clone, Debug)]
pub struct LambdaObject {
    pub formals: Vec<Symbol>,
    pub body: Value,
}

impl LambdaObject {
    pub fn new(formals: Vec<Symbol>, body: Value) -> Self {
        LambdaObject { formals, body }
    }

    pub fn from_value(v: &Value) -> Result<LambdaObject> {
        let items = v.to_vec().unwrap_or_default();
        let ok_head = matches!(items.first(), Some(Value::Sym(s)) if s.name() == "LAMBDA");
        if !ok_head || items.len() != 3 {
            return Err(Error::eval(format!("malformed LAMBDA object {v}")));
        }
        let formals = items[1]
            .to_vec()
            .and_then(|fs| {
                fs.iter()
                    .map(|f| f.as_symbol().cloned())
                    .collect::<Option<Vec<_>>>()
            })
            .ok_or_else(|| Error::eval(format!("malformed LAMBDA formals in {v}")))?;
        for (i, f) in formals.iter().enumerate() {
            if formals[..i].contains(f) {
                return Err(Error::eval(format!("duplicate LAMBDA formal {f} in {v}")));
            }
        }
        Ok(LambdaObject {
            formals,
            body: items[2].clone(),
        })
    }

    pub fn to_value(&self) -> Value {
        Value::list([
            Value::sym("LAMBDA"),
            Value::list(
                self.formals
                    .iter()
                    .cloned()
                    .map(Value::Sym)
                    .collect::<Vec<_>>(),
            ),
            self.body.clone(),
        ])
    }
}

/// Result of one top-level form.
#[derive(Clone, Debug)]
pub struct TopResult {
    pub value: Value,
    /// The transcript line: the value, or the name introduced by an event.
    pub printed: String,
    pub event: Option<u64>,
}

#[derive(Clone, Debug)]
pub enum UndoTarget {
    Index(u64),
    Name(Symbol),
}

#[derive(Clone, Debug, Default)]
pub struct UndoReport {
    pub events_removed: usize,
    pub stobjs_undone: Vec<Symbol>,
    pub keys_retracted: usize,
}

pub struct Interp {
    world: World,
    bank: BTreeMap<Symbol, Stobj>,
    pub config: EvalConfig,
    loop_cache: HashMap<usize, (Value, Arc<CompiledLoop>)>,
    output: String,
    warnings: Vec<String>,
    pub(crate) trace: Option<Vec<LoopTrace>>,
    measure_stack: Vec<(Symbol, MeasureValue)>,
    measure_log: Option<Vec<(Symbol, MeasureValue)>>,
    depth: usize,
    pub(crate) fault_fired: bool,
}

fn is_head(form: &Value, name: &str) -> bool {
    matches!(form.car(), Value::Sym(s) if s.name() == name)
}

fn quote(v: Value) -> Value {
    Value::list([Value::sym("QUOTE"), v])
}

const STATEMENTS: [&str; 5] = ["PROGN", "SETQ", "MV-SETQ", "RETURN", "LOOP-FINISH"];
const EVENTS: [&str; 4] = ["DEFUN", "DEFSTOBJ", "ENCAPSULATE", "DEFATTACH"];

impl Interp {
    pub fn new(config: EvalConfig) -> Interp {
        Interp {
            world: World::new(),
            bank: BTreeMap::new(),
            config,
            loop_cache: HashMap::new(),
            output: String::new(),
            warnings: Vec::new(),
            trace: None,
            measure_stack: Vec::new(),
            measure_log: None,
            depth: 0,
            fault_fired: false,
        }
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn bank(&self) -> &BTreeMap<Symbol, Stobj> {
        &self.bank
    }

    pub fn stobj(&self, name: &str) -> Option<&Stobj> {
        self.bank.get(&Symbol::intern(name))
    }

    /// Replaces the live instance of a top-level stobj.
    pub fn set_stobj(&mut self, st: Stobj) {
        self.bank.insert(st.name().clone(), st);
    }

    pub fn in_place(&self) -> bool {
        self.config.mode == Mode::Native
    }

    pub fn table_repr(&self) -> TableRepr {
        match self.config.mode {
            Mode::Logical => TableRepr::Alist,
            Mode::Native => TableRepr::Hash,
        }
    }

    /// Switches mode, converting every live table to the new representation.
    pub fn set_mode(&mut self, mode: Mode) {
        self.config.mode = mode;
        let repr = self.table_repr();
        for st in self.bank.values_mut() {
            *st = st.deep_copy(repr);
        }
    }

    pub fn take_output(&mut self) -> String {
        std::mem::take(&mut self.output)
    }

    pub fn take_warnings(&mut self) -> Vec<String> {
        std::mem::take(&mut self.warnings)
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<LoopTrace> {
        self.trace.take().unwrap_or_default()
    }

    pub fn enable_measure_log(&mut self) {
        self.measure_log = Some(Vec::new());
    }

    /// Measures recorded on entry to functions declaring `:measure`.
    pub fn take_measure_log(&mut self) -> Vec<(Symbol, MeasureValue)> {
        self.measure_log.take().unwrap_or_default()
    }

    /// Every instance reachable from the bank appears exactly once.
    pub fn check_single_owner(&self) -> Result<()> {
        let mut all = Vec::new();
        for st in self.bank.values() {
            st.collect_instances(&mut all);
        }
        let mut seen = HashSet::new();
        for (addr, name) in all {
            if !seen.insert(addr) {
                return Err(Error::Stobj(format!(
                    "an instance of {name} is reachable from two owners"
                )));
            }
        }
        Ok(())
    }

    /// Logical views of every top-level stobj.
    pub fn bank_view(&self) -> Vec<(Symbol, Value)> {
        self.bank
            .iter()
            .map(|(k, v)| (k.clone(), v.logical_view()))
            .collect()
    }

    // ---------------------------------------------------------------------
    // Top level

    /// Evaluates every form in `src`, stopping at the first error.
    pub fn run_source(&mut self, src: &str) -> Result<Vec<TopResult>> {
        let forms = read_spanned(src)?;
        let mut out = Vec::new();
        for (form, _) in forms {
            out.push(self.eval_top(&form)?);
        }
        Ok(out)
    }

    /// Value of the last form in `src`.
    pub fn eval_str(&mut self, src: &str) -> Result<Value> {
        Ok(self
            .run_source(src)?
            .pop()
            .map(|r| r.value)
            .unwrap_or(Value::Nil))
    }

    pub fn eval_top(&mut self, form: &Value) -> Result<TopResult> {
        self.depth = 0;
        self.measure_stack.clear();
        let head = form.car();
        match head.as_symbol().map(|s| s.name()) {
            Some("DEFUN") => self.defun(form),
            Some("DEFSTOBJ") => self.defstobj(form),
            Some("ENCAPSULATE") => {
                let payload = refinement::parse_encapsulate(form, &self.world)?;
                self.add_event(payload)
            }
            Some("DEFATTACH") => {
                let payload = refinement::parse_defattach(form)?;
                self.add_event(payload)
            }
            _ => self.eval_expression(form),
        }
    }

    fn add_event(&mut self, payload: EventPayload) -> Result<TopResult> {
        let printed = match &payload {
            EventPayload::Defun(f) => f.name.to_string(),
            EventPayload::Defstobj(s) => s.name.to_string(),
            EventPayload::Signatures { sigs, .. } => {
                let names: Vec<String> = sigs.iter().map(|s| s.name.to_string()).collect();
                format!("({})", names.join(" "))
            }
            EventPayload::Defattach(pairs) => {
                let names: Vec<String> = pairs.iter().map(|(f, _)| f.to_string()).collect();
                format!("({})", names.join(" "))
            }
        };
        let index = self.world.add_event(payload)?;
        self.loop_cache.clear();
        Ok(TopResult {
            value: Value::sym(&printed),
            printed,
            event: Some(index),
        })
    }

    fn defstobj(&mut self, form: &Value) -> Result<TopResult> {
        let spec = Arc::new(parse_defstobj(form)?);
        let r = self.add_event(EventPayload::Defstobj(spec.clone()))?;
        self.bank
            .insert(spec.name.clone(), Stobj::create(&spec, self.table_repr()));
        Ok(r)
    }

    fn defun(&mut self, form: &Value) -> Result<TopResult> {
        let f = self.parse_defun(form)?;
        self.add_event(EventPayload::Defun(Arc::new(f)))
    }

    fn parse_defun(&mut self, form: &Value) -> Result<Function> {
        let bad = |msg: String| Error::World(format!("defun: {msg}"));
        let items = form.to_vec().ok_or_else(|| bad("malformed form".into()))?;
        let name = items
            .get(1)
            .and_then(Value::as_symbol)
            .filter(|s| !s.is_keyword())
            .ok_or_else(|| bad("expected a function name".into()))?
            .clone();
        let bad = |msg: String| Error::World(format!("defun {name}: {msg}"));
        let formals: Vec<Symbol> = items
            .get(2)
            .and_then(Value::to_vec)
            .and_then(|fs| {
                fs.iter()
                    .map(|f| f.as_symbol().filter(|s| !s.is_keyword()).cloned())
                    .collect()
            })
            .ok_or_else(|| bad("malformed formals".into()))?;
        for (i, f) in formals.iter().enumerate() {
            if formals[..i].contains(f) {
                return Err(bad(format!("duplicate formal {f}")));
            }
        }
        let mut rest: Vec<Value> = items[3..].to_vec();
        if rest.len() > 1 && matches!(rest[0], Value::Str(_)) {
            rest.remove(0);
        }
        let mut guard: Vec<Value> = Vec::new();
        let mut measure = None;
        let mut declared: Vec<Symbol> = Vec::new();
        while rest.len() > 1 && is_head(&rest[0], "DECLARE") {
            let decl = rest.remove(0);
            for spec in decl.iter().skip(1) {
                if !is_head(spec, "XARGS") {
                    continue;
                }
                let kv = spec
                    .to_vec()
                    .ok_or_else(|| bad(format!("malformed declare {decl}")))?;
                if kv.len() % 2 != 1 {
                    return Err(bad(format!("malformed declare {decl}")));
                }
                for pair in kv[1..].chunks(2) {
                    match pair[0].as_symbol().map(|s| s.name()) {
                        Some(":GUARD") => guard.push(pair[1].clone()),
                        Some(":MEASURE") => measure = Some(pair[1].clone()),
                        Some(":STOBJS") => {
                            let names = match &pair[1] {
                                Value::Sym(s) => vec![s.clone()],
                                v => v
                                    .to_vec()
                                    .and_then(|l| {
                                        l.iter().map(|x| x.as_symbol().cloned()).collect()
                                    })
                                    .ok_or_else(|| bad(format!("malformed :stobjs {v}")))?,
                            };
                            for s in names {
                                if !formals.contains(&s) {
                                    return Err(bad(format!(
                                        "{s} is declared a stobj but is not a formal"
                                    )));
                                }
                                if !self.world.is_stobj(&s) {
                                    return Err(bad(format!(
                                        "{s} is declared a stobj but no such stobj is defined"
                                    )));
                                }
                                declared.push(s);
                            }
                        }
                        Some(k) if k.starts_with(':') => {
                            self.warnings
                                .push(format!("defun {name}: ignoring xargs {k}"));
                        }
                        _ => return Err(bad(format!("malformed declare {decl}"))),
                    }
                }
            }
        }
        if rest.len() != 1 {
            return Err(bad("expected exactly one body form".into()));
        }
        let body = rest.pop().expect("one body");
        let guard = match guard.len() {
            0 => None,
            1 => guard.pop(),
            _ => Some(Value::cons(Value::sym("AND"), Value::list(guard))),
        };
        let stobjs_in = stobj_formals(&self.world, &formals, &declared);
        let stobjs_out = Checker::check_defun(&self.world, &name, &formals, &stobjs_in, &body)
            .map_err(|violations| {
                Error::Linearity(LinearityReport {
                    context: format!("defun {name}"),
                    violations,
                })
            })?;
        Ok(Function {
            name,
            formals,
            stobjs_in,
            stobjs_out,
            guard,
            measure,
            body,
        })
    }

    fn eval_expression(&mut self, form: &Value) -> Result<TopResult> {
        let live: Vec<Symbol> = self.bank.keys().cloned().collect();
        let shape = Checker::check_top(&self.world, form, &live).map_err(|violations| {
            Error::Linearity(LinearityReport {
                context: show(form),
                violations,
            })
        })?;
        let mut env: Env = self
            .bank
            .iter()
            .map(|(k, v)| (k.clone(), Value::Stobj(v.clone())))
            .collect();
        let value = self.eval(form, &mut env)?;
        if let Some(shape) = shape {
            let parts: Vec<Value> = if shape.len() == 1 {
                vec![value.clone()]
            } else {
                value.to_vec().unwrap_or_default()
            };
            for (slot, v) in shape.iter().zip(parts) {
                if let (Some(name), Value::Stobj(st)) = (slot, v) {
                    if st.name() == name {
                        self.bank.insert(name.clone(), st);
                    }
                }
            }
        }
        Ok(TopResult {
            printed: show(&value),
            value,
            event: None,
        })
    }

    /// Undoes back through an event, retracting undone stobj names from
    /// every live table.
    pub fn undo(&mut self, target: &UndoTarget) -> Result<UndoReport> {
        let index = match target {
            UndoTarget::Index(i) => *i,
            UndoTarget::Name(n) => self
                .world
                .event_index_of(n)
                .ok_or_else(|| Error::World(format!("no event introduces {n}")))?,
        };
        let before = self.world.events().len();
        let undone = self.world.undo(index)?;
        self.loop_cache.clear();
        let set: HashSet<Symbol> = undone.iter().cloned().collect();
        for name in &undone {
            self.bank.remove(name);
        }
        let in_place = self.in_place();
        let mut keys_retracted = 0;
        if !set.is_empty() {
            for st in self.bank.values_mut() {
                let (updated, n) = st.retract_tables(&set, in_place);
                *st = updated;
                keys_retracted += n;
            }
        }
        Ok(UndoReport {
            events_removed: before - self.world.events().len(),
            stobjs_undone: undone,
            keys_retracted,
        })
    }

    /// Calls a function by name on already-evaluated arguments, without the
    /// linearity check. Used by harnesses.
    pub fn call_function(&mut self, name: &str, args: Vec<Value>) -> Result<Value> {
        let sym = Symbol::intern(name);
        let form = Value::cons(
            Value::Sym(sym.clone()),
            Value::list(args.iter().cloned().map(quote).collect::<Vec<_>>()),
        );
        let callable =
            self.world
                .lookup(&sym)
                .cloned()
                .ok_or_else(|| Error::UndefinedFunction {
                    name: sym.clone(),
                    form: show(&form),
                })?;
        self.depth = 0;
        self.apply_callable(&sym, &callable, args, None, &form)
    }

    /// Evaluates `form` under explicit bindings, without the linearity check.
    pub fn eval_with(&mut self, form: &Value, bindings: Vec<(Symbol, Value)>) -> Result<Value> {
        let mut env = bindings;
        self.depth = 0;
        self.eval(form, &mut env)
    }

    // ---------------------------------------------------------------------
    // Expressions

    pub(crate) fn enter(&mut self) -> Result<()> {
        self.depth += 1;
        if self.depth > self.config.max_depth {
            self.depth = 0;
            return Err(Error::Depth(self.config.max_depth));
        }
        Ok(())
    }

    pub(crate) fn leave(&mut self) {
        self.depth = self.depth.saturating_sub(1);
    }

    pub fn eval(&mut self, form: &Value, env: &mut Env) -> Result<Value> {
        match form {
            Value::Sym(s) => {
                if s.is_keyword() {
                    Ok(form.clone())
                } else {
                    lookup_var(env, s).ok_or_else(|| Error::Unbound(s.clone()))
                }
            }
            Value::Cons(_) => self.eval_compound(form, env),
            _ => Ok(form.clone()),
        }
    }

    fn args_of(form: &Value) -> Result<Vec<Value>> {
        form.cdr()
            .to_vec()
            .ok_or_else(|| Error::eval(format!("malformed form {form}")))
    }

    fn eval_compound(&mut self, form: &Value, env: &mut Env) -> Result<Value> {
        let head = form.car();
        let name = match &head {
            Value::Sym(s) => s.clone(),
            Value::Cons(_) if is_head(&head, "LAMBDA") => {
                let lam = LambdaObject::from_value(&head)?;
                let args = self.eval_args(form, env)?;
                return self.apply_lambda(&lam, args, form);
            }
            _ => return Err(Error::eval(format!("illegal function position in {form}"))),
        };
        let n = name.name();
        match n {
            "QUOTE" => {
                let args = Self::args_of(form)?;
                if args.len() != 1 {
                    return Err(Error::eval(format!("malformed quote {form}")));
                }
                Ok(args[0].clone())
            }
            "IF" => {
                let args = Self::args_of(form)?;
                if args.len() != 3 {
                    return Err(Error::Arity {
                        name: "IF".into(),
                        expected: "3".into(),
                        got: args.len(),
                        form: show(form),
                    });
                }
                if self.eval(&args[0], env)?.truthy() {
                    self.eval(&args[1], env)
                } else {
                    self.eval(&args[2], env)
                }
            }
            "AND" => {
                let mut last = Value::T;
                for a in Self::args_of(form)? {
                    last = self.eval(&a, env)?;
                    if last.is_nil() {
                        return Ok(Value::Nil);
                    }
                }
                Ok(last)
            }
            "OR" => {
                for a in Self::args_of(form)? {
                    let v = self.eval(&a, env)?;
                    if v.truthy() {
                        return Ok(v);
                    }
                }
                Ok(Value::Nil)
            }
            "COND" => {
                for clause in Self::args_of(form)? {
                    let parts = clause
                        .to_vec()
                        .filter(|p| !p.is_empty())
                        .ok_or_else(|| Error::eval(format!("malformed cond clause {clause}")))?;
                    let test = self.eval(&parts[0], env)?;
                    if test.truthy() {
                        return match parts.len() {
                            1 => Ok(test),
                            2 => self.eval(&parts[1], env),
                            _ => Err(Error::eval(format!(
                                "cond clause {clause} has several body forms"
                            ))),
                        };
                    }
                }
                Ok(Value::Nil)
            }
            "PROG2$" => {
                let args = Self::args_of(form)?;
                if args.len() != 2 {
                    return Err(Error::Arity {
                        name: "PROG2$".into(),
                        expected: "2".into(),
                        got: args.len(),
                        form: show(form),
                    });
                }
                self.eval(&args[0], env)?;
                self.eval(&args[1], env)
            }
            "MV" => {
                let vals = self.eval_args(form, env)?;
                Ok(Value::list(vals))
            }
            "LET" | "LET*" => self.eval_let(n == "LET*", form, env),
            "MV-LET" => self.eval_mv_let(form, env),
            "LOOP$" => loops::eval_loop(self, form, env),
            "STOBJ-LET" => {
                let sl = parse_stobj_let(form, &self.world)?;
                stobjs::eval_stobj_let(self, &sl, env)
            }
            "DECLARE" => Err(Error::eval(format!(
                "declare is only allowed at the start of a body: {form}"
            ))),
            "LAMBDA" => Err(Error::eval(format!(
                "a LAMBDA object must be quoted or applied: {form}"
            ))),
            _ if STATEMENTS.contains(&n) => Err(Error::eval(format!(
                "{n} is only legal inside a loop$ DO or FINALLY body: {form}"
            ))),
            _ if EVENTS.contains(&n) => Err(Error::eval(format!(
                "{n} is only allowed at the top level: {form}"
            ))),
            _ => self.eval_call(&name, form, env),
        }
    }

    fn eval_args(&mut self, form: &Value, env: &mut Env) -> Result<Vec<Value>> {
        let mut out = Vec::new();
        let mut cur = form.cdr();
        loop {
            match cur {
                Value::Cons(c) => {
                    out.push(self.eval(&c.car, env)?);
                    cur = c.cdr.clone();
                }
                Value::Nil => return Ok(out),
                _ => return Err(Error::eval(format!("malformed form {form}"))),
            }
        }
    }

    /// Splits `(let bindings decl* body)` style tails into body.
    fn single_body(form: &Value, rest: &[Value]) -> Result<Value> {
        let body: Vec<&Value> = rest.iter().filter(|f| !is_head(f, "DECLARE")).collect();
        match body.as_slice() {
            [b] => Ok((*b).clone()),
            _ => Err(Error::eval(format!(
                "expected exactly one body form in {form}"
            ))),
        }
    }

    fn eval_let(&mut self, star: bool, form: &Value, env: &mut Env) -> Result<Value> {
        let args = Self::args_of(form)?;
        let bindings = args
            .first()
            .and_then(Value::to_vec)
            .ok_or_else(|| Error::eval(format!("malformed bindings in {form}")))?;
        let body = Self::single_body(form, &args[1..])?;
        let base = env.len();
        let mut pending = Vec::new();
        for b in &bindings {
            let (var, rhs) = match b {
                Value::Sym(v) => (v.clone(), Value::Nil),
                _ => {
                    let parts = b.to_vec().filter(|p| p.len() == 2);
                    match parts.as_deref() {
                        Some([Value::Sym(v), rhs]) if !v.is_keyword() => (v.clone(), rhs.clone()),
                        _ => {
                            env.truncate(base);
                            return Err(Error::eval(format!("malformed binding {b} in {form}")));
                        }
                    }
                }
            };
            let v = match self.eval(&rhs, env) {
                Ok(v) => v,
                Err(e) => {
                    env.truncate(base);
                    return Err(e);
                }
            };
            if star {
                env.push((var, v));
            } else {
                pending.push((var, v));
            }
        }
        env.extend(pending);
        let r = self.eval(&body, env);
        env.truncate(base);
        r
    }

    fn eval_mv_let(&mut self, form: &Value, env: &mut Env) -> Result<Value> {
        let args = Self::args_of(form)?;
        if args.len() < 3 {
            return Err(Error::eval(format!("malformed mv-let {form}")));
        }
        let vars: Vec<Symbol> = args[0]
            .to_vec()
            .and_then(|vs| vs.iter().map(|v| v.as_symbol().cloned()).collect())
            .ok_or_else(|| Error::eval(format!("malformed mv-let variables in {form}")))?;
        let body = Self::single_body(form, &args[2..])?;
        let v = self.eval(&args[1], env)?;
        let vals = match v.to_vec() {
            Some(vals) if vals.len() == vars.len() => vals,
            _ => {
                return Err(Error::eval(format!(
                    "mv-let expects {} values from {} but got {}",
                    vars.len(),
                    args[1],
                    show(&v)
                )))
            }
        };
        let base = env.len();
        env.extend(vars.into_iter().zip(vals));
        let r = self.eval(&body, env);
        env.truncate(base);
        r
    }

    fn eval_call(&mut self, name: &Symbol, form: &Value, env: &mut Env) -> Result<Value> {
        let callable = match self.world.lookup(name) {
            Some(c) => c.clone(),
            None => {
                return Err(Error::UndefinedFunction {
                    name: name.clone(),
                    form: show(form),
                })
            }
        };
        let arg_forms = Self::args_of(form)?;
        let mut args = Vec::with_capacity(arg_forms.len());
        for a in &arg_forms {
            args.push(self.eval(a, env)?);
        }
        self.apply_callable(name, &callable, args, Some(&arg_forms), form)
    }

    pub(crate) fn apply_callable(
        &mut self,
        name: &Symbol,
        callable: &Callable,
        args: Vec<Value>,
        arg_forms: Option<&[Value]>,
        form: &Value,
    ) -> Result<Value> {
        match callable {
            Callable::Builtin(b) => self.call_builtin(*b, name, args, arg_forms, form),
            Callable::Defun(f) => self.call_defun(f, args, form),
            Callable::Stobj(spec, op) => self.stobj_op(name, spec, *op, args, arg_forms, form),
            Callable::Constrained(sig) => {
                let target = self.world.attachment(&sig.name).cloned().ok_or_else(|| {
                    Error::Attachment(format!(
                        "{} is a constrained function with no attachment, in {}",
                        sig.name,
                        show(form)
                    ))
                })?;
                match self.world.lookup(&target).cloned() {
                    Some(Callable::Defun(f)) => self.call_defun(&f, args, form),
                    _ => Err(Error::Attachment(format!(
                        "{} is attached to {target}, which is not defined",
                        sig.name
                    ))),
                }
            }
        }
    }

    fn check_arity(
        name: &Symbol,
        min: usize,
        max: Option<usize>,
        got: usize,
        form: &Value,
    ) -> Result<()> {
        if got < min || max.is_some_and(|m| got > m) {
            let expected = match max {
                Some(m) if m == min => m.to_string(),
                Some(m) => format!("{min} to {m}"),
                None => format!("at least {min}"),
            };
            return Err(Error::Arity {
                name: name.to_string(),
                expected,
                got,
                form: show(form),
            });
        }
        Ok(())
    }

    fn guard_error(
        &self,
        form: &Value,
        predicate: &str,
        arg_expr: Option<Value>,
        value: Value,
    ) -> Error {
        let shown = arg_expr.clone().unwrap_or_else(|| match &value {
            Value::Int(_) | Value::Str(_) | Value::Nil | Value::T => value.clone(),
            _ => quote(value.clone()),
        });
        Error::Guard(Box::new(GuardViolation {
            call: show(form),
            condition: format!("({predicate} {})", show(&shown)),
            predicate: predicate.to_string(),
            arg_expr,
            arg_value: Some(value),
        }))
    }

    fn call_builtin(
        &mut self,
        b: Builtin,
        name: &Symbol,
        args: Vec<Value>,
        arg_forms: Option<&[Value]>,
        form: &Value,
    ) -> Result<Value> {
        let (min, max) = arity(b);
        Self::check_arity(name, min, max, args.len(), form)?;
        match b {
            Builtin::Apply => {
                let mut it = args.into_iter();
                let f = it.next().expect("arity");
                let a = it.next().expect("arity");
                self.apply_dollar(&f, &a, form)
            }
            Builtin::Cw => self.cw(&args, form),
            Builtin::OfType => self.of_type(&args),
            _ => builtins::call(b, &args, self.config.guard_check).map_err(|e| match e {
                BuiltinError::Guard { predicate, arg } => self.guard_error(
                    form,
                    predicate,
                    arg_forms.and_then(|fs| fs.get(arg).cloned()),
                    args[arg].clone(),
                ),
            }),
        }
    }

    /// `apply$` on a function name or a LAMBDA object.
    pub fn apply_dollar(&mut self, f: &Value, args: &Value, form: &Value) -> Result<Value> {
        let args = args
            .to_vec()
            .ok_or_else(|| Error::eval(format!("apply$: arguments {args} are not a true list")))?;
        match f {
            Value::Sym(name) => {
                let callable =
                    self.world
                        .lookup(name)
                        .cloned()
                        .ok_or_else(|| Error::UndefinedFunction {
                            name: name.clone(),
                            form: show(form),
                        })?;
                let stobj_fn = match &callable {
                    Callable::Defun(fun) => fun
                        .stobjs_in
                        .iter()
                        .chain(&fun.stobjs_out)
                        .any(Option::is_some),
                    Callable::Stobj(..) => true,
                    Callable::Constrained(sig) => {
                        sig.inputs.iter().chain(&sig.outputs).any(Option::is_some)
                    }
                    Callable::Builtin(_) => false,
                };
                if stobj_fn {
                    return Err(Error::eval(format!(
                        "apply$ cannot call {name}, which takes or returns a stobj"
                    )));
                }
                let call = Value::cons(
                    f.clone(),
                    Value::list(args.iter().cloned().map(quote).collect::<Vec<_>>()),
                );
                self.apply_callable(name, &callable, args, None, &call)
            }
            Value::Cons(_) => {
                let lam = LambdaObject::from_value(f)?;
                self.apply_lambda(&lam, args, form)
            }
            _ => Err(Error::eval(format!("apply$: {f} is not a function"))),
        }
    }

    pub fn apply_lambda(
        &mut self,
        lam: &LambdaObject,
        args: Vec<Value>,
        form: &Value,
    ) -> Result<Value> {
        if args.len() != lam.formals.len() {
            return Err(Error::Arity {
                name: "LAMBDA".into(),
                expected: lam.formals.len().to_string(),
                got: args.len(),
                form: show(form),
            });
        }
        self.enter()?;
        let mut env: Env = lam.formals.iter().cloned().zip(args).collect();
        let r = self.eval(&lam.body, &mut env);
        self.leave();
        r
    }

    fn cw(&mut self, args: &[Value], form: &Value) -> Result<Value> {
        let Value::Str(fmt) = &args[0] else {
            return Err(Error::eval(format!(
                "cw: the format argument of {form} must be a string"
            )));
        };
        let mut out = String::new();
        let mut chars = fmt.chars().peekable();
        while let Some(c) = chars.next() {
            if c != '~' {
                out.push(c);
                continue;
            }
            match chars.next() {
                Some('%') => out.push('\n'),
                Some('~') => out.push('~'),
                Some('x') | Some('X') => {
                    let d = chars
                        .next()
                        .and_then(|d| d.to_digit(10))
                        .ok_or_else(|| Error::eval(format!("cw: bad directive in {fmt:?}")))?;
                    let v = args.get(d as usize + 1).ok_or_else(|| {
                        Error::eval(format!("cw: missing argument ~x{d} in {form}"))
                    })?;
                    out.push_str(&show(v));
                }
                _ => return Err(Error::eval(format!("cw: bad directive in {fmt:?}"))),
            }
        }
        self.output.push_str(&out);
        Ok(Value::Nil)
    }

    /// `(of-type$ 'var 'type value)`: the value if it has the type. The
    /// surrounding loop fills in iteration details on failure.
    fn of_type(&mut self, args: &[Value]) -> Result<Value> {
        let value = args[2].clone();
        let ok = match args[1].symbol_name() {
            Some("INTEGER") => value.as_int().is_some(),
            _ => true,
        };
        if ok || !self.config.guard_check {
            return Ok(value);
        }
        let var = args[0]
            .as_symbol()
            .cloned()
            .unwrap_or_else(|| Symbol::intern("?"));
        Err(Error::LoopGuard(Box::new(LoopGuardFailure {
            check: LoopCheck::OfType {
                var,
                type_spec: show(&args[1]),
                value: show(&value),
            },
            iteration: 0,
            alist: String::new(),
            checkpoint: String::new(),
        })))
    }

    fn call_defun(&mut self, f: &Arc<Function>, args: Vec<Value>, form: &Value) -> Result<Value> {
        let n = f.formals.len();
        Self::check_arity(&f.name, n, Some(n), args.len(), form)?;
        for (i, (st, a)) in f.stobjs_in.iter().zip(&args).enumerate() {
            if let Some(st) = st {
                if !matches!(a, Value::Stobj(s) if s.name() == st) {
                    return Err(Error::Stobj(format!(
                        "{} expects the stobj {st} as argument {}, got {}",
                        f.name,
                        i + 1,
                        show(a)
                    )));
                }
            }
        }
        self.enter()?;
        let mut env: Env = f.formals.iter().cloned().zip(args).collect();
        let r = self.run_defun_body(f, &mut env, form);
        self.leave();
        r
    }

    fn run_defun_body(&mut self, f: &Arc<Function>, env: &mut Env, form: &Value) -> Result<Value> {
        if self.config.guard_check {
            if let Some(g) = &f.guard {
                if self.eval(g, env)?.is_nil() {
                    return Err(Error::Guard(Box::new(GuardViolation {
                        call: show(form),
                        condition: show(g),
                        predicate: f.name.to_string(),
                        arg_expr: None,
                        arg_value: None,
                    })));
                }
            }
        }
        let Some(m) = &f.measure else {
            return self.eval(&f.body, env);
        };
        let mv = lex_fix(&self.eval(m, env)?);
        if let Some((_, prev)) = self.measure_stack.iter().rev().find(|(n, _)| n == &f.name) {
            if !l_less(&mv, prev) {
                return Err(Error::CallMeasure {
                    function: f.name.clone(),
                    caller: prev.to_string(),
                    callee: mv.to_string(),
                });
            }
        }
        if let Some(log) = &mut self.measure_log {
            log.push((f.name.clone(), mv.clone()));
        }
        self.measure_stack.push((f.name.clone(), mv));
        let r = self.eval(&f.body, env);
        self.measure_stack.pop();
        r
    }

    fn expect_stobj(&self, spec: &StobjSpec, v: &Value, form: &Value) -> Result<Stobj> {
        match v {
            Value::Stobj(s) if s.name() == &spec.name => Ok(s.clone()),
            _ => Err(Error::Stobj(format!(
                "expected the stobj {} but got {} in {}",
                spec.name,
                show(v),
                show(form)
            ))),
        }
    }

    fn stobj_op(
        &mut self,
        name: &Symbol,
        spec: &Arc<StobjSpec>,
        op: StobjOp,
        args: Vec<Value>,
        arg_forms: Option<&[Value]>,
        form: &Value,
    ) -> Result<Value> {
        let n = match op {
            StobjOp::Create => 0,
            StobjOp::Recognize
            | StobjOp::Access(_)
            | StobjOp::TableCount(_)
            | StobjOp::TableClear(_) => 1,
            StobjOp::Update(_) | StobjOp::TableBoundp(_) | StobjOp::TableRem(_) => 2,
            StobjOp::TableGet(_) | StobjOp::TablePut(_) => 3,
        };
        Self::check_arity(name, n, Some(n), args.len(), form)?;
        let in_place = self.in_place();
        let key = |v: &Value| v.as_symbol().cloned();
        match op {
            StobjOp::Create => Err(Error::Stobj(format!(
                "the creator {name} may only appear as a stobj-table default, in {}",
                show(form)
            ))),
            StobjOp::Recognize => Ok(Value::bool(spec.recognizes(&args[0]))),
            StobjOp::Access(i) => Ok(self.expect_stobj(spec, &args[0], form)?.scalar(i)),
            StobjOp::Update(i) => {
                let st = self.expect_stobj(spec, &args[1], form)?;
                let v = args[0].clone();
                if v.contains_stobj() {
                    return Err(Error::Stobj(format!(
                        "{name}: a stobj cannot be stored in the scalar field {}",
                        spec.fields[i].name
                    )));
                }
                if self.config.guard_check && !scalar_type_ok(&spec.fields[i].kind, &v) {
                    return Err(self.guard_error(
                        form,
                        "INTEGERP",
                        arg_forms.and_then(|f| f.first().cloned()),
                        v,
                    ));
                }
                Ok(Value::Stobj(st.update_scalar(i, v, in_place)))
            }
            StobjOp::TableGet(_) | StobjOp::TablePut(_) => Err(Error::Stobj(format!(
                "{name} may only be used through stobj-let, in {}",
                show(form)
            ))),
            StobjOp::TableBoundp(i) => {
                let st = self.expect_stobj(spec, &args[1], form)?;
                Ok(Value::bool(
                    key(&args[0]).is_some_and(|k| st.with_table(i, |t| t.boundp(&k))),
                ))
            }
            StobjOp::TableRem(i) => {
                let st = self.expect_stobj(spec, &args[1], form)?;
                Ok(Value::Stobj(match key(&args[0]) {
                    Some(k) if st.with_table(i, |t| t.boundp(&k)) => {
                        st.update_table(i, in_place, |t| t.rem(&k))
                    }
                    _ => st,
                }))
            }
            StobjOp::TableCount(i) => {
                let st = self.expect_stobj(spec, &args[0], form)?;
                Ok(Value::Int(st.with_table(i, |t| t.count()).into()))
            }
            StobjOp::TableClear(i) => {
                let st = self.expect_stobj(spec, &args[0], form)?;
                Ok(Value::Stobj(st.update_table(i, in_place, |t| t.clear())))
            }
        }
    }

    /// Compiled form of a `loop$`, cached by the identity of the form.
    pub(crate) fn compiled_loop(&mut self, form: &Value) -> Result<Arc<CompiledLoop>> {
        let key = form.ptr_key();
        if let Some(k) = key {
            if let Some((_, c)) = self.loop_cache.get(&k) {
                return Ok(c.clone());
            }
        }
        let compiled = Arc::new(loops::compile_loop(form, &self.world)?);
        if let Some(k) = key {
            // Holding the form keeps its address from being reused.
            self.loop_cache.insert(k, (form.clone(), compiled.clone()));
        }
        Ok(compiled)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sexpr::read_one;

    fn eval(src: &str) -> Result<Value> {
        Interp::new(EvalConfig::default()).eval_str(src)
    }

    #[test]
    fn arithmetic_and_let() {
        assert_eq!(eval("(+ 1 2)").unwrap(), Value::int(3));
        assert_eq!(eval("(let ((sq (* 2 2))) sq)").unwrap(), Value::int(4));
        assert_eq!(
            eval("(let* ((a 1) (b (+ a 1))) (list a b))").unwrap(),
            read_one("(1 2)").unwrap()
        );
        assert_eq!(
            eval("(mv-let (a b) (mv 1 2) (+ a b))").unwrap(),
            Value::int(3)
        );
    }

    #[test]
    fn errors_name_the_form() {
        assert!(matches!(eval("x"), Err(Error::Unbound(_))));
        let e = eval("(frob 1)").unwrap_err().to_string();
        assert!(e.contains("FROB"), "{e}");
        let e = eval("(car 1 2)").unwrap_err().to_string();
        assert!(e.contains("(CAR 1 2)"), "{e}");
        assert!(eval("(mv-let (a b c) (mv 1 2) a)").is_err());
        assert!(eval("(setq x 1)").is_err());
    }

    #[test]
    fn apply_lambda_identity() {
        assert_eq!(
            eval("(apply$ '(lambda (x) x) '(7))").unwrap(),
            Value::int(7)
        );
        assert_eq!(
            eval("(apply$ 'cons '(1 2))").unwrap(),
            read_one("(1 . 2)").unwrap()
        );
        assert!(eval("(apply$ '(lambda (x) x) '(1 2))").is_err());
        assert!(eval("(apply$ 'nope '(1))").is_err());
    }

    #[test]
    fn defun_call_and_redefinition() {
        let mut i = Interp::new(EvalConfig::default());
        i.eval_str("(defun sq (x) (* x x))").unwrap();
        assert_eq!(i.eval_str("(sq 5)").unwrap(), Value::int(25));
        assert!(i.eval_str("(defun sq (y) y)").is_err());
        assert!(i.eval_str("(sq 1 2)").is_err());
    }

    #[test]
    fn user_guard_checked_when_on() {
        let mut i = Interp::new(EvalConfig::default());
        i.eval_str("(defun g (n) (declare (xargs :guard (natp n))) n)")
            .unwrap();
        assert!(matches!(i.eval_str("(g -1)"), Err(Error::Guard(_))));
        i.config.guard_check = false;
        assert_eq!(i.eval_str("(g -1)").unwrap(), Value::int(-1));
    }

    #[test]
    fn undo_most_recent_defun() {
        let mut i = Interp::new(EvalConfig::default());
        let r = i.run_source("(defun a () 1) (defun b () 2)").unwrap();
        i.undo(&UndoTarget::Index(r[1].event.unwrap())).unwrap();
        assert!(i.eval_str("(b)").is_err());
        assert_eq!(i.eval_str("(a)").unwrap(), Value::int(1));
        assert!(i.undo(&UndoTarget::Index(99)).is_err());
    }

    #[test]
    fn cw_formats_values() {
        let mut i = Interp::new(EvalConfig::default());
        i.eval_str("(cw \"x=~x0 y=~x1~%\" '(a b) 3)").unwrap();
        assert_eq!(i.take_output(), "x=(A B) y=3\n");
    }

    #[test]
    fn measured_recursion_checked() {
        let mut i = Interp::new(EvalConfig::default());
        i.eval_str(
            "(defun down (n) (declare (xargs :measure (nfix n))) (if (zp n) 0 (down (1- n))))",
        )
        .unwrap();
        assert_eq!(i.eval_str("(down 5)").unwrap(), Value::int(0));
        i.eval_str("(defun stuck (n) (declare (xargs :measure (nfix n))) (if (zp n) 0 (stuck n)))")
            .unwrap();
        assert!(matches!(
            i.eval_str("(stuck 3)"),
            Err(Error::CallMeasure { .. })
        ));
    }

    #[test]
    fn switch_stobj_dual_semantics() {
        for mode in [Mode::Logical, Mode::Native] {
            let mut i = Interp::new(EvalConfig::with_mode(mode));
            i.eval_str("(defstobj switch fld)").unwrap();
            assert_eq!(i.eval_str("(fld switch)").unwrap(), Value::Nil);
            let before = i.stobj("SWITCH").unwrap().clone();
            let r = i.run_source("(update-fld t switch)").unwrap();
            assert_eq!(r[0].printed, "<SWITCH>");
            assert_eq!(i.eval_str("(fld switch)").unwrap(), Value::T);
            assert_eq!(
                before.ptr_eq(i.stobj("SWITCH").unwrap()),
                mode == Mode::Native
            );
        }
    }
}

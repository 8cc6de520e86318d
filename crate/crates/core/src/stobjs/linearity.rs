//! Syntactic single-threadedness.
//!
//! The checker computes, for every expression, its *shape*: one entry per
//! returned value, naming the stobj returned in that position or `None` for
//! an ordinary value. Four rules are enforced:
//!
//! * stobj position: a stobj variable appears only where a call expects that
//!   very stobj (or where any value is accepted, as for a recognizer);
//! * rebinding: a call returning a stobj is rebound to the same name, or is
//!   itself in an output position;
//! * aliasing: a stobj is never bound to another name, and never passed twice
//!   in one argument list;
//! * branch agreement: both arms of a conditional return the same shape.

use std::fmt;

use crate::kernel::{Callable, World};
use crate::loops::{compile_loop, CompiledLoop, Stmt};
use crate::sexpr::{Symbol, Value};
use crate::stobjs::{parse_stobj_let, StobjOp};

/// Result shape; `None` when it depends on a recursive call not yet known.
pub type Shape = Option<Vec<Option<Symbol>>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rule {
    StobjPosition,
    Rebinding,
    Aliasing,
    BranchAgreement,
    StobjLet,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::StobjPosition => "stobj position",
            Rule::Rebinding => "rebinding",
            Rule::Aliasing => "aliasing",
            Rule::BranchAgreement => "branch agreement",
            Rule::StobjLet => "stobj-let",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.rule, self.message)
    }
}

#[derive(Clone, Debug)]
enum ArgKind {
    Plain,
    Stobj(Symbol),
    Any,
}

fn show_shape(s: &[Option<Symbol>]) -> String {
    let parts: Vec<String> = s
        .iter()
        .map(|x| x.as_ref().map_or("NIL".into(), |s| s.to_string()))
        .collect();
    format!("({})", parts.join(" "))
}

fn plain() -> Shape {
    Some(vec![None])
}

struct SelfSig {
    name: Symbol,
    inputs: Vec<Option<Symbol>>,
    outputs: Shape,
}

pub struct Checker<'w> {
    world: &'w World,
    recursive: Option<SelfSig>,
    violations: Vec<Violation>,
}

fn is_head(e: &Value, name: &str) -> bool {
    matches!(e.car(), Value::Sym(s) if s.name() == name)
}

/// Final form of a body, skipping `declare`s.
fn body_form(forms: &[Value]) -> Value {
    forms
        .iter()
        .rev()
        .find(|f| !is_head(f, "DECLARE"))
        .cloned()
        .unwrap_or(Value::Nil)
}

impl<'w> Checker<'w> {
    pub fn new(world: &'w World) -> Self {
        Checker {
            world,
            recursive: None,
            violations: Vec::new(),
        }
    }

    fn flag(&mut self, rule: Rule, message: String) {
        let v = Violation { rule, message };
        if !self.violations.contains(&v) {
            self.violations.push(v);
        }
    }

    /// Checks a defun body. `inputs` gives the stobj at each formal.
    /// Returns the output shape or the violations.
    pub fn check_defun(
        world: &World,
        name: &Symbol,
        formals: &[Symbol],
        inputs: &[Option<Symbol>],
        body: &Value,
    ) -> Result<Vec<Option<Symbol>>, Vec<Violation>> {
        let scope: Vec<Symbol> = inputs.iter().flatten().cloned().collect();
        // The first pass learns the shape of the non-recursive branches; the
        // second checks recursive calls against it.
        let mut guess: Shape = None;
        for _ in 0..2 {
            let mut c = Checker::new(world);
            c.recursive = Some(SelfSig {
                name: name.clone(),
                inputs: inputs.to_vec(),
                outputs: guess.clone(),
            });
            let plain_formals: Vec<&Symbol> = formals
                .iter()
                .zip(inputs)
                .filter(|(_, s)| s.is_none())
                .map(|(f, _)| f)
                .collect();
            let mut sc = scope.clone();
            sc.retain(|s| !plain_formals.contains(&s));
            let shape = c.check(body, &sc);
            if guess.is_some() || shape.is_none() {
                if !c.violations.is_empty() {
                    return Err(c.violations);
                }
                return Ok(shape.or(guess).unwrap_or_else(|| vec![None]));
            }
            guess = shape;
        }
        unreachable!("second pass always returns")
    }

    /// Checks a top-level form with the given stobjs live.
    pub fn check_top(
        world: &World,
        form: &Value,
        live: &[Symbol],
    ) -> Result<Shape, Vec<Violation>> {
        let mut c = Checker::new(world);
        let shape = c.check(form, live);
        if c.violations.is_empty() {
            Ok(shape)
        } else {
            Err(c.violations)
        }
    }

    fn signature(&self, name: &Symbol) -> Option<(Option<Vec<ArgKind>>, Shape)> {
        let kinds = |v: &[Option<Symbol>]| -> Vec<ArgKind> {
            v.iter()
                .map(|s| s.clone().map_or(ArgKind::Plain, ArgKind::Stobj))
                .collect()
        };
        if let Some(me) = &self.recursive {
            if &me.name == name {
                return Some((Some(kinds(&me.inputs)), me.outputs.clone()));
            }
        }
        match self.world.lookup(name)? {
            Callable::Builtin(_) => Some((None, plain())),
            Callable::Defun(f) => Some((Some(kinds(&f.stobjs_in)), Some(f.stobjs_out.clone()))),
            Callable::Constrained(s) => Some((Some(kinds(&s.inputs)), Some(s.outputs.clone()))),
            Callable::Stobj(spec, op) => {
                let st = || ArgKind::Stobj(spec.name.clone());
                let ret = Some(vec![Some(spec.name.clone())]);
                Some(match op {
                    StobjOp::Create => (Some(vec![]), ret),
                    StobjOp::Recognize => (Some(vec![ArgKind::Any]), plain()),
                    StobjOp::Access(_) | StobjOp::TableCount(_) => (Some(vec![st()]), plain()),
                    StobjOp::Update(_) | StobjOp::TableRem(_) => {
                        (Some(vec![ArgKind::Plain, st()]), ret)
                    }
                    StobjOp::TableBoundp(_) => (Some(vec![ArgKind::Plain, st()]), plain()),
                    StobjOp::TableClear(_) => (Some(vec![st()]), ret),
                    StobjOp::TableGet(_) | StobjOp::TablePut(_) => {
                        (Some(vec![ArgKind::Plain, st(), ArgKind::Plain]), ret)
                    }
                })
            }
        }
    }

    /// Checks an expression whose value must be an ordinary value.
    fn check_plain(&mut self, e: &Value, scope: &[Symbol], ctx: &Value) {
        let shape = self.check(e, scope);
        if let Some(s) = shape {
            if let Some(st) = s.iter().flatten().next() {
                if e.as_symbol().is_some() {
                    self.flag(
                        Rule::StobjPosition,
                        format!("stobj {st} appears in a non-stobj position in {ctx}"),
                    );
                } else {
                    self.flag(
                        Rule::Rebinding,
                        format!(
                            "the stobj {st} returned by {e} is discarded in {ctx}; it must be rebound to {st}"
                        ),
                    );
                }
            } else if s.len() != 1 {
                self.flag(
                    Rule::StobjPosition,
                    format!(
                        "{e} returns {} values where one is expected in {ctx}",
                        s.len()
                    ),
                );
            }
        }
    }

    fn agree(&mut self, a: Shape, b: Shape, ctx: &Value) -> Shape {
        match (a, b) {
            (Some(x), Some(y)) => {
                if x != y {
                    self.flag(
                        Rule::BranchAgreement,
                        format!(
                            "branches of {ctx} return different shapes {} and {}",
                            show_shape(&x),
                            show_shape(&y)
                        ),
                    );
                }
                Some(x)
            }
            (Some(x), None) | (None, Some(x)) => Some(x),
            (None, None) => None,
        }
    }

    pub(crate) fn check(&mut self, e: &Value, scope: &[Symbol]) -> Shape {
        match e {
            Value::Sym(s) if !s.is_keyword() => {
                if scope.contains(s) {
                    Some(vec![Some(s.clone())])
                } else {
                    plain()
                }
            }
            Value::Cons(_) => self.check_compound(e, scope),
            _ => plain(),
        }
    }

    fn check_compound(&mut self, e: &Value, scope: &[Symbol]) -> Shape {
        let items = match e.to_vec() {
            Some(items) => items,
            None => return plain(),
        };
        let head = match &items[0] {
            Value::Sym(s) => s.clone(),
            _ => {
                // ((lambda ...) args): arguments are ordinary values.
                for a in &items[1..] {
                    self.check_plain(a, scope, e);
                }
                return plain();
            }
        };
        let args = &items[1..];
        match head.name() {
            "QUOTE" | "DECLARE" => plain(),
            "IF" => {
                if args.len() != 3 {
                    return plain();
                }
                self.check_plain(&args[0], scope, e);
                let a = self.check(&args[1], scope);
                let b = self.check(&args[2], scope);
                self.agree(a, b, e)
            }
            "AND" | "OR" => {
                for a in args {
                    self.check_plain(a, scope, e);
                }
                plain()
            }
            "COND" => self.check_cond(args, scope, e),
            "PROG2$" => {
                if args.len() != 2 {
                    return plain();
                }
                self.check_plain(&args[0], scope, e);
                self.check(&args[1], scope)
            }
            "MV" => Some(
                args.iter()
                    .map(|a| match self.check(a, scope) {
                        Some(s) if s.len() == 1 && s[0].is_some() => {
                            if a.as_symbol().is_none() {
                                self.flag(
                                    Rule::Rebinding,
                                    format!(
                                        "{a} returns a stobj inside {e}; rebind it before returning it"
                                    ),
                                );
                            }
                            s[0].clone()
                        }
                        _ => {
                            self.check_plain(a, scope, e);
                            None
                        }
                    })
                    .collect(),
            ),
            "LET" | "LET*" => self.check_let(head.name() == "LET*", args, scope, e),
            "MV-LET" => self.check_mv_let(args, scope, e),
            "LOOP$" => self.check_loop(e, scope),
            "STOBJ-LET" => self.check_stobj_let(e, scope),
            _ => self.check_call(&head, args, scope, e),
        }
    }

    fn check_cond(&mut self, clauses: &[Value], scope: &[Symbol], e: &Value) -> Shape {
        let mut shape: Shape = None;
        let mut first = true;
        let mut exhaustive = false;
        for clause in clauses {
            let parts = clause.to_vec().unwrap_or_default();
            let Some(test) = parts.first() else { continue };
            let s = if parts.len() == 1 {
                self.check_plain(test, scope, e);
                plain()
            } else {
                if matches!(test, Value::T) {
                    exhaustive = true;
                } else {
                    self.check_plain(test, scope, e);
                }
                self.check(&parts[parts.len() - 1], scope)
            };
            shape = if first { s } else { self.agree(shape, s, e) };
            first = false;
            if exhaustive {
                break;
            }
        }
        if !exhaustive {
            shape = if first {
                plain()
            } else {
                self.agree(shape, plain(), e)
            };
        }
        shape
    }

    fn check_let(&mut self, star: bool, args: &[Value], scope: &[Symbol], e: &Value) -> Shape {
        let Some(bindings) = args.first().and_then(Value::to_vec) else {
            return plain();
        };
        let mut inner: Vec<Symbol> = scope.to_vec();
        let mut rebound: Vec<Symbol> = Vec::new();
        for b in &bindings {
            let (var, rhs) = match b {
                Value::Sym(v) => (v.clone(), Value::Nil),
                _ => match (b.car().as_symbol().cloned(), b.cdr().car()) {
                    (Some(v), rhs) => (v, rhs),
                    _ => continue,
                },
            };
            let rhs_scope: Vec<Symbol> = if star { inner.clone() } else { scope.to_vec() };
            let shape = self.check(&rhs, &rhs_scope);
            self.bind(&var, &rhs, shape, &rhs_scope, &mut inner, &mut rebound, e);
        }
        let body = body_form(&args[1..]);
        let shape = self.check(&body, &inner);
        self.require_returned(&rebound, &shape, e);
        shape
    }

    #[allow(clippy::too_many_arguments)]
    fn bind(
        &mut self,
        var: &Symbol,
        rhs: &Value,
        shape: Shape,
        rhs_scope: &[Symbol],
        inner: &mut Vec<Symbol>,
        rebound: &mut Vec<Symbol>,
        e: &Value,
    ) {
        match shape {
            Some(s) if s.len() == 1 && s[0].is_some() => {
                let st = s[0].clone().expect("stobj");
                if &st == var {
                    if rhs.as_symbol().is_none() {
                        rebound.push(var.clone());
                    }
                    if !inner.contains(var) {
                        inner.push(var.clone());
                    }
                } else if rhs.as_symbol().is_some() {
                    self.flag(
                        Rule::Aliasing,
                        format!("stobj {st} is bound to a different name {var} in {e}"),
                    );
                } else {
                    self.flag(
                        Rule::Rebinding,
                        format!("the stobj {st} returned by {rhs} is bound to {var} in {e}; it must be rebound to {st}"),
                    );
                }
            }
            Some(s) if s.len() != 1 => self.flag(
                Rule::StobjPosition,
                format!(
                    "{rhs} returns {} values but is bound to the single variable {var}",
                    s.len()
                ),
            ),
            None if rhs_scope.contains(var) => {
                rebound.push(var.clone());
            }
            _ => {
                if rhs_scope.contains(var) || inner.contains(var) {
                    self.flag(
                        Rule::StobjPosition,
                        format!(
                            "the stobj name {var} is bound to the non-stobj value {rhs} in {e}"
                        ),
                    );
                }
                inner.retain(|s| s != var);
            }
        }
    }

    fn require_returned(&mut self, rebound: &[Symbol], shape: &Shape, e: &Value) {
        if let Some(s) = shape {
            for v in rebound {
                if !s.contains(&Some(v.clone())) {
                    self.flag(
                        Rule::Rebinding,
                        format!("the stobj {v} updated in {e} is not returned"),
                    );
                }
            }
        }
    }

    fn check_mv_let(&mut self, args: &[Value], scope: &[Symbol], e: &Value) -> Shape {
        if args.len() < 3 {
            return plain();
        }
        let vars: Vec<Symbol> = args[0]
            .iter()
            .filter_map(|v| v.as_symbol().cloned())
            .collect();
        let shape = self.check(&args[1], scope);
        let mut inner = scope.to_vec();
        let mut rebound = Vec::new();
        match shape {
            Some(s) if s.len() != vars.len() => {
                self.flag(
                    Rule::StobjPosition,
                    format!(
                        "{} returns {} values but {} variables are bound in {e}",
                        args[1],
                        s.len(),
                        vars.len()
                    ),
                );
            }
            Some(s) => {
                for (v, pos) in vars.iter().zip(s) {
                    let one = Some(vec![pos]);
                    self.bind(v, &args[1], one, scope, &mut inner, &mut rebound, e);
                }
            }
            None => {
                for v in &vars {
                    if scope.contains(v) {
                        rebound.push(v.clone());
                    }
                }
            }
        }
        let body = body_form(&args[2..]);
        let shape = self.check(&body, &inner);
        self.require_returned(&rebound, &shape, e);
        shape
    }

    fn check_call(&mut self, head: &Symbol, args: &[Value], scope: &[Symbol], e: &Value) -> Shape {
        let Some((kinds, out)) = self.signature(head) else {
            for a in args {
                self.check_plain(a, scope, e);
            }
            return plain();
        };
        if let Some(Callable::Stobj(spec, StobjOp::TableGet(_) | StobjOp::TablePut(_))) =
            self.world.lookup(head)
        {
            self.flag(
                Rule::StobjLet,
                format!(
                    "{head} on {} may only be used through stobj-let, in {e}",
                    spec.name
                ),
            );
            return out;
        }
        if let Some(Callable::Stobj(spec, StobjOp::Create)) = self.world.lookup(head) {
            self.flag(
                Rule::StobjLet,
                format!("the creator {head} may only appear as a stobj-table default, in {e}"),
            );
            return Some(vec![Some(spec.name.clone())]);
        }
        let mut seen: Vec<Symbol> = Vec::new();
        for (i, a) in args.iter().enumerate() {
            let kind = kinds
                .as_ref()
                .and_then(|k| k.get(i).cloned())
                .unwrap_or(ArgKind::Plain);
            match kind {
                ArgKind::Plain => self.check_plain(a, scope, e),
                ArgKind::Any => {
                    if !matches!(a, Value::Sym(s) if scope.contains(s)) {
                        self.check_plain(a, scope, e);
                    }
                }
                ArgKind::Stobj(st) => match a {
                    Value::Sym(v) if *v == st && scope.contains(v) => {
                        if seen.contains(v) {
                            self.flag(
                                Rule::Aliasing,
                                format!("stobj {v} is passed twice in {e}"),
                            );
                        }
                        seen.push(v.clone());
                    }
                    Value::Sym(v) if scope.contains(v) => self.flag(
                        Rule::StobjPosition,
                        format!("stobj {v} is passed where {head} expects {st}, in {e}"),
                    ),
                    Value::Sym(v) => self.flag(
                        Rule::StobjPosition,
                        format!("{v} is passed where {head} expects the stobj {st}, in {e}, but {v} is not a stobj in scope"),
                    ),
                    _ => {
                        self.check(a, scope);
                        self.flag(
                            Rule::StobjPosition,
                            format!("argument {a} of {head} must be the stobj variable {st}, in {e}"),
                        )
                    }
                },
            }
        }
        out
    }

    fn check_stobj_let(&mut self, e: &Value, scope: &[Symbol]) -> Shape {
        let sl = match parse_stobj_let(e, self.world) {
            Ok(sl) => sl,
            Err(err) => {
                self.flag(Rule::StobjLet, err.to_string());
                return None;
            }
        };
        if !scope.contains(&sl.parent) {
            self.flag(
                Rule::StobjPosition,
                format!("stobj-let parent {} is not a stobj in scope", sl.parent),
            );
        }
        let mut producer_scope: Vec<Symbol> =
            scope.iter().filter(|s| **s != sl.parent).cloned().collect();
        for b in &sl.bindings {
            if !producer_scope.contains(&b.child) {
                producer_scope.push(b.child.clone());
            }
        }
        let expected: Vec<Option<Symbol>> = sl
            .outputs
            .iter()
            .map(|o| sl.child(o).map(|b| b.child.clone()))
            .collect();
        if let Some(got) = self.check(&sl.producer, &producer_scope) {
            if got != expected {
                self.flag(
                    Rule::StobjLet,
                    format!(
                        "stobj-let producer {} returns shape {} but the outputs {} require {}",
                        sl.producer,
                        show_shape(&got),
                        Value::list(
                            sl.outputs
                                .iter()
                                .cloned()
                                .map(Value::Sym)
                                .collect::<Vec<_>>()
                        ),
                        show_shape(&expected)
                    ),
                );
            }
        }
        let mut consumer_scope: Vec<Symbol> = scope.to_vec();
        consumer_scope.retain(|s| !(sl.outputs.contains(s) && sl.child(s).is_none()));
        let shape = self.check(&sl.consumer, &consumer_scope);
        let updated = expected.iter().any(Option::is_some);
        if updated {
            if let Some(s) = &shape {
                if !s.contains(&Some(sl.parent.clone())) {
                    self.flag(
                        Rule::StobjLet,
                        format!(
                            "stobj-let updates a child of {} but its consumer {} does not return {}",
                            sl.parent, sl.consumer, sl.parent
                        ),
                    );
                }
            }
        }
        shape
    }

    fn check_loop(&mut self, e: &Value, scope: &[Symbol]) -> Shape {
        let compiled = match compile_loop(e, self.world) {
            Ok(c) => c,
            Err(_) => return plain(),
        };
        match compiled {
            CompiledLoop::For(f) => {
                self.check_plain(&f.range, scope, e);
                let inner: Vec<Symbol> = scope.iter().filter(|s| **s != f.var).cloned().collect();
                if scope.contains(&f.var) {
                    self.flag(
                        Rule::StobjPosition,
                        format!("loop$ variable {} shadows a stobj", f.var),
                    );
                }
                self.check_plain(&f.body, &inner, e);
                plain()
            }
            CompiledLoop::Do(d) => {
                for st in d.spec.values.iter().flatten() {
                    if !scope.contains(st) {
                        self.flag(
                            Rule::StobjPosition,
                            format!("loop$ :VALUES names {st}, which is not a stobj in scope"),
                        );
                    }
                }
                for w in &d.spec.with {
                    if scope.contains(&w.var) {
                        self.flag(
                            Rule::StobjPosition,
                            format!("WITH variable {} shadows a stobj", w.var),
                        );
                    }
                    self.check_plain(&w.init, scope, e);
                }
                let inner: Vec<Symbol> = scope
                    .iter()
                    .filter(|s| !d.spec.with.iter().any(|w| &w.var == *s))
                    .cloned()
                    .collect();
                for t in [&d.spec.measure, &d.spec.guard].into_iter().flatten() {
                    self.check_plain(t, &inner, e);
                }
                let values = d.spec.values.clone();
                self.check_stmt(&d.body, &inner, &values, e);
                if let Some(fin) = &d.finally {
                    self.check_stmt(fin, &inner, &values, e);
                }
                Some(values)
            }
        }
    }

    fn check_stmt(&mut self, s: &Stmt, scope: &[Symbol], values: &[Option<Symbol>], e: &Value) {
        match s {
            Stmt::Seq(items) => {
                for i in items {
                    self.check_stmt(i, scope, values, e);
                }
            }
            Stmt::If(t, a, b) => {
                self.check_plain(t, scope, e);
                self.check_stmt(a, scope, values, e);
                self.check_stmt(b, scope, values, e);
            }
            Stmt::Let { bindings, body, .. } => {
                for (_, rhs) in bindings {
                    self.check_plain(rhs, scope, e);
                }
                let inner: Vec<Symbol> = scope
                    .iter()
                    .filter(|s| !bindings.iter().any(|(v, _)| v == *s))
                    .cloned()
                    .collect();
                self.check_stmt(body, &inner, values, e);
            }
            Stmt::MvLet { vars, expr, body } => {
                if let Some(shape) = self.check(expr, scope) {
                    if shape.iter().any(Option::is_some) {
                        self.flag(
                            Rule::Rebinding,
                            format!(
                                "{expr} returns a stobj; in a loop body use mv-setq to update it"
                            ),
                        );
                    }
                }
                let inner: Vec<Symbol> = scope
                    .iter()
                    .filter(|s| !vars.contains(s))
                    .cloned()
                    .collect();
                self.check_stmt(body, &inner, values, e);
            }
            Stmt::Setq(v, rhs) => {
                if scope.contains(v) {
                    let got = self.check(rhs, scope);
                    if let Some(got) = got {
                        if got != vec![Some(v.clone())] {
                            self.flag(
                                Rule::Rebinding,
                                format!("(SETQ {v} {rhs}) must assign {v} a value of stobj {v}"),
                            );
                        }
                    }
                } else {
                    self.check_plain(rhs, scope, e);
                }
            }
            Stmt::MvSetq(vars, rhs) => {
                if let Some(got) = self.check(rhs, scope) {
                    let want: Vec<Option<Symbol>> = vars
                        .iter()
                        .map(|v| scope.contains(v).then(|| v.clone()))
                        .collect();
                    if got != want {
                        self.flag(
                            Rule::Rebinding,
                            format!(
                                "mv-setq of {} receives shape {} from {rhs}, expected {}",
                                Value::list(
                                    vars.iter().cloned().map(Value::Sym).collect::<Vec<_>>()
                                ),
                                show_shape(&got),
                                show_shape(&want)
                            ),
                        );
                    }
                }
            }
            Stmt::Return(rhs) => {
                if let Some(got) = self.check(rhs, scope) {
                    if got != values {
                        self.flag(
                            Rule::Rebinding,
                            format!(
                                "(RETURN {rhs}) has shape {} but :VALUES is {}",
                                show_shape(&got),
                                show_shape(values)
                            ),
                        );
                    }
                }
            }
            Stmt::LoopFinish | Stmt::Skip => {}
        }
    }
}

/// Names bound as stobjs by the formals of a defun.
pub fn stobj_formals(
    world: &World,
    formals: &[Symbol],
    declared: &[Symbol],
) -> Vec<Option<Symbol>> {
    formals
        .iter()
        .map(|f| (declared.contains(f) || world.is_stobj(f)).then(|| f.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::EventPayload;
    use crate::sexpr::read_one;
    use crate::stobjs::parse_defstobj;

    fn sym(name: &str) -> Symbol {
        Symbol::intern(name)
    }
    use std::sync::Arc;

    fn world() -> World {
        let mut w = World::new();
        for src in [
            "(defstobj st fld)",
            "(defstobj switch sw)",
            "(defstobj stobj-table (tbl :type (stobj-table)))",
        ] {
            let spec = parse_defstobj(&read_one(src).unwrap()).unwrap();
            w.add_event(EventPayload::Defstobj(Arc::new(spec))).unwrap();
        }
        w
    }

    fn check(src: &str, stobjs: &[&str]) -> Result<Vec<Option<Symbol>>, Vec<Violation>> {
        let w = world();
        let form = read_one(src).unwrap();
        let formals: Vec<Symbol> = form
            .cdr()
            .cdr()
            .car()
            .iter()
            .map(|f| f.as_symbol().unwrap().clone())
            .collect();
        let declared: Vec<Symbol> = stobjs.iter().map(|s| sym(&s.to_uppercase())).collect();
        let inputs = stobj_formals(&w, &formals, &declared);
        let body = body_form(&form.to_vec().unwrap()[3..]);
        Checker::check_defun(
            &w,
            form.cdr().car().as_symbol().unwrap(),
            &formals,
            &inputs,
            &body,
        )
    }

    fn rules(r: Result<Vec<Option<Symbol>>, Vec<Violation>>) -> Vec<Rule> {
        r.err().unwrap_or_default().iter().map(|v| v.rule).collect()
    }

    #[test]
    fn flip_switch_accepted() {
        let out = check(
            "(defun flip-switch (stobj-table)
               (declare (xargs :stobjs (stobj-table)))
               (stobj-let ((switch (tbl-get 'switch stobj-table (create-switch))))
                          (switch) (update-sw (not (sw switch)) switch)
                          stobj-table))",
            &["stobj-table"],
        )
        .unwrap();
        assert_eq!(out, vec![Some(sym("STOBJ-TABLE"))]);
        let out = check(
            "(defun print-switch (stobj-table)
               (declare (xargs :stobjs (stobj-table)))
               (stobj-let ((switch (tbl-get 'switch stobj-table (create-switch))))
                          (current) (if (sw switch) \"ON\" \"OFF\")
                          current))",
            &["stobj-table"],
        )
        .unwrap();
        assert_eq!(out, vec![None]);
    }

    #[test]
    fn aliasing_rejected() {
        assert_eq!(
            rules(check(
                "(defun a (switch) (declare (xargs :stobjs (switch))) (let ((x switch)) x))",
                &["switch"]
            )),
            vec![Rule::Aliasing]
        );
    }

    #[test]
    fn discarded_update_rejected() {
        let r = rules(check(
            "(defun d (st) (declare (xargs :stobjs (st))) (prog2$ (update-fld 1 st) st))",
            &["st"],
        ));
        assert_eq!(r, vec![Rule::Rebinding]);
        let r = rules(check(
            "(defun d (st) (declare (xargs :stobjs (st))) (let ((st (update-fld 1 st))) (fld st)))",
            &["st"],
        ));
        assert_eq!(r, vec![Rule::Rebinding]);
    }

    #[test]
    fn branch_disagreement_rejected() {
        let r = rules(check(
            "(defun b (c st) (declare (xargs :stobjs (st))) (if c (update-fld c st) nil))",
            &["st"],
        ));
        assert_eq!(r, vec![Rule::BranchAgreement]);
    }

    #[test]
    fn duplicate_stobj_argument_rejected() {
        let w = world();
        let mut ww = w.clone();
        let f = crate::kernel::Function {
            name: sym("TWO-ST"),
            formals: vec![sym("A"), sym("B")],
            stobjs_in: vec![Some(sym("ST")), Some(sym("ST"))],
            stobjs_out: vec![None],
            guard: None,
            measure: None,
            body: Value::Nil,
        };
        ww.add_event(EventPayload::Defun(Arc::new(f))).unwrap();
        let r = Checker::check_top(&ww, &read_one("(two-st st st)").unwrap(), &[sym("ST")]);
        assert_eq!(r.unwrap_err()[0].rule, Rule::Aliasing);
    }

    #[test]
    fn recursion_learns_shape() {
        let out = check(
            "(defun clear (n st) (declare (xargs :stobjs (st)))
               (if (zp n) st (let ((st (update-fld n st))) (clear (1- n) st))))",
            &["st"],
        )
        .unwrap();
        assert_eq!(out, vec![Some(sym("ST"))]);
    }

    #[test]
    fn stobj_in_plain_position() {
        let r = rules(check(
            "(defun p (st) (declare (xargs :stobjs (st))) (cons st nil))",
            &["st"],
        ));
        assert_eq!(r, vec![Rule::StobjPosition]);
        let r = rules(check(
            "(defun p (st) (declare (xargs :stobjs (st))) (fld (update-fld 1 st)))",
            &["st"],
        ));
        assert_eq!(r, vec![Rule::StobjPosition]);
    }

    #[test]
    fn table_ops_only_in_stobj_let() {
        let r = rules(check(
            "(defun g (stobj-table) (declare (xargs :stobjs (stobj-table))) (sw (tbl-get 'switch stobj-table (create-switch))))",
            &["stobj-table"],
        ));
        assert!(r.contains(&Rule::StobjLet));
    }

    #[test]
    fn stobj_let_must_return_parent_after_update() {
        let r = rules(check(
            "(defun h (stobj-table) (declare (xargs :stobjs (stobj-table)))
               (stobj-let ((switch (tbl-get 'switch stobj-table (create-switch))))
                          (switch) (update-sw t switch)
                          nil))",
            &["stobj-table"],
        ));
        assert_eq!(r, vec![Rule::StobjLet]);
    }

    #[test]
    fn loop_values_shape() {
        let w = world();
        let form = read_one(
            "(loop$ WITH sum = 0 WITH lst = '(1 2 3 4) DO :VALUES (nil st)
               (if (consp lst)
                   (let ((sq (* (car lst) (car lst))))
                     (progn (mv-setq (sum st)
                                     (let ((st (update-fld (cons sq (fld st)) st)))
                                       (mv (+ sq sum) st)))
                            (setq lst (cdr lst))))
                 (return (mv sum st))))",
        )
        .unwrap();
        let shape = Checker::check_top(&w, &form, &[sym("ST")]).unwrap();
        assert_eq!(shape, Some(vec![None, Some(sym("ST"))]));
        let bad = read_one("(loop$ WITH x = 0 DO :VALUES (nil st) (return x))").unwrap();
        assert!(Checker::check_top(&w, &bad, &[sym("ST")]).is_err());
    }
}

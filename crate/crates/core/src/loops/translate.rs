//! DO-body translation to one-argument LAMBDA objects over the environment
//! alist, and free-variable analysis.

use crate::error::{Error, Result};
use crate::kernel::{LambdaObject, World};
use crate::sexpr::{Symbol, Value};

use super::parse::{Stmt, TypeSpec};
use super::{compile_loop, CompiledLoop};

fn add(out: &mut Vec<Symbol>, s: &Symbol) {
    if !out.contains(s) {
        out.push(s.clone());
    }
}

fn names(v: &Value) -> Vec<Symbol> {
    v.iter().filter_map(|x| x.as_symbol().cloned()).collect()
}

/// Free variables of an expression, in order of first occurrence.
pub fn free_vars(e: &Value, world: &World, bound: &mut Vec<Symbol>, out: &mut Vec<Symbol>) {
    match e {
        Value::Sym(s) => {
            if !s.is_keyword() && !bound.contains(s) {
                add(out, s);
            }
        }
        Value::Cons(_) => {
            let items = match e.to_vec() {
                Some(i) => i,
                None => return,
            };
            let args = &items[1..];
            let base = bound.len();
            match items[0].symbol_name() {
                Some("QUOTE") | Some("DECLARE") => {}
                Some("LET") | Some("LET*") => {
                    let star = items[0].symbol_name() == Some("LET*");
                    let bindings = args.first().and_then(Value::to_vec).unwrap_or_default();
                    let mut new = Vec::new();
                    for b in &bindings {
                        if let Value::Cons(_) = b {
                            free_vars(&b.cdr().car(), world, bound, out);
                            if let Some(v) = b.car().as_symbol() {
                                if star {
                                    bound.push(v.clone());
                                } else {
                                    new.push(v.clone());
                                }
                            }
                        } else if let Some(v) = b.as_symbol() {
                            new.push(v.clone());
                        }
                    }
                    bound.extend(new);
                    for f in args.iter().skip(1) {
                        free_vars(f, world, bound, out);
                    }
                }
                Some("MV-LET") => {
                    if let Some(x) = args.get(1) {
                        free_vars(x, world, bound, out);
                    }
                    if let Some(vs) = args.first() {
                        bound.extend(names(vs));
                    }
                    for f in args.iter().skip(2) {
                        free_vars(f, world, bound, out);
                    }
                }
                Some("COND") => {
                    for clause in args {
                        for part in clause.iter() {
                            free_vars(part, world, bound, out);
                        }
                    }
                }
                Some("STOBJ-LET") => {
                    let bindings = args.first().and_then(Value::to_vec).unwrap_or_default();
                    for b in &bindings {
                        for a in b.cdr().car().iter().skip(1) {
                            free_vars(a, world, bound, out);
                        }
                    }
                    bound.extend(bindings.iter().filter_map(|b| b.car().as_symbol().cloned()));
                    if let Some(p) = args.get(2) {
                        free_vars(p, world, bound, out);
                    }
                    bound.truncate(base);
                    if let Some(o) = args.get(1) {
                        bound.extend(names(o));
                    }
                    if let Some(c) = args.get(3) {
                        free_vars(c, world, bound, out);
                    }
                }
                Some("LOOP$") => {
                    if let Ok(c) = compile_loop(e, world) {
                        for v in c.free_vars() {
                            if !bound.contains(&v) {
                                add(out, &v);
                            }
                        }
                    }
                }
                Some(_) => {
                    for a in args {
                        free_vars(a, world, bound, out);
                    }
                }
                None => {
                    if items[0].car().symbol_name() == Some("LAMBDA") {
                        let mut inner: Vec<Symbol> = names(&items[0].cdr().car());
                        let mut lam_out = Vec::new();
                        free_vars(&items[0].cdr().cdr().car(), world, &mut inner, &mut lam_out);
                        for v in lam_out {
                            if !bound.contains(&v) {
                                add(out, &v);
                            }
                        }
                    } else {
                        free_vars(&items[0], world, bound, out);
                    }
                    for a in args {
                        free_vars(a, world, bound, out);
                    }
                }
            }
            bound.truncate(base);
        }
        _ => {}
    }
}

/// Free variables of a statement; setq targets count as references.
pub fn stmt_free_vars(s: &Stmt, world: &World, bound: &mut Vec<Symbol>, out: &mut Vec<Symbol>) {
    let base = bound.len();
    match s {
        Stmt::Seq(items) => {
            for i in items {
                stmt_free_vars(i, world, bound, out);
            }
        }
        Stmt::If(t, a, b) => {
            free_vars(t, world, bound, out);
            stmt_free_vars(a, world, bound, out);
            stmt_free_vars(b, world, bound, out);
        }
        Stmt::Let {
            star,
            bindings,
            body,
        } => {
            for (v, e) in bindings {
                free_vars(e, world, bound, out);
                if *star {
                    bound.push(v.clone());
                }
            }
            if !star {
                bound.extend(bindings.iter().map(|(v, _)| v.clone()));
            }
            stmt_free_vars(body, world, bound, out);
        }
        Stmt::MvLet { vars, expr, body } => {
            free_vars(expr, world, bound, out);
            bound.extend(vars.iter().cloned());
            stmt_free_vars(body, world, bound, out);
        }
        Stmt::Setq(v, e) => {
            free_vars(e, world, bound, out);
            if !bound.contains(v) {
                add(out, v);
            }
        }
        Stmt::MvSetq(vs, e) => {
            free_vars(e, world, bound, out);
            for v in vs {
                if !bound.contains(v) {
                    add(out, v);
                }
            }
        }
        Stmt::Return(e) => free_vars(e, world, bound, out),
        Stmt::LoopFinish | Stmt::Skip => {}
    }
    bound.truncate(base);
}

fn sym(name: &str) -> Value {
    Value::sym(name)
}

fn quote(v: Value) -> Value {
    Value::list([sym("QUOTE"), v])
}

/// `(CDR (ASSOC-EQ-SAFE 'V ALIST))`
pub fn alist_ref(v: &Symbol) -> Value {
    Value::list([
        sym("CDR"),
        Value::list([
            sym("ASSOC-EQ-SAFE"),
            quote(Value::Sym(v.clone())),
            sym("ALIST"),
        ]),
    ])
}

pub(crate) struct Translator<'a> {
    pub world: &'a World,
    pub alist_vars: &'a [Symbol],
    pub typed: &'a [(Symbol, TypeSpec)],
}

impl Translator<'_> {
    /// `(LAMBDA (ALIST) (LET ((V (CDR (ASSOC-EQ-SAFE 'V ALIST)))...) body))`
    pub fn lambda(&self, body: Value) -> LambdaObject {
        let body = if self.alist_vars.is_empty() {
            body
        } else {
            let bindings: Vec<Value> = self
                .alist_vars
                .iter()
                .map(|v| Value::list([Value::Sym(v.clone()), alist_ref(v)]))
                .collect();
            Value::list([sym("LET"), Value::list(bindings), body])
        };
        LambdaObject::new(vec![Symbol::intern("ALIST")], body)
    }

    fn alist_expr(&self) -> Value {
        let entries: Vec<Value> = self
            .alist_vars
            .iter()
            .map(|v| {
                Value::list([
                    sym("CONS"),
                    quote(Value::Sym(v.clone())),
                    Value::Sym(v.clone()),
                ])
            })
            .collect();
        Value::cons(sym("LIST"), Value::list(entries))
    }

    fn leaf(&self, token: Value, value: Value) -> Value {
        Value::list([sym("LIST"), token, value, self.alist_expr()])
    }

    fn typed(&self, v: &Symbol, e: Value) -> Value {
        match self.typed.iter().find(|(x, _)| x == v) {
            Some((_, t)) => Value::list([
                sym("OF-TYPE$"),
                quote(Value::Sym(v.clone())),
                quote(sym(t.name())),
                e,
            ]),
            None => e,
        }
    }

    pub fn translate(&self, s: &Stmt) -> Result<Value> {
        self.tr(&[s])
    }

    fn captures(&self, vars: &[Symbol], rest: &[&Stmt]) -> Result<()> {
        if let Some(v) = vars.iter().find(|v| self.alist_vars.contains(v)) {
            return Err(Error::LoopSyntax(format!(
                "{v} is a loop variable and may not be rebound inside the DO body"
            )));
        }
        let mut out = Vec::new();
        for s in rest {
            stmt_free_vars(s, self.world, &mut Vec::new(), &mut out);
        }
        if let Some(v) = vars.iter().find(|v| out.contains(v)) {
            return Err(Error::LoopSyntax(format!(
                "{v} is bound by a LET in the DO body and also used after it; rename one of them"
            )));
        }
        Ok(())
    }

    fn tr<'s>(&self, work: &[&'s Stmt]) -> Result<Value> {
        let Some((first, rest)) = work.split_first() else {
            return Ok(self.leaf(Value::Nil, Value::Nil));
        };
        let then = |s: &'s Stmt| {
            let mut v: Vec<&'s Stmt> = vec![s];
            v.extend_from_slice(rest);
            v
        };
        match first {
            Stmt::Seq(items) => {
                let mut v: Vec<&Stmt> = items.iter().collect();
                v.extend_from_slice(rest);
                self.tr(&v)
            }
            Stmt::Skip => self.tr(rest),
            Stmt::If(t, a, b) => Ok(Value::list([
                sym("IF"),
                t.clone(),
                self.tr(&then(a))?,
                self.tr(&then(b))?,
            ])),
            Stmt::Let {
                star,
                bindings,
                body,
            } => {
                let vars: Vec<Symbol> = bindings.iter().map(|(v, _)| v.clone()).collect();
                self.captures(&vars, rest)?;
                let bs: Vec<Value> = bindings
                    .iter()
                    .map(|(v, e)| Value::list([Value::Sym(v.clone()), e.clone()]))
                    .collect();
                Ok(Value::list([
                    sym(if *star { "LET*" } else { "LET" }),
                    Value::list(bs),
                    self.tr(&then(body))?,
                ]))
            }
            Stmt::MvLet { vars, expr, body } => {
                self.captures(vars, rest)?;
                Ok(Value::list([
                    sym("MV-LET"),
                    Value::list(vars.iter().cloned().map(Value::Sym).collect::<Vec<_>>()),
                    expr.clone(),
                    self.tr(&then(body))?,
                ]))
            }
            Stmt::Setq(v, e) => Ok(Value::list([
                sym("LET"),
                Value::list([Value::list([
                    Value::Sym(v.clone()),
                    self.typed(v, e.clone()),
                ])]),
                self.tr(rest)?,
            ])),
            Stmt::MvSetq(vars, e) => {
                let checks: Vec<Value> = vars
                    .iter()
                    .filter(|v| self.typed.iter().any(|(x, _)| x == *v))
                    .map(|v| {
                        Value::list([Value::Sym(v.clone()), self.typed(v, Value::Sym(v.clone()))])
                    })
                    .collect();
                let inner = self.tr(rest)?;
                let inner = if checks.is_empty() {
                    inner
                } else {
                    Value::list([sym("LET"), Value::list(checks), inner])
                };
                Ok(Value::list([
                    sym("MV-LET"),
                    Value::list(vars.iter().cloned().map(Value::Sym).collect::<Vec<_>>()),
                    e.clone(),
                    inner,
                ]))
            }
            Stmt::Return(e) => Ok(self.leaf(sym(":RETURN"), e.clone())),
            Stmt::LoopFinish => Ok(self.leaf(sym(":LOOP-FINISH"), Value::Nil)),
        }
    }
}

impl CompiledLoop {
    /// Variables the loop reads from its surrounding scope.
    pub fn free_vars(&self) -> Vec<Symbol> {
        match self {
            CompiledLoop::For(f) => f.free.clone(),
            CompiledLoop::Do(d) => d.free.clone(),
        }
    }
}

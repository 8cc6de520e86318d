//! Surface grammar of `loop$` and of DO/FINALLY statement bodies.

use crate::error::{Error, Result};
use crate::kernel::World;
use crate::sexpr::{Symbol, Value};

fn err(msg: impl Into<String>) -> Error {
    Error::LoopSyntax(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TypeSpec {
    Integer,
    T,
}

impl TypeSpec {
    pub fn admits(self, v: &Value) -> bool {
        match self {
            TypeSpec::Integer => v.as_int().is_some(),
            TypeSpec::T => true,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TypeSpec::Integer => "INTEGER",
            TypeSpec::T => "T",
        }
    }
}

#[derive(Clone, Debug)]
pub struct WithBinding {
    pub var: Symbol,
    pub type_spec: Option<TypeSpec>,
    pub init: Value,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForOp {
    Sum,
    Collect,
}

#[derive(Clone, Debug)]
pub struct ForSpec {
    pub var: Symbol,
    pub range: Value,
    pub op: ForOp,
    pub body: Value,
}

#[derive(Clone, Debug)]
pub struct DoSpec {
    pub with: Vec<WithBinding>,
    /// Return shape: NIL or a stobj name per value. Defaults to `(NIL)`.
    pub values: Vec<Option<Symbol>>,
    pub measure: Option<Value>,
    pub guard: Option<Value>,
    pub body: Value,
    pub finally: Option<Value>,
}

impl DoSpec {
    /// WITH variables, then stobjs named in `:VALUES`.
    pub fn settable(&self) -> Vec<Symbol> {
        let mut out: Vec<Symbol> = self.with.iter().map(|w| w.var.clone()).collect();
        for s in self.values.iter().flatten() {
            if !out.contains(s) {
                out.push(s.clone());
            }
        }
        out
    }

    pub fn type_of(&self, var: &Symbol) -> Option<TypeSpec> {
        self.with
            .iter()
            .find(|w| &w.var == var)
            .and_then(|w| w.type_spec)
    }
}

#[derive(Clone, Debug)]
pub enum LoopSpec {
    For(ForSpec),
    Do(DoSpec),
}

fn tok(v: &Value) -> Option<&str> {
    match v {
        Value::Sym(s) => Some(s.name()),
        Value::T => Some("T"),
        Value::Nil => Some("NIL"),
        _ => None,
    }
}

fn variable(v: Option<&Value>, what: &str) -> Result<Symbol> {
    match v {
        Some(Value::Sym(s)) if !s.is_keyword() => Ok(s.clone()),
        Some(other) => Err(err(format!("{what}: {other} is not a variable"))),
        None => Err(err(format!("{what}: missing variable"))),
    }
}

pub fn parse_loop(form: &Value, world: &World) -> Result<LoopSpec> {
    let items = form
        .to_vec()
        .ok_or_else(|| err(format!("malformed form {form}")))?;
    if tok(&items[0]) != Some("LOOP$") {
        return Err(err(format!("not a loop$ form: {form}")));
    }
    let toks = &items[1..];
    match toks.first().and_then(tok) {
        Some("FOR") => parse_for(toks).map(LoopSpec::For),
        Some("WITH") | Some("DO") => parse_do(toks, world).map(LoopSpec::Do),
        _ => Err(err(format!(
            "expected FOR, WITH or DO after LOOP$ in {form}"
        ))),
    }
}

fn parse_for(toks: &[Value]) -> Result<ForSpec> {
    if toks.len() != 6 {
        return Err(err("expected (loop$ FOR var IN list SUM|COLLECT body)"));
    }
    let var = variable(toks.get(1), "FOR")?;
    if tok(&toks[2]) != Some("IN") {
        return Err(err(format!(
            "unsupported FOR clause {}; only IN is supported",
            toks[2]
        )));
    }
    let op = match tok(&toks[4]) {
        Some("SUM") => ForOp::Sum,
        Some("COLLECT") => ForOp::Collect,
        _ => {
            return Err(err(format!(
                "unsupported FOR operator {}; only SUM and COLLECT are supported",
                toks[4]
            )))
        }
    };
    Ok(ForSpec {
        var,
        range: toks[3].clone(),
        op,
        body: toks[5].clone(),
    })
}

fn parse_do(toks: &[Value], world: &World) -> Result<DoSpec> {
    let mut i = 0;
    let mut with: Vec<WithBinding> = Vec::new();
    while toks.get(i).and_then(tok) == Some("WITH") {
        let var = variable(toks.get(i + 1), "WITH")?;
        i += 2;
        if with.iter().any(|w| w.var == var) {
            return Err(err(format!("WITH variable {var} is bound twice")));
        }
        if world.is_stobj(&var) {
            return Err(err(format!("WITH variable {var} names a stobj")));
        }
        let mut type_spec = None;
        if toks.get(i).and_then(tok) == Some("OF-TYPE") {
            type_spec = Some(match toks.get(i + 1).and_then(tok) {
                Some("INTEGER") => TypeSpec::Integer,
                Some("T") => TypeSpec::T,
                _ => {
                    return Err(err(format!(
                        "unsupported OF-TYPE for {var}: {} (only integer and t)",
                        toks.get(i + 1).cloned().unwrap_or(Value::Nil)
                    )))
                }
            });
            i += 2;
        }
        let init = if toks.get(i).and_then(tok) == Some("=") {
            let v = toks
                .get(i + 1)
                .cloned()
                .ok_or_else(|| err(format!("missing initial value for {var}")))?;
            i += 2;
            v
        } else if type_spec == Some(TypeSpec::Integer) {
            Value::int(0)
        } else {
            Value::Nil
        };
        with.push(WithBinding {
            var,
            type_spec,
            init,
        });
    }
    if toks.get(i).and_then(tok) != Some("DO") {
        return Err(err(format!(
            "expected DO, found {}",
            toks.get(i)
                .map(|t| t.to_string())
                .unwrap_or_else(|| "end of form".into())
        )));
    }
    i += 1;
    let mut values: Option<Vec<Option<Symbol>>> = None;
    let mut measure = None;
    let mut guard = None;
    while let Some(Value::Sym(k)) = toks.get(i) {
        if !k.is_keyword() {
            break;
        }
        let arg = toks
            .get(i + 1)
            .cloned()
            .ok_or_else(|| err(format!("missing argument for {k}")))?;
        let slot_taken = match k.name() {
            ":VALUES" => values.replace(parse_values(&arg, world)?).is_some(),
            ":MEASURE" => measure.replace(arg).is_some(),
            ":GUARD" => guard.replace(arg).is_some(),
            _ => return Err(err(format!("unknown loop$ clause {k}"))),
        };
        if slot_taken {
            return Err(err(format!("{k} given twice")));
        }
        i += 2;
    }
    let body = toks.get(i).cloned().ok_or_else(|| err("missing DO body"))?;
    i += 1;
    let mut finally = None;
    if i < toks.len() {
        if tok(&toks[i]) != Some("FINALLY") {
            return Err(err(format!("unexpected {} after the DO body", toks[i])));
        }
        finally = Some(
            toks.get(i + 1)
                .cloned()
                .ok_or_else(|| err("missing FINALLY body"))?,
        );
        i += 2;
    }
    if i != toks.len() {
        return Err(err(format!("unexpected {} after FINALLY", toks[i])));
    }
    Ok(DoSpec {
        with,
        values: values.unwrap_or_else(|| vec![None]),
        measure,
        guard,
        body,
        finally,
    })
}

fn parse_values(v: &Value, world: &World) -> Result<Vec<Option<Symbol>>> {
    let items = v
        .to_vec()
        .filter(|l| !l.is_empty())
        .ok_or_else(|| err(format!(":VALUES expects a non-empty list, got {v}")))?;
    let mut out: Vec<Option<Symbol>> = Vec::new();
    for item in items {
        match item {
            Value::Nil => out.push(None),
            Value::Sym(s) if world.is_stobj(&s) => {
                if out.contains(&Some(s.clone())) {
                    return Err(err(format!(":VALUES names {s} twice")));
                }
                out.push(Some(s))
            }
            other => {
                return Err(err(format!(
                    ":VALUES entry {other} is neither NIL nor a defined stobj"
                )))
            }
        }
    }
    Ok(out)
}

/// DO/FINALLY body statements.
#[derive(Clone, Debug)]
pub enum Stmt {
    Seq(Vec<Stmt>),
    If(Value, Box<Stmt>, Box<Stmt>),
    Let {
        star: bool,
        bindings: Vec<(Symbol, Value)>,
        body: Box<Stmt>,
    },
    MvLet {
        vars: Vec<Symbol>,
        expr: Value,
        body: Box<Stmt>,
    },
    Setq(Symbol, Value),
    MvSetq(Vec<Symbol>, Value),
    Return(Value),
    LoopFinish,
    Skip,
}

impl Stmt {
    pub fn any(&self, pred: &mut impl FnMut(&Stmt) -> bool) -> bool {
        if pred(self) {
            return true;
        }
        match self {
            Stmt::Seq(items) => items.iter().any(|s| s.any(pred)),
            Stmt::If(_, a, b) => a.any(pred) || b.any(pred),
            Stmt::Let { body, .. } | Stmt::MvLet { body, .. } => body.any(pred),
            _ => false,
        }
    }

    /// Whether some path runs off the end without `return` or `loop-finish`.
    pub fn may_fall_through(&self) -> bool {
        match self {
            Stmt::Seq(items) => items.iter().all(Stmt::may_fall_through),
            Stmt::If(_, a, b) => a.may_fall_through() || b.may_fall_through(),
            Stmt::Let { body, .. } | Stmt::MvLet { body, .. } => body.may_fall_through(),
            Stmt::Return(_) | Stmt::LoopFinish => false,
            Stmt::Setq(..) | Stmt::MvSetq(..) | Stmt::Skip => true,
        }
    }
}

pub(crate) struct StmtContext<'a> {
    pub settable: &'a [Symbol],
    pub values: &'a [Option<Symbol>],
}

const STATEMENT_HEADS: [&str; 5] = ["PROGN", "SETQ", "MV-SETQ", "RETURN", "LOOP-FINISH"];

/// Rejects statement syntax inside an expression. Nested `loop$` forms are
/// checked when they are compiled.
pub(crate) fn check_expr(e: &Value) -> Result<()> {
    if let Value::Cons(_) = e {
        match e.car().symbol_name() {
            Some("QUOTE") | Some("LOOP$") => return Ok(()),
            Some(h) if STATEMENT_HEADS.contains(&h) => {
                return Err(err(format!(
                    "{h} is not allowed in expression position: {e}"
                )))
            }
            _ => {}
        }
        for item in e.iter() {
            check_expr(item)?;
        }
    }
    Ok(())
}

fn body_of(form: &Value, rest: &[Value]) -> Result<Value> {
    let body: Vec<&Value> = rest
        .iter()
        .filter(|f| f.car().symbol_name() != Some("DECLARE"))
        .collect();
    match body.as_slice() {
        [b] => Ok((*b).clone()),
        _ => Err(err(format!(
            "expected exactly one body statement in {form}"
        ))),
    }
}

pub(crate) fn parse_stmt(form: &Value, cx: &StmtContext) -> Result<Stmt> {
    if form.is_nil() {
        return Ok(Stmt::Skip);
    }
    let items = match form {
        Value::Cons(_) => form
            .to_vec()
            .ok_or_else(|| err(format!("malformed statement {form}")))?,
        _ => return Err(err(format!("{form} is not a DO-body statement"))),
    };
    let head = items[0].symbol_name().unwrap_or("");
    let args = &items[1..];
    match head {
        "PROGN" => Ok(Stmt::Seq(
            args.iter()
                .map(|s| parse_stmt(s, cx))
                .collect::<Result<Vec<_>>>()?,
        )),
        "IF" => {
            if args.len() != 3 {
                return Err(err(format!(
                    "IF in a DO body needs three arguments: {form}"
                )));
            }
            check_expr(&args[0])?;
            Ok(Stmt::If(
                args[0].clone(),
                Box::new(parse_stmt(&args[1], cx)?),
                Box::new(parse_stmt(&args[2], cx)?),
            ))
        }
        "LET" | "LET*" => {
            let raw = args
                .first()
                .and_then(Value::to_vec)
                .ok_or_else(|| err(format!("malformed bindings in {form}")))?;
            let mut bindings = Vec::new();
            for b in raw {
                let (v, e) = match &b {
                    Value::Sym(v) => (v.clone(), Value::Nil),
                    _ => match b.to_vec().as_deref() {
                        Some([Value::Sym(v), e]) => (v.clone(), e.clone()),
                        _ => return Err(err(format!("malformed binding {b} in {form}"))),
                    },
                };
                if cx.settable.contains(&v) {
                    return Err(err(format!(
                        "{head} may not rebind the settable variable {v}; use setq"
                    )));
                }
                check_expr(&e)?;
                bindings.push((v, e));
            }
            let body = body_of(form, &args[1..])?;
            Ok(Stmt::Let {
                star: head == "LET*",
                bindings,
                body: Box::new(parse_stmt(&body, cx)?),
            })
        }
        "MV-LET" => {
            if args.len() < 3 {
                return Err(err(format!("malformed mv-let {form}")));
            }
            let vars = symbols(&args[0], form)?;
            if let Some(v) = vars.iter().find(|v| cx.settable.contains(v)) {
                return Err(err(format!(
                    "MV-LET may not rebind the settable variable {v}; use mv-setq"
                )));
            }
            check_expr(&args[1])?;
            let body = body_of(form, &args[2..])?;
            Ok(Stmt::MvLet {
                vars,
                expr: args[1].clone(),
                body: Box::new(parse_stmt(&body, cx)?),
            })
        }
        "SETQ" => {
            let [Value::Sym(v), e] = args else {
                return Err(err(format!("expected (setq var expr): {form}")));
            };
            settable(v, cx)?;
            check_expr(e)?;
            Ok(Stmt::Setq(v.clone(), e.clone()))
        }
        "MV-SETQ" => {
            if args.len() != 2 {
                return Err(err(format!("expected (mv-setq (vars) expr): {form}")));
            }
            let vars = symbols(&args[0], form)?;
            if vars.len() < 2 {
                return Err(err(format!("mv-setq needs at least two variables: {form}")));
            }
            for v in &vars {
                settable(v, cx)?;
            }
            check_expr(&args[1])?;
            Ok(Stmt::MvSetq(vars, args[1].clone()))
        }
        "RETURN" => {
            let [e] = args else {
                return Err(err(format!("expected (return expr): {form}")));
            };
            check_expr(e)?;
            let mv_arity = (e.car().symbol_name() == Some("MV")).then(|| e.len() - 1);
            match (cx.values.len(), mv_arity) {
                (1, Some(_)) => {
                    return Err(err(format!(
                        "(RETURN {e}) returns multiple values but :VALUES has one"
                    )))
                }
                (n, Some(m)) if n != m => {
                    return Err(err(format!(
                        "(RETURN {e}) returns {m} values but :VALUES has {n}"
                    )))
                }
                _ => {}
            }
            Ok(Stmt::Return(e.clone()))
        }
        "LOOP-FINISH" => {
            if !args.is_empty() {
                return Err(err(format!("loop-finish takes no arguments: {form}")));
            }
            Ok(Stmt::LoopFinish)
        }
        _ => Err(err(format!("{form} is not a DO-body statement"))),
    }
}

fn settable(v: &Symbol, cx: &StmtContext) -> Result<()> {
    if cx.settable.contains(v) {
        Ok(())
    } else {
        Err(err(format!(
            "{v} is not settable; only WITH variables and stobjs in :VALUES can be assigned"
        )))
    }
}

fn symbols(v: &Value, form: &Value) -> Result<Vec<Symbol>> {
    let vars: Vec<Symbol> = v
        .to_vec()
        .and_then(|l| {
            l.iter()
                .map(|x| x.as_symbol().filter(|s| !s.is_keyword()).cloned())
                .collect()
        })
        .ok_or_else(|| err(format!("malformed variable list in {form}")))?;
    for (i, x) in vars.iter().enumerate() {
        if vars[..i].contains(x) {
            return Err(err(format!("{x} appears twice in {form}")));
        }
    }
    Ok(vars)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sexpr::read_one;

    fn parse(src: &str) -> Result<LoopSpec> {
        parse_loop(&read_one(src).unwrap(), &World::new())
    }

    #[test]
    fn minimal_do() {
        let LoopSpec::Do(d) = parse("(loop$ WITH x = 0 DO (return x))").unwrap() else {
            panic!()
        };
        assert_eq!(d.with.len(), 1);
        assert!(d.measure.is_none());
        assert_eq!(d.values, vec![None]);
    }

    #[test]
    fn clause_errors() {
        assert!(parse("(loop$ WITH x WITH x = 1 DO (return x))").is_err());
        assert!(parse("(loop$ WITH x = 0 DO :FOO 1 (return x))").is_err());
        assert!(parse("(loop$ WITH x OF-TYPE string = 0 DO (return x))").is_err());
        assert!(parse("(loop$ WITH x = 0 DO :VALUES (st) (return x))").is_err());
        assert!(parse("(loop$ FOR i ON '(1) SUM i)").is_err());
    }

    #[test]
    fn for_spec() {
        let LoopSpec::For(f) = parse("(loop$ FOR i in '(1 2 3 4) SUM (* i i))").unwrap() else {
            panic!()
        };
        assert_eq!(f.var.name(), "I");
        assert_eq!(f.op, ForOp::Sum);
    }

    #[test]
    fn statements() {
        let settable = [Symbol::intern("X")];
        let cx = StmtContext {
            settable: &settable,
            values: &[None],
        };
        let p = |s: &str| parse_stmt(&read_one(s).unwrap(), &cx);
        assert!(p("(progn (setq x 1) (return x))").is_ok());
        assert!(p("(setq y 1)").is_err());
        assert!(p("(let ((x 1)) (return x))").is_err());
        assert!(p("(return (mv 1 2))").is_err());
        assert!(p("(return (progn 1))").is_err());
        assert!(p("(+ 1 2)").is_err());
        assert!(!p("(if (= x 1) (return 1) (loop-finish))")
            .unwrap()
            .may_fall_through());
        assert!(p("(if (= x 1) (return 1) nil)").unwrap().may_fall_through());
    }
}

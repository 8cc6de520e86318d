//! `loop$`: parsing, DO-body translation, the logical `do$` driver, the
//! native imperative path, and FOR loops.

mod exec;
mod measure;
mod parse;
mod translate;

pub use exec::{do_dollar, render_checkpoint, Diagnostics, LoopTrace, TraceStep};
pub use measure::{guess_measure, l_less, lex_fix, MeasureValue};
pub use parse::{parse_loop, DoSpec, ForOp, ForSpec, LoopSpec, Stmt, TypeSpec, WithBinding};
pub use translate::{alist_ref, free_vars};

pub(crate) use exec::eval_loop;

use crate::error::{Error, Result};
use crate::kernel::{LambdaObject, World};
use crate::sexpr::{show, Symbol, Value};

use parse::{check_expr, parse_stmt, StmtContext};
use translate::{stmt_free_vars, Translator};

#[derive(Clone, Debug)]
pub struct ForLoop {
    pub var: Symbol,
    pub range: Value,
    pub op: ForOp,
    pub body: Value,
    free: Vec<Symbol>,
}

#[derive(Clone, Debug)]
pub struct DoLoop {
    pub spec: DoSpec,
    pub body: Stmt,
    pub finally: Option<Stmt>,
    /// WITH variables, then `:VALUES` stobjs.
    pub settable: Vec<Symbol>,
    /// Keys of the environment alist: the settable variables, then any
    /// other variables the loop reads.
    pub alist_vars: Vec<Symbol>,
    /// The effective measure: `:MEASURE`, or a guessed one. Absent only when
    /// no path through the body continues the loop.
    pub measure: Option<Value>,
    pub measure_guessed: bool,
    pub do_fn: LambdaObject,
    pub finally_fn: Option<LambdaObject>,
    pub measure_fn: Option<LambdaObject>,
    pub guard_fn: Option<LambdaObject>,
    pub source: Value,
    free: Vec<Symbol>,
}

impl DoLoop {
    /// Builds an alist from values given in `alist_vars` order.
    pub fn alist(&self, values: &[Value]) -> Value {
        Value::list(
            self.alist_vars
                .iter()
                .zip(values)
                .map(|(k, v)| Value::cons(Value::Sym(k.clone()), v.clone()))
                .collect::<Vec<_>>(),
        )
    }
}

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum CompiledLoop {
    For(ForLoop),
    Do(DoLoop),
}

pub fn compile_loop(form: &Value, world: &World) -> Result<CompiledLoop> {
    match parse_loop(form, world)? {
        LoopSpec::For(f) => {
            check_expr(&f.range)?;
            check_expr(&f.body)?;
            let mut free = Vec::new();
            free_vars(&f.range, world, &mut Vec::new(), &mut free);
            free_vars(&f.body, world, &mut vec![f.var.clone()], &mut free);
            Ok(CompiledLoop::For(ForLoop {
                var: f.var,
                range: f.range,
                op: f.op,
                body: f.body,
                free,
            }))
        }
        LoopSpec::Do(spec) => compile_do(form, spec, world).map(CompiledLoop::Do),
    }
}

fn compile_do(form: &Value, spec: DoSpec, world: &World) -> Result<DoLoop> {
    let settable = spec.settable();
    let cx = StmtContext {
        settable: &settable,
        values: &spec.values,
    };
    let body = parse_stmt(&spec.body, &cx)?;
    let finally = spec
        .finally
        .as_ref()
        .map(|f| parse_stmt(f, &cx))
        .transpose()?;
    for w in &spec.with {
        check_expr(&w.init)?;
    }
    for t in [&spec.measure, &spec.guard].into_iter().flatten() {
        check_expr(t)?;
    }
    let finishes = body.any(&mut |s| matches!(s, Stmt::LoopFinish));
    if finally.is_none() && finishes && spec.values.iter().any(Option::is_some) {
        return Err(Error::LoopSyntax(
            "loop-finish without FINALLY cannot produce the stobjs named in :VALUES".into(),
        ));
    }

    let with_vars: Vec<Symbol> = spec.with.iter().map(|w| w.var.clone()).collect();
    let mut inner = Vec::new();
    stmt_free_vars(&body, world, &mut with_vars.clone(), &mut inner);
    if let Some(f) = &finally {
        stmt_free_vars(f, world, &mut with_vars.clone(), &mut inner);
    }
    for t in [&spec.measure, &spec.guard].into_iter().flatten() {
        free_vars(t, world, &mut with_vars.clone(), &mut inner);
    }
    let mut alist_vars = settable.clone();
    for v in inner {
        if !alist_vars.contains(&v) {
            alist_vars.push(v);
        }
    }

    let mut free = Vec::new();
    for (k, w) in spec.with.iter().enumerate() {
        free_vars(&w.init, world, &mut with_vars[..k].to_vec(), &mut free);
    }
    for v in &alist_vars {
        if !with_vars.contains(v) && !free.contains(v) {
            free.push(v.clone());
        }
    }

    let (measure, measure_guessed) = match &spec.measure {
        Some(m) => (Some(m.clone()), false),
        None if body.may_fall_through() => {
            (Some(guess_measure(&spec, &body, finally.as_ref())?), true)
        }
        None => (None, false),
    };
    if let Some(m) = &measure {
        let mut extra = Vec::new();
        free_vars(m, world, &mut alist_vars.clone(), &mut extra);
        if let Some(v) = extra.first() {
            return Err(Error::LoopSyntax(format!(
                "measure {m} mentions unknown variable {v}"
            )));
        }
    }

    let typed: Vec<(Symbol, TypeSpec)> = spec
        .with
        .iter()
        .filter_map(|w| match w.type_spec {
            Some(TypeSpec::Integer) => Some((w.var.clone(), TypeSpec::Integer)),
            _ => None,
        })
        .collect();
    let tr = Translator {
        world,
        alist_vars: &alist_vars,
        typed: &typed,
    };
    let do_fn = tr.lambda(tr.translate(&body)?);
    let finally_fn = match &finally {
        Some(f) => Some(tr.lambda(tr.translate(f)?)),
        None => None,
    };
    let measure_fn = measure.clone().map(|m| tr.lambda(m));
    let guard_fn = spec.guard.clone().map(|g| tr.lambda(g));
    Ok(DoLoop {
        spec,
        body,
        finally,
        settable,
        alist_vars,
        measure,
        measure_guessed,
        do_fn,
        finally_fn,
        measure_fn,
        guard_fn,
        source: form.clone(),
        free,
    })
}

impl std::fmt::Display for DoLoop {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&show(&self.source))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sexpr::read_one;

    fn compile(src: &str) -> Result<CompiledLoop> {
        compile_loop(&read_one(src).unwrap(), &World::new())
    }

    #[test]
    fn guesses_follow_update_shape() {
        let CompiledLoop::Do(d) = compile(
            "(loop$ WITH sum = 0 WITH lst = '(1 2 3 4) DO
               (if (consp lst)
                   (let ((sq (* (car lst) (car lst))))
                     (progn (setq sum (+ sq sum)) (setq lst (cdr lst))))
                 (return sum)))",
        )
        .unwrap() else {
            panic!()
        };
        assert_eq!(show(d.measure.as_ref().unwrap()), "(LEN LST)");
        assert!(d.measure_guessed);
        assert_eq!(d.alist_vars.len(), 2);

        let CompiledLoop::Do(d) = compile(
            "(loop$ WITH sum OF-TYPE integer = 0 WITH i = n DO :guard (natp i)
               (if (zp i) (return sum)
                 (let ((sq (* i i))) (progn (setq sum (+ sq sum)) (setq i (1- i))))))",
        )
        .unwrap() else {
            panic!()
        };
        assert_eq!(show(d.measure.as_ref().unwrap()), "(NFIX I)");
        assert_eq!(d.free_vars_for_test(), ["N"]);

        let e = compile(
            "(loop$ WITH sum = 0 WITH i = 1 DO
               (if (<= i 4) (let ((sq (* i i))) (progn (setq sum (+ sq sum)) (setq i (1+ i))))
                 (loop-finish))
               FINALLY (return sum))",
        )
        .unwrap_err();
        assert!(e.to_string().contains(":MEASURE"), "{e}");
    }

    #[test]
    fn no_measure_needed_without_fall_through() {
        let CompiledLoop::Do(d) = compile("(loop$ WITH x = 0 DO (return x))").unwrap() else {
            panic!()
        };
        assert!(d.measure.is_none());
    }

    #[test]
    fn let_capture_is_rejected() {
        assert!(compile(
            "(loop$ WITH x = 3 DO :measure (nfix x)
               (progn (let ((y 1)) (setq x (- x y))) (if (zp x) (return y) (setq x (1- x)))))"
        )
        .is_err());
    }

    impl DoLoop {
        fn free_vars_for_test(&self) -> Vec<String> {
            self.free.iter().map(|s| s.name().to_string()).collect()
        }
    }
}

//! Loop execution: the `do$` driver over translated LAMBDA objects, the
//! native imperative path, and FOR loops.

use crate::error::{Error, GuardViolation, LoopCheck, LoopGuardFailure, MeasureFailure, Result};
use crate::kernel::builtins::true_list_fix;
use crate::kernel::{lookup_var, Env, Interp, LambdaObject, Mode, NativeFault};
use crate::sexpr::{show, show_alist, Integer, Symbol, Value};

use super::measure::{l_less, lex_fix, MeasureValue};
use super::parse::{ForOp, Stmt};
use super::{CompiledLoop, DoLoop, ForLoop};

/// One application of a do-fn (or finally-fn) in a `do$` run.
#[derive(Clone, Debug)]
pub struct TraceStep {
    pub alist: Value,
    pub triple: Value,
    /// Measure of `alist`, when the driver evaluated it.
    pub measure: Option<MeasureValue>,
}

impl TraceStep {
    /// `(TOKEN VALUE ALIST)` with the alist's pairs spelled out.
    pub fn show_triple(&self) -> String {
        let parts = self.triple.to_vec().unwrap_or_default();
        match parts.as_slice() {
            [tok, val, alist] => format!("({} {} {})", show(tok), show(val), show_alist(alist)),
            _ => show(&self.triple),
        }
    }

    pub fn show_alist(&self) -> String {
        show_alist(&self.alist)
    }
}

#[derive(Clone, Debug)]
pub struct LoopTrace {
    pub form: String,
    pub mode: Mode,
    pub steps: Vec<TraceStep>,
    pub finally: Option<TraceStep>,
    pub finally_runs: usize,
    pub iterations: u64,
    pub result: Option<Value>,
}

impl LoopTrace {
    fn new(form: &Value, mode: Mode) -> LoopTrace {
        LoopTrace {
            form: show(form),
            mode,
            steps: Vec::new(),
            finally: None,
            finally_runs: 0,
            iterations: 0,
            result: None,
        }
    }

    /// Measures of successive do-fn inputs, where evaluated.
    pub fn measure_chain(&self) -> Vec<MeasureValue> {
        self.steps
            .iter()
            .filter_map(|s| s.measure.clone())
            .collect()
    }
}

/// Extra context threaded through `do$` in place of its elided trailing
/// parameters.
pub struct Diagnostics<'a> {
    pub loop_form: &'a Value,
    pub alist_vars: &'a [Symbol],
    pub guard_fn: Option<&'a LambdaObject>,
    pub guard_term: Option<&'a Value>,
}

/// Renders a term with loop variables replaced by their alist lookups, e.g.
/// `(NATP I)` as `(NATP (CDR (ASSOC-EQ-SAFE 'I ALIST)))`.
pub fn render_checkpoint(term: &Value, vars: &[Symbol]) -> String {
    match term {
        Value::Sym(s) if vars.contains(s) => format!("(CDR (ASSOC-EQ-SAFE '{s} ALIST))"),
        Value::Cons(_) if term.is_proper_list() => {
            let items = term.to_vec().unwrap_or_default();
            if items.len() == 2 && items[0].symbol_name() == Some("QUOTE") {
                return format!("'{}", show(&items[1]));
            }
            let mut parts = vec![show(&items[0])];
            parts.extend(items[1..].iter().map(|x| render_checkpoint(x, vars)));
            format!("({})", parts.join(" "))
        }
        other => show(other),
    }
}

fn of_type_checkpoint(var: &Symbol, type_spec: &str) -> String {
    format!("({type_spec}P (CDR (ASSOC-EQ-SAFE '{var} ALIST)))")
}

/// Attaches iteration context to an error raised inside a loop body.
fn in_loop(e: Error, iteration: u64, alist: &Value, vars: &[Symbol]) -> Error {
    match e {
        Error::InLoop { .. } | Error::Measure(_) | Error::IterationCap { .. } => e,
        Error::LoopGuard(mut g) => {
            if g.iteration == 0 {
                g.iteration = iteration;
                g.alist = show_alist(alist);
                if let LoopCheck::OfType { var, type_spec, .. } = &g.check {
                    g.checkpoint = of_type_checkpoint(var, type_spec);
                }
            }
            Error::LoopGuard(g)
        }
        Error::Guard(ref g) => {
            let checkpoint = match &g.arg_expr {
                Some(a) => {
                    render_checkpoint(&Value::list([Value::sym(&g.predicate), a.clone()]), vars)
                }
                None => g.condition.clone(),
            };
            Error::InLoop {
                iteration,
                alist: show_alist(alist),
                checkpoint: Some(checkpoint),
                inner: Box::new(e),
            }
        }
        other => Error::InLoop {
            iteration,
            alist: show_alist(alist),
            checkpoint: None,
            inner: Box::new(other),
        },
    }
}

fn guard_failure(term: &Value, iteration: u64, alist: &Value, vars: &[Symbol]) -> Error {
    Error::LoopGuard(Box::new(LoopGuardFailure {
        check: LoopCheck::Guard { term: show(term) },
        iteration,
        alist: show_alist(alist),
        checkpoint: render_checkpoint(term, vars),
    }))
}

fn of_type_failure(
    var: &Symbol,
    type_spec: &str,
    value: &Value,
    iteration: u64,
    alist: String,
) -> Error {
    Error::LoopGuard(Box::new(LoopGuardFailure {
        check: LoopCheck::OfType {
            var: var.clone(),
            type_spec: type_spec.to_string(),
            value: show(value),
        },
        iteration,
        alist,
        checkpoint: of_type_checkpoint(var, type_spec),
    }))
}

fn trace_push(interp: &mut Interp, form: &Value, mode: Mode) -> Option<usize> {
    interp.trace.as_mut().map(|t| {
        t.push(LoopTrace::new(form, mode));
        t.len() - 1
    })
}

fn trace_with(interp: &mut Interp, slot: Option<usize>, f: impl FnOnce(&mut LoopTrace)) {
    if let (Some(i), Some(t)) = (slot, interp.trace.as_mut()) {
        if let Some(entry) = t.get_mut(i) {
            f(entry);
        }
    }
}

fn split_triple(raw: &Value, form: &Value) -> Result<(Value, [Value; 3])> {
    let triple = true_list_fix(raw);
    match triple.to_vec().as_deref() {
        Some([tok, val, alist]) => {
            let parts = [tok.clone(), val.clone(), alist.clone()];
            Ok((triple, parts))
        }
        _ => Err(Error::eval(format!(
            "do$: malformed exit triple {} from {}",
            show(raw),
            show(form)
        ))),
    }
}

/// The logical driver: apply `do_fn` to the alist, dispatch on the exit
/// token, and continue only while the measure strictly `l<`-decreases.
pub fn do_dollar(
    interp: &mut Interp,
    measure_fn: Option<&LambdaObject>,
    alist: Value,
    do_fn: &LambdaObject,
    finally_fn: Option<&LambdaObject>,
    diag: &Diagnostics,
) -> Result<Value> {
    let form = diag.loop_form;
    let vars = diag.alist_vars;
    let slot = trace_push(interp, form, Mode::Logical);
    let mut alist = alist;
    let mut current: Option<MeasureValue> = None;
    let mut iteration: u64 = 0;
    loop {
        iteration += 1;
        if interp.config.guard_check {
            if let (Some(g), Some(term)) = (diag.guard_fn, diag.guard_term) {
                let ok = interp
                    .apply_lambda(g, vec![alist.clone()], form)
                    .map_err(|e| in_loop(e, iteration, &alist, vars))?;
                if ok.is_nil() {
                    return Err(guard_failure(term, iteration, &alist, vars));
                }
            }
        }
        let raw = interp
            .apply_lambda(do_fn, vec![alist.clone()], form)
            .map_err(|e| in_loop(e, iteration, &alist, vars))?;
        let (triple, [token, value, new_alist]) = split_triple(&raw, form)?;
        let measure = current.clone();
        trace_with(interp, slot, |t| {
            t.iterations = iteration;
            t.steps.push(TraceStep {
                alist: alist.clone(),
                triple,
                measure,
            })
        });
        match token.symbol_name() {
            Some(":RETURN") => {
                trace_with(interp, slot, |t| t.result = Some(value.clone()));
                return Ok(value);
            }
            Some(":LOOP-FINISH") => {
                let Some(fin) = finally_fn else {
                    trace_with(interp, slot, |t| t.result = Some(Value::Nil));
                    return Ok(Value::Nil);
                };
                let raw = interp
                    .apply_lambda(fin, vec![new_alist.clone()], form)
                    .map_err(|e| in_loop(e, iteration, &new_alist, vars))?;
                let (triple, [tok2, val2, _]) = split_triple(&raw, form)?;
                let result = if tok2.symbol_name() == Some(":RETURN") {
                    val2
                } else {
                    Value::Nil
                };
                trace_with(interp, slot, |t| {
                    t.finally_runs += 1;
                    t.finally = Some(TraceStep {
                        alist: new_alist.clone(),
                        triple,
                        measure: None,
                    });
                    t.result = Some(result.clone());
                });
                return Ok(result);
            }
            _ if token.is_nil() => {
                let Some(mfn) = measure_fn else {
                    return Err(Error::LoopSyntax(format!(
                        "{} continued but has no measure",
                        show(form)
                    )));
                };
                let old = match current.take() {
                    Some(m) => m,
                    None => {
                        let m = interp
                            .apply_lambda(mfn, vec![alist.clone()], form)
                            .map_err(|e| in_loop(e, iteration, &alist, vars))?;
                        lex_fix(&m)
                    }
                };
                let new = interp
                    .apply_lambda(mfn, vec![new_alist.clone()], form)
                    .map_err(|e| in_loop(e, iteration, &new_alist, vars))?;
                let new = lex_fix(&new);
                let recorded = old.clone();
                trace_with(interp, slot, |t| {
                    if let Some(step) = t.steps.last_mut() {
                        step.measure.get_or_insert(recorded);
                    }
                });
                if !l_less(&new, &old) {
                    return Err(Error::Measure(Box::new(MeasureFailure {
                        loop_form: show(form),
                        iteration,
                        old_alist: show_alist(&alist),
                        new_alist: show_alist(&new_alist),
                        old_measure: old.to_string(),
                        new_measure: new.to_string(),
                    })));
                }
                alist = new_alist;
                current = Some(new);
            }
            _ => {
                return Err(Error::eval(format!(
                    "do$: unknown exit token {} from {}",
                    show(&token),
                    show(form)
                )))
            }
        }
    }
}

/// Initial values for `alist_vars`: WITH inits evaluated in sequence, then
/// the remaining variables read from `env`.
fn initial_values(
    interp: &mut Interp,
    d: &DoLoop,
    env: &mut Env,
    check: bool,
) -> Result<Vec<Value>> {
    let base = env.len();
    let r = initial_values_in(interp, d, env, check);
    env.truncate(base);
    r
}

fn initial_values_in(
    interp: &mut Interp,
    d: &DoLoop,
    env: &mut Env,
    check: bool,
) -> Result<Vec<Value>> {
    let mut out = Vec::with_capacity(d.alist_vars.len());
    for w in &d.spec.with {
        let v = interp.eval(&w.init, env)?;
        if let Some(t) = w.type_spec {
            if check && !t.admits(&v) {
                let alist = d.alist(&out);
                return Err(of_type_failure(&w.var, t.name(), &v, 0, show_alist(&alist)));
            }
        }
        env.push((w.var.clone(), v.clone()));
        out.push(v);
    }
    for var in &d.alist_vars[d.spec.with.len()..] {
        out.push(lookup_var(env, var).ok_or_else(|| Error::Unbound(var.clone()))?);
    }
    Ok(out)
}

pub(crate) fn eval_loop(interp: &mut Interp, form: &Value, env: &mut Env) -> Result<Value> {
    let compiled = interp.compiled_loop(form)?;
    match &*compiled {
        CompiledLoop::For(f) => run_for(interp, f, env, form),
        CompiledLoop::Do(d) => match interp.config.mode {
            Mode::Logical => run_logical(interp, d, env),
            Mode::Native => run_native(interp, d, env),
        },
    }
}

fn run_logical(interp: &mut Interp, d: &DoLoop, env: &mut Env) -> Result<Value> {
    let check = interp.config.guard_check;
    let values = initial_values(interp, d, env, check)?;
    let alist = d.alist(&values);
    let diag = Diagnostics {
        loop_form: &d.source,
        alist_vars: &d.alist_vars,
        guard_fn: d.guard_fn.as_ref(),
        guard_term: d.spec.guard.as_ref(),
    };
    do_dollar(
        interp,
        d.measure_fn.as_ref(),
        alist,
        &d.do_fn,
        d.finally_fn.as_ref(),
        &diag,
    )
}

enum Flow {
    Next,
    Return(Value),
    Finish,
}

struct Native<'a> {
    d: &'a DoLoop,
    /// Env index of the first settable slot.
    base: usize,
    checks: bool,
    iteration: u64,
}

impl Native<'_> {
    fn slot(&self, v: &Symbol) -> usize {
        let i = self
            .d
            .settable
            .iter()
            .position(|s| s == v)
            .expect("setq targets are settable");
        self.base + i
    }

    fn alist(&self, env: &Env) -> Value {
        let values: Vec<Value> = self
            .d
            .alist_vars
            .iter()
            .enumerate()
            .map(|(i, v)| {
                if i < self.d.settable.len() {
                    env[self.base + i].1.clone()
                } else {
                    lookup_var(env, v).unwrap_or(Value::Nil)
                }
            })
            .collect();
        self.d.alist(&values)
    }

    fn assign(&self, interp: &mut Interp, env: &mut Env, v: &Symbol, value: Value) -> Result<()> {
        if self.checks {
            if let Some(t) = self.d.spec.type_of(v) {
                if !t.admits(&value) {
                    return Err(of_type_failure(
                        v,
                        t.name(),
                        &value,
                        self.iteration,
                        show_alist(&self.alist(env)),
                    ));
                }
            }
        }
        if interp.config.fault == Some(NativeFault::IgnoreFirstSetq) && !interp.fault_fired {
            interp.fault_fired = true;
            return Ok(());
        }
        let i = self.slot(v);
        env[i].1 = value;
        Ok(())
    }

    fn exec(&self, interp: &mut Interp, s: &Stmt, env: &mut Env) -> Result<Flow> {
        match s {
            Stmt::Seq(items) => {
                for item in items {
                    match self.exec(interp, item, env)? {
                        Flow::Next => {}
                        other => return Ok(other),
                    }
                }
                Ok(Flow::Next)
            }
            Stmt::If(t, a, b) => {
                if interp.eval(t, env)?.truthy() {
                    self.exec(interp, a, env)
                } else {
                    self.exec(interp, b, env)
                }
            }
            Stmt::Let {
                star,
                bindings,
                body,
            } => {
                let base = env.len();
                let r = self.exec_let(interp, *star, bindings, body, env);
                env.truncate(base);
                r
            }
            Stmt::MvLet { vars, expr, body } => {
                let vals = self.multiple(interp, vars.len(), expr, env)?;
                let base = env.len();
                env.extend(vars.iter().cloned().zip(vals));
                let r = self.exec(interp, body, env);
                env.truncate(base);
                r
            }
            Stmt::Setq(v, e) => {
                let value = interp.eval(e, env)?;
                self.assign(interp, env, v, value)?;
                Ok(Flow::Next)
            }
            Stmt::MvSetq(vars, e) => {
                let vals = self.multiple(interp, vars.len(), e, env)?;
                for (v, x) in vars.iter().zip(vals) {
                    self.assign(interp, env, v, x)?;
                }
                Ok(Flow::Next)
            }
            Stmt::Return(e) => Ok(Flow::Return(interp.eval(e, env)?)),
            Stmt::LoopFinish => Ok(Flow::Finish),
            Stmt::Skip => Ok(Flow::Next),
        }
    }

    fn exec_let(
        &self,
        interp: &mut Interp,
        star: bool,
        bindings: &[(Symbol, Value)],
        body: &Stmt,
        env: &mut Env,
    ) -> Result<Flow> {
        let mut pending = Vec::new();
        for (v, e) in bindings {
            let x = interp.eval(e, env)?;
            if star {
                env.push((v.clone(), x));
            } else {
                pending.push((v.clone(), x));
            }
        }
        env.extend(pending);
        self.exec(interp, body, env)
    }

    fn multiple(
        &self,
        interp: &mut Interp,
        n: usize,
        e: &Value,
        env: &mut Env,
    ) -> Result<Vec<Value>> {
        let v = interp.eval(e, env)?;
        match v.to_vec() {
            Some(vals) if vals.len() == n => Ok(vals),
            _ => Err(Error::eval(format!(
                "expected {n} values from {e} but got {}",
                show(&v)
            ))),
        }
    }
}

fn run_native(interp: &mut Interp, d: &DoLoop, env: &mut Env) -> Result<Value> {
    let checks = interp.config.guard_check && interp.config.native_checks;
    let values = initial_values(interp, d, env, checks)?;
    let base = env.len();
    env.extend(d.settable.iter().cloned().zip(values));
    let r = native_loop(interp, d, env, base, checks);
    env.truncate(base);
    r
}

fn native_loop(
    interp: &mut Interp,
    d: &DoLoop,
    env: &mut Env,
    base: usize,
    checks: bool,
) -> Result<Value> {
    let slot = trace_push(interp, &d.source, Mode::Native);
    let cap = interp.config.native_cap;
    let mut n = Native {
        d,
        base,
        checks,
        iteration: 0,
    };
    let result = loop {
        if n.iteration >= cap {
            return Err(Error::IterationCap { cap });
        }
        n.iteration += 1;
        let iteration = n.iteration;
        if checks {
            if let Some(g) = &d.spec.guard {
                let ok = interp
                    .eval(g, env)
                    .map_err(|e| in_loop(e, iteration, &n.alist(env), &d.alist_vars))?;
                if ok.is_nil() {
                    return Err(guard_failure(g, iteration, &n.alist(env), &d.alist_vars));
                }
            }
        }
        let flow = n
            .exec(interp, &d.body, env)
            .map_err(|e| in_loop(e, iteration, &n.alist(env), &d.alist_vars))?;
        match flow {
            Flow::Next => continue,
            Flow::Return(v) => break v,
            Flow::Finish => {
                trace_with(interp, slot, |t| t.finally_runs += 1);
                let Some(fin) = &d.finally else {
                    break Value::Nil;
                };
                let flow = n
                    .exec(interp, fin, env)
                    .map_err(|e| in_loop(e, iteration, &n.alist(env), &d.alist_vars))?;
                break match flow {
                    Flow::Return(v) => v,
                    _ => Value::Nil,
                };
            }
        }
    };
    let iterations = n.iteration;
    trace_with(interp, slot, |t| {
        t.iterations = iterations;
        t.result = Some(result.clone());
    });
    Ok(result)
}

fn run_for(interp: &mut Interp, f: &ForLoop, env: &mut Env, form: &Value) -> Result<Value> {
    let range = interp.eval(&f.range, env)?;
    let items = range.to_vec().ok_or_else(|| {
        Error::eval(format!(
            "loop$: the range {} evaluated to {}, which is not a true list",
            f.range,
            show(&range)
        ))
    })?;
    let mut sum = Integer::ZERO;
    let mut collected = Vec::new();
    for item in items {
        env.push((f.var.clone(), item));
        let v = interp.eval(&f.body, env);
        env.pop();
        let v = v?;
        match f.op {
            ForOp::Collect => collected.push(v),
            ForOp::Sum => match v.as_int() {
                Some(n) => sum = sum.add(n),
                None if interp.config.guard_check => {
                    return Err(Error::Guard(Box::new(GuardViolation {
                        call: show(form),
                        condition: format!("(ACL2-NUMBERP {})", show(&f.body)),
                        predicate: "ACL2-NUMBERP".into(),
                        arg_expr: Some(f.body.clone()),
                        arg_value: Some(v),
                    })))
                }
                None => {}
            },
        }
    }
    Ok(match f.op {
        ForOp::Sum => Value::Int(sum),
        ForOp::Collect => Value::list(collected),
    })
}

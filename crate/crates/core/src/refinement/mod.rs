//! Constrained functions, attachments, sampled constraint checking and the
//! scheduler driver.

use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::builtins::nfix;
use crate::kernel::{Callable, Constraint, EventPayload, Interp, Mode, Signature, World};
use crate::loops::{free_vars, MeasureValue};
use crate::sexpr::{show, Integer, Symbol, Value};

fn bad(msg: impl fmt::Display) -> Error {
    Error::World(format!("encapsulate: {msg}"))
}

fn shape_entry(v: &Value) -> Result<Option<Symbol>> {
    match v {
        Value::Sym(s) if s.name() == "*" => Ok(None),
        Value::Sym(s) if !s.is_keyword() => Ok(Some(s.clone())),
        other => Err(bad(format!("malformed signature entry {other}"))),
    }
}

/// Parses `((name arg...) => out)` where each arg is `*` or a stobj name and
/// `out` is `*`, a stobj name or `(mv ...)`.
pub fn parse_signature(v: &Value) -> Result<Signature> {
    let parts = v
        .to_vec()
        .filter(|p| p.len() == 3 && p[1].symbol_name() == Some("=>"))
        .ok_or_else(|| bad(format!("malformed signature {v}")))?;
    let call = parts[0]
        .to_vec()
        .filter(|c| !c.is_empty())
        .ok_or_else(|| bad(format!("malformed signature {v}")))?;
    let name = call[0]
        .as_symbol()
        .filter(|s| !s.is_keyword())
        .ok_or_else(|| bad(format!("malformed signature {v}")))?
        .clone();
    let inputs = call[1..]
        .iter()
        .map(shape_entry)
        .collect::<Result<Vec<_>>>()?;
    let outputs = match &parts[2] {
        o @ Value::Cons(_) if o.car().symbol_name() == Some("MV") => {
            let items = o.to_vec().unwrap_or_default();
            if items.len() < 3 {
                return Err(bad(format!("malformed output shape {o}")));
            }
            items[1..]
                .iter()
                .map(shape_entry)
                .collect::<Result<Vec<_>>>()?
        }
        o => vec![shape_entry(o)?],
    };
    Ok(Signature {
        name,
        inputs,
        outputs,
    })
}

/// `(encapsulate (sig...) (defthm name term)... (local ...)...)`. Local
/// events are skipped; theorems become constraints checked by sampling.
pub fn parse_encapsulate(form: &Value, _world: &World) -> Result<EventPayload> {
    let items = form.to_vec().ok_or_else(|| bad("malformed form"))?;
    let sigs = items
        .get(1)
        .and_then(Value::to_vec)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| bad("expected a non-empty list of signatures"))?
        .iter()
        .map(|s| parse_signature(s).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;
    let mut constraints = Vec::new();
    for ev in &items[2..] {
        match ev.car().symbol_name() {
            Some("LOCAL") => {}
            Some("DEFTHM") => {
                let parts = ev.to_vec().unwrap_or_default();
                let name = parts
                    .get(1)
                    .and_then(Value::as_symbol)
                    .ok_or_else(|| bad(format!("malformed defthm {ev}")))?
                    .clone();
                let term = parts
                    .get(2)
                    .cloned()
                    .ok_or_else(|| bad(format!("defthm {name} has no term")))?;
                if constraints.iter().any(|c: &Constraint| c.name == name) {
                    return Err(bad(format!("defthm {name} appears twice")));
                }
                constraints.push(Constraint { name, term });
            }
            _ => {
                return Err(bad(format!(
                    "only defthm and local events are supported inside encapsulate, got {ev}"
                )))
            }
        }
    }
    Ok(EventPayload::Signatures { sigs, constraints })
}

/// `(defattach f g)` or `(defattach (f g)...)`.
pub fn parse_defattach(form: &Value) -> Result<EventPayload> {
    let items = form
        .to_vec()
        .ok_or_else(|| Error::Attachment("defattach: malformed form".into()))?;
    let malformed = || Error::Attachment(format!("defattach: malformed form {form}"));
    let pair = |a: &Value, b: &Value| -> Option<(Symbol, Symbol)> {
        Some((a.as_symbol()?.clone(), b.as_symbol()?.clone()))
    };
    let pairs: Vec<(Symbol, Symbol)> = match &items[1..] {
        [a @ Value::Sym(_), b @ Value::Sym(_)] => vec![pair(a, b).ok_or_else(malformed)?],
        rest if !rest.is_empty() => rest
            .iter()
            .map(|p| match p.to_vec().as_deref() {
                Some([a, b]) => pair(a, b),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(malformed)?,
        _ => return Err(malformed()),
    };
    Ok(EventPayload::Defattach(pairs))
}

/// Names of constrained functions without an attachment.
pub fn unattached(world: &World) -> Vec<Symbol> {
    let mut out = Vec::new();
    for e in world.events() {
        if let EventPayload::Signatures { sigs, .. } = &e.payload {
            for s in sigs {
                if world.attachment(&s.name).is_none() {
                    out.push(s.name.clone());
                }
            }
        }
    }
    out
}

fn scheduler_stobj(interp: &Interp) -> Result<Symbol> {
    match interp.world().lookup(&Symbol::intern("EXEC")) {
        Some(Callable::Constrained(sig)) => sig
            .outputs
            .iter()
            .flatten()
            .next()
            .cloned()
            .ok_or_else(|| Error::Attachment("EXEC does not return a stobj".into())),
        _ => Err(Error::Attachment(
            "EXEC is not a constrained function".into(),
        )),
    }
}

fn proc_ids(interp: &mut Interp) -> Result<Vec<Value>> {
    let ids = interp.call_function("PROC-IDS", vec![])?;
    ids.to_vec()
        .ok_or_else(|| Error::eval(format!("PROC-IDS returned {}, not a true list", show(&ids))))
}

/// Σ nfix(rank p st) over the attached `proc-ids`.
pub fn sum_rank(interp: &mut Interp, st: &Value) -> Result<Integer> {
    let mut total = Integer::ZERO;
    for p in proc_ids(interp)? {
        let r = interp.call_function("RANK", vec![p, st.clone()])?;
        total = total.add(&nfix(&r));
    }
    Ok(total)
}

#[derive(Clone, Debug)]
pub struct RunReport {
    /// `sum-rank` on entry to each call of `run`.
    pub chain: Vec<MeasureValue>,
    /// Text printed by the run, including the completion report.
    pub output: String,
    pub value: Value,
}

impl RunReport {
    pub fn execs(&self) -> usize {
        self.chain.len().saturating_sub(1)
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.chain
            .windows(2)
            .all(|w| crate::loops::l_less(&w[1], &w[0]))
    }
}

/// Evaluates `(run <stobj>)` at the top level, recording its measure chain.
pub fn run_scheduler(interp: &mut Interp) -> Result<RunReport> {
    let st = scheduler_stobj(interp)?;
    interp.take_output();
    interp.enable_measure_log();
    let form = Value::list([Value::sym("RUN"), Value::Sym(st)]);
    let result = interp.eval_top(&form);
    let log = interp.take_measure_log();
    let output = interp.take_output();
    let run = Symbol::intern("RUN");
    let r = result?;
    Ok(RunReport {
        chain: log
            .into_iter()
            .filter(|(f, _)| *f == run)
            .map(|(_, m)| m)
            .collect(),
        output,
        value: r.value,
    })
}

#[derive(Clone, Debug)]
pub struct Counterexample {
    pub constraint: Symbol,
    pub bindings: Vec<(Symbol, String)>,
    pub state: String,
    /// Evaluation error, when the term did not evaluate at all.
    pub error: Option<String>,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b: Vec<String> = self
            .bindings
            .iter()
            .map(|(k, v)| format!("{k} = {v}"))
            .collect();
        write!(
            f,
            "{} fails with {} in state {}",
            self.constraint,
            b.join(", "),
            self.state
        )?;
        if let Some(e) = &self.error {
            write!(f, " ({e})")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ConstraintReport {
    pub seed: u64,
    pub trials: usize,
    pub checks: usize,
    pub failures: Vec<Counterexample>,
    pub per_constraint: Vec<(Symbol, usize)>,
}

impl ConstraintReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for ConstraintReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "check-constraints: seed {}, {} trials, {} checks, {} failures",
            self.seed,
            self.trials,
            self.checks,
            self.failures.len()
        )?;
        for (name, n) in &self.per_constraint {
            writeln!(f, "  {name}: {n} failures")?;
        }
        for c in self.failures.iter().take(10) {
            writeln!(f, "  counterexample: {c}")?;
        }
        Ok(())
    }
}

const MAX_WALK: usize = 8;

/// Samples states by random walks of ready-process execs from the live
/// scheduler stobj, then evaluates every constraint with its free variables
/// drawn from `proc-ids` (stobj-named variables get the sampled state).
pub fn check_constraints(
    interp: &mut Interp,
    seed: u64,
    trials: usize,
) -> Result<ConstraintReport> {
    let missing = unattached(interp.world());
    if !missing.is_empty() {
        let names: Vec<String> = missing.iter().map(|s| s.to_string()).collect();
        return Err(Error::Attachment(format!(
            "check-constraints: no attachment for {}",
            names.join(", ")
        )));
    }
    let saved = interp.config.mode;
    if saved != Mode::Logical {
        interp.set_mode(Mode::Logical);
    }
    let r = sample(interp, seed, trials);
    if saved != Mode::Logical {
        interp.set_mode(saved);
    }
    r
}

fn sample(interp: &mut Interp, seed: u64, trials: usize) -> Result<ConstraintReport> {
    let st_name = scheduler_stobj(interp)?;
    let start = interp
        .bank()
        .get(&st_name)
        .cloned()
        .ok_or_else(|| Error::Stobj(format!("no live instance of {st_name}")))?;
    let constraints: Vec<Constraint> = interp.world().constraints().to_vec();
    let vars: Vec<Vec<Symbol>> = constraints
        .iter()
        .map(|c| {
            let mut out = Vec::new();
            free_vars(&c.term, interp.world(), &mut Vec::new(), &mut out);
            out
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ConstraintReport {
        seed,
        trials,
        checks: 0,
        failures: Vec::new(),
        per_constraint: constraints.iter().map(|c| (c.name.clone(), 0)).collect(),
    };
    let ids = proc_ids(interp)?;
    if ids.is_empty() {
        return Err(Error::eval("PROC-IDS is empty; nothing to sample"));
    }
    for _ in 0..trials {
        let mut st = Value::Stobj(start.clone());
        let steps = rng.gen_range(0..=MAX_WALK);
        for _ in 0..steps {
            let p = ids.choose(&mut rng).expect("non-empty").clone();
            if interp
                .call_function("READY", vec![p.clone(), st.clone()])?
                .truthy()
            {
                st = interp.call_function("EXEC", vec![p, st])?;
            }
        }
        let state = match &st {
            Value::Stobj(s) => show(&s.logical_view()),
            other => show(other),
        };
        for (k, c) in constraints.iter().enumerate() {
            let bindings: Vec<(Symbol, Value)> = vars[k]
                .iter()
                .map(|v| {
                    let value = if interp.world().is_stobj(v) {
                        st.clone()
                    } else {
                        ids.choose(&mut rng).expect("non-empty").clone()
                    };
                    (v.clone(), value)
                })
                .collect();
            report.checks += 1;
            let outcome = interp.eval_with(&c.term, bindings.clone());
            let error = match outcome {
                Ok(v) if v.truthy() => continue,
                Ok(_) => None,
                Err(e) => Some(e.to_string()),
            };
            report.per_constraint[k].1 += 1;
            report.failures.push(Counterexample {
                constraint: c.name.clone(),
                bindings: bindings
                    .iter()
                    .filter(|(v, _)| !interp.world().is_stobj(v))
                    .map(|(v, x)| (v.clone(), show(x)))
                    .collect(),
                state: state.clone(),
                error,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::EvalConfig;
    use crate::sexpr::read_one;

    #[test]
    fn signature_shapes() {
        let s = parse_signature(&read_one("((exec * st) => st)").unwrap()).unwrap();
        assert_eq!(s.to_string(), "((EXEC * ST) => ST)");
        let s = parse_signature(&read_one("((proc-ids) => *)").unwrap()).unwrap();
        assert!(s.inputs.is_empty());
        assert!(parse_signature(&read_one("((f x) -> *)").unwrap()).is_err());
        assert!(parse_signature(&read_one("((f 3) => *)").unwrap()).is_err());
    }

    #[test]
    fn defattach_forms() {
        let EventPayload::Defattach(p) =
            parse_defattach(&read_one("(defattach f g)").unwrap()).unwrap()
        else {
            panic!()
        };
        assert_eq!(p.len(), 1);
        let EventPayload::Defattach(p) =
            parse_defattach(&read_one("(defattach (f g) (h k))").unwrap()).unwrap()
        else {
            panic!()
        };
        assert_eq!(p.len(), 2);
        assert!(parse_defattach(&read_one("(defattach f)").unwrap()).is_err());
    }

    #[test]
    fn unattached_call_is_an_error() {
        let mut i = Interp::new(EvalConfig::default());
        i.run_source(
            "(defstobj st fld) (encapsulate (((pick st) => *)) (local (defun pick (st) 1)))",
        )
        .unwrap();
        let e = i.eval_str("(pick st)").unwrap_err();
        assert!(matches!(e, Error::Attachment(_)), "{e}");
        assert!(i.eval_str("(encapsulate (((q st2) => *)))").is_err());
        i.run_source("(defun pick1 (st) (declare (xargs :stobjs (st))) (if (fld st) 1 2)) (defattach pick pick1)")
            .unwrap();
        assert_eq!(i.eval_str("(pick st)").unwrap(), Value::int(2));
        i.eval_str("(defun pick2 (x st) (declare (xargs :stobjs (st))) (if (fld st) x 2))")
            .unwrap();
        assert!(i.eval_str("(defattach pick pick2)").is_err());
    }
}

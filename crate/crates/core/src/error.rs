use std::fmt;

use thiserror::Error;

use crate::sexpr::{Symbol, Value};
use crate::stobjs::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("read error at {line}:{col}: {msg}")]
    Read {
        line: usize,
        col: usize,
        msg: String,
    },

    #[error("unbound variable {0}")]
    Unbound(Symbol),

    #[error("undefined function {name} in {form}")]
    UndefinedFunction { name: Symbol, form: String },

    #[error("{name} expects {expected} argument(s) but got {got} in {form}")]
    Arity {
        name: String,
        expected: String,
        got: usize,
        form: String,
    },

    #[error(transparent)]
    Guard(Box<GuardViolation>),

    #[error(transparent)]
    Linearity(LinearityReport),

    #[error(transparent)]
    Measure(Box<MeasureFailure>),

    #[error(
        "measure of {function} did not decrease on a recursive call: {callee} is not l< {caller}"
    )]
    CallMeasure {
        function: Symbol,
        caller: String,
        callee: String,
    },

    #[error(transparent)]
    LoopGuard(Box<LoopGuardFailure>),

    #[error("native loop exceeded the iteration cap of {cap}")]
    IterationCap { cap: u64 },

    #[error("loop$: {0}")]
    LoopSyntax(String),

    #[error("{0}")]
    Stobj(String),

    #[error("{0}")]
    World(String),

    #[error("{0}")]
    Attachment(String),

    #[error("{0}")]
    Eval(String),

    #[error("recursion depth limit of {0} exceeded")]
    Depth(usize),

    #[error("{inner}\n  at loop iteration {iteration}, ALIST {alist}{}", checkpoint_suffix(.checkpoint))]
    InLoop {
        iteration: u64,
        alist: String,
        checkpoint: Option<String>,
        inner: Box<Error>,
    },
}

fn checkpoint_suffix(cp: &Option<String>) -> String {
    match cp {
        Some(c) => format!("\n  failed check: {c}"),
        None => String::new(),
    }
}

impl Error {
    pub fn eval(msg: impl Into<String>) -> Error {
        Error::Eval(msg.into())
    }

    /// The innermost error, looking through loop-iteration context.
    pub fn root(&self) -> &Error {
        match self {
            Error::InLoop { inner, .. } => inner.root(),
            other => other,
        }
    }

    /// Guard, type, measure and iteration-cap failures: the errors that
    /// dynamic checking exists to surface.
    pub fn is_check_failure(&self) -> bool {
        matches!(
            self.root(),
            Error::Guard(_)
                | Error::LoopGuard(_)
                | Error::Measure(_)
                | Error::CallMeasure { .. }
                | Error::IterationCap { .. }
        )
    }
}

/// A builtin or user guard evaluated to NIL.
#[derive(Debug, Clone)]
pub struct GuardViolation {
    /// The call being evaluated, rendered.
    pub call: String,
    /// The failed condition, e.g. `(ACL2-NUMBERP SUM)`.
    pub condition: String,
    pub predicate: String,
    /// The argument expression the condition was applied to, when known.
    pub arg_expr: Option<Value>,
    pub arg_value: Option<Value>,
}

impl fmt::Display for GuardViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "guard violation in {}: {} is false",
            self.call, self.condition
        )?;
        if let (Some(expr), Some(val)) = (&self.arg_expr, &self.arg_value) {
            if expr != val {
                write!(f, " ({expr} = {val})")?;
            }
        }
        Ok(())
    }
}

impl std::error::Error for GuardViolation {}

#[derive(Debug, Clone)]
pub struct LinearityReport {
    pub context: String,
    pub violations: Vec<Violation>,
}

impl fmt::Display for LinearityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "single-threadedness violation in {}:", self.context)?;
        for v in &self.violations {
            write!(f, "\n  {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for LinearityReport {}

/// The `(t <error>)` branch of `do$`: the measure failed to decrease.
#[derive(Debug, Clone)]
pub struct MeasureFailure {
    pub loop_form: String,
    pub iteration: u64,
    pub old_alist: String,
    pub new_alist: String,
    pub old_measure: String,
    pub new_measure: String,
}

impl fmt::Display for MeasureFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "do$ reached (t <error>): measure did not decrease at iteration {}\n  \
             loop: {}\n  old measure {} with ALIST {}\n  new measure {} with ALIST {}",
            self.iteration,
            self.loop_form,
            self.old_measure,
            self.old_alist,
            self.new_measure,
            self.new_alist
        )
    }
}

impl std::error::Error for MeasureFailure {}

#[derive(Debug, Clone)]
pub enum LoopCheck {
    /// `:GUARD` term false at the start of an iteration.
    Guard { term: String },
    /// An `OF-TYPE` declaration violated by an assignment.
    OfType {
        var: Symbol,
        type_spec: String,
        value: String,
    },
}

#[derive(Debug, Clone)]
pub struct LoopGuardFailure {
    pub check: LoopCheck,
    pub iteration: u64,
    pub alist: String,
    pub checkpoint: String,
}

impl fmt::Display for LoopGuardFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.check {
            LoopCheck::Guard { term } => write!(
                f,
                "loop$ :GUARD {term} is false at the start of iteration {}",
                self.iteration
            )?,
            LoopCheck::OfType {
                var,
                type_spec,
                value,
            } => write!(
                f,
                "loop$ OF-TYPE violation: {var} assigned {value}, which is not of type {type_spec} (iteration {})",
                self.iteration
            )?,
        }
        write!(
            f,
            "\n  ALIST {}\n  failed check: {}",
            self.alist, self.checkpoint
        )
    }
}

impl std::error::Error for LoopGuardFailure {}

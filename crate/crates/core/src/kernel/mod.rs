//! The evaluator, the builtin table and the world of events.

pub mod builtins;
mod eval;
mod world;

pub use builtins::{Builtin, BuiltinError, BUILTINS};
pub use eval::{
    lookup_var, Env, EvalConfig, Interp, LambdaObject, Mode, NativeFault, TopResult, UndoReport,
    UndoTarget,
};
pub use world::{Callable, Constraint, Event, EventKind, EventPayload, Function, Signature, World};

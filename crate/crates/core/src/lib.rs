//! An applicative Lisp runtime with single-threaded objects (stobjs),
//! stobj-tables and `loop$` DO loops, run either through the logical
//! `do$` semantics or an in-place native path.

pub mod error;
pub mod kernel;
pub mod loops;
pub mod refinement;
pub mod session;
pub mod sexpr;
pub mod stobj_table;
pub mod stobjs;

pub use error::{Error, Result};
pub use kernel::{EvalConfig, Interp, Mode, TopResult, UndoTarget, World};
pub use session::{diff_run, run_transcript, Repl, SessionConfig, SessionMode};
pub use sexpr::{read, read_one, show, show_alist, Integer, Symbol, Value};
pub use stobj_table::TableRepr;
pub use stobjs::{Stobj, StobjSpec};

/// Runs `f` on a thread with a large stack, for deeply recursive programs.
pub fn run_with_stack<F, R>(f: F) -> R
where
    F: FnOnce() -> R + Send + 'static,
    R: Send + 'static,
{
    std::thread::Builder::new()
        .stack_size(512 << 20)
        .spawn(f)
        .expect("spawn evaluator thread")
        .join()
        .unwrap_or_else(|e| std::panic::resume_unwind(e))
}

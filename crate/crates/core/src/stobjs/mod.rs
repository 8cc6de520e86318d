//! Single-threaded objects: definitions, live instances, the linearity
//! checker and `stobj-let`.

mod define;
mod instance;
mod linearity;
mod stobj_let;

pub use define::parse_defstobj;
pub use instance::{
    scalar_type_ok, Field, FieldKind, FieldSpec, Stobj, StobjOp, StobjSpec, TABLE_OPS,
};
pub use linearity::{stobj_formals, Checker, Rule, Shape, Violation};
pub use stobj_let::{parse_stobj_let, ChildBinding, StobjLet};

pub(crate) use stobj_let::eval_stobj_let;

//! Surface syntax: values, reader and printer.

mod integer;
mod printer;
mod reader;
mod value;

pub use integer::Integer;
pub use printer::{show, show_alist};
pub use reader::{read, read_one, read_spanned, Pos};
pub use value::{Cons, ListIter, Symbol, Value};

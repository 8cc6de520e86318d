//! Shared fixtures for the benchmarks.

use dolisp::kernel::{EvalConfig, Interp, Mode};

/// A countdown DO loop summing squares of `n` down to 1.
pub fn countdown(n: u64) -> String {
    format!(
        "(loop$ WITH sum = 0 WITH i = {n} DO
           (if (zp i) (return sum)
             (let ((sq (* i i))) (progn (setq sum (+ sq sum)) (setq i (1- i))))))"
    )
}

/// The same loop as a FOR loop over an explicit list.
pub fn for_sum(n: u64) -> String {
    let items: Vec<String> = (1..=n).map(|k| k.to_string()).collect();
    format!("(loop$ FOR i in '({}) SUM (* i i))", items.join(" "))
}

/// A stobj-returning loop consing `n` squares onto FLD.
pub const STOBJ_SETUP: &str = "(defstobj st fld)";

pub fn stobj_loop(n: u64) -> String {
    format!(
        "(loop$ WITH i = {n} DO :VALUES (st)
           (if (zp i) (return st)
             (progn (setq st (update-fld (cons (* i i) (fld st)) st)) (setq i (1- i)))))"
    )
}

pub fn interp(mode: Mode, setup: &str) -> Interp {
    let mut i = Interp::new(EvalConfig::with_mode(mode));
    i.run_source(setup).expect("setup");
    i
}

/// Closed form of the countdown loop.
pub fn sum_squares(n: u64) -> u64 {
    n * (n + 1) * (2 * n + 1) / 6
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_evaluate() {
        for mode in [Mode::Logical, Mode::Native] {
            let mut i = interp(mode, STOBJ_SETUP);
            assert_eq!(
                i.eval_str(&countdown(20)).unwrap().to_string(),
                sum_squares(20).to_string()
            );
            assert_eq!(
                i.eval_str(&for_sum(20)).unwrap().to_string(),
                sum_squares(20).to_string()
            );
            i.eval_str(&stobj_loop(3)).unwrap();
            assert_eq!(i.eval_str("(fld st)").unwrap().to_string(), "(1 4 9)");
        }
    }
}

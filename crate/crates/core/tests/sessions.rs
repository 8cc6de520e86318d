use std::path::PathBuf;

use dolisp::kernel::NativeFault;
use dolisp::session::{diff_run, Repl, SessionConfig};

fn corpus(rel: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(rel);
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn broken_native_path_is_detected() {
    let config = SessionConfig {
        fault: Some(NativeFault::IgnoreFirstSetq),
        ..SessionConfig::default()
    };
    let r = diff_run(&corpus("loops.lisp"), &config).unwrap();
    let d = r.divergence.clone().expect("fault must surface");
    assert_ne!(d.logical, d.native);
    assert!(r.to_string().starts_with("divergence at form"));
}

#[test]
fn guard_failures_are_skipped_with_reason() {
    let r = diff_run(
        &corpus("errors/f_unguarded.lisp"),
        &SessionConfig::default(),
    )
    .unwrap();
    assert!(r.equivalent());
    assert_eq!(r.skipped.len(), 1);
    assert!(r.skipped[0].reason.contains("ACL2-NUMBERP"));
}

#[test]
fn repl_undo_retracts_table_keys() {
    let mut repl = Repl::new(SessionConfig::default());
    for line in corpus("switch.lisp").lines() {
        repl.feed(line);
    }
    assert_eq!(repl.feed("(tbl-boundp 'switch stobj-table)").output, "T\n");
    let out = repl.feed(":ubt switch").output;
    assert!(out.contains("table keys retracted: 1"), "{out}");
    assert_eq!(
        repl.feed("(tbl-boundp 'switch stobj-table)").output,
        "NIL\n"
    );
    assert_eq!(repl.feed("(tbl-count stobj-table)").output, "0\n");
    assert!(repl
        .feed("(flip-switch stobj-table)")
        .output
        .starts_with("error"));
}

#[test]
fn repl_mode_switch_keeps_state() {
    let mut repl = Repl::new(SessionConfig::default());
    for line in corpus("do_examples.lisp").lines().take(20) {
        repl.feed(line);
    }
    assert_eq!(repl.feed("(fld st)").output, "(16 9 4 1)\n");
    repl.feed(":mode native");
    assert_eq!(repl.feed("(fld st)").output, "(16 9 4 1)\n");
    assert_eq!(repl.feed("(update-fld 7 st)").output, "<ST>\n");
    repl.feed(":mode logical");
    assert_eq!(repl.feed("(fld st)").output, "7\n");
}

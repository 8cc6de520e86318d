use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dolisp::kernel::Mode;
use dolisp::sexpr::read_one;
use dolisp_bench::{countdown, for_sum, interp, stobj_loop, STOBJ_SETUP};

fn do_loops(c: &mut Criterion) {
    let mut g = c.benchmark_group("do-countdown");
    for n in [100u64, 1000] {
        let form = read_one(&countdown(n)).unwrap();
        for mode in [Mode::Logical, Mode::Native] {
            let mut i = interp(mode, "");
            g.bench_with_input(BenchmarkId::new(mode.to_string(), n), &form, |b, f| {
                b.iter(|| black_box(i.eval_top(f).unwrap()))
            });
        }
    }
    g.finish();
}

fn for_loops(c: &mut Criterion) {
    let form = read_one(&for_sum(1000)).unwrap();
    let mut i = interp(Mode::Native, "");
    c.bench_function("for-sum/1000", |b| {
        b.iter(|| black_box(i.eval_top(&form).unwrap()))
    });
}

fn stobj_loops(c: &mut Criterion) {
    let mut g = c.benchmark_group("stobj-loop");
    let form = read_one(&stobj_loop(200)).unwrap();
    let reset = read_one("(update-fld nil st)").unwrap();
    for mode in [Mode::Logical, Mode::Native] {
        let mut i = interp(mode, STOBJ_SETUP);
        g.bench_function(mode.to_string(), |b| {
            b.iter(|| {
                i.eval_top(&reset).unwrap();
                black_box(i.eval_top(&form).unwrap())
            })
        });
    }
    g.finish();
}

criterion_group!(benches, do_loops, for_loops, stobj_loops);
criterion_main!(benches);

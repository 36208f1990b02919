//! Parallel vs sequential throughput on the two hot stages: equality
//! saturation (match collection fans out per rule) and chaining-path
//! enumeration (fans out per source). Both strategies produce identical
//! results, so the comparison is purely about wall clock.
//!
//!     cargo bench -p synth-core --bench pipeline
//!
//! The verdict depends on the host: the fan-out pays for its coordination
//! only when cores are available. On a single-core machine the sequential
//! baseline wins every group by the overhead margin, which is itself a
//! useful number to know.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use synth_core::egraph::egraph_from_program;
use synth_core::ir::{parse_program, Program};
use synth_core::library::ImplLibrary;
use synth_core::pipeline::build_rules;
use synth_core::rules::{saturate, saturate_seq, SaturationLimits};
use synth_core::suite::{generate_kernel, GenSpec};
use synth_core::timing::{
    build_catalog, enumerate_top_k_paths, enumerate_top_k_paths_seq, mhz_to_ns,
};

fn kernel(ops: usize, float: bool) -> Program {
    let spec = GenSpec { ops, float, seed: 7, ..GenSpec::default() };
    parse_program(&generate_kernel(&spec)).expect("generated kernel parses")
}

fn bench_saturation(c: &mut Criterion) {
    let lib = ImplLibrary::sample();
    let rules = build_rules(&lib, false);
    let limits = SaturationLimits::default();
    let mut group = c.benchmark_group("saturate");
    group.sample_size(20);
    for ops in [60usize, 240, 480] {
        let prog = kernel(ops, false);
        group.bench_with_input(BenchmarkId::new("parallel", ops), &prog, |b, p| {
            b.iter(|| {
                let mut g = egraph_from_program(p);
                saturate(&mut g, &rules, &limits)
            })
        });
        group.bench_with_input(BenchmarkId::new("sequential", ops), &prog, |b, p| {
            b.iter(|| {
                let mut g = egraph_from_program(p);
                saturate_seq(&mut g, &rules, &limits)
            })
        });
    }
    group.finish();
}

fn bench_path_enumeration(c: &mut Criterion) {
    let lib = ImplLibrary::sample();
    let rules = build_rules(&lib, false);
    let limits = SaturationLimits::default();
    let mut group = c.benchmark_group("enumerate_paths");
    group.sample_size(20);
    for ops in [60usize, 240, 480] {
        let prog = kernel(ops, false);
        let mut g = egraph_from_program(&prog);
        saturate(&mut g, &rules, &limits);
        let cat = build_catalog(&g, &lib, mhz_to_ns(400.0)).expect("catalog");
        group.bench_with_input(BenchmarkId::new("parallel", ops), &cat, |b, cat| {
            b.iter(|| enumerate_top_k_paths(cat, 3, 20, false))
        });
        group.bench_with_input(BenchmarkId::new("sequential", ops), &cat, |b, cat| {
            b.iter(|| enumerate_top_k_paths_seq(cat, 3, 20, false))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_saturation, bench_path_enumeration);
criterion_main!(benches);

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use netwalk::assembler::assemble_graph;
use netwalk::stats::compute_stats;
use netwalk::synthetic::{sample_dcsbm, DcSbmSpec};
use netwalk::walker::{sample_walks, transition_counts, WalkConfig};

fn graphs(c: &mut Criterion) {
    let spec = DcSbmSpec::planted(3, 100, 1500.0, 150.0, 1.2, 2.0).unwrap();
    let g = sample_dcsbm(&spec, 1).unwrap().graph;
    let cfg = WalkConfig { batch_size: 20_000, ..WalkConfig::default() };
    let scores = transition_counts(&sample_walks(&g, cfg, 2).unwrap(), g.n());

    c.bench_function("assemble", |b| b.iter(|| black_box(assemble_graph(&scores, g.m(), 3).unwrap())));
    c.bench_function("statistics", |b| b.iter(|| black_box(compute_stats(&g, None).unwrap())));
    c.bench_function("dcsbm sample", |b| b.iter(|| black_box(sample_dcsbm(&spec, 4).unwrap())));
}

criterion_group!(benches, graphs);
criterion_main!(benches);

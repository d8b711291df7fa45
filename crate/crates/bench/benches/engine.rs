use criterion::{criterion_group, criterion_main, Criterion};
use esms_bench::short_desk;
use esms_core::anomaly::DetectorKind;
use esms_core::engine::build_world;
use esms_core::run;

fn desk_runs(c: &mut Criterion) {
    let cfg = short_desk(2);
    let world = build_world(&cfg, 1).expect("desk world");
    let mut g = c.benchmark_group("desk_two_days");
    g.sample_size(10);
    g.bench_function("baseline", |b| {
        let mut c = cfg.clone();
        c.attack.enabled = false;
        b.iter(|| run(&c, &world, 1).unwrap())
    });
    g.bench_function("attack_kld", |b| {
        let mut c = cfg.clone();
        c.detector = Some(DetectorKind::Kld);
        b.iter(|| run(&c, &world, 1).unwrap())
    });
    g.finish();
}

criterion_group!(benches, desk_runs);
criterion_main!(benches);

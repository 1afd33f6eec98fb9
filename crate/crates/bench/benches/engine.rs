use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use orbizeta_bench::fixture_problem;
use orbizeta_core::power::power_family;
use orbizeta_core::{numeric_spectrum, Backend, ResidueEngine};

fn power(c: &mut Criterion) {
    let p = fixture_problem("torus_dihedral_potential.json");
    let mut g = c.benchmark_group("power_family");
    for k in [2, 4, 6] {
        g.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, &k| {
            b.iter(|| power_family(black_box(&p.symbol), k).unwrap())
        });
    }
    g.finish();
}

fn report(c: &mut Criterion) {
    let mut g = c.benchmark_group("residue_report");
    g.sample_size(10);
    for name in ["torus_reflection.json", "torus_dihedral_potential.json"] {
        let p = fixture_problem(name);
        let engine = ResidueEngine::new(p.group.clone(), p.symbol.clone(), 4, Backend::Exact).unwrap();
        g.bench_function(name.trim_end_matches(".json"), |b| b.iter(|| engine.report(true).unwrap()));
    }
    g.finish();
}

fn spectrum(c: &mut Criterion) {
    let p = fixture_problem("torus_dihedral_potential.json");
    let model = p.model.expect("torus fixture");
    let mut g = c.benchmark_group("numeric_spectrum");
    g.sample_size(10);
    g.bench_function("dihedral_potential", |b| b.iter(|| numeric_spectrum(black_box(&model)).unwrap()));
    g.finish();
}

criterion_group!(benches, power, report, spectrum);
criterion_main!(benches);

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use windsr::coords::make_grid;
use windsr::data::{bicubic_resize, synth_wind, Modality};
use windsr::{Tape, Tensor};

fn conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv2d");
    for (cin, cout, hw) in [(1, 16, 48), (32, 32, 12), (64, 64, 6)] {
        let x = Tensor::<f32>::full(vec![cin, hw, hw], 0.5);
        let w = Tensor::<f32>::full(vec![cout, cin, 3, 3], 0.01);
        let b = Tensor::<f32>::zeros(vec![cout]);
        group.bench_with_input(BenchmarkId::new("fwd_bwd", format!("{cin}x{hw}->{cout}")), &(), |bench, _| {
            bench.iter(|| {
                let mut tape = Tape::new();
                let xv = tape.leaf(x.clone(), true);
                let wv = tape.leaf(w.clone(), true);
                let bv = tape.leaf(b.clone(), true);
                let y = tape.conv2d(xv, wv, bv, 1, 1).unwrap();
                let l = tape.sum(y).unwrap();
                tape.backward(l).unwrap();
            })
        });
    }
    group.finish();
}

fn bicubic(c: &mut Criterion) {
    let (full, _) = synth_wind(0, 150, 200).unwrap();
    c.bench_function("bicubic 150x200 -> 48x64", |b| b.iter(|| bicubic_resize(&full, 48, 64).unwrap()));
    c.bench_function("bicubic 150x200 -> 144x192", |b| b.iter(|| bicubic_resize(&full, 144, 192).unwrap()));
}

fn decode(c: &mut Criterion) {
    let bundle = windsr_bench::smoke_model();
    let fields = windsr_bench::fields(1);
    let x = bicubic_resize(fields[0].get(Modality::M0), 48, 64).unwrap();
    let mut group = c.benchmark_group("predict");
    group.sample_size(10);
    for s in [1.0, 2.0, 3.0] {
        let (h, w) = ((48.0 * s) as usize, (64.0 * s) as usize);
        assert_eq!(make_grid(h, w).unwrap().len(), h * w);
        group.bench_with_input(BenchmarkId::new("self", s), &s, |b, _| {
            b.iter(|| bundle.predict(&x, Modality::M0, Modality::M0, h, w).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, conv, bicubic, decode);
criterion_main!(benches);

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use splitnlc::fiberchannel::{propagate_fiber, FiberParams, SsfmConfig};
use splitnlc::labharness::{Experiment, ExperimentConfig};
use splitnlc::nlc::edc;
use splitnlc::{DualPolSignal, LinkSpec, Scheme, SpanSpec, C64};

/// Deterministic pseudo-random test field of `len` samples at roughly 1 mW.
fn test_signal(len: usize) -> DualPolSignal {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let scale = 0.03;
    let mut field = || (0..len).map(|_| C64::new(next(), next()) * scale).collect::<Vec<_>>();
    let (x, y) = (field(), field());
    DualPolSignal::new(x, y, 198e9).expect("valid signal")
}

fn ssfm_span(c: &mut Criterion) {
    let signal = test_signal(1 << 15);
    let fiber = FiberParams::default();
    let cfg = SsfmConfig { steps_per_span: 100, ..SsfmConfig::default() };
    c.bench_function("ssfm span 32k samples 100 steps", |b| {
        b.iter(|| propagate_fiber(&signal, &fiber, &cfg, 1.0).unwrap())
    });
}

fn edc_link(c: &mut Criterion) {
    let signal = test_signal(1 << 15);
    let link = LinkSpec::uniform(16, SpanSpec::transparent(FiberParams::default(), f64::NEG_INFINITY));
    c.bench_function("edc 16 spans 32k samples", |b| {
        b.iter_batched(|| signal.clone(), |s| edc(&s, &link).unwrap(), BatchSize::LargeInput)
    });
}

fn run_point(c: &mut Criterion) {
    let mut cfg = ExperimentConfig::default();
    cfg.superchannel.modulation.payload_symbols = 4096;
    cfg.ssfm.steps_per_span = 20;
    cfg.seeds.realizations = 1;
    let exp = Experiment::new(cfg).unwrap();
    let mut group = c.benchmark_group("run_point");
    group.sample_size(10);
    group.bench_function("4 spans half split", |b| {
        b.iter(|| exp.run_point(4, Scheme::Split { tx_spans: 2 }, 2.0, 0).unwrap())
    });
    group.finish();
}

criterion_group!(benches, ssfm_span, edc_link, run_point);
criterion_main!(benches);

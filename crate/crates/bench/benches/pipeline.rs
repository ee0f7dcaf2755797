use std::hint::black_box;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use pktsig::detection::{build_stream, compile_signatures, run_matchers};
use pktsig::synth::{generate, write_outputs, TraceProfile};
use pktsig::training::{dbscan, min_pts_for, PairPattern, PairPoint};
use pktsig::{parse_capture, train, Capture, DetectMode, DetectOptions, EventLog, IngestOptions, MatchStrategy, Timestamp, TrainOptions};

const PROFILE: &str = include_str!("../../../profiles/plug.toml");

struct Trace {
    capture: Capture,
    events: EventLog,
    roster: pktsig::EndpointRoster,
}

fn trace(seed: u64) -> Trace {
    let profile = TraceProfile::parse(PROFILE).expect("profile");
    let gen = generate(&profile, seed).expect("generate");
    let dir: PathBuf = std::env::temp_dir().join(format!("pktsig-bench-{}-{seed}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    let paths = write_outputs(&gen, &dir).expect("write");
    let capture = parse_capture(&paths.capture, IngestOptions::layer3(), &gen.roster).expect("parse");
    let _ = std::fs::remove_dir_all(&dir);
    Trace {
        capture,
        events: gen.events,
        roster: gen.roster,
    }
}

/// Events-per-label clusters of jittered points plus uniform scatter.
fn points(events: usize, clusters: usize, scatter: usize) -> Vec<PairPoint> {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let mut next = move |m: u32| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state % m as u64) as u32
    };
    let mut out = Vec::new();
    for c in 0..clusters as u32 {
        for e in 0..events as i64 {
            out.push(PairPoint {
                pattern: PairPattern::ClientServer,
                len1: 200 + 97 * c + next(6),
                len2: 400 + 131 * c + next(6),
                ts: Timestamp(e * 60_000_000 + c as i64),
            });
        }
    }
    for i in 0..scatter as i64 {
        out.push(PairPoint {
            pattern: PairPattern::ClientServer,
            len1: next(1500),
            len2: next(1500),
            ts: Timestamp(i * 1_000),
        });
    }
    out
}

fn bench_dbscan(c: &mut Criterion) {
    let mut g = c.benchmark_group("dbscan");
    for (events, clusters, scatter) in [(50, 4, 1_000), (100, 8, 10_000)] {
        let pts = points(events, clusters, scatter);
        g.throughput(Throughput::Elements(pts.len() as u64));
        g.bench_function(format!("{}pts", pts.len()), |b| {
            b.iter(|| dbscan(black_box(&pts), 10.0, min_pts_for(events)))
        });
    }
    g.finish();
}

fn bench_train(c: &mut Criterion) {
    let t = trace(1);
    let opts = TrainOptions::new("plug");
    c.bench_function("train/plug", |b| {
        b.iter(|| train(black_box(&t.capture), &t.events, &t.roster, &opts).expect("train"))
    });
}

fn bench_detect(c: &mut Criterion) {
    let train_trace = trace(1);
    let sigs = train(&train_trace.capture, &train_trace.events, &train_trace.roster, &TrainOptions::new("plug"))
        .expect("train")
        .signatures;
    let t = trace(2);
    let mut g = c.benchmark_group("detect");
    for mode in [DetectMode::Wan, DetectMode::Wifi] {
        let opts = DetectOptions::new(mode, MatchStrategy::Range);
        let (stream, _) = build_stream(&t.capture, &opts).expect("stream");
        let compiled = compile_signatures(&sigs, &opts);
        g.throughput(Throughput::Elements(stream.len() as u64));
        g.bench_function(format!("{mode:?}").to_lowercase(), |b| {
            b.iter(|| run_matchers(black_box(&stream), &compiled, mode.semantics()))
        });
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = bench_dbscan, bench_train, bench_detect
}
criterion_main!(benches);

//! Acceptance suite: one line per criterion, non-zero exit on any failure.

mod common;

use std::time::{Duration, Instant};

use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::fixtures::{materialize, plug_profile, THREE_BACKGROUND_FLOWS};
use common::oracle::{dbscan_reference, match_reference};
use pktsig::defense::{
    detect_direction_only, detect_tunnel, direction_pattern, score_defense, simulate_padding, simulate_stp,
    DefenseConfig, DefenseStrategy,
};
use pktsig::detection::{merge_flows, run_matchers, score_matches, CompiledSignature, StreamPacket};
use pktsig::signature::{
    compare_signatures, detection_window_ms, effective_bounds, file, range_bounds, Bound, CommClass, DurationStats,
    MatchBounds, PositionSpec, SetSpec,
};
use pktsig::synth::{addr, TraceProfile};
use pktsig::training::{dbscan, prune_clusters, PairCluster, PairPattern, PairPoint};
use pktsig::{detect, train, DetectMode, DetectOptions, Direction, MatchStrategy, Signature, Timestamp, TrainOptions};

use Direction::{ClientToServer as C, ServerToClient as S};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed <= limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn signature(id: &str, label: &str, sets: Vec<Vec<PositionSpec>>, max_ms: u64) -> Signature {
    Signature {
        id: id.into(),
        device: id.split('-').next().unwrap().into(),
        label: label.into(),
        comm_class: CommClass::DeviceCloud,
        sets: sets.into_iter().map(|positions| SetSpec { positions }).collect(),
        duration: DurationStats {
            min_ms: 1,
            avg_ms: max_ms / 2,
            max_ms,
        },
        layer2_offset: 80,
        provenance: None,
    }
}

fn range_arithmetic() -> Outcome {
    let core = [(338, 339), (541, 542)];
    let start = Instant::now();
    let got = range_bounds(&core, 10.0);
    let elapsed = start.elapsed();
    check(got == vec![(328, 349), (531, 552)], || format!("bounds {got:?}"))?;
    within(elapsed, Duration::from_millis(1))?;

    // The same arithmetic through a signature whose varied positions widen.
    let sig = signature(
        "cam-on",
        "ON",
        vec![
            vec![PositionSpec::ranged(C, 338, 339), PositionSpec::ranged(S, 541, 542)],
            vec![PositionSpec::exact(C, 780), PositionSpec::exact(S, 1243)],
        ],
        194,
    );
    let b = effective_bounds(&sig, &MatchStrategy::Range, std::slice::from_ref(&sig), 10.0);
    let first: Vec<(u32, u32)> = b.sets[0].iter().map(|x| (x.lower, x.upper)).collect();
    check(first == vec![(328, 349), (531, 552)], || format!("signature bounds {first:?}"))?;
    Ok(format!("C:[328,349] S:[531,552] in {elapsed:?}"))
}

fn detection_window() -> Outcome {
    let w = detection_window_ms(204);
    check(w == 224, || format!("got {w}"))?;
    Ok("204 ms -> 224 ms".into())
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let profile = plug_profile(50, 2.0, 0.5, THREE_BACKGROUND_FLOWS);
    let training = materialize(&profile, 31, &dir.path().join("train"));
    let mut opts = TrainOptions::new("plug");
    opts.window_us = 500_000;
    let result = train(&training.capture, &training.gen.events, &training.gen.roster, &opts).map_err(|e| e.to_string())?;
    let mut sigs = result.signatures.clone();
    sigs.sort_by(|a, b| a.label.cmp(&b.label));
    let shapes: Vec<String> = sigs.iter().map(|s| format!("{}={s}", s.label)).collect();
    check(shapes == ["OFF=S1: C-557 S-1294", "ON=S1: C-556 S-1293"], || format!("trained {shapes:?}"))?;

    let fresh = materialize(&profile, 32, &dir.path().join("test"));
    let mut summary = Vec::new();
    for mode in [DetectMode::Wan, DetectMode::Wifi] {
        let det = detect(&fresh.capture, &result.signatures, &DetectOptions::new(mode, MatchStrategy::Range))
            .map_err(|e| e.to_string())?;
        for score in score_matches(&det.matches, &fresh.gen.events, 500_000) {
            check(score.events == 50 && score.detected == 50 && score.false_positives == 0, || {
                format!("{mode:?} {}: {}/{} detected, {} FP", score.label, score.detected, score.events, score.false_positives)
            })?;
            summary.push(format!("{mode:?} {} 50/50", score.label));
        }
        check(det.matches.len() == 100, || format!("{mode:?}: {} matches", det.matches.len()))?;
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(10))?;
    Ok(format!("{}, 0 FP, {elapsed:?}", summary.join(", ")))
}

fn random_points(rng: &mut ChaCha8Rng) -> Vec<PairPoint> {
    let m = rng.gen_range(1..=2000);
    let patterns = [
        PairPattern::ClientServer,
        PairPattern::ServerClient,
        PairPattern::ClientNil,
        PairPattern::ServerNil,
    ];
    let centers: Vec<(PairPattern, u32, u32)> = (0..rng.gen_range(1..6))
        .map(|_| {
            let p = patterns[rng.gen_range(0..4)];
            let nil = matches!(p, PairPattern::ClientNil | PairPattern::ServerNil);
            (p, rng.gen_range(60..1500), if nil { 0 } else { rng.gen_range(60..1500) })
        })
        .collect();
    let spread = rng.gen_range(0..16) as i64;
    let noise = rng.gen_range(0.0..0.3);
    (0..m)
        .map(|_| {
            let (pattern, len1, len2) = if rng.gen_bool(noise) {
                let p = patterns[rng.gen_range(0..4)];
                let nil = matches!(p, PairPattern::ClientNil | PairPattern::ServerNil);
                (p, rng.gen_range(60..1500), if nil { 0 } else { rng.gen_range(60..1500) })
            } else {
                let (p, a, b) = centers[rng.gen_range(0..centers.len())];
                let jitter = |x: u32, rng: &mut ChaCha8Rng| (x as i64 + rng.gen_range(-spread..=spread)).max(1) as u32;
                let b = if b == 0 { 0 } else { jitter(b, rng) };
                (p, jitter(a, rng), b)
            };
            PairPoint {
                pattern,
                len1,
                len2,
                ts: Timestamp(rng.gen_range(0..(m as i64 / 2 + 1))),
            }
        })
        .collect()
}

fn dbscan_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xdb5c);
    let mut total = 0;
    for trial in 0..200 {
        let points = random_points(&mut rng);
        let eps = [5u32, 10, 15][rng.gen_range(0..3)];
        let min_pts = rng.gen_range(1..60);
        let mut got = dbscan(&points, eps as f64, min_pts);
        got.noise.sort_unstable();
        let want = dbscan_reference(&points, eps, min_pts);
        check(got == want, || {
            format!(
                "dataset {trial} (m={}, eps={eps}, min_pts={min_pts}): {} clusters vs {} expected",
                points.len(),
                got.clusters.len(),
                want.clusters.len()
            )
        })?;
        total += points.len();
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(60))?;
    Ok(format!("200 datasets, {total} points, {elapsed:?}"))
}

fn random_case(rng: &mut ChaCha8Rng) -> (Vec<StreamPacket>, Vec<CompiledSignature>) {
    let alphabet = [(C, 100), (C, 101), (C, 200), (S, 100), (S, 300), (S, 301)];
    let flows = rng.gen_range(1..=3);
    let total = rng.gen_range(0..=500);
    let mut per_flow: Vec<Vec<(Timestamp, Direction, u32)>> = vec![Vec::new(); flows];
    let mut clocks = vec![0i64; flows];
    for _ in 0..total {
        let f = rng.gen_range(0..flows);
        clocks[f] += rng.gen_range(1..40_000);
        let (d, l) = alphabet[rng.gen_range(0..alphabet.len())];
        per_flow[f].push((Timestamp(clocks[f]), d, l));
    }
    let (stream, _) = merge_flows(&per_flow);
    let sigs = (0..rng.gen_range(1..=3))
        .map(|_| {
            let n = rng.gen_range(2..=4);
            let split = if n >= 2 && rng.gen_bool(0.5) { rng.gen_range(1..n) } else { n };
            let bounds: Vec<Bound> = (0..n)
                .map(|_| {
                    let (direction, l) = alphabet[rng.gen_range(0..alphabet.len())];
                    let widen = rng.gen_range(0..=1);
                    Bound {
                        direction,
                        lower: l - widen,
                        upper: l + widen,
                    }
                })
                .collect();
            let sets = if split < n {
                vec![bounds[..split].to_vec(), bounds[split..].to_vec()]
            } else {
                vec![bounds]
            };
            CompiledSignature::new(MatchBounds { sets }, rng.gen_range(20..400))
        })
        .collect();
    (stream, sigs)
}

fn detection_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xde7ec7);
    let mut matches = [0usize; 2];
    for (mi, semantics) in [pktsig::detection::Semantics::Reset, pktsig::detection::Semantics::Ignore]
        .into_iter()
        .enumerate()
    {
        for trial in 0..1000 {
            let (stream, sigs) = random_case(&mut rng);
            let mut got: Vec<(usize, Vec<Vec<usize>>)> = run_matchers(&stream, &sigs, semantics)
                .into_iter()
                .map(|m| (m.signature, m.sets.iter().map(|s| s.iter().map(|h| h.index).collect()).collect()))
                .collect();
            got.sort_by_key(|(si, m): &(usize, Vec<Vec<usize>>)| (*m.last().unwrap().last().unwrap(), *si));
            let want = match_reference(&stream, &sigs, semantics);
            check(got == want, || {
                format!("{semantics:?} trial {trial}: engine {} matches, reference {}", got.len(), want.len())
            })?;
            matches[mi] += got.len();
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(120))?;
    Ok(format!(
        "1000 WAN traces ({} matches) + 1000 WiFi traces ({} matches), {elapsed:?}",
        matches[0], matches[1]
    ))
}

fn pruning_bounds() -> Outcome {
    let cluster = |f: usize| PairCluster {
        members: (0..f).collect(),
        core: (0..f).collect(),
        pattern: PairPattern::ClientServer,
    };
    let kept: Vec<usize> = prune_clusters((40..=60).map(cluster).collect(), 50)
        .iter()
        .map(PairCluster::frequency)
        .collect();
    check(kept == (45..=55).collect::<Vec<_>>(), || format!("kept {kept:?}"))?;
    Ok("n=50 keeps 45..=55, drops 44 and 56".into())
}

fn defense_profile() -> TraceProfile {
    TraceProfile::parse(
        r#"
        device = "plug"
        n_per_label = 100
        event_spacing_s = 3.0
        window_s = 1.0
        [[events]]
        label = "ON"
        [[events.sets]]
        packets = ["C-556", "S-1293"]
        [[background]]
        kind = "random"
        rate_per_s = 60.0
        request = [60, 500]
        reply = [60, 1400]
        connections = 4
        host = "phone"
        [[background]]
        kind = "periodic"
        period_s = 2.3
        request = [120, 180]
        reply = [200, 320]
        "#,
    )
    .expect("defense profile")
}

fn plug_on() -> Signature {
    signature("plug-on", "ON", vec![vec![PositionSpec::exact(C, 556), PositionSpec::exact(S, 1293)]], 204)
}

fn defense_reproduction() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let w = materialize(&defense_profile(), 71, dir.path());
    let sig = plug_on();
    let pattern = direction_pattern(&sig);
    let window = detection_window_ms(sig.duration.max_ms);
    let truth: Vec<Timestamp> = w.gen.events.entries.iter().map(|e| e.ts).collect();
    let tolerance = (w.gen.profile.window_s * 1e6) as i64;

    let mut counts = Vec::new();
    for strategy in [DefenseStrategy::PadMtuVpn, DefenseStrategy::PadMtuTlsPerConn, DefenseStrategy::PadMtuHybrid] {
        let mut cfg = DefenseConfig::new(strategy);
        if strategy == DefenseStrategy::PadMtuTlsPerConn {
            cfg.servers = Some(vec![addr::event_server(0)]);
        }
        let view = simulate_padding(&w.capture, &w.gen.roster, &cfg).map_err(|e| e.to_string())?;
        let hits = detect_direction_only(&view, &pattern, window);
        let starts: Vec<Timestamp> = hits.iter().map(|h| h.start).collect();
        counts.push((strategy, score_defense(&starts, &truth, tolerance)));
    }
    let (vpn, tls, hybrid) = (&counts[0].1, &counts[1].1, &counts[2].1);
    check(vpn.positives >= 10 * truth.len(), || format!("VPN positives {} for {} events", vpn.positives, truth.len()))?;
    check(tls.positives == 100 && tls.false_positives == 0 && tls.true_positives == 100, || {
        format!("per-connection: {} positives, {} FP", tls.positives, tls.false_positives)
    })?;
    check(tls.positives < hybrid.positives && hybrid.positives < vpn.positives, || {
        format!("hybrid {} not strictly between {} and {}", hybrid.positives, tls.positives, vpn.positives)
    })?;
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(30))?;
    Ok(format!(
        "VPN {} positives ({:.1}/event), per-connection {} / 0 FP, hybrid {}, {elapsed:?}",
        vpn.positives, vpn.positives_per_event, tls.positives, hybrid.positives
    ))
}

fn stp_invariance() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let profile = TraceProfile::parse(
        r#"
        device = "plug"
        n_per_label = 100
        event_spacing_s = 20.0
        window_s = 5.0
        [[events]]
        label = "ON"
        [[events.sets]]
        packets = ["C-556", "S-1293"]
        [[background]]
        kind = "random"
        rate_per_s = 2.0
        request = [60, 500]
        reply = [60, 1400]
        "#,
    )
    .map_err(|e| e.to_string())?;
    let w = materialize(&profile, 81, dir.path());
    let sig = plug_on();
    let mut cfg = DefenseConfig::new(DefenseStrategy::StpVpn);
    cfg.dummies = 100;
    cfg.seed = 5;
    let opts = DetectOptions::new(DetectMode::Wan, MatchStrategy::Range);
    let trace = simulate_stp(&w.capture, &sig, &cfg, &opts).map_err(|e| e.to_string())?;

    let truth_first: Vec<Timestamp> = w.gen.truth.events.iter().map(|e| e.sets[0][0].ts).collect();
    check(trace.true_events() == truth_first, || format!("{} true events located", trace.true_events().len()))?;
    let shifted = trace.packets.iter().filter(|p| (p.direction, p.length) == (C, 608)).count();
    let shifted_s = trace.packets.iter().filter(|p| (p.direction, p.length) == (S, 1342)).count();
    check(shifted == 200 && shifted_s == 200, || format!("{shifted} C-608 and {shifted_s} S-1342 packets"))?;

    let found = detect_tunnel(&trace, &sig, &cfg, &opts);
    check(found.len() == 200, || format!("{} detections", found.len()))?;
    let window_us = detection_window_ms(sig.duration.max_ms) as i64 * 1000;
    let real = score_defense(&found, &trace.true_events(), window_us);
    check(real.true_positives == 100 && real.false_positives == 100, || {
        format!("{} TP / {} FP against true events", real.true_positives, real.false_positives)
    })?;
    let dummies = score_defense(&found, &trace.dummy_events(), window_us);
    check(dummies.true_positives == 100, || format!("{} of 100 dummies detected", dummies.true_positives))?;
    Ok("100/100 true events, 100/100 dummies detected and counted as FP".into())
}

fn relaxed_matching() -> Outcome {
    let ours = signature(
        "plug-on",
        "ON",
        vec![vec![PositionSpec::exact(C, 592), PositionSpec::exact(S, 1234), PositionSpec::exact(S, 100)]],
        150,
    );
    let theirs = signature(
        "plug-on",
        "ON",
        vec![vec![PositionSpec::exact(C, 605), PositionSpec::exact(S, 1213), PositionSpec::exact(S, 100)]],
        150,
    );
    let delta = compare_signatures(&ours, &theirs).relaxed_delta();
    check(delta == Some(21), || format!("delta {delta:?}"))?;

    let trace = |packets: &str, seed: u64, dir: &std::path::Path| {
        let p = TraceProfile::parse(&format!(
            "device = \"plug\"\nn_per_label = 50\nevent_spacing_s = 10.0\nwindow_s = 3.0\n[[events]]\nlabel = \"ON\"\n[[events.sets]]\npackets = {packets}\n[[background]]\nkind = \"random\"\nrate_per_s = 1.0\nrequest = [60, 400]\nreply = [60, 900]\n"
        ))
        .expect("relaxed profile");
        materialize(&p, seed, dir)
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = trace("[\"C-592\", \"S-1234\", \"S-100\"]", 91, &dir.path().join("a"));
    let b = trace("[\"C-605\", \"S-1213\", \"S-100\"]", 92, &dir.path().join("b"));
    let recall = |w: &common::fixtures::Written, d: u32| -> Result<(usize, usize), String> {
        let opts = DetectOptions::new(DetectMode::Wan, MatchStrategy::Relaxed { delta: d, positions: None });
        let det = detect(&w.capture, std::slice::from_ref(&ours), &opts).map_err(|e| e.to_string())?;
        let s = &score_matches(&det.matches, &w.gen.events, 3_000_000)[0];
        Ok((s.detected, s.false_positives))
    };
    for (name, w) in [("ours", &a), ("theirs", &b)] {
        let got = recall(w, 21)?;
        check(got == (50, 0), || format!("delta 21 on {name}: {got:?}"))?;
    }
    let narrow = recall(&b, 12)?;
    check(narrow.0 == 0, || format!("delta 12 still matched {} variant events", narrow.0))?;
    Ok("delta 21 detects 50/50 of both variants, delta 12 detects 0/50 of the variant".into())
}

fn serialization_roundtrip() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&common::strategies::signature(), |sig| {
            let text = file::serialize(&sig);
            let back = file::deserialize(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
            if back != sig {
                return Err(TestCaseError::fail(format!("value changed\n{text}")));
            }
            if file::serialize(&back) != text {
                return Err(TestCaseError::fail(format!("bytes changed\n{text}")));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("1000 random signatures round-trip byte-identically".into())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("range-bound arithmetic", range_arithmetic),
        ("detection window", detection_window),
        ("end-to-end synthetic recovery", end_to_end),
        ("DBSCAN oracle", dbscan_oracle),
        ("detection oracle", detection_oracle),
        ("cluster pruning boundaries", pruning_bounds),
        ("defense qualitative reproduction", defense_reproduction),
        ("STP invariance", stp_invariance),
        ("relaxed matching", relaxed_matching),
        ("signature serialization", serialization_roundtrip),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || *f == n.to_string()) {
            continue;
        }
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

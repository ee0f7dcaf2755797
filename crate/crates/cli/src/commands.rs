use std::fmt::Display;
use std::fs;
use std::path::Path;

use serde_json::json;

use pktsig::defense::{
    detect_direction_only, detect_tunnel, direction_pattern, score_defense, simulate_padding, simulate_stp,
    DefenseConfig, DefenseScore, DefenseStrategy,
};
use pktsig::detection::score_matches;
use pktsig::signature::{compare_signatures, detection_window_ms, file, Comparison};
use pktsig::synth::{generate, inject_noise, write_outputs, NoiseKind, TraceProfile};
use pktsig::training::{sha256_file, validate_signature};
use pktsig::{
    detect, parse_capture, train, Capture, DetectMode, DetectOptions, EndpointRoster, Error, EventLog, IngestOptions,
    MatchStrategy, Signature, Timestamp, TrainOptions,
};

use crate::{
    CaptureArgs, Command, CompareArgs, DefendArgs, DetectArgs, GenArgs, Match, MatchArgs, Mode, Strategy, TrainArgs,
    ValidateArgs,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
/// Ran fine but found nothing: no signature, no match, or a rejected signature.
pub const EXIT_EMPTY: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Display) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<u8, Failure>;

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Train(a) => cmd_train(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Defend(a) => cmd_defend(a),
        Command::Gen(a) => cmd_gen(a),
    }
}

fn window_us(seconds: f64) -> Result<i64, Failure> {
    if !(seconds.is_finite() && seconds > 0.0) {
        return Err(Failure::usage(format!("--window-t must be a positive number of seconds, got {seconds}")));
    }
    Ok((seconds * 1e6).round() as i64)
}

fn strategy(m: Match, delta: Option<u32>) -> Result<MatchStrategy, Failure> {
    Ok(match m {
        Match::Exact => MatchStrategy::Exact,
        Match::Range => MatchStrategy::Range,
        Match::Relaxed => MatchStrategy::Relaxed {
            delta: delta.ok_or_else(|| Failure::usage("--match relaxed needs --delta"))?,
            positions: None,
        },
    })
}

fn detect_options(m: &MatchArgs) -> Result<DetectOptions, Failure> {
    let mode = match m.mode {
        Mode::Wan => DetectMode::Wan,
        Mode::Wifi => DetectMode::Wifi,
    };
    let mut opts = DetectOptions::new(mode, strategy(m.strategy, m.delta)?);
    opts.eps = m.eps;
    opts.layer2_offset = m.layer2_offset;
    Ok(opts)
}

/// Reads a capture as layer 3 when it has IP headers, as layer 2 otherwise
/// (radiotap captures in WiFi mode).
fn load_capture(args: &CaptureArgs, mode: DetectMode, offset: Option<u32>) -> Result<(Capture, EndpointRoster), Failure> {
    let roster = EndpointRoster::load(&args.roster)?;
    let capture = match parse_capture(&args.pcap, IngestOptions::layer3(), &roster) {
        Err(Error::Unsupported(_)) if mode == DetectMode::Wifi => {
            let offset = offset.unwrap_or(pktsig::ingest::DEFAULT_LAYER2_OFFSET);
            parse_capture(&args.pcap, IngestOptions::layer2(offset), &roster)?
        }
        other => other?,
    };
    log::info!(
        "{}: {} records, {} packets kept",
        args.pcap.display(),
        capture.stats.records,
        capture.packets.len()
    );
    Ok((capture, roster))
}

fn load_signatures(paths: &[std::path::PathBuf]) -> Result<Vec<Signature>, Failure> {
    paths.iter().map(|p| file::load(p).map_err(Failure::from)).collect()
}

fn write_report(path: Option<&Path>, value: &serde_json::Value) -> Result<(), Failure> {
    if let Some(path) = path {
        let text = serde_json::to_string_pretty(value).expect("report serializes");
        fs::write(path, text + "\n").map_err(|e| Failure::from(Error::Io { path: path.into(), source: e }))?;
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Outcome {
    if a.strategy == Match::Relaxed {
        return Err(Failure::usage("training validates with exact or range matching only"));
    }
    let window = window_us(a.window_t)?;
    let (capture, roster) = load_capture(&a.capture, DetectMode::Wan, None)?;
    let events = EventLog::load(&a.events)?;
    let mut opts = TrainOptions::new(&a.device);
    opts.window_us = window;
    opts.eps = a.eps;
    opts.min_pts = a.min_pts;
    opts.layer2_offset = a.layer2_offset;
    opts.strategy = strategy(a.strategy, None)?;
    opts.capture_sha256 = Some(sha256_file(&a.capture.pcap)?);
    let result = train(&capture, &events, &roster, &opts)?;

    for l in &result.report.labels {
        println!("label {}: {} events, {} pairs, minPts {}", l.label, l.events, l.pairs, l.min_pts);
        for c in &l.clusters {
            let second = c.second.map_or("nil".to_string(), |(lo, hi)| format!("{lo}-{hi}"));
            println!(
                "  cluster {} f={} first={}-{} second={} {}",
                c.pattern,
                c.frequency,
                c.first.0,
                c.first.1,
                second,
                if c.kept { "kept" } else { "dropped" }
            );
        }
        println!("  sequence sets: {}", l.sequence_sets);
        match &l.outcome {
            Ok(id) => println!("  signature: {id}"),
            Err(why) => println!("  no signature: {why}"),
        }
    }
    for v in &result.report.validations {
        println!(
            "validation {}: {} ({} matches, {}/{} events, {} outside windows)",
            v.signature_id,
            if v.accepted { "accepted" } else { "rejected" },
            v.matches,
            v.matched_events,
            v.events,
            v.extra.len()
        );
    }

    fs::create_dir_all(&a.out).map_err(|e| Failure::from(Error::Io { path: a.out.clone(), source: e }))?;
    let mut written = Vec::new();
    for sig in &result.signatures {
        let path = a.out.join(format!("{}.{}", sig.id, file::SIGNATURE_EXTENSION));
        file::save(sig, &path)?;
        println!("wrote {} ({}, {} ms max)", path.display(), sig, sig.duration.max_ms);
        written.push(path.display().to_string());
    }
    write_report(
        a.report.as_deref(),
        &json!({
            "labels": result.report.labels,
            "validations": result.report.validations,
            "signatures": written,
        }),
    )?;
    if result.signatures.is_empty() {
        println!("no signature found");
        return Ok(EXIT_EMPTY);
    }
    Ok(EXIT_OK)
}

fn cmd_detect(a: DetectArgs) -> Outcome {
    let opts = detect_options(&a.matching)?;
    let tolerance = window_us(a.window_t)?;
    let sigs = load_signatures(&a.sigs)?;
    let (capture, _) = load_capture(&a.capture, opts.mode, opts.layer2_offset)?;
    let detection = detect(&capture, &sigs, &opts)?;

    for m in &detection.matches {
        println!("{} {} {} {} {}", m.first_ts, m.last_ts, m.signature_ids.join(","), m.label, m.flows.join(","));
    }
    println!("summary ({} mode, {} matching):", a.matching.mode_name(), opts.strategy);
    for (id, n) in &detection.counts {
        println!("  {id}: {n} match(es)");
    }
    let scores = match &a.truth {
        Some(path) => {
            let truth = EventLog::load(path)?;
            let scores = score_matches(&detection.matches, &truth, tolerance);
            for s in &scores {
                println!(
                    "  {}: recall {:.1}/100 ({}/{}), FP {:.1}/100 ({})",
                    s.label, s.recall_per_100, s.detected, s.events, s.fp_per_100, s.false_positives
                );
            }
            Some(scores)
        }
        None => None,
    };
    write_report(
        a.report.as_deref(),
        &json!({ "matches": detection.matches, "counts": detection.counts, "scores": scores }),
    )?;
    Ok(if detection.matches.is_empty() { EXIT_EMPTY } else { EXIT_OK })
}

fn cmd_validate(a: ValidateArgs) -> Outcome {
    let opts = detect_options(&a.matching)?;
    let window = window_us(a.window_t)?;
    let sigs = load_signatures(&a.sigs)?;
    let (capture, _) = load_capture(&a.capture, opts.mode, opts.layer2_offset)?;
    let events = EventLog::load(&a.events)?;
    let detection = detect(&capture, &sigs, &opts)?;
    let validations: Vec<_> = sigs
        .iter()
        .map(|s| validate_signature(s, &detection.matches, &events, window))
        .collect();
    for v in &validations {
        println!(
            "{}: {} ({} matches, {}/{} events)",
            v.signature_id,
            if v.accepted { "accepted" } else { "rejected" },
            v.matches,
            v.matched_events,
            v.events
        );
        for ts in &v.extra {
            println!("  match outside every event window at {ts}");
        }
    }
    write_report(a.report.as_deref(), &json!({ "validations": validations }))?;
    Ok(if validations.iter().all(|v| v.accepted) { EXIT_OK } else { EXIT_EMPTY })
}

fn cmd_compare(a: CompareArgs) -> Outcome {
    let x = file::load(&a.first)?;
    let y = file::load(&a.second)?;
    println!("{}: {x}", x.id);
    println!("{}: {y}", y.id);
    match compare_signatures(&x, &y) {
        Comparison::ShapeMismatch { reason } => {
            println!("not comparable: {reason}");
            Ok(EXIT_EMPTY)
        }
        Comparison::Comparable {
            deltas,
            max_abs_delta,
            identical,
        } => {
            for (i, set) in deltas.iter().enumerate() {
                let d: Vec<String> = set.iter().map(|v| format!("{v:+}")).collect();
                println!("set {}: {}", i + 1, d.join(" "));
            }
            if identical {
                println!("identical");
            } else {
                println!("relaxed matching unifies both with --delta {max_abs_delta}");
            }
            Ok(EXIT_OK)
        }
    }
}

fn print_score(s: &DefenseScore) {
    println!(
        "true events {}, positives {}, TP {}, FP {}, recall {:.3}, FP/100 events {:.2}, positives per event {:.2}",
        s.true_events, s.positives, s.true_positives, s.false_positives, s.recall, s.fp_per_100, s.positives_per_event
    );
}

fn cmd_defend(a: DefendArgs) -> Outcome {
    let strat = match a.strategy {
        Strategy::PadMtuVpn => DefenseStrategy::PadMtuVpn,
        Strategy::PadMtuTlsPerConn => DefenseStrategy::PadMtuTlsPerConn,
        Strategy::PadMtuHybrid => DefenseStrategy::PadMtuHybrid,
        Strategy::StpVpn => DefenseStrategy::StpVpn,
    };
    let mut cfg = DefenseConfig::new(strat);
    cfg.mtu = a.mtu;
    cfg.vpn_header_c2s = a.vpn_header_c2s;
    cfg.vpn_header_s2c = a.vpn_header_s2c;
    cfg.dummies = a.dummies;
    cfg.seed = a.seed;
    cfg.servers = (!a.servers.is_empty()).then(|| a.servers.clone());
    cfg.validate().map_err(Failure::usage)?;
    let tolerance = window_us(a.window_t)?;
    let sig = file::load(&a.sig)?;
    let (capture, roster) = load_capture(&a.capture, DetectMode::Wan, None)?;

    let report = if strat == DefenseStrategy::StpVpn {
        let mut opts = DetectOptions::new(DetectMode::Wan, strategy(a.strategy_match, a.delta)?);
        opts.eps = a.eps;
        let trace = simulate_stp(&capture, &sig, &cfg, &opts)?;
        let found = detect_tunnel(&trace, &sig, &cfg, &opts);
        let window = detection_window_ms(sig.duration.max_ms) as i64 * 1000;
        let score = score_defense(&found, &trace.true_events(), window);
        println!(
            "STP: {} tunneled packets, {} true events, {} dummies, {} detections",
            trace.packets.len(),
            trace.true_events().len(),
            trace.dummy_events().len(),
            found.len()
        );
        print_score(&score);
        json!({
            "strategy": "stp-vpn",
            "packets": trace.packets.len(),
            "true_events": trace.true_events(),
            "dummy_events": trace.dummy_events(),
            "detections": found,
            "score": score,
        })
    } else {
        let view = simulate_padding(&capture, &roster, &cfg)?;
        let window_ms = detection_window_ms(sig.duration.max_ms);
        let hits = detect_direction_only(&view, &direction_pattern(&sig), window_ms);
        println!(
            "{:?}: {} flow(s), {} packets, direction-only positives {} (window {} ms)",
            strat,
            view.flows.len(),
            view.packet_count(),
            hits.len(),
            window_ms
        );
        let starts: Vec<Timestamp> = hits.iter().map(|h| h.start).collect();
        let score = match &a.truth {
            Some(path) => {
                let truth: Vec<Timestamp> = EventLog::load(path)?.entries.iter().map(|e| e.ts).collect();
                let s = score_defense(&starts, &truth, tolerance);
                print_score(&s);
                Some(s)
            }
            None => None,
        };
        json!({
            "strategy": format!("{strat:?}"),
            "flows": view.flows.len(),
            "packets": view.packet_count(),
            "positives": hits.len(),
            "window_ms": window_ms,
            "score": score,
        })
    };
    write_report(a.report.as_deref(), &report)?;
    Ok(EXIT_OK)
}

fn cmd_gen(a: GenArgs) -> Outcome {
    let profile = TraceProfile::load(&a.profile)?;
    let mut noise = Vec::new();
    for spec in &a.noise {
        let (kind, rate) = spec
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("--noise expects kind=rate, got `{spec}`")))?;
        let kind: NoiseKind = kind.parse().map_err(Failure::usage)?;
        let rate: f64 = rate
            .parse()
            .map_err(|_| Failure::usage(format!("bad noise rate `{rate}`")))?;
        noise.push((kind, rate));
    }
    let mut gen = generate(&profile, a.seed)?;
    for (i, (kind, rate)) in noise.into_iter().enumerate() {
        gen = inject_noise(&gen, kind, rate, a.seed.wrapping_add(i as u64 + 1))?;
    }
    let paths = write_outputs(&gen, &a.out)?;
    println!(
        "{} packets, {} events, {} noise packets",
        gen.packets.len(),
        gen.events.len(),
        gen.truth.noise_packets
    );
    println!("capture  {}", paths.capture.display());
    if let Some(p) = &paths.wifi_capture {
        println!("wifi     {}", p.display());
    }
    println!("events   {}", paths.events.display());
    println!("roster   {}", paths.roster.display());
    println!("truth    {}", paths.truth.display());
    Ok(EXIT_OK)
}

impl MatchArgs {
    fn mode_name(&self) -> &'static str {
        match self.mode {
            Mode::Wan => "WAN",
            Mode::Wifi => "WiFi",
        }
    }
}

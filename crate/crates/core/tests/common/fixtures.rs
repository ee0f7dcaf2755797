use std::path::Path;

use pktsig::synth::{generate, write_outputs, Generated, OutputPaths, TraceProfile};
use pktsig::{parse_capture, Capture, IngestOptions};

/// Plug-like device: ON is C-556/S-1293, OFF is C-557/S-1294.
pub fn plug_profile(n_per_label: usize, spacing_s: f64, window_s: f64, background: &str) -> TraceProfile {
    TraceProfile::parse(&format!(
        r#"
        device = "plug"
        n_per_label = {n_per_label}
        event_spacing_s = {spacing_s:?}
        window_s = {window_s:?}
        [[events]]
        label = "ON"
        [[events.sets]]
        packets = ["C-556", "S-1293"]
        [[events]]
        label = "OFF"
        [[events.sets]]
        packets = ["C-557", "S-1294"]
        {background}
        "#
    ))
    .expect("plug profile")
}

/// Three background flows: periodic device chatter, random phone traffic and
/// a bulk download, none with signature-like lengths.
pub const THREE_BACKGROUND_FLOWS: &str = r#"
    [[background]]
    kind = "periodic"
    period_s = 7.0
    request = [120, 180]
    reply = [200, 320]
    [[background]]
    kind = "random"
    rate_per_s = 0.5
    request = [60, 400]
    reply = [60, 900]
    connections = 2
    host = "phone"
    [[background]]
    kind = "bulk"
    interval_s = 11.0
    segments = 8
    segment_len = 1448
"#;

pub struct Written {
    pub gen: Generated,
    pub paths: OutputPaths,
    pub capture: Capture,
}

pub fn materialize(profile: &TraceProfile, seed: u64, dir: &Path) -> Written {
    let gen = generate(profile, seed).expect("generate");
    let paths = write_outputs(&gen, dir).expect("write");
    let capture = parse_capture(&paths.capture, IngestOptions::layer3(), &gen.roster).expect("parse");
    Written { gen, paths, capture }
}

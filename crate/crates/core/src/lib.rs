//! Packet-level signatures for smart-home device events.
//!
//! Extracts length/direction signatures from labelled training captures,
//! detects them in WAN or WiFi captures, and simulates traffic-shaping
//! defenses against such detection.

pub mod defense;
pub mod detection;
pub mod error;
pub mod ingest;
pub mod signature;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
pub use ingest::packet::{CaptureMode, ConnKey, Direction, Endpoint, FlowKey, MacAddr, MacPair, PacketMeta, PayloadKind, Timestamp};
pub use ingest::roster::EndpointRoster;
pub use ingest::{parse_capture, Capture, IngestOptions};
pub use signature::{MatchStrategy, Signature};
pub use detection::{detect, DetectMode, DetectOptions, Detection, MatchEvent};
pub use training::{train, EventLog, TrainOptions};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

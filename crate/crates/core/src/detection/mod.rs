//! Signature detection with per-flow state machines under the WAN or WiFi
//! observer models.

pub mod assembler;
pub mod engine;
pub mod machine;
pub mod report;

pub use assembler::{Assembler, Completion};
pub use engine::{
    build_stream, check_compatibility, compile_signatures, detect, finish, merge_flows, run_matchers, CompiledSignature,
    DetectMode, DetectOptions, Detection, MatchEvent, MatchedPacket, RawMatch, StreamPacket,
};
pub use machine::{Hit, Semantics, SequenceMachine, SequencePool, Step};
pub use report::{score_matches, LabelScore};

//! Deterministic synthetic traces with known ground truth.

pub mod generate;
pub mod noise;
pub mod profile;

pub use generate::{
    addr, generate, roster, write_ethernet, write_outputs, write_radiotap, Generated, GroundTruth, NetHost,
    OutputPaths, SynthPacket, TruthEvent, TruthPacket,
};
pub use noise::{inject_noise, NoiseKind};
pub use profile::{BackgroundFlow, EventTemplate, Host, PacketTemplate, SetTemplate, TraceProfile};

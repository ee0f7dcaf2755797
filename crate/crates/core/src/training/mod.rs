//! Signature extraction from labelled training captures.

pub mod dbscan;
pub mod events;
pub mod filter;
pub mod pairs;
pub mod pipeline;
pub mod sequences;

pub use dbscan::{dbscan, max_frequency_for, min_pts_for, prune_clusters, Clustering, PairCluster, PairPoint};
pub use events::{Event, EventLog};
pub use filter::{filter_trace, WindowedPacket};
pub use pairs::{form_pairs, pair_distance, PacketPair, PairPattern};
pub use pipeline::{
    duration_stats, sha256_file, train, validate_signature, TrainOptions, TrainingReport, TrainingResult, Validation,
};
pub use sequences::{concatenate_pairs, order_sequence_sets, SequenceSet, TrainingPair};

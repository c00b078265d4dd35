//! Offline evaluation: segmentation entropies, latency statistics and the
//! comparison against the batch oracle.

pub mod latency;
pub mod metrics;
pub mod oracle_check;

pub use latency::{latency_stats, LatencyReport};
pub use metrics::{partition_agreement, segmentation_report, use_ose, EntropyScores, SegmentationReport};
pub use oracle_check::{check_against_oracle, mask_stream, OracleReport};

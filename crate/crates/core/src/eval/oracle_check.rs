//! Streaming result versus the batch single-linkage oracle on the same points.

use serde::Serialize;

use crate::ccl::ClusterMessage;
use crate::config::Config;
use crate::error::Result;
use crate::eval::metrics::partition_agreement;
use crate::ingest::oracle::oracle_single_linkage;
use crate::pipeline::{run_reference, Pipeline, RunSummary};
use crate::range_image::{Firing, StreamHeader};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    /// Points published by the stream (and handed to the oracle).
    pub points: usize,
    /// Obstacle points the stream should have published.
    pub expected_points: u64,
    /// Point ids published more than once.
    pub duplicates: usize,
    pub clusters: usize,
    pub forced_clusters: usize,
    pub oracle_components: usize,
    pub agreement: f64,
    pub summary: RunSummary,
}

impl OracleReport {
    pub fn exact(&self) -> bool {
        self.agreement == 1.0 && self.duplicates == 0 && self.points as u64 == self.expected_points
    }
}

/// Turn every valid point rejected by `keep(point_id)` into a miss. The beam
/// direction is kept so the firing can still be located in azimuth.
pub fn mask_stream(header: &StreamHeader, firings: &mut [Firing], first_ordinal: u64, keep: impl Fn(u64) -> bool) {
    for (ordinal, firing) in (first_ordinal..).zip(firings.iter_mut()) {
        for (row, p) in firing.points.iter_mut().enumerate() {
            if p.valid && !keep(ordinal * header.rows as u64 + row as u64) {
                let s = p.sensor_xyz.map(|v| v as f64);
                let norm = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
                if norm > 0.0 {
                    p.sensor_xyz = s.map(|v| (v / norm) as f32);
                }
                p.range = 0.0;
                p.valid = false;
            }
        }
    }
}

/// Run the pipeline with ground segmentation off and compare its partition of
/// the published points with the oracle partition of the same points.
pub fn check_against_oracle(
    header: &StreamHeader,
    firings: impl IntoIterator<Item = Result<Firing>>,
    config: &Config,
) -> Result<(OracleReport, Vec<ClusterMessage>)> {
    let mut config = config.clone();
    config.ground.enabled = false;
    let d_t = config.cluster.d_t;
    let mut pipeline = Pipeline::new(header.clone(), config)?;
    let mut messages = Vec::new();
    let summary = run_reference(&mut pipeline, firings, |m| {
        messages.push(m);
        Ok(())
    })?;

    let mut ids: Vec<u64> = Vec::new();
    let mut xyz = Vec::new();
    let mut labels = Vec::new();
    for m in &messages {
        for p in &m.points {
            ids.push(p.point_id);
            xyz.push(p.world_xyz);
            labels.push(m.cluster_id);
        }
    }
    let mut sorted = ids.clone();
    sorted.sort_unstable();
    let unique = {
        let mut s = sorted.clone();
        s.dedup();
        s.len()
    };
    let oracle = oracle_single_linkage(&xyz, d_t);
    let oracle_components = oracle.iter().copied().max().map_or(0, |m| m + 1);
    let report = OracleReport {
        points: ids.len(),
        expected_points: summary.ground.obstacle - summary.trees.skipped_checkerboard,
        duplicates: ids.len() - unique,
        clusters: messages.len(),
        forced_clusters: messages.iter().filter(|m| m.force_finished()).count(),
        oracle_components,
        agreement: partition_agreement(&labels, &oracle),
        summary,
    };
    Ok((report, messages))
}

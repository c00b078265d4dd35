//! Cluster output as JSON Lines, one object per published cluster.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::ccl::{ClusterMessage, FinishReason};
use crate::error::{Error, Result};
use crate::io::labels::LabelTable;

/// `[x, y, z, row, col, t_ns]`
pub type PointRecord = (f32, f32, f32, u32, i64, u64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub id: u64,
    pub force_finished: bool,
    pub reason: FinishReason,
    pub publish_col: i64,
    pub reference_timestamp_ns: u64,
    pub latency_ns: u64,
    pub points: Vec<PointRecord>,
    /// Parallel to `points`.
    pub point_ids: Vec<u64>,
}

impl From<&ClusterMessage> for ClusterRecord {
    fn from(m: &ClusterMessage) -> Self {
        Self {
            id: m.cluster_id,
            force_finished: m.force_finished(),
            reason: m.reason,
            publish_col: m.publish_col,
            reference_timestamp_ns: m.reference_timestamp_ns,
            latency_ns: m.latency_ns,
            points: m
                .points
                .iter()
                .map(|p| (p.world_xyz[0], p.world_xyz[1], p.world_xyz[2], p.row, p.col, p.timestamp_ns))
                .collect(),
            point_ids: m.points.iter().map(|p| p.point_id).collect(),
        }
    }
}

pub fn write_cluster(out: &mut impl Write, msg: &ClusterMessage) -> Result<()> {
    serde_json::to_writer(&mut *out, &ClusterRecord::from(msg))?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_clusters(input: impl BufRead) -> Result<Vec<ClusterRecord>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ClusterRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("cluster line {}: {e}", n + 1)))?;
        if record.points.len() != record.point_ids.len() {
            return Err(Error::Format(format!("cluster {} has mismatched point lists", record.id)));
        }
        out.push(record);
    }
    Ok(out)
}

/// Flat point_id → cluster_id table for a set of clusters.
pub fn label_table<'a>(clusters: impl IntoIterator<Item = &'a ClusterMessage>) -> Result<LabelTable> {
    let mut table = LabelTable::new();
    for c in clusters {
        for p in &c.points {
            if table.insert(p.point_id, c.cluster_id as u32).is_some() {
                return Err(Error::Invariant(format!("point {} published twice", p.point_id)));
            }
        }
    }
    Ok(table)
}

//! Incremental connected-component labeling over the graph of point trees.
//!
//! After every clustered column the unpublished roots are swept in ascending
//! order. Each component is traversed breadth-first over the tree edges and is
//! published once every member tree is complete, i.e. once the clustered frontier
//! has moved past its `phi_finished`.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::config::CclConfig;
use crate::error::{Error, Result};
use crate::geom::CellIndex;
use crate::range_image::RangeImage;
use crate::tree::tree_meta_mut;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterPoint {
    pub point_id: u64,
    pub world_xyz: [f32; 3],
    pub row: u32,
    pub col: i64,
    pub timestamp_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Complete,
    /// The oldest root was about to fall out of the cyclic buffer.
    BufferOverflow,
    EndOfStream,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMessage {
    pub cluster_id: u64,
    pub reason: FinishReason,
    /// One past the newest clustered column at publish time.
    pub publish_col: i64,
    /// Timestamp of the most recent member point.
    pub reference_timestamp_ns: u64,
    pub latency_ns: u64,
    pub points: Vec<ClusterPoint>,
}

impl ClusterMessage {
    pub fn force_finished(&self) -> bool {
        self.reason != FinishReason::Complete
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CclStats {
    pub runs: u64,
    pub published: u64,
    pub forced: u64,
    pub end_of_stream: u64,
    /// Components dropped by the minimum size filter.
    pub filtered: u64,
    pub reclaimed_columns: u64,
}

#[derive(Debug, Clone)]
pub struct Publisher {
    next_id: u64,
    forced_margin: i64,
    min_cluster_size: usize,
    stats: CclStats,
}

impl Publisher {
    pub fn new(config: &CclConfig) -> Self {
        Self {
            next_id: 1,
            forced_margin: config.forced_margin as i64,
            min_cluster_size: config.min_cluster_size,
            stats: CclStats::default(),
        }
    }

    pub fn stats(&self) -> &CclStats {
        &self.stats
    }

    /// Sweep all unpublished roots after column `col` has been clustered.
    pub fn ccl_run(
        &mut self,
        image: &mut RangeImage,
        roots: &mut BTreeSet<CellIndex>,
        col: i64,
    ) -> Result<Vec<ClusterMessage>> {
        self.stats.runs += 1;
        let frontier = (col + 1) as f64 * image.delta_phi_col();
        let mut out = Vec::new();
        let snapshot: Vec<CellIndex> = roots.iter().copied().collect();
        for start in snapshot {
            if !roots.contains(&start) || stamp(image, start)? == col {
                continue;
            }
            set_stamp(image, start, col)?;
            let mut component = vec![start];
            let mut queue = VecDeque::from([start]);
            let mut complete = true;
            while let Some(v) = queue.pop_front() {
                let meta = tree_meta_mut(image, v)?;
                complete &= frontier > meta.phi_finished;
                let edges = meta.edges.clone();
                for e in edges {
                    if !roots.contains(&e) {
                        return Err(Error::Invariant(format!(
                            "tree {v} links to {e}, which is not an unpublished root"
                        )));
                    }
                    if stamp(image, e)? != col {
                        set_stamp(image, e, col)?;
                        component.push(e);
                        queue.push_back(e);
                    }
                }
            }
            if complete {
                out.extend(self.publish(image, roots, component, FinishReason::Complete, col + 1)?);
            }
        }
        Ok(out)
    }

    /// Publish every component holding a root that is about to leave the buffer.
    pub fn forced_finish(
        &mut self,
        image: &mut RangeImage,
        roots: &mut BTreeSet<CellIndex>,
        col: i64,
    ) -> Result<Vec<ClusterMessage>> {
        let limit = (image.width() as i64 - self.forced_margin).max(1);
        let overflowing: Vec<CellIndex> =
            roots.iter().copied().take_while(|r| col - r.col >= limit).collect();
        let mut out = Vec::new();
        for root in overflowing {
            if roots.contains(&root) {
                let component = component_of(image, roots, root)?;
                out.extend(self.publish(image, roots, component, FinishReason::BufferOverflow, col + 1)?);
            }
        }
        Ok(out)
    }

    /// Publish everything still pending; used at the end of a stream.
    pub fn flush(
        &mut self,
        image: &mut RangeImage,
        roots: &mut BTreeSet<CellIndex>,
        publish_col: i64,
    ) -> Result<Vec<ClusterMessage>> {
        let mut out = Vec::new();
        while let Some(&root) = roots.iter().next() {
            let component = component_of(image, roots, root)?;
            out.extend(self.publish(image, roots, component, FinishReason::EndOfStream, publish_col)?);
        }
        Ok(out)
    }

    /// Clear every column older than the oldest surviving root (or `col`).
    /// Returns the new first live column.
    pub fn reclaim(&mut self, image: &mut RangeImage, roots: &BTreeSet<CellIndex>, col: i64) -> i64 {
        let oldest = roots.iter().next().map_or(col, |r| r.col.min(col));
        let cleared = image.reclaim_until(oldest);
        self.stats.reclaimed_columns += cleared as u64;
        image.first_live_col()
    }

    fn publish(
        &mut self,
        image: &mut RangeImage,
        roots: &mut BTreeSet<CellIndex>,
        mut component: Vec<CellIndex>,
        reason: FinishReason,
        publish_col: i64,
    ) -> Result<Option<ClusterMessage>> {
        component.sort_unstable();
        let mut points = Vec::new();
        let mut stack = Vec::new();
        for &root in &component {
            tree_meta_mut(image, root)?.published = true;
            roots.remove(&root);
            stack.push(root);
            while let Some(idx) = stack.pop() {
                let cell = image
                    .cell(idx)
                    .ok_or_else(|| Error::Invariant(format!("tree cell {idx} left the buffer")))?;
                points.push(ClusterPoint {
                    point_id: cell.point_id,
                    world_xyz: cell.world_xyz,
                    row: idx.row,
                    col: idx.col,
                    timestamp_ns: cell.timestamp_ns,
                });
                stack.extend(cell.children.iter().rev());
            }
        }
        match reason {
            FinishReason::Complete => {}
            FinishReason::BufferOverflow => self.stats.forced += 1,
            FinishReason::EndOfStream => self.stats.end_of_stream += 1,
        }
        if points.len() < self.min_cluster_size {
            self.stats.filtered += 1;
            return Ok(None);
        }
        self.stats.published += 1;
        let cluster_id = self.next_id;
        self.next_id += 1;
        let reference_timestamp_ns = points.iter().map(|p| p.timestamp_ns).max().unwrap_or(0);
        Ok(Some(ClusterMessage {
            cluster_id,
            reason,
            publish_col,
            reference_timestamp_ns,
            latency_ns: 0,
            points,
        }))
    }
}

fn stamp(image: &RangeImage, idx: CellIndex) -> Result<i64> {
    image
        .cell(idx)
        .map(|c| c.visited_stamp)
        .ok_or_else(|| Error::Invariant(format!("root {idx} left the buffer")))
}

fn set_stamp(image: &mut RangeImage, idx: CellIndex, value: i64) -> Result<()> {
    image
        .cell_mut(idx)
        .map(|c| c.visited_stamp = value)
        .ok_or_else(|| Error::Invariant(format!("root {idx} left the buffer")))
}

fn component_of(image: &mut RangeImage, roots: &BTreeSet<CellIndex>, start: CellIndex) -> Result<Vec<CellIndex>> {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for &e in &tree_meta_mut(image, v)?.edges {
            if !roots.contains(&e) {
                return Err(Error::Invariant(format!(
                    "tree {v} links to {e}, which is not an unpublished root"
                )));
            }
            if seen.insert(e) {
                queue.push_back(e);
            }
        }
    }
    Ok(seen.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::range_image::{Cell, Label};
    use crate::tree::TreeMeta;

    const N: u32 = 360;

    fn image() -> RangeImage {
        RangeImage::new(4, N, 64)
    }

    fn add_root(image: &mut RangeImage, roots: &mut BTreeSet<CellIndex>, idx: CellIndex, finished_col: f64) {
        let delta = image.delta_phi_col();
        *image.cell_mut(idx).unwrap() = Cell {
            point_id: idx.col as u64 * 4 + idx.row as u64,
            timestamp_ns: idx.col as u64 * 100,
            label: Label::Obstacle,
            root: Some(idx),
            global_col: idx.col,
            visited_stamp: i64::MIN,
            tree: Some(Box::new(TreeMeta {
                phi_finished: finished_col * delta,
                point_count: 1,
                ..TreeMeta::default()
            })),
            ..Cell::default()
        };
        roots.insert(idx);
    }

    fn add_child(image: &mut RangeImage, parent: CellIndex, idx: CellIndex) {
        let root = image.cell(parent).unwrap().root.unwrap();
        *image.cell_mut(idx).unwrap() = Cell {
            point_id: idx.col as u64 * 4 + idx.row as u64,
            timestamp_ns: idx.col as u64 * 100,
            label: Label::Obstacle,
            root: Some(root),
            global_col: idx.col,
            ..Cell::default()
        };
        image.cell_mut(parent).unwrap().children.push(idx);
        tree_meta_mut(image, root).unwrap().point_count += 1;
    }

    fn link(image: &mut RangeImage, a: CellIndex, b: CellIndex) {
        tree_meta_mut(image, a).unwrap().edges.push(b);
        tree_meta_mut(image, b).unwrap().edges.push(a);
    }

    #[test]
    fn linked_complete_trees_form_one_cluster() {
        let mut img = image();
        let mut roots = BTreeSet::new();
        let (a, b) = (CellIndex::new(0, 1), CellIndex::new(2, 2));
        add_root(&mut img, &mut roots, a, 3.5);
        add_root(&mut img, &mut roots, b, 4.5);
        add_child(&mut img, a, CellIndex::new(1, 2));
        link(&mut img, a, b);
        let mut publisher = Publisher::new(&CclConfig::default());
        assert!(publisher.ccl_run(&mut img, &mut roots, 3).unwrap().is_empty());
        let out = publisher.ccl_run(&mut img, &mut roots, 4).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].cluster_id, 1);
        assert_eq!(out[0].points.len(), 3);
        assert_eq!(out[0].publish_col, 5);
        assert_eq!(out[0].reference_timestamp_ns, 200);
        assert!(roots.is_empty());
    }

    #[test]
    fn incomplete_component_is_stamped_but_kept() {
        let mut img = image();
        let mut roots = BTreeSet::new();
        let (a, b) = (CellIndex::new(0, 1), CellIndex::new(0, 2));
        add_root(&mut img, &mut roots, a, 2.0);
        add_root(&mut img, &mut roots, b, 30.0);
        link(&mut img, a, b);
        let mut publisher = Publisher::new(&CclConfig::default());
        assert!(publisher.ccl_run(&mut img, &mut roots, 5).unwrap().is_empty());
        assert_eq!(img.cell(a).unwrap().visited_stamp, 5);
        assert_eq!(img.cell(b).unwrap().visited_stamp, 5);
        assert_eq!(roots.len(), 2);
    }

    #[test]
    fn unlinked_trees_get_distinct_ids() {
        let mut img = image();
        let mut roots = BTreeSet::new();
        add_root(&mut img, &mut roots, CellIndex::new(0, 1), 2.0);
        add_root(&mut img, &mut roots, CellIndex::new(3, 1), 2.0);
        let mut publisher = Publisher::new(&CclConfig::default());
        let out = publisher.ccl_run(&mut img, &mut roots, 2).unwrap();
        let ids: Vec<u64> = out.iter().map(|m| m.cluster_id).collect();
        assert_eq!(ids, vec![1, 2]);
        assert_eq!(out[0].points[0].row, 0);
    }

    #[test]
    fn frontier_is_strict() {
        let mut img = image();
        let mut roots = BTreeSet::new();
        add_root(&mut img, &mut roots, CellIndex::new(0, 1), 4.0);
        let mut publisher = Publisher::new(&CclConfig::default());
        assert!(publisher.ccl_run(&mut img, &mut roots, 3).unwrap().is_empty());
        assert_eq!(publisher.ccl_run(&mut img, &mut roots, 4).unwrap().len(), 1);
    }

    #[test]
    fn dangling_edge_is_an_invariant_error() {
        let mut img = image();
        let mut roots = BTreeSet::new();
        let a = CellIndex::new(0, 1);
        add_root(&mut img, &mut roots, a, 2.0);
        tree_meta_mut(&mut img, a).unwrap().edges.push(CellIndex::new(1, 1));
        let mut publisher = Publisher::new(&CclConfig::default());
        let err = publisher.ccl_run(&mut img, &mut roots, 3).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn reclaim_follows_oldest_root() {
        let mut img = RangeImage::new(2, N, 1000);
        let mut roots = BTreeSet::new();
        let mut publisher = Publisher::new(&CclConfig::default());
        // Surviving root at the first live column: nothing to clear.
        add_root(&mut img, &mut roots, CellIndex::new(0, 0), 1e9);
        assert_eq!(publisher.reclaim(&mut img, &roots, 600), 0);
        roots.clear();
        img.reclaim_until(400);
        add_root(&mut img, &mut roots, CellIndex::new(1, 500), 1e9);
        assert_eq!(publisher.reclaim(&mut img, &roots, 600), 500);
        assert_eq!(publisher.stats().reclaimed_columns, 100);
        roots.clear();
        assert_eq!(publisher.reclaim(&mut img, &roots, 600), 600);
    }

    #[test]
    fn forced_finish_publishes_whole_component() {
        let mut img = image();
        let mut roots = BTreeSet::new();
        let config = CclConfig { forced_margin: 8, ..CclConfig::default() };
        let mut publisher = Publisher::new(&config);
        let trees = [CellIndex::new(0, 0), CellIndex::new(1, 10), CellIndex::new(2, 20)];
        for t in trees {
            add_root(&mut img, &mut roots, t, 1e9);
        }
        link(&mut img, trees[0], trees[1]);
        link(&mut img, trees[1], trees[2]);
        add_root(&mut img, &mut roots, CellIndex::new(3, 30), 1e9);
        assert!(publisher.forced_finish(&mut img, &mut roots, 40).unwrap().is_empty());
        let out = publisher.forced_finish(&mut img, &mut roots, 56).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].points.len(), 3);
        assert!(out[0].force_finished());
        assert_eq!(roots.len(), 1);
        let rest = publisher.flush(&mut img, &mut roots, 57).unwrap();
        assert_eq!(rest[0].reason, FinishReason::EndOfStream);
        assert_eq!(publisher.stats().forced, 1);
    }
}

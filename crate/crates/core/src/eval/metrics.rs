//! Under- and over-segmentation entropy, and partition agreement.
//!
//! With `n_ci` the number of points of ground-truth instance `i` inside
//! predicted cluster `c`:
//!
//! * USE = Σ_c −Σ_i (n_ci / n_c) ln(n_ci / n_c)
//! * OSE = Σ_i −Σ_c (n_ci / n_i) ln(n_ci / n_i)
//!
//! Only points with a ground-truth instance and a predicted cluster are
//! evaluated (label 0 means ground / unclustered on either side).

use std::collections::{BTreeMap, HashMap};

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use petgraph::unionfind::UnionFind;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::latency::mean_std;
use crate::io::labels::LabelTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyScores {
    #[serde(rename = "use")]
    pub use_: f64,
    pub ose: f64,
    pub points: usize,
}

fn entropy_sum<K: Copy + Eq + std::hash::Hash>(groups: &HashMap<K, HashMap<u32, usize>>) -> f64 {
    let mut total = 0.0;
    for parts in groups.values() {
        let n: usize = parts.values().sum();
        for &k in parts.values() {
            let p = k as f64 / n as f64;
            total -= p * p.ln();
        }
    }
    total
}

/// Entropies over `(predicted, ground truth)` label pairs of evaluated points.
pub fn entropies(pairs: impl IntoIterator<Item = (u32, u32)>) -> EntropyScores {
    let mut by_pred: HashMap<u32, HashMap<u32, usize>> = HashMap::new();
    let mut by_gt: HashMap<u32, HashMap<u32, usize>> = HashMap::new();
    let mut points = 0;
    for (pred, gt) in pairs {
        *by_pred.entry(pred).or_default().entry(gt).or_default() += 1;
        *by_gt.entry(gt).or_default().entry(pred).or_default() += 1;
        points += 1;
    }
    EntropyScores {
        use_: entropy_sum(&by_pred).max(0.0),
        ose: entropy_sum(&by_gt).max(0.0),
        points,
    }
}

/// Evaluated `(point_id, predicted, ground truth)` triples. Predicted ids absent
/// from the ground truth are an error; ground-truth points without a prediction
/// count as unclustered.
fn evaluated(pred: &LabelTable, gt: &LabelTable) -> Result<Vec<(u64, u32, u32)>> {
    if let Some(id) = pred.keys().find(|id| !gt.contains_key(id)) {
        return Err(Error::LabelMismatch(format!("predicted point {id} has no ground truth")));
    }
    Ok(gt
        .iter()
        .filter(|(_, &g)| g != 0)
        .filter_map(|(id, &g)| pred.get(id).filter(|&&p| p != 0).map(|&p| (*id, p, g)))
        .collect())
}

pub fn use_ose(pred: &LabelTable, gt: &LabelTable) -> Result<EntropyScores> {
    Ok(entropies(evaluated(pred, gt)?.into_iter().map(|(_, p, g)| (p, g))))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameScores {
    pub frame: u64,
    #[serde(flatten)]
    pub scores: EntropyScores,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentationReport {
    pub frames: Vec<FrameScores>,
    pub use_mean: f64,
    pub use_std: f64,
    pub ose_mean: f64,
    pub ose_std: f64,
    pub evaluated_points: usize,
    pub predicted_points: usize,
    pub ground_truth_points: usize,
}

/// Per-frame entropies aggregated as mean and population deviation.
/// `frame_of` maps a point id to its frame; frames without evaluated points are skipped.
pub fn segmentation_report(
    pred: &LabelTable,
    gt: &LabelTable,
    frame_of: impl Fn(u64) -> u64,
) -> Result<SegmentationReport> {
    let mut frames: BTreeMap<u64, Vec<(u32, u32)>> = BTreeMap::new();
    let points = evaluated(pred, gt)?;
    for &(id, p, g) in &points {
        frames.entry(frame_of(id)).or_default().push((p, g));
    }
    let frames: Vec<FrameScores> = frames
        .into_iter()
        .map(|(frame, pairs)| FrameScores { frame, scores: entropies(pairs) })
        .collect();
    let uses: Vec<f64> = frames.iter().map(|f| f.scores.use_).collect();
    let oses: Vec<f64> = frames.iter().map(|f| f.scores.ose).collect();
    let (use_mean, use_std) = mean_std(&uses).unwrap_or_default();
    let (ose_mean, ose_std) = mean_std(&oses).unwrap_or_default();
    Ok(SegmentationReport {
        frames,
        use_mean,
        use_std,
        ose_mean,
        ose_std,
        evaluated_points: points.len(),
        predicted_points: pred.len(),
        ground_truth_points: gt.len(),
    })
}

fn dense<T: Copy + Eq + std::hash::Hash>(labels: &[T]) -> (Vec<usize>, usize) {
    let mut ids = HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(*l).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

/// Fraction of points on which two labelings agree under the best one-to-one
/// matching of their labels. 1.0 iff the partitions are identical.
pub fn partition_agreement<A, B>(a: &[A], b: &[B]) -> f64
where
    A: Copy + Eq + std::hash::Hash,
    B: Copy + Eq + std::hash::Hash,
{
    assert_eq!(a.len(), b.len(), "labelings cover different point counts");
    if a.is_empty() {
        return 1.0;
    }
    let (a, na) = dense(a);
    let (b, nb) = dense(b);
    let mut counts: HashMap<(usize, usize), i64> = HashMap::new();
    let mut uf = UnionFind::<usize>::new(na + nb);
    for (&x, &y) in a.iter().zip(&b) {
        *counts.entry((x, y)).or_default() += 1;
        uf.union(x, na + y);
    }
    // Overlap table per connected block of labels.
    let mut blocks: HashMap<usize, Vec<(usize, usize, i64)>> = HashMap::new();
    for (&(x, y), &n) in &counts {
        blocks.entry(uf.find_mut(x)).or_default().push((x, y, n));
    }
    let mut matched = 0i64;
    for entries in blocks.values() {
        if entries.len() == 1 {
            matched += entries[0].2;
            continue;
        }
        let (rows, _) = dense(&entries.iter().map(|e| e.0).collect::<Vec<_>>());
        let (cols, _) = dense(&entries.iter().map(|e| e.1).collect::<Vec<_>>());
        let (nr, nc) = (rows.iter().max().unwrap() + 1, cols.iter().max().unwrap() + 1);
        let transpose = nr > nc;
        let (h, w) = if transpose { (nc, nr) } else { (nr, nc) };
        let mut m = Matrix::new(h, w, 0i64);
        for (k, e) in entries.iter().enumerate() {
            let (r, c) = if transpose { (cols[k], rows[k]) } else { (rows[k], cols[k]) };
            m[(r, c)] = e.2;
        }
        matched += kuhn_munkres(&m).0;
    }
    matched as f64 / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn table(pairs: &[(u64, u32)]) -> LabelTable {
        pairs.iter().copied().collect()
    }

    #[test]
    fn perfect_segmentation_scores_zero() {
        let gt = table(&[(1, 1), (2, 1), (3, 2), (4, 0)]);
        let s = use_ose(&gt, &gt).unwrap();
        assert_eq!((s.use_, s.ose, s.points), (0.0, 0.0, 3));
    }

    #[test]
    fn merge_and_split_give_ln2() {
        let gt = table(&(0..10).map(|i| (i, if i < 5 { 1 } else { 2 })).collect::<Vec<_>>());
        let merged = table(&(0..10).map(|i| (i, 7)).collect::<Vec<_>>());
        let s = use_ose(&merged, &gt).unwrap();
        // −2 · (1/2) ln(1/2)
        let hand = -(0.5f64 * 0.5f64.ln()) * 2.0;
        assert!((s.use_ - hand).abs() < 1e-12 && (hand - LN_2).abs() < 1e-15);
        assert_eq!(s.ose, 0.0);

        let one = table(&(0..10).map(|i| (i, 3)).collect::<Vec<_>>());
        let split = table(&(0..10).map(|i| (i, if i % 2 == 0 { 1 } else { 2 })).collect::<Vec<_>>());
        let s = use_ose(&split, &one).unwrap();
        assert!((s.ose - LN_2).abs() < 1e-9);
        assert_eq!(s.use_, 0.0);
    }

    #[test]
    fn unknown_prediction_is_rejected() {
        let gt = table(&[(1, 1)]);
        let pred = table(&[(2, 1)]);
        assert!(matches!(use_ose(&pred, &gt), Err(Error::LabelMismatch(_))));
    }

    #[test]
    fn frames_are_aggregated() {
        let gt = table(&[(0, 1), (1, 2), (10, 1), (11, 1)]);
        // Frame 0 merges two instances, frame 1 is perfect.
        let pred = table(&[(0, 5), (1, 5), (10, 6), (11, 6)]);
        let r = segmentation_report(&pred, &gt, |id| id / 10).unwrap();
        assert_eq!(r.frames.len(), 2);
        assert!((r.use_mean - LN_2 / 2.0).abs() < 1e-12);
        assert!((r.use_std - LN_2 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn agreement_examples() {
        assert_eq!(partition_agreement(&[1, 1, 2, 2], &[9, 9, 4, 4]), 1.0);
        assert_eq!(partition_agreement(&[1, 1, 1, 1], &[1, 1, 2, 2]), 0.5);
        assert_eq!(partition_agreement(&[1, 1, 2, 3], &[5, 5, 5, 6]), 0.75);
        assert_eq!(partition_agreement::<u8, u8>(&[], &[]), 1.0);
    }
}

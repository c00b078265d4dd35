//! Point trees and the high-level tree graph.
//!
//! Every obstacle point of a finished column searches a rectangular field of view
//! to its left (and above it in its own column). The first neighbor closer than
//! `d_T` becomes its parent; further neighbors that belong to other trees add a
//! symmetric edge between the two roots. Trees therefore only grow down and to
//! the right, and merging never relabels existing cells.
//!
//! The azimuth window uses the horizontal radius of the point. A neighbor `q`
//! with `‖p − q‖ < d_T` satisfies `r_xy(p)·sin(Δφ) < d_T`, so a window of
//! `arcsin(d_T / r_xy)` covers every candidate. The 3D radius would not:
//! steep beams see far larger azimuth spreads.

use std::collections::BTreeSet;

use crate::config::{AssociationMode, ClusterConfig};
use crate::error::{Error, Result};
use crate::geom::{self, CellIndex};
use crate::range_image::{Cell, Label, RangeImage};

/// Per-root tree record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TreeMeta {
    /// Rearmost-laser azimuth beyond which no point can join this tree.
    pub phi_finished: f64,
    /// Roots of linked trees; kept symmetric.
    pub edges: Vec<CellIndex>,
    pub point_count: u32,
    pub published: bool,
}

pub fn fov_half_angle(radius: f64, d_t: f64) -> Result<f64> {
    if !(radius > 0.0 && d_t > 0.0) {
        return Err(Error::Config(format!(
            "field of view needs positive radius and d_T (got {radius}, {d_t})"
        )));
    }
    Ok((d_t / radius).min(1.0).asin())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FovSpec {
    pub half_angle: f64,
    /// Columns to the left of the current one that must be searched.
    pub col_span: i64,
    /// Heuristic A: columns (after the current one) that are always fully searched.
    pub inner_width: i64,
}

impl FovSpec {
    pub fn new(radius: f64, d_t: f64, delta_phi_col: f64, inner_width: u32) -> Result<Self> {
        let half_angle = fov_half_angle(radius, d_t)?;
        let col_span = ((half_angle / delta_phi_col).ceil() as i64).max(1);
        Ok(Self {
            half_angle,
            col_span,
            inner_width: (inner_width as i64).min(col_span),
        })
    }
}

/// Cursor over the field of view of one cell.
///
/// Order: own column upward from the cell, then own column downward, then the
/// columns at offsets −1, −2, …, −col_span, each top to bottom.
#[derive(Debug, Clone)]
pub struct FovTraversal {
    origin: CellIndex,
    rows: u32,
    col_span: i64,
    inner_width: i64,
    // Phase 0: upward, 1: downward, 2: left columns.
    phase: u8,
    offset: i64,
    row: i64,
}

/// One visited cell and whether it lies in the always-searched inner region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FovCell {
    pub index: CellIndex,
    pub inner: bool,
}

impl FovTraversal {
    pub fn new(origin: CellIndex, spec: &FovSpec, rows: usize) -> Self {
        Self {
            origin,
            rows: rows as u32,
            col_span: spec.col_span,
            inner_width: spec.inner_width,
            phase: 0,
            offset: 0,
            row: origin.row as i64 - 1,
        }
    }
}

impl Iterator for FovTraversal {
    type Item = FovCell;

    fn next(&mut self) -> Option<FovCell> {
        loop {
            match self.phase {
                0 => {
                    if self.row >= 0 {
                        let row = self.row as u32;
                        self.row -= 1;
                        return Some(FovCell { index: CellIndex::new(row, self.origin.col), inner: true });
                    }
                    self.phase = 1;
                    self.row = self.origin.row as i64 + 1;
                }
                1 => {
                    if self.row < self.rows as i64 {
                        let row = self.row as u32;
                        self.row += 1;
                        return Some(FovCell { index: CellIndex::new(row, self.origin.col), inner: true });
                    }
                    self.phase = 2;
                    self.offset = 1;
                    self.row = 0;
                }
                _ => {
                    if self.offset > self.col_span {
                        return None;
                    }
                    if self.row < self.rows as i64 {
                        let row = self.row as u32;
                        self.row += 1;
                        return Some(FovCell {
                            index: CellIndex::new(row, self.origin.col - self.offset),
                            inner: self.offset <= self.inner_width,
                        });
                    }
                    self.offset += 1;
                    self.row = 0;
                }
            }
        }
    }
}

pub fn traverse_fov_exact(origin: CellIndex, spec: &FovSpec, rows: usize) -> FovTraversal {
    FovTraversal::new(origin, spec, rows)
}

/// Heuristic-A traversal: the exact order, cut short in the outer region.
///
/// `visit` is called for every yielded cell and returns whether it produced an
/// association. Once an association exists, outer cells are no longer visited.
pub fn traverse_fov_heuristic_a(
    origin: CellIndex,
    spec: &FovSpec,
    rows: usize,
    mut visit: impl FnMut(CellIndex) -> bool,
) -> usize {
    let mut associated = false;
    let mut visited = 0;
    for cell in FovTraversal::new(origin, spec, rows) {
        if !cell.inner && associated {
            break;
        }
        visited += 1;
        associated |= visit(cell.index);
    }
    visited
}

/// Heuristic B keeps cells on the even squares of a checkerboard.
pub fn checkerboard_keep(row: u32, global_col: i64) -> bool {
    (row as i64 + global_col).rem_euclid(2) == 0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Association {
    NewRoot,
    Child { parent: CellIndex, edges_added: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct TreeStats {
    pub associated: u64,
    pub roots_created: u64,
    pub edges_created: u64,
    pub skipped_checkerboard: u64,
    pub cells_visited: u64,
    /// Associations whose field of view reached before the live window.
    pub fov_truncated: u64,
}

/// One association event, recorded when tracing is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEntry {
    pub point_id: u64,
    pub cell: CellIndex,
    pub parent: Option<CellIndex>,
    pub root: CellIndex,
}

/// Builds point trees column by column; sole writer of tree fields.
#[derive(Debug, Clone)]
pub struct TreeBuilder {
    d_t: f64,
    mode: AssociationMode,
    inner_width: u32,
    checkerboard: bool,
    vertical_prune: bool,
    stats: TreeStats,
    trace: Option<Vec<TraceEntry>>,
}

/// Is `root`'s tree still accepting points?
fn tree_open(image: &RangeImage, root: CellIndex) -> bool {
    image
        .cell(root)
        .and_then(|c| c.tree.as_deref())
        .is_some_and(|meta| !meta.published)
}

impl TreeBuilder {
    pub fn new(config: &ClusterConfig) -> Self {
        Self {
            d_t: config.d_t,
            mode: config.mode,
            inner_width: config.inner_width,
            checkerboard: config.checkerboard,
            vertical_prune: config.vertical_prune,
            stats: TreeStats::default(),
            trace: None,
        }
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> Option<&[TraceEntry]> {
        self.trace.as_deref()
    }

    pub fn stats(&self) -> &TreeStats {
        &self.stats
    }

    pub fn d_t(&self) -> f64 {
        self.d_t
    }

    /// Cluster every obstacle cell of a finished column, top to bottom.
    pub fn process_column(
        &mut self,
        image: &mut RangeImage,
        col: i64,
        roots: &mut BTreeSet<CellIndex>,
    ) -> Result<()> {
        for row in 0..image.rows() as u32 {
            let idx = CellIndex::new(row, col);
            let Some(cell) = image.cell_mut(idx) else {
                return Err(Error::Invariant(format!("column {col} is not live")));
            };
            if cell.label != Label::Obstacle {
                continue;
            }
            if self.checkerboard && !checkerboard_keep(row, col) {
                cell.label = Label::Skipped;
                self.stats.skipped_checkerboard += 1;
                continue;
            }
            self.associate_point(image, idx, roots)?;
        }
        Ok(())
    }

    /// Attach one obstacle cell to the forest.
    pub fn associate_point(
        &mut self,
        image: &mut RangeImage,
        idx: CellIndex,
        roots: &mut BTreeSet<CellIndex>,
    ) -> Result<Association> {
        let cell = image
            .cell(idx)
            .ok_or_else(|| Error::Invariant(format!("cell {idx} is not live")))?;
        let (p, radius, phi, point_id) = (cell.world_xyz, cell.radius, cell.phi_cont, cell.point_id);

        let mut parent: Option<(CellIndex, CellIndex)> = None; // (parent cell, root)
        let mut new_edges: Vec<CellIndex> = Vec::new();
        let half_angle;

        if self.d_t > 0.0 {
            let spec = FovSpec::new(radius, self.d_t, image.delta_phi_col(), self.inner_width)?;
            half_angle = spec.half_angle;
            if idx.col - spec.col_span < image.first_live_col() {
                self.stats.fov_truncated += 1;
            }
            let d_t = self.d_t;
            let prune = self.vertical_prune;
            let image_ref: &RangeImage = image;
            let mut visit = |q_idx: CellIndex| -> bool {
                let Some(q) = image_ref.cell(q_idx) else {
                    return false;
                };
                if q.label != Label::Obstacle {
                    return false;
                }
                let Some(q_root) = q.root else {
                    return false;
                };
                if prune && (q.world_xyz[2] as f64 - p[2] as f64).abs() >= d_t {
                    return false;
                }
                if !geom::linked(p, q.world_xyz, d_t) || !tree_open(image_ref, q_root) {
                    return false;
                }
                match parent {
                    None => {
                        parent = Some((q_idx, q_root));
                        true
                    }
                    Some((_, own_root)) => {
                        if q_root == own_root || new_edges.contains(&q_root) {
                            return false;
                        }
                        let known = image_ref
                            .cell(own_root)
                            .and_then(|c| c.tree.as_deref())
                            .is_some_and(|m| m.edges.contains(&q_root));
                        if known {
                            false
                        } else {
                            new_edges.push(q_root);
                            true
                        }
                    }
                }
            };
            let visited = match self.mode {
                AssociationMode::Exact => {
                    let mut n = 0;
                    for fov_cell in traverse_fov_exact(idx, &spec, image_ref.rows()) {
                        n += 1;
                        visit(fov_cell.index);
                    }
                    n
                }
                AssociationMode::HeuristicA => {
                    traverse_fov_heuristic_a(idx, &spec, image_ref.rows(), &mut visit)
                }
            };
            self.stats.cells_visited += visited as u64;
        } else {
            half_angle = 0.0;
        }

        let completion = phi + half_angle;
        self.stats.associated += 1;
        let outcome = match parent {
            None => {
                let cell = image.cell_mut(idx).expect("live cell");
                cell.root = Some(idx);
                cell.tree = Some(Box::new(TreeMeta {
                    phi_finished: completion,
                    edges: Vec::new(),
                    point_count: 1,
                    published: false,
                }));
                roots.insert(idx);
                self.stats.roots_created += 1;
                Association::NewRoot
            }
            Some((parent_idx, root)) => {
                image.cell_mut(idx).expect("live cell").root = Some(root);
                image
                    .cell_mut(parent_idx)
                    .expect("parent is live")
                    .children
                    .push(idx);
                let meta = tree_meta_mut(image, root)?;
                meta.point_count += 1;
                meta.phi_finished = meta.phi_finished.max(completion);
                for other in &new_edges {
                    meta.edges.push(*other);
                }
                for other in &new_edges {
                    tree_meta_mut(image, *other)?.edges.push(root);
                }
                self.stats.edges_created += new_edges.len() as u64;
                Association::Child { parent: parent_idx, edges_added: new_edges.len() }
            }
        };
        if let Some(trace) = &mut self.trace {
            let root = image.cell(idx).and_then(|c| c.root).expect("associated");
            trace.push(TraceEntry {
                point_id,
                cell: idx,
                parent: match outcome {
                    Association::NewRoot => None,
                    Association::Child { parent, .. } => Some(parent),
                },
                root,
            });
        }
        Ok(outcome)
    }
}

pub(crate) fn tree_meta_mut(image: &mut RangeImage, root: CellIndex) -> Result<&mut TreeMeta> {
    image
        .cell_mut(root)
        .and_then(|c: &mut Cell| c.tree.as_deref_mut())
        .ok_or_else(|| Error::Invariant(format!("root {root} has no tree record")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Frame;
    use crate::range_image::{prepare_firing, Firing, FiringPoint, StreamHeader};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI, TAU};

    /// Taylor series of arcsin around 0; independent of `f64::asin`.
    fn asin_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0u32;
        loop {
            let k = n as f64;
            term *= x * x * (2.0 * k + 1.0) * (2.0 * k + 1.0) / ((2.0 * k + 2.0) * (2.0 * k + 3.0));
            sum += term;
            n += 1;
            if term.abs() < 1e-17 || n > 200 {
                return sum;
            }
        }
    }

    #[test]
    fn fov_half_angle_examples() {
        assert!((fov_half_angle(0.7, 0.7).unwrap() - FRAC_PI_2).abs() < 1e-12);
        assert!((fov_half_angle(0.3, 0.7).unwrap() - FRAC_PI_2).abs() < 1e-12);
        assert!((fov_half_angle(1.4, 0.7).unwrap() - FRAC_PI_6).abs() < 1e-12);
        // Frozen from the series oracle: asin(0.07) = 0.0700573...
        let oracle = asin_series(0.07);
        assert!((oracle - 0.070_057_3).abs() < 5e-8);
        assert!((fov_half_angle(10.0, 0.7).unwrap() - oracle).abs() < 1e-12);
        assert!(fov_half_angle(0.0, 0.7).is_err());
        assert!(fov_half_angle(1.0, 0.0).is_err());
    }

    #[test]
    fn fov_spec_spans_at_least_one_column() {
        let spec = FovSpec::new(1e6, 0.7, TAU / 1800.0, 2).unwrap();
        assert_eq!(spec.col_span, 1);
        assert_eq!(spec.inner_width, 1);
        let spec = FovSpec::new(10.0, 0.7, TAU / 1800.0, 2).unwrap();
        assert_eq!(spec.col_span, (0.070_057_3_f64 / (TAU / 1800.0)).ceil() as i64);
    }

    fn spec(col_span: i64, inner_width: i64) -> FovSpec {
        FovSpec { half_angle: 0.1, col_span, inner_width }
    }

    #[test]
    fn traversal_at_top_row_with_one_column() {
        let cells: Vec<CellIndex> =
            traverse_fov_exact(CellIndex::new(0, 10), &spec(1, 0), 3).map(|c| c.index).collect();
        assert_eq!(
            cells,
            vec![
                CellIndex::new(1, 10),
                CellIndex::new(2, 10),
                CellIndex::new(0, 9),
                CellIndex::new(1, 9),
                CellIndex::new(2, 9),
            ]
        );
    }

    #[test]
    fn traversal_visits_one_plus_span_columns() {
        let visited: Vec<FovCell> = traverse_fov_exact(CellIndex::new(2, 50), &spec(3, 1), 4).collect();
        let cols: BTreeSet<i64> = visited.iter().map(|c| c.index.col).collect();
        assert_eq!(cols.into_iter().collect::<Vec<_>>(), vec![47, 48, 49, 50]);
        assert_eq!(visited.len(), 3 + 3 * 4);
        // Own column: upward first.
        assert_eq!(visited[0].index, CellIndex::new(1, 50));
        assert_eq!(visited[1].index, CellIndex::new(0, 50));
        assert_eq!(visited[2].index, CellIndex::new(3, 50));
        assert!(visited.iter().all(|c| c.inner == (c.index.col >= 49)));
        let again: Vec<FovCell> = traverse_fov_exact(CellIndex::new(2, 50), &spec(3, 1), 4).collect();
        assert_eq!(visited, again);
    }

    #[test]
    fn heuristic_a_matches_exact_without_hits() {
        let s = spec(4, 2);
        let exact = traverse_fov_exact(CellIndex::new(1, 20), &s, 5).count();
        let visited = traverse_fov_heuristic_a(CellIndex::new(1, 20), &s, 5, |_| false);
        assert_eq!(visited, exact);
    }

    #[test]
    fn heuristic_a_skips_outer_after_inner_hit() {
        let s = spec(4, 2);
        let mut seen = Vec::new();
        traverse_fov_heuristic_a(CellIndex::new(1, 20), &s, 5, |idx| {
            seen.push(idx);
            idx == CellIndex::new(3, 19)
        });
        assert!(seen.iter().all(|c| c.col >= 18));
        assert_eq!(seen.len(), 4 + 2 * 5);
        // An outer hit stops immediately.
        let mut seen = Vec::new();
        traverse_fov_heuristic_a(CellIndex::new(1, 20), &s, 5, |idx| {
            seen.push(idx);
            idx == CellIndex::new(2, 17)
        });
        assert_eq!(*seen.last().unwrap(), CellIndex::new(2, 17));
    }

    #[test]
    fn checkerboard_parity() {
        assert!(checkerboard_keep(0, 0));
        assert!(!checkerboard_keep(0, 1));
        assert!(checkerboard_keep(3, -1));
        for (w, h) in [(1usize, 1usize), (3, 5), (4, 4), (7, 2), (5, 5)] {
            let kept = (0..h)
                .flat_map(|r| (0..w).map(move |c| (r, c)))
                .filter(|&(r, c)| checkerboard_keep(r as u32, c as i64))
                .count();
            assert_eq!(kept, (w * h).div_ceil(2), "{w}x{h}");
        }
    }

    /// Places points at explicit (row, column) cells; all at zero elevation so that
    /// geometry is easy to reason about.
    struct Grid {
        image: RangeImage,
        header: StreamHeader,
        ordinal: u64,
    }

    impl Grid {
        fn new(rows: usize) -> Self {
            let header = StreamHeader {
                rows,
                n_firings: 3600,
                elevations: vec![0.0; rows],
                azimuth_offsets: vec![0.0; rows],
            };
            Self { image: RangeImage::new(rows, 3600, 512), header, ordinal: 0 }
        }

        /// One firing centered on `col`, with `points[row] = Some((range, z))`.
        fn firing(&mut self, col: i64, points: &[Option<(f64, f32)>]) -> Vec<i64> {
            let phi = (col as f64 + 0.5) * self.image.delta_phi_col();
            let a = PI - phi;
            let entries = points
                .iter()
                .map(|p| match p {
                    Some((r, z)) => FiringPoint {
                        sensor_xyz: [(a.cos() * r) as f32, (a.sin() * r) as f32, *z],
                        range: *r as f32,
                        valid: true,
                    },
                    None => FiringPoint {
                        sensor_xyz: [a.cos() as f32, a.sin() as f32, 0.0],
                        range: 0.0,
                        valid: false,
                    },
                })
                .collect();
            let firing = Firing { timestamp_ns: 0, rotation: geom::IDENTITY, points: entries };
            let prepared = prepare_firing(&self.header, &firing, self.ordinal, Frame::World).unwrap();
            self.ordinal += 1;
            self.image.insert_firing(&prepared).unwrap()
        }
    }

    fn cluster_all(grid: &mut Grid, builder: &mut TreeBuilder, roots: &mut BTreeSet<CellIndex>, cols: &[i64]) {
        for &c in cols {
            builder.process_column(&mut grid.image, c, roots).unwrap();
        }
    }

    #[test]
    fn isolated_point_becomes_root() {
        let mut grid = Grid::new(2);
        grid.firing(100, &[Some((10.0, 0.0)), None]);
        grid.firing(101, &[None, None]);
        let mut roots = BTreeSet::new();
        let mut builder = TreeBuilder::new(&ClusterConfig::default());
        let outcome = builder.associate_point(&mut grid.image, CellIndex::new(0, 100), &mut roots).unwrap();
        assert_eq!(outcome, Association::NewRoot);
        let meta = grid.image.cell(CellIndex::new(0, 100)).unwrap().tree.clone().unwrap();
        assert_eq!(meta.point_count, 1);
        assert_eq!(roots.len(), 1);
        let cell = grid.image.cell(CellIndex::new(0, 100)).unwrap();
        let expected = cell.phi_cont + fov_half_angle(cell.radius, 0.7).unwrap();
        assert!((meta.phi_finished - expected).abs() < 1e-12);
    }

    #[test]
    fn near_point_joins_existing_tree() {
        let mut grid = Grid::new(2);
        grid.firing(100, &[Some((10.0, 0.0)), None]);
        grid.firing(101, &[None, Some((10.0, -0.3))]);
        grid.firing(102, &[None, None]);
        let mut roots = BTreeSet::new();
        let mut builder = TreeBuilder::new(&ClusterConfig::default());
        cluster_all(&mut grid, &mut builder, &mut roots, &[100, 101]);
        assert_eq!(roots.len(), 1);
        let child = grid.image.cell(CellIndex::new(1, 101)).unwrap();
        assert_eq!(child.root, Some(CellIndex::new(0, 100)));
        let root = grid.image.cell(CellIndex::new(0, 100)).unwrap();
        assert_eq!(root.children, vec![CellIndex::new(1, 101)]);
        let meta = root.tree.as_deref().unwrap();
        assert_eq!(meta.point_count, 2);
        assert!(meta.edges.is_empty());
    }

    /// Two branches start apart and meet in a later column: one parent link plus
    /// one mutual edge between the two roots.
    #[test]
    fn x_shape_links_two_trees() {
        let mut grid = Grid::new(5);
        let r = 10.0;
        grid.firing(200, &[Some((r, 1.0)), None, None, None, Some((r, -1.0))]);
        grid.firing(201, &[None, Some((r, 0.5)), None, Some((r, -0.5)), None]);
        grid.firing(202, &[None, None, Some((r, 0.0)), None, None]);
        grid.firing(203, &[None; 5]);
        let mut roots = BTreeSet::new();
        let mut builder = TreeBuilder::new(&ClusterConfig::default());
        cluster_all(&mut grid, &mut builder, &mut roots, &[200, 201, 202]);
        let top = CellIndex::new(0, 200);
        let bottom = CellIndex::new(4, 200);
        assert_eq!(roots.iter().copied().collect::<Vec<_>>(), vec![top, bottom]);
        let merge = grid.image.cell(CellIndex::new(2, 202)).unwrap();
        assert_eq!(merge.root, Some(top));
        let top_meta = grid.image.cell(top).unwrap().tree.clone().unwrap();
        let bottom_meta = grid.image.cell(bottom).unwrap().tree.clone().unwrap();
        assert_eq!(top_meta.edges, vec![bottom]);
        assert_eq!(bottom_meta.edges, vec![top]);
        assert_eq!(builder.stats().edges_created, 1);
    }

    #[test]
    fn zero_threshold_never_links() {
        let mut grid = Grid::new(2);
        grid.firing(10, &[Some((5.0, 0.0)), Some((5.0, 0.0))]);
        grid.firing(11, &[None, None]);
        let mut roots = BTreeSet::new();
        let config = ClusterConfig { d_t: 0.0, ..ClusterConfig::default() };
        let mut builder = TreeBuilder::new(&config);
        cluster_all(&mut grid, &mut builder, &mut roots, &[10]);
        assert_eq!(roots.len(), 2);
    }

    #[test]
    fn checkerboard_skips_odd_cells() {
        let mut grid = Grid::new(4);
        grid.firing(10, &[Some((5.0, 0.3)), Some((5.0, 0.2)), Some((5.0, 0.1)), Some((5.0, 0.0))]);
        grid.firing(11, &[None; 4]);
        let mut roots = BTreeSet::new();
        let config = ClusterConfig { checkerboard: true, ..ClusterConfig::default() };
        let mut builder = TreeBuilder::new(&config);
        builder.enable_trace();
        cluster_all(&mut grid, &mut builder, &mut roots, &[10]);
        let labels: Vec<Label> = (0..4).map(|r| grid.image.cell(CellIndex::new(r, 10)).unwrap().label).collect();
        assert_eq!(labels, vec![Label::Obstacle, Label::Skipped, Label::Obstacle, Label::Skipped]);
        assert_eq!(builder.trace().unwrap().len(), 2);
    }
}

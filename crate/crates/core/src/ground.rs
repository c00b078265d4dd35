//! Two-pass ground classification of finished columns.
//!
//! Pass 1 walks a column bottom-up and grows a chain of ground points from the
//! first return outside the ego box, as long as consecutive points stay flat.
//! Pass 2 relabels remaining obstacle points that sit close to a terrain height
//! estimated from the pass-1 ground points of earlier columns.

use serde::{Deserialize, Serialize};

use crate::config::GroundConfig;
use crate::range_image::{Cell, Label};

/// Axis-aligned ego-vehicle box in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoBounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl EgoBounds {
    pub fn contains(&self, p: [f32; 3]) -> bool {
        (0..3).all(|i| {
            let v = p[i] as f64;
            v >= self.min[i] && v <= self.max[i]
        })
    }

    /// Height of the ground contact below the sensor.
    pub fn min_z(&self) -> f64 {
        self.min[2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundParams {
    pub tan_slope: f64,
    pub z_match_tol: f64,
    pub z_ground_tol: f64,
    pub max_gap_rows: usize,
}

impl From<&GroundConfig> for GroundParams {
    fn from(c: &GroundConfig) -> Self {
        Self {
            tan_slope: c.slope_deg.to_radians().tan(),
            z_match_tol: c.z_match_tol,
            z_ground_tol: c.z_ground_tol,
            max_gap_rows: c.max_gap_rows,
        }
    }
}

fn flat_enough(a: [f32; 3], b: [f32; 3], tan_slope: f64) -> bool {
    let dz = (b[2] as f64 - a[2] as f64).abs();
    let dxy = (b[0] as f64 - a[0] as f64).hypot(b[1] as f64 - a[1] as f64);
    dz <= tan_slope * dxy
}

/// Bottom-up slope pass. Returns one label per row; empty cells stay empty.
///
/// Missing returns inside a chain are bridged for up to `max_gap_rows` rows;
/// a longer gap restarts the chain, which must then re-anchor on the ego ground height.
pub fn classify_column_pass1(cells: &[Cell], ego: &EgoBounds, params: &GroundParams) -> Vec<Label> {
    let mut labels = vec![Label::Empty; cells.len()];
    let mut previous: Option<([f32; 3], bool)> = None;
    let mut gap = 0usize;
    for row in (0..cells.len()).rev() {
        let cell = &cells[row];
        if cell.is_empty() {
            gap += 1;
            if gap > params.max_gap_rows {
                previous = None;
            }
            continue;
        }
        if ego.contains(cell.sensor_xyz) {
            labels[row] = Label::Ego;
            continue;
        }
        gap = 0;
        let p = cell.world_xyz;
        let ground = match previous {
            None => (p[2] as f64 - ego.min_z()).abs() <= params.z_match_tol,
            Some((prev, prev_ground)) => prev_ground && flat_enough(prev, p, params.tan_slope),
        };
        labels[row] = if ground { Label::Ground } else { Label::Obstacle };
        previous = Some((p, ground));
    }
    labels
}

/// Terrain pass: obstacle points near the estimated terrain become ground.
/// Never turns ground into obstacle.
pub fn classify_column_pass2(
    cells: &[Cell],
    labels: &mut [Label],
    grid: &TerrainGrid,
    z_ground_tol: f64,
) {
    for (cell, label) in cells.iter().zip(labels.iter_mut()) {
        if *label != Label::Obstacle {
            continue;
        }
        let p = cell.world_xyz;
        if let Some(height) = grid.height_at(p[0] as f64, p[1] as f64) {
            if (p[2] as f64 - height).abs() <= z_ground_tol {
                *label = Label::Ground;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Slot {
    key: (i64, i64),
    height: f64,
    weight: u32,
}

/// Rolling world-fixed grid of running-mean ground heights.
///
/// Slots are addressed toroidally; a slot is only trusted when its stored key
/// matches the queried cell and the cell lies inside the current window.
#[derive(Debug, Clone)]
pub struct TerrainGrid {
    cell_size: f64,
    side: usize,
    weight_cap: u32,
    center: (i64, i64),
    slots: Vec<Slot>,
}

impl TerrainGrid {
    pub fn new(cell_size: f64, extent: f64, weight_cap: u32) -> Self {
        let side = ((extent / cell_size).ceil() as usize).max(1);
        Self {
            cell_size,
            side,
            weight_cap,
            center: (0, 0),
            slots: vec![Slot::default(); side * side],
        }
    }

    pub fn from_config(c: &GroundConfig) -> Self {
        Self::new(c.cell_size, c.grid_extent, c.weight_cap)
    }

    fn key(&self, x: f64, y: f64) -> (i64, i64) {
        (
            (x / self.cell_size).floor() as i64,
            (y / self.cell_size).floor() as i64,
        )
    }

    fn in_window(&self, key: (i64, i64)) -> bool {
        let half = (self.side / 2) as i64;
        let lo = (self.center.0 - half, self.center.1 - half);
        key.0 >= lo.0
            && key.0 < lo.0 + self.side as i64
            && key.1 >= lo.1
            && key.1 < lo.1 + self.side as i64
    }

    fn slot_index(&self, key: (i64, i64)) -> usize {
        let n = self.side as i64;
        (key.0.rem_euclid(n) * n + key.1.rem_euclid(n)) as usize
    }

    /// Move the window so it is centered on `(x, y)`. Cells that leave it are forgotten.
    pub fn recenter(&mut self, x: f64, y: f64) {
        self.center = self.key(x, y);
    }

    pub fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        let key = self.key(x, y);
        if !self.in_window(key) {
            return None;
        }
        let slot = &self.slots[self.slot_index(key)];
        (slot.key == key && slot.weight > 0).then_some(slot.height)
    }

    pub fn weight_at(&self, x: f64, y: f64) -> u32 {
        let key = self.key(x, y);
        if !self.in_window(key) {
            return 0;
        }
        let slot = &self.slots[self.slot_index(key)];
        if slot.key == key {
            slot.weight
        } else {
            0
        }
    }

    pub fn update(&mut self, x: f64, y: f64, z: f64) {
        let key = self.key(x, y);
        if !self.in_window(key) {
            return;
        }
        let cap = self.weight_cap;
        let idx = self.slot_index(key);
        let slot = &mut self.slots[idx];
        if slot.key != key || slot.weight == 0 {
            *slot = Slot { key, height: 0.0, weight: 0 };
        }
        let w = slot.weight as f64;
        slot.height = (w * slot.height + z) / (w + 1.0);
        slot.weight = (slot.weight + 1).min(cap);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct GroundStats {
    pub ground_pass1: u64,
    pub ground_pass2: u64,
    pub obstacle: u64,
    pub ego: u64,
}

/// Per-column ground stage; owns the terrain grid.
#[derive(Debug, Clone)]
pub struct GroundSegmenter {
    enabled: bool,
    ego: EgoBounds,
    params: GroundParams,
    grid: TerrainGrid,
    stats: GroundStats,
}

impl GroundSegmenter {
    pub fn new(config: &GroundConfig, ego: EgoBounds) -> Self {
        Self {
            enabled: config.enabled,
            ego,
            params: GroundParams::from(config),
            grid: TerrainGrid::from_config(config),
            stats: GroundStats::default(),
        }
    }

    pub fn grid(&self) -> &TerrainGrid {
        &self.grid
    }

    pub fn stats(&self) -> &GroundStats {
        &self.stats
    }

    /// Label one finished column in place.
    pub fn process_column(&mut self, cells: &mut [Cell]) {
        let mut labels = if self.enabled {
            classify_column_pass1(cells, &self.ego, &self.params)
        } else {
            cells
                .iter()
                .map(|c| match c.label {
                    Label::Empty => Label::Empty,
                    _ if self.ego.contains(c.sensor_xyz) => Label::Ego,
                    _ => Label::Obstacle,
                })
                .collect()
        };
        let certain: Vec<[f32; 3]> = cells
            .iter()
            .zip(&labels)
            .filter(|(_, l)| **l == Label::Ground)
            .map(|(c, _)| c.world_xyz)
            .collect();
        self.stats.ground_pass1 += certain.len() as u64;
        if self.enabled {
            classify_column_pass2(cells, &mut labels, &self.grid, self.params.z_ground_tol);
            for p in &certain {
                self.grid.update(p[0] as f64, p[1] as f64, p[2] as f64);
            }
        }
        for (cell, label) in cells.iter_mut().zip(labels) {
            match label {
                Label::Ground => self.stats.ground_pass2 += 1,
                Label::Obstacle => self.stats.obstacle += 1,
                Label::Ego => self.stats.ego += 1,
                _ => {}
            }
            cell.label = label;
        }
        self.stats.ground_pass2 -= certain.len() as u64;
    }
}

//! Horizontally continuous range image.
//!
//! Rows are lasers sorted by elevation (row 0 is the highest beam). Columns are
//! azimuth bins of width `2π / N_firings` that keep growing across rotations:
//! the continuous azimuth `φ_cont = (π − atan2(y, x)) + 2π·i_rot` never wraps,
//! so the global column index of a clockwise sensor only increases. Storage is a
//! cyclic buffer of `W` columns addressed by global column.

use std::f64::consts::{PI, TAU};

use crate::config::Frame;
use crate::error::{Error, Result};
use crate::geom::{self, CellIndex, Rotation};
use crate::tree::TreeMeta;

/// Sensor description carried at the start of every firing stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamHeader {
    pub rows: usize,
    /// Nominal firings per rotation; fixes the column width.
    pub n_firings: u32,
    /// Elevation of each row in radians, row 0 highest.
    pub elevations: Vec<f64>,
    /// Constant continuous-azimuth offset of each row relative to the firing, radians.
    pub azimuth_offsets: Vec<f64>,
}

impl StreamHeader {
    pub fn delta_phi_col(&self) -> f64 {
        TAU / self.n_firings as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.rows > u16::MAX as usize {
            return Err(Error::Format(format!("unsupported row count {}", self.rows)));
        }
        if self.n_firings == 0 {
            return Err(Error::Format("firings per rotation must be positive".into()));
        }
        if self.elevations.len() != self.rows || self.azimuth_offsets.len() != self.rows {
            return Err(Error::Format("per-row tables do not match row count".into()));
        }
        if self.azimuth_offsets.iter().any(|o| !o.is_finite()) {
            return Err(Error::Format("non-finite azimuth offset".into()));
        }
        Ok(())
    }

    fn min_offset(&self) -> f64 {
        self.azimuth_offsets.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// One laser return of a firing. Invalid entries may still carry the beam's
/// unit direction in `sensor_xyz`; that is enough to locate the firing in azimuth.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FiringPoint {
    pub sensor_xyz: [f32; 3],
    pub range: f32,
    pub valid: bool,
}

/// A simultaneous shot of all lasers. `points[row]` belongs to laser `row`.
#[derive(Debug, Clone, PartialEq)]
pub struct Firing {
    pub timestamp_ns: u64,
    /// World-from-sensor rotation at firing time.
    pub rotation: Rotation,
    pub points: Vec<FiringPoint>,
}

impl Firing {
    pub fn validate(&self, rows: usize) -> Result<()> {
        if self.points.len() != rows {
            return Err(Error::Format(format!(
                "firing has {} entries, expected {rows}",
                self.points.len()
            )));
        }
        let err = geom::orthonormality_error(&self.rotation);
        if err.is_nan() || err > 1e-6 {
            return Err(Error::Format(format!("rotation is not orthonormal (error {err:.3e})")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum Label {
    #[default]
    Empty,
    Ego,
    Ground,
    Obstacle,
    Skipped,
}

#[derive(Debug, Clone, Default)]
pub struct Cell {
    /// `firing ordinal × rows + row`; stable between replay and output.
    pub point_id: u64,
    pub timestamp_ns: u64,
    pub world_xyz: [f32; 3],
    pub sensor_xyz: [f32; 3],
    /// Horizontal distance to the sensor origin.
    pub radius: f64,
    pub phi_cont: f64,
    pub global_col: i64,
    pub label: Label,
    pub children: Vec<CellIndex>,
    pub root: Option<CellIndex>,
    pub visited_stamp: i64,
    /// Present on tree roots only.
    pub tree: Option<Box<TreeMeta>>,
}

impl Cell {
    pub fn is_empty(&self) -> bool {
        self.label == Label::Empty
    }
}

/// `(π − atan2(y, x))` folded into `[0, 2π)`.
pub fn raw_azimuth(x: f64, y: f64) -> Result<f64> {
    if x == 0.0 && y == 0.0 {
        return Err(Error::InvalidMeasurement("zero-length xy projection"));
    }
    let phi = PI - y.atan2(x);
    Ok(if phi >= TAU { phi - TAU } else { phi })
}

pub fn continuous_azimuth(x: f64, y: f64, rotation_index: i64) -> Result<f64> {
    Ok(raw_azimuth(x, y)? + TAU * rotation_index as f64)
}

/// Points of a firing that straddles the negative x-axis and that already crossed it
/// belong to the next rotation.
pub fn rotation_index_for_point(
    rear_rotation: i64,
    firing_crosses_negative_x: bool,
    point_past_negative_x: bool,
) -> i64 {
    if firing_crosses_negative_x && point_past_negative_x {
        rear_rotation + 1
    } else {
        rear_rotation
    }
}

/// A point ahead of the rearmost laser whose raw azimuth wrapped to the start.
pub fn point_past_negative_x(phi_raw: f64, rear_raw: f64) -> bool {
    rear_raw - phi_raw > PI
}

pub fn column_index(phi_cont: f64, delta_phi_col: f64) -> Result<i64> {
    if phi_cont.is_nan() || phi_cont < 0.0 {
        return Err(Error::Invariant(format!(
            "negative continuous azimuth {phi_cont}; rotation index bookkeeping is broken"
        )));
    }
    Ok((phi_cont / delta_phi_col).floor() as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteDecision {
    Store,
    Replace,
    Drop,
}

/// Same-cell collisions keep the nearer return.
pub fn cell_write_policy(existing: &Cell, incoming_radius: f64) -> WriteDecision {
    if existing.is_empty() {
        WriteDecision::Store
    } else if incoming_radius < existing.radius {
        WriteDecision::Replace
    } else {
        WriteDecision::Drop
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreparedPoint {
    pub row: u32,
    pub point_id: u64,
    pub world_xyz: [f32; 3],
    pub sensor_xyz: [f32; 3],
    pub phi_raw: f64,
    pub radius: f64,
}

/// A firing with all per-point geometry resolved; only the rotation-index
/// bookkeeping remains, which needs stream state.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedFiring {
    pub ordinal: u64,
    pub timestamp_ns: u64,
    pub points: Vec<PreparedPoint>,
    /// Raw azimuth of the rearmost laser, if any entry carried a direction.
    pub rear_raw: Option<f64>,
    pub invalid_points: u64,
}

fn wrap_tau(mut a: f64) -> f64 {
    a = a.rem_euclid(TAU);
    if a >= TAU {
        0.0
    } else {
        a
    }
}

/// Fold `a` into `(reference − π, reference + π]`.
fn unwrap_near(a: f64, reference: f64) -> f64 {
    let mut d = (a - reference).rem_euclid(TAU);
    if d > PI {
        d -= TAU;
    }
    reference + d
}

/// Transform a firing into the range-image frame and locate its rearmost laser.
pub fn prepare_firing(
    header: &StreamHeader,
    firing: &Firing,
    ordinal: u64,
    frame: Frame,
) -> Result<PreparedFiring> {
    firing.validate(header.rows)?;
    let rot = match frame {
        Frame::World => firing.rotation,
        Frame::Sensor => geom::IDENTITY,
    };
    let min_offset = header.min_offset();
    let mut points = Vec::with_capacity(header.rows);
    let mut rear_estimate: Option<(f64, f64)> = None; // (reference, unwrapped minimum)
    let mut invalid_points = 0;

    for (row, entry) in firing.points.iter().enumerate() {
        let s = entry.sensor_xyz;
        let direction = geom::rotate(&rot, [s[0] as f64, s[1] as f64, s[2] as f64]);
        let (phi_raw, prepared) = if entry.valid {
            let world = [direction[0] as f32, direction[1] as f32, direction[2] as f32];
            match raw_azimuth(world[0] as f64, world[1] as f64) {
                Ok(phi) => (
                    phi,
                    Some(PreparedPoint {
                        row: row as u32,
                        point_id: ordinal * header.rows as u64 + row as u64,
                        world_xyz: world,
                        sensor_xyz: s,
                        phi_raw: phi,
                        radius: geom::horizontal_radius(world),
                    }),
                ),
                Err(_) => {
                    invalid_points += 1;
                    continue;
                }
            }
        } else {
            match raw_azimuth(direction[0], direction[1]) {
                Ok(phi) => (phi, None),
                Err(_) => continue,
            }
        };
        let estimate = phi_raw - (header.azimuth_offsets[row] - min_offset);
        rear_estimate = Some(match rear_estimate {
            None => (estimate, estimate),
            Some((reference, lowest)) => (reference, lowest.min(unwrap_near(estimate, reference))),
        });
        points.extend(prepared);
    }

    Ok(PreparedFiring {
        ordinal,
        timestamp_ns: firing.timestamp_ns,
        points,
        rear_raw: rear_estimate.map(|(_, lowest)| wrap_tau(lowest)),
        invalid_points,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct InsertStats {
    pub firings: u64,
    pub inserted: u64,
    /// Returns that lost a same-cell collision (including replaced ones).
    pub collisions: u64,
    /// Points whose column was already finished or recycled.
    pub late_dropped: u64,
    /// Points beyond the buffer capacity.
    pub overflow_dropped: u64,
    /// Valid flags on points without a usable xy projection.
    pub invalid_points: u64,
}

#[derive(Debug)]
pub struct RangeImage {
    rows: usize,
    width: usize,
    n_firings: u32,
    delta_phi_col: f64,
    cells: Vec<Cell>,
    first_live: i64,
    rear_rotation: i64,
    prev_rear_raw: Option<f64>,
    rear_phi: f64,
    next_unreported: Option<i64>,
    max_written_col: Option<i64>,
    stats: InsertStats,
}

impl RangeImage {
    pub fn new(rows: usize, n_firings: u32, width: usize) -> Self {
        assert!(rows > 0 && width > 0 && n_firings > 0);
        Self {
            rows,
            width,
            n_firings,
            delta_phi_col: TAU / n_firings as f64,
            cells: vec![Cell::default(); rows * width],
            first_live: 0,
            rear_rotation: 0,
            prev_rear_raw: None,
            rear_phi: 0.0,
            next_unreported: None,
            max_written_col: None,
            stats: InsertStats::default(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_firings(&self) -> u32 {
        self.n_firings
    }

    pub fn delta_phi_col(&self) -> f64 {
        self.delta_phi_col
    }

    pub fn first_live_col(&self) -> i64 {
        self.first_live
    }

    /// Continuous azimuth of the latest firing's rearmost laser.
    pub fn rear_phi(&self) -> f64 {
        self.rear_phi
    }

    pub fn rear_rotation(&self) -> i64 {
        self.rear_rotation
    }

    /// First column that has not been reported finished yet.
    pub fn next_unfinished_col(&self) -> Option<i64> {
        self.next_unreported
    }

    pub fn max_written_col(&self) -> Option<i64> {
        self.max_written_col
    }

    pub fn stats(&self) -> &InsertStats {
        &self.stats
    }

    pub fn is_live(&self, col: i64) -> bool {
        col >= self.first_live && col < self.first_live + self.width as i64
    }

    fn slot(&self, col: i64) -> usize {
        col.rem_euclid(self.width as i64) as usize * self.rows
    }

    pub fn cell(&self, idx: CellIndex) -> Option<&Cell> {
        if !self.is_live(idx.col) || idx.row as usize >= self.rows {
            return None;
        }
        Some(&self.cells[self.slot(idx.col) + idx.row as usize])
    }

    pub fn cell_mut(&mut self, idx: CellIndex) -> Option<&mut Cell> {
        if !self.is_live(idx.col) || idx.row as usize >= self.rows {
            return None;
        }
        let slot = self.slot(idx.col);
        Some(&mut self.cells[slot + idx.row as usize])
    }

    pub fn column(&self, col: i64) -> Option<&[Cell]> {
        if !self.is_live(col) {
            return None;
        }
        let start = self.slot(col);
        Some(&self.cells[start..start + self.rows])
    }

    pub fn column_mut(&mut self, col: i64) -> Option<&mut [Cell]> {
        if !self.is_live(col) {
            return None;
        }
        let start = self.slot(col);
        Some(&mut self.cells[start..start + self.rows])
    }

    /// Write a firing into the image and return the newly finished columns in
    /// increasing order. A column is finished once the rearmost laser has passed it.
    pub fn insert_firing(&mut self, firing: &PreparedFiring) -> Result<Vec<i64>> {
        self.stats.firings += 1;
        self.stats.invalid_points += firing.invalid_points;
        let rear_raw = match (firing.rear_raw, self.prev_rear_raw) {
            (Some(raw), _) => raw,
            // No entry carried a direction: assume the sensor advanced one column.
            (None, Some(prev)) => wrap_tau(prev + self.delta_phi_col),
            (None, None) => return Ok(Vec::new()),
        };
        if let Some(prev) = self.prev_rear_raw {
            if rear_raw + PI < prev {
                self.rear_rotation += 1;
            }
        }
        self.prev_rear_raw = Some(rear_raw);
        self.rear_phi = rear_raw + TAU * self.rear_rotation as f64;
        let rear_col = column_index(self.rear_phi, self.delta_phi_col)?;
        let next = match self.next_unreported {
            Some(n) => n,
            None => {
                self.first_live = rear_col;
                self.next_unreported = Some(rear_col);
                rear_col
            }
        };

        let crosses = firing
            .points
            .iter()
            .any(|p| point_past_negative_x(p.phi_raw, rear_raw));
        for p in &firing.points {
            let mut rotation = rotation_index_for_point(
                self.rear_rotation,
                crosses,
                point_past_negative_x(p.phi_raw, rear_raw),
            );
            if p.phi_raw - rear_raw > PI {
                // Just behind the rearmost laser on the far side of the seam.
                rotation -= 1;
            }
            let phi_cont = p.phi_raw + TAU * rotation as f64;
            let col = column_index(phi_cont, self.delta_phi_col)?;
            self.write_point(p, phi_cont, col, firing.timestamp_ns, next);
        }

        let finished: Vec<i64> = (next..rear_col).collect();
        self.next_unreported = Some(next.max(rear_col));
        Ok(finished)
    }

    fn write_point(&mut self, p: &PreparedPoint, phi_cont: f64, col: i64, ts: u64, next: i64) {
        if col < self.first_live || col < next {
            self.stats.late_dropped += 1;
            return;
        }
        if col >= self.first_live + self.width as i64 {
            self.stats.overflow_dropped += 1;
            return;
        }
        let slot = self.slot(col) + p.row as usize;
        let cell = &mut self.cells[slot];
        match cell_write_policy(cell, p.radius) {
            WriteDecision::Drop => {
                self.stats.collisions += 1;
                return;
            }
            WriteDecision::Replace => self.stats.collisions += 1,
            WriteDecision::Store => {}
        }
        *cell = Cell {
            point_id: p.point_id,
            timestamp_ns: ts,
            world_xyz: p.world_xyz,
            sensor_xyz: p.sensor_xyz,
            radius: p.radius,
            phi_cont,
            global_col: col,
            label: Label::Obstacle,
            visited_stamp: i64::MIN,
            ..Cell::default()
        };
        self.stats.inserted += 1;
        self.max_written_col = Some(self.max_written_col.map_or(col, |m| m.max(col)));
    }

    /// Advance the live window to `new_first`, resetting every column left behind.
    /// Returns the number of cleared columns.
    pub fn reclaim_until(&mut self, new_first: i64) -> usize {
        if new_first <= self.first_live {
            return 0;
        }
        let span = (new_first - self.first_live) as usize;
        for col in self.first_live..self.first_live + span.min(self.width) as i64 {
            let start = self.slot(col);
            for cell in &mut self.cells[start..start + self.rows] {
                *cell = Cell::default();
            }
        }
        self.first_live = new_first;
        span
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-12;

    fn header(rows: usize, n_firings: u32, offsets: Vec<f64>) -> StreamHeader {
        StreamHeader {
            rows,
            n_firings,
            elevations: (0..rows).map(|r| -(r as f64) * 0.01).collect(),
            azimuth_offsets: offsets,
        }
    }

    /// A unit ray at continuous azimuth `phi` (sensor frame), with zero elevation.
    fn ray(phi: f64, range: f32, valid: bool) -> FiringPoint {
        let a = PI - phi;
        FiringPoint {
            sensor_xyz: [(a.cos() * range as f64) as f32, (a.sin() * range as f64) as f32, 0.0],
            range,
            valid,
        }
    }

    fn firing_at(h: &StreamHeader, phi: f64, range: f32) -> Firing {
        Firing {
            timestamp_ns: 0,
            rotation: geom::IDENTITY,
            points: h.azimuth_offsets.iter().map(|o| ray(phi + o, range, true)).collect(),
        }
    }

    #[test]
    fn continuous_azimuth_examples() {
        assert!((continuous_azimuth(-1.0, 0.0, 0).unwrap() - 0.0).abs() < EPS);
        assert!((continuous_azimuth(1.0, 0.0, 0).unwrap() - PI).abs() < EPS);
        assert!((continuous_azimuth(0.0, -1.0, 1).unwrap() - 3.5 * PI).abs() < EPS);
        assert!(continuous_azimuth(0.0, 0.0, 0).is_err());
        // -0.0 on the negative x-axis must not produce 2π.
        assert_eq!(raw_azimuth(-1.0, -0.0).unwrap(), 0.0);
    }

    #[test]
    fn rotation_index_branches() {
        assert_eq!(rotation_index_for_point(4, false, false), 4);
        assert_eq!(rotation_index_for_point(4, false, true), 4);
        assert_eq!(rotation_index_for_point(4, true, true), 5);
        assert_eq!(rotation_index_for_point(4, true, false), 4);
    }

    #[test]
    fn column_index_examples() {
        let delta = TAU / 1800.0;
        assert_eq!(column_index(0.0, delta).unwrap(), 0);
        assert_eq!(column_index(PI, delta).unwrap(), 900);
        assert_eq!(column_index(TAU - 1e-9, delta).unwrap(), 1799);
        assert!(matches!(column_index(-1e-3, delta), Err(Error::Invariant(_))));
    }

    #[test]
    fn column_width_tiles_the_circle() {
        for n in [1800u32, 2048, 1024, 720, 7] {
            let delta = TAU / n as f64;
            let total = delta * n as f64;
            assert!((total - TAU).abs() <= f64::EPSILON * TAU, "n = {n}");
        }
    }

    #[test]
    fn write_policy_keeps_nearest() {
        let empty = Cell::default();
        assert_eq!(cell_write_policy(&empty, 3.0), WriteDecision::Store);
        let occupied = Cell { label: Label::Obstacle, radius: 5.0, ..Cell::default() };
        assert_eq!(cell_write_policy(&occupied, 4.0), WriteDecision::Replace);
        let occupied = Cell { label: Label::Obstacle, radius: 4.0, ..Cell::default() };
        assert_eq!(cell_write_policy(&occupied, 5.0), WriteDecision::Drop);
    }

    #[test]
    fn finished_columns_follow_the_rearmost_laser() {
        let h = header(4, 1800, vec![0.0; 4]);
        let delta = h.delta_phi_col();
        let mut image = RangeImage::new(4, 1800, 7200);
        let first = prepare_firing(&h, &firing_at(&h, 10.5 * delta, 5.0), 0, Frame::World).unwrap();
        assert!(image.insert_firing(&first).unwrap().is_empty());
        let second = prepare_firing(&h, &firing_at(&h, 12.5 * delta, 5.0), 1, Frame::World).unwrap();
        assert_eq!(image.insert_firing(&second).unwrap(), vec![10, 11]);
    }

    #[test]
    fn all_invalid_firing_still_advances() {
        let h = header(4, 1800, vec![0.0; 4]);
        let delta = h.delta_phi_col();
        let mut image = RangeImage::new(4, 1800, 7200);
        let first = prepare_firing(&h, &firing_at(&h, 0.5 * delta, 5.0), 0, Frame::World).unwrap();
        image.insert_firing(&first).unwrap();
        let mut blank = firing_at(&h, 3.5 * delta, 1.0);
        for p in &mut blank.points {
            p.valid = false;
        }
        let blank = prepare_firing(&h, &blank, 1, Frame::World).unwrap();
        assert!(blank.points.is_empty());
        assert_eq!(image.insert_firing(&blank).unwrap(), vec![0, 1, 2]);
        assert!(image.column(1).unwrap().iter().all(Cell::is_empty));
        assert!(image.column(3).unwrap().iter().all(Cell::is_empty));
    }

    #[test]
    fn quarter_revolution_reports_each_column_once() {
        let h = header(8, 1800, (0..8).map(|r| r as f64 * 0.25 * TAU / 1800.0).collect());
        let delta = h.delta_phi_col();
        let mut image = RangeImage::new(8, 1800, 7200);
        let mut reported = Vec::new();
        for f in 0..450u64 {
            let firing = firing_at(&h, (f as f64 + 0.5) * delta, 8.0);
            let prepared = prepare_firing(&h, &firing, f, Frame::World).unwrap();
            reported.extend(image.insert_firing(&prepared).unwrap());
        }
        assert_eq!(reported, (0..449).collect::<Vec<i64>>());
        assert_eq!(image.stats().late_dropped, 0);
    }

    #[test]
    fn straddling_firing_splits_rotation_index() {
        // Offsets span three columns; the rear sits just before the seam.
        let n = 360;
        let delta = TAU / n as f64;
        let h = header(4, n, vec![0.0, delta, 2.0 * delta, 3.0 * delta]);
        let mut image = RangeImage::new(4, n, 4 * n as usize);
        let rear = TAU - 1.5 * delta;
        for (ordinal, phi) in [rear - delta, rear].into_iter().enumerate() {
            let prepared =
                prepare_firing(&h, &firing_at(&h, phi, 6.0), ordinal as u64, Frame::World).unwrap();
            image.insert_firing(&prepared).unwrap();
        }
        assert_eq!(image.rear_rotation(), 0);
        let cols: Vec<i64> = (0..4)
            .filter_map(|row| {
                (image.first_live_col()..image.first_live_col() + 8)
                    .find(|&c| image.cell(CellIndex::new(row, c)).is_some_and(|cell| {
                        !cell.is_empty() && cell.point_id == 4 + row as u64
                    }))
            })
            .collect();
        // Rows 0/1 stay in rotation 0, rows 2/3 crossed into rotation 1.
        assert_eq!(cols, vec![358, 359, 360, 361]);
    }

    #[test]
    fn world_frame_applies_rotation() {
        let h = header(1, 360, vec![0.0]);
        let mut f = Firing {
            timestamp_ns: 7,
            rotation: geom::rot_z(0.3),
            points: vec![FiringPoint { sensor_xyz: [3.0, 4.0, 1.0], range: 5.1, valid: true }],
        };
        let p = prepare_firing(&h, &f, 2, Frame::World).unwrap().points[0];
        let norm = |v: [f32; 3]| (v.iter().map(|c| (*c as f64).powi(2)).sum::<f64>()).sqrt();
        assert!((norm(p.world_xyz) - norm(p.sensor_xyz)).abs() < 1e-6 * norm(p.sensor_xyz));
        assert_eq!(p.point_id, 2);
        let sensor = prepare_firing(&h, &f, 2, Frame::Sensor).unwrap().points[0];
        assert_eq!(sensor.world_xyz, [3.0, 4.0, 1.0]);
        f.rotation[0][0] = 2.0;
        assert!(prepare_firing(&h, &f, 0, Frame::World).is_err());
    }

    #[test]
    fn late_and_colliding_points_are_counted() {
        let h = header(1, 360, vec![0.0]);
        let delta = h.delta_phi_col();
        let mut image = RangeImage::new(1, 360, 16);
        let push = |image: &mut RangeImage, phi: f64, r: f32, ord: u64| {
            let p = prepare_firing(&h, &firing_at(&h, phi, r), ord, Frame::World).unwrap();
            image.insert_firing(&p).unwrap()
        };
        push(&mut image, 5.2 * delta, 6.0, 0);
        push(&mut image, 5.6 * delta, 4.0, 1); // same column, nearer: replaces
        push(&mut image, 5.8 * delta, 9.0, 2); // same column, farther: dropped
        assert_eq!(image.stats().collisions, 2);
        let cell = image.cell(CellIndex::new(0, 5)).unwrap();
        assert_eq!(cell.point_id, 1);
        push(&mut image, 8.5 * delta, 4.0, 3);
        // Firing whose rearmost laser is fine but whose point lands in a finished column.
        let mut stale = firing_at(&h, 8.6 * delta, 4.0);
        stale.points.push(ray(6.5 * delta, 4.0, true));
        let h2 = header(2, 360, vec![0.0, 0.0]);
        let p = prepare_firing(&h2, &stale, 4, Frame::World).unwrap();
        image.insert_firing(&p).unwrap();
        assert_eq!(image.stats().late_dropped, 1);
    }

    #[test]
    fn reclaim_clears_old_columns() {
        let h = header(2, 360, vec![0.0, 0.0]);
        let delta = h.delta_phi_col();
        let mut image = RangeImage::new(2, 360, 8);
        for f in 0..6u64 {
            let p = prepare_firing(&h, &firing_at(&h, (f as f64 + 0.5) * delta, 5.0), f, Frame::World)
                .unwrap();
            image.insert_firing(&p).unwrap();
        }
        assert_eq!(image.reclaim_until(3), 3);
        assert_eq!(image.first_live_col(), 3);
        assert!(image.cell(CellIndex::new(0, 2)).is_none());
        assert!(!image.cell(CellIndex::new(0, 3)).unwrap().is_empty());
        assert_eq!(image.reclaim_until(3), 0);
    }
}

//! SemanticKITTI scans to firing streams.
//!
//! Scans are `(x, y, z, intensity)` f32 quadruples; label files hold one u32 per
//! point with the instance id in the upper 16 bits. The dataset has no firing
//! structure, so each scan is cut into azimuth bins that become pseudo-firings,
//! and rows come from matching each point's elevation against the 64-laser
//! sensor model. Rotations are identity (static frame per scan).
//!
//! Timing inside a scan is reconstructed from the bin index only, so streams from
//! this adapter are fit for segmentation metrics but not for latency figures.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian as LE};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom;
use crate::ingest::synth::beam_direction;
use crate::io::labels::LabelTable;
use crate::range_image::{raw_azimuth, Firing, FiringPoint, StreamHeader};

pub const KITTI_ROWS: usize = 64;

/// Elevations of the 64-laser sensor in radians, highest first.
pub fn hdl64_elevations() -> Vec<f64> {
    let upper = (0..32).map(|i| 2.0 - i as f64 * (10.33 / 31.0));
    let lower = (0..32).map(|i| -8.83 - i as f64 * 0.5);
    upper.chain(lower).map(f64::to_radians).collect()
}

/// `(instance, semantic class)`
pub fn split_label(raw: u32) -> (u32, u16) {
    (raw >> 16, (raw & 0xffff) as u16)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KittiOptions {
    pub n_firings: u32,
    pub scan_period_ns: u64,
    pub max_residual_deg: f64,
    pub max_scans: Option<usize>,
}

impl Default for KittiOptions {
    fn default() -> Self {
        Self {
            n_firings: 2048,
            scan_period_ns: 100_000_000,
            max_residual_deg: 0.5,
            max_scans: None,
        }
    }
}

impl KittiOptions {
    pub fn header(&self) -> StreamHeader {
        StreamHeader {
            rows: KITTI_ROWS,
            n_firings: self.n_firings,
            elevations: hdl64_elevations(),
            azimuth_offsets: vec![0.0; KITTI_ROWS],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct KittiReport {
    pub scans: u64,
    /// Scan/label pairs whose point counts disagree.
    pub rejected_scans: u64,
    pub points: u64,
    pub kept: u64,
    pub dropped_elevation: u64,
    pub dropped_origin: u64,
    pub collisions: u64,
}

pub fn parse_scan(bytes: &[u8]) -> Result<Vec<[f32; 4]>> {
    if !bytes.len().is_multiple_of(16) {
        return Err(Error::Format(format!("scan size {} is not a multiple of 16", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| [LE::read_f32(&c[0..]), LE::read_f32(&c[4..]), LE::read_f32(&c[8..]), LE::read_f32(&c[12..])])
        .collect())
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::Format(format!("label size {} is not a multiple of 4", bytes.len())));
    }
    Ok(bytes.chunks_exact(4).map(LE::read_u32).collect())
}

/// One scan turned into `n_firings` pseudo-firings.
#[derive(Debug, Clone)]
pub struct ConvertedScan {
    pub firings: Vec<Firing>,
    pub labels: LabelTable,
}

/// Convert scan number `index`. Point ids continue the global firing count.
pub fn convert_scan(
    points: &[[f32; 4]],
    labels: &[u32],
    index: u64,
    options: &KittiOptions,
    report: &mut KittiReport,
) -> Result<ConvertedScan> {
    if points.len() != labels.len() {
        return Err(Error::Format(format!(
            "scan {index} has {} points but {} labels",
            points.len(),
            labels.len()
        )));
    }
    let n = options.n_firings as usize;
    let delta = TAU / n as f64;
    let elevations = hdl64_elevations();
    let max_residual = options.max_residual_deg.to_radians();
    // (horizontal radius, point, instance) per bin and row.
    let mut slots: Vec<Option<(f64, [f32; 3], u32)>> = vec![None; n * KITTI_ROWS];
    report.scans += 1;
    report.points += points.len() as u64;

    for (p, &raw) in points.iter().zip(labels) {
        let xyz = [p[0], p[1], p[2]];
        let radius = geom::horizontal_radius(xyz);
        let Ok(phi) = raw_azimuth(xyz[0] as f64, xyz[1] as f64) else {
            report.dropped_origin += 1;
            continue;
        };
        let elevation = (xyz[2] as f64).atan2(radius);
        let (row, residual) = elevations
            .iter()
            .enumerate()
            .map(|(r, e)| (r, (e - elevation).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("model has rows");
        if residual > max_residual {
            report.dropped_elevation += 1;
            continue;
        }
        let bin = ((phi / delta) as usize).min(n - 1);
        let slot = &mut slots[bin * KITTI_ROWS + row];
        match slot {
            Some((r, _, _)) if *r <= radius => report.collisions += 1,
            Some(_) => {
                report.collisions += 1;
                *slot = Some((radius, xyz, split_label(raw).0));
            }
            None => *slot = Some((radius, xyz, split_label(raw).0)),
        }
    }

    let mut firings = Vec::with_capacity(n);
    let mut table = LabelTable::new();
    for bin in 0..n {
        let ordinal = index * n as u64 + bin as u64;
        let center = (bin as f64 + 0.5) * delta;
        let points = (0..KITTI_ROWS)
            .map(|row| match slots[bin * KITTI_ROWS + row] {
                Some((_, xyz, instance)) => {
                    table.insert(ordinal * KITTI_ROWS as u64 + row as u64, instance);
                    let range = (xyz[0] as f64).hypot(xyz[1] as f64).hypot(xyz[2] as f64);
                    FiringPoint { sensor_xyz: xyz, range: range as f32, valid: true }
                }
                None => {
                    let d = beam_direction(center, elevations[row]);
                    FiringPoint { sensor_xyz: [d[0] as f32, d[1] as f32, d[2] as f32], range: 0.0, valid: false }
                }
            })
            .collect();
        let timestamp_ns = index * options.scan_period_ns
            + (bin as u128 * options.scan_period_ns as u128 / n as u128) as u64;
        firings.push(Firing { timestamp_ns, rotation: geom::IDENTITY, points });
    }
    report.kept += table.len() as u64;
    Ok(ConvertedScan { firings, labels: table })
}

/// Matching `(scan, label)` file pairs, sorted by file stem.
pub fn scan_pairs(velodyne_dir: &Path, labels_dir: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let mut scans: Vec<PathBuf> = fs::read_dir(velodyne_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "bin"))
        .collect();
    scans.sort();
    let mut pairs = Vec::with_capacity(scans.len());
    for scan in scans {
        let stem = scan.file_stem().expect("file has a name").to_owned();
        let label = labels_dir.join(stem).with_extension("label");
        if !label.exists() {
            return Err(Error::Format(format!("no label file for {}", scan.display())));
        }
        pairs.push((scan, label));
    }
    Ok(pairs)
}

/// Iterate converted scans; pairs with mismatched sizes are skipped and counted.
pub struct KittiSource {
    pairs: std::vec::IntoIter<(PathBuf, PathBuf)>,
    options: KittiOptions,
    next_index: u64,
    pub report: KittiReport,
}

impl KittiSource {
    pub fn open(velodyne_dir: &Path, labels_dir: &Path, options: KittiOptions) -> Result<Self> {
        let mut pairs = scan_pairs(velodyne_dir, labels_dir)?;
        if let Some(max) = options.max_scans {
            pairs.truncate(max);
        }
        Ok(Self { pairs: pairs.into_iter(), options, next_index: 0, report: KittiReport::default() })
    }

    pub fn header(&self) -> StreamHeader {
        self.options.header()
    }

    pub fn next_scan(&mut self) -> Result<Option<ConvertedScan>> {
        for (scan_path, label_path) in self.pairs.by_ref() {
            let points = parse_scan(&fs::read(&scan_path)?)?;
            let labels = parse_labels(&fs::read(&label_path)?)?;
            if points.len() != labels.len() {
                tracing::warn!(scan = %scan_path.display(), "point and label counts differ, scan skipped");
                self.report.rejected_scans += 1;
                continue;
            }
            let converted = convert_scan(&points, &labels, self.next_index, &self.options, &mut self.report)?;
            self.next_index += 1;
            return Ok(Some(converted));
        }
        Ok(None)
    }
}

/// Azimuth bin that `convert_scan` assigns to a point; exposed for tests.
pub fn azimuth_bin(x: f32, y: f32, n_firings: u32) -> Option<usize> {
    let phi = raw_azimuth(x as f64, y as f64).ok()?;
    Some(((phi / (TAU / n_firings as f64)) as usize).min(n_firings as usize - 1))
}

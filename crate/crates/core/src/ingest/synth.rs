//! Ray-cast simulator for a spinning multi-beam sensor over flat ground with
//! boxes and cylinders.
//!
//! The world frame has the ground at `z = 0`, the sensor at `(0, 0, height)`.
//! Emitted points are sensor-relative, so the world positions reconstructed by
//! the pipeline put the ground at `z = −height`.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Rotation};
use crate::ingest::LabeledStream;
use crate::io::labels::LabelTable;
use crate::range_image::{Firing, FiringPoint, StreamHeader};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorModel {
    pub height: f64,
    pub rows: usize,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    /// Overrides the uniform elevation fan when set; row 0 highest.
    pub elevations_deg: Option<Vec<f64>>,
    pub n_firings: u32,
    /// Azimuth lag of the lowest row behind the highest one, in columns.
    pub offset_span_cols: f64,
    pub rotations: f64,
    pub period_ns: u64,
    /// Nominal azimuth of the first firing, radians.
    pub start_azimuth: f64,
    /// Sensor yaw rate in rad/s, applied as the world-from-sensor rotation.
    pub yaw_rate: f64,
    pub max_range: f64,
    /// Standard deviation of additive range noise, meters.
    pub range_noise: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            height: 1.8,
            rows: 128,
            elevation_min_deg: -25.0,
            elevation_max_deg: 15.0,
            elevations_deg: None,
            n_firings: 1800,
            offset_span_cols: 2.0,
            rotations: 1.0,
            period_ns: 100_000_000,
            start_azimuth: 0.0,
            yaw_rate: 0.0,
            max_range: 120.0,
            range_noise: 0.0,
        }
    }
}

impl SensorModel {
    pub fn elevations(&self) -> Vec<f64> {
        match &self.elevations_deg {
            Some(e) => e.iter().map(|d| d.to_radians()).collect(),
            None if self.rows == 1 => vec![self.elevation_max_deg.to_radians()],
            None => (0..self.rows)
                .map(|r| {
                    let t = r as f64 / (self.rows - 1) as f64;
                    (self.elevation_max_deg + t * (self.elevation_min_deg - self.elevation_max_deg)).to_radians()
                })
                .collect(),
        }
    }

    pub fn azimuth_offsets(&self) -> Vec<f64> {
        let delta = TAU / self.n_firings as f64;
        let last = (self.rows.max(2) - 1) as f64;
        (0..self.rows)
            .map(|r| self.offset_span_cols * delta * r as f64 / last)
            .collect()
    }

    pub fn header(&self) -> StreamHeader {
        StreamHeader {
            rows: self.rows,
            n_firings: self.n_firings,
            elevations: self.elevations(),
            azimuth_offsets: self.azimuth_offsets(),
        }
    }

    pub fn total_firings(&self) -> u64 {
        (self.rotations * self.n_firings as f64).round() as u64
    }

    pub fn timestamp_ns(&self, firing: u64) -> u64 {
        (firing as u128 * self.period_ns as u128 / self.n_firings as u128) as u64
    }

    /// Raw azimuth of `row` in firing `firing`, before wrapping.
    pub fn azimuth(&self, firing: u64, row: usize) -> f64 {
        let delta = TAU / self.n_firings as f64;
        self.start_azimuth + (firing as f64 + 0.5) * delta + self.azimuth_offsets()[row]
    }

    fn validate(&self) -> Result<()> {
        let elevations = self.elevations();
        if self.rows == 0 || elevations.len() != self.rows {
            return Err(Error::Config("sensor rows and elevation table disagree".into()));
        }
        if elevations.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Config("elevations must be sorted highest first".into()));
        }
        if self.n_firings == 0 || [self.rotations, self.height, self.max_range].iter().any(|v| v.is_nan() || *v <= 0.0) {
            return Err(Error::Config("sensor parameters must be positive".into()));
        }
        if self.range_noise.is_nan() || self.range_noise < 0.0 {
            return Err(Error::Config("range noise must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// Standing on the ground; `size` is length, width, height.
    Box { center: [f64; 2], size: [f64; 3], #[serde(default)] yaw: f64 },
    Cylinder { center: [f64; 2], radius: f64, height: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub instance_id: u32,
    #[serde(flatten)]
    pub shape: Shape,
}

impl SceneObject {
    /// Center and radius of the vertical bounding cylinder.
    pub fn footprint(&self) -> ([f64; 2], f64) {
        match &self.shape {
            Shape::Box { center, size, .. } => (*center, 0.5 * size[0].hypot(size[1])),
            Shape::Cylinder { center, radius, .. } => (*center, *radius),
        }
    }

    pub fn top(&self) -> f64 {
        match &self.shape {
            Shape::Box { size, .. } => size[2],
            Shape::Cylinder { height, .. } => *height,
        }
    }

    /// Distance along the ray to the first hit, if any.
    pub fn intersect(&self, origin: [f64; 3], dir: [f64; 3]) -> Option<f64> {
        match &self.shape {
            Shape::Box { center, size, yaw } => {
                let (s, c) = (-yaw).sin_cos();
                let rel = [origin[0] - center[0], origin[1] - center[1], origin[2]];
                let o = [c * rel[0] - s * rel[1], s * rel[0] + c * rel[1], rel[2]];
                let d = [c * dir[0] - s * dir[1], s * dir[0] + c * dir[1], dir[2]];
                let lo = [-size[0] / 2.0, -size[1] / 2.0, 0.0];
                let hi = [size[0] / 2.0, size[1] / 2.0, size[2]];
                let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
                for i in 0..3 {
                    if d[i] == 0.0 {
                        if o[i] < lo[i] || o[i] > hi[i] {
                            return None;
                        }
                        continue;
                    }
                    let (a, b) = ((lo[i] - o[i]) / d[i], (hi[i] - o[i]) / d[i]);
                    t0 = t0.max(a.min(b));
                    t1 = t1.min(a.max(b));
                }
                (t0 <= t1 && t0 > 0.0).then_some(t0)
            }
            Shape::Cylinder { center, radius, height } => {
                let (ox, oy) = (origin[0] - center[0], origin[1] - center[1]);
                let a = dir[0] * dir[0] + dir[1] * dir[1];
                let mut best: Option<f64> = None;
                if a > 0.0 {
                    let b = 2.0 * (ox * dir[0] + oy * dir[1]);
                    let c = ox * ox + oy * oy - radius * radius;
                    let disc = b * b - 4.0 * a * c;
                    if disc >= 0.0 {
                        let t = (-b - disc.sqrt()) / (2.0 * a);
                        let z = origin[2] + t * dir[2];
                        if t > 0.0 && (0.0..=*height).contains(&z) {
                            best = Some(t);
                        }
                    }
                }
                if dir[2] < 0.0 && origin[2] > *height {
                    let t = (height - origin[2]) / dir[2];
                    let (x, y) = (ox + t * dir[0], oy + t * dir[1]);
                    if x * x + y * y <= radius * radius {
                        best = Some(best.map_or(t, |b| b.min(t)));
                    }
                }
                best
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticScene {
    pub sensor: SensorModel,
    pub objects: Vec<SceneObject>,
    /// Seeds the range noise.
    pub seed: u64,
}

impl SyntheticScene {
    pub fn from_json(text: &str) -> Result<Self> {
        let scene: SyntheticScene =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("scene: {e}")))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        let mut ids: Vec<u32> = self.objects.iter().map(|o| o.instance_id).collect();
        ids.sort_unstable();
        if ids.first() == Some(&0) || ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("instance ids must be positive and unique".into()));
        }
        for (i, a) in self.objects.iter().enumerate() {
            for b in &self.objects[i + 1..] {
                let ((ca, ra), (cb, rb)) = (a.footprint(), b.footprint());
                if (ca[0] - cb[0]).hypot(ca[1] - cb[1]) < ra + rb {
                    return Err(Error::Config(format!(
                        "objects {} and {} may intersect",
                        a.instance_id, b.instance_id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Nearest hit along a world-frame ray from the sensor: (distance, instance; 0 = ground).
    pub fn cast(&self, dir: [f64; 3]) -> Option<(f64, u32)> {
        let origin = [0.0, 0.0, self.sensor.height];
        let mut best = (dir[2] < 0.0).then(|| (self.sensor.height / -dir[2], 0));
        for obj in &self.objects {
            if let Some(t) = obj.intersect(origin, dir) {
                if best.is_none_or(|(b, _)| t < b) {
                    best = Some((t, obj.instance_id));
                }
            }
        }
        best.filter(|(t, _)| *t <= self.sensor.max_range)
    }
}

pub fn beam_direction(azimuth: f64, elevation: f64) -> [f64; 3] {
    let a = PI - azimuth;
    let (se, ce) = elevation.sin_cos();
    [ce * a.cos(), ce * a.sin(), se]
}

pub fn raycast_stream(scene: &SyntheticScene) -> Result<LabeledStream> {
    scene.validate()?;
    let sensor = &scene.sensor;
    let header = sensor.header();
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    let noise = (sensor.range_noise > 0.0)
        .then(|| Normal::new(0.0, sensor.range_noise).expect("finite sigma"));
    let mut firings = Vec::new();
    let mut labels = LabelTable::new();
    for f in 0..sensor.total_firings() {
        let ts = sensor.timestamp_ns(f);
        let rotation: Rotation = geom::rot_z(sensor.yaw_rate * ts as f64 * 1e-9);
        let inverse = geom::transpose(&rotation);
        let mut points = Vec::with_capacity(sensor.rows);
        for row in 0..sensor.rows {
            let local = beam_direction(sensor.azimuth(f, row), header.elevations[row]);
            let world = geom::rotate(&rotation, local);
            let hit = scene.cast(world).map(|(t, id)| {
                let t = match &noise {
                    Some(n) => (t + n.sample(&mut rng)).max(0.01),
                    None => t,
                };
                (t, id)
            });
            points.push(match hit {
                Some((t, id)) => {
                    let p = geom::rotate(&inverse, [world[0] * t, world[1] * t, world[2] * t]);
                    labels.insert(f * sensor.rows as u64 + row as u64, id);
                    FiringPoint {
                        sensor_xyz: [p[0] as f32, p[1] as f32, p[2] as f32],
                        range: t as f32,
                        valid: true,
                    }
                }
                None => FiringPoint {
                    sensor_xyz: [local[0] as f32, local[1] as f32, local[2] as f32],
                    range: 0.0,
                    valid: false,
                },
            });
        }
        firings.push(Firing { timestamp_ns: ts, rotation, points });
    }
    Ok(LabeledStream { header, firings, labels })
}

/// Parameters of [`random_scene`].
#[derive(Debug, Clone, PartialEq)]
pub struct RandomSceneSpec {
    pub min_objects: usize,
    pub max_objects: usize,
    pub min_distance: f64,
    pub max_distance: f64,
    /// Azimuth interval, radians, in which object centers are placed.
    pub azimuth_range: (f64, f64),
    /// Keep objects at least this far (meters) from the sector borders.
    pub border_clearance: f64,
    /// Probability that an object is a box rather than a cylinder.
    pub box_probability: f64,
}

impl Default for RandomSceneSpec {
    fn default() -> Self {
        Self {
            min_objects: 5,
            max_objects: 40,
            min_distance: 4.0,
            max_distance: 35.0,
            azimuth_range: (0.0, TAU),
            border_clearance: 0.0,
            box_probability: 0.6,
        }
    }
}

/// Boxes and cylinders scattered without overlap. Deterministic in `seed`.
pub fn random_scene(seed: u64, sensor: SensorModel, spec: &RandomSceneSpec) -> SyntheticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = rng.random_range(spec.min_objects..=spec.max_objects);
    let mut objects: Vec<SceneObject> = Vec::new();
    let mut attempts = 0;
    while objects.len() < target && attempts < 10_000 {
        attempts += 1;
        let shape = if rng.random_bool(spec.box_probability) {
            Shape::Box {
                center: [0.0, 0.0],
                size: [
                    rng.random_range(0.4..3.0),
                    rng.random_range(0.4..3.0),
                    rng.random_range(0.8..3.0),
                ],
                yaw: rng.random_range(0.0..PI),
            }
        } else {
            Shape::Cylinder {
                center: [0.0, 0.0],
                radius: rng.random_range(0.1..0.5),
                height: rng.random_range(1.0..4.0),
            }
        };
        let distance = rng.random_range(spec.min_distance..spec.max_distance);
        let azimuth = rng.random_range(spec.azimuth_range.0..spec.azimuth_range.1);
        let mut obj = SceneObject { instance_id: objects.len() as u32 + 1, shape };
        let radius = obj.footprint().1;
        if distance - radius < spec.min_distance {
            continue;
        }
        let clearance = ((radius + spec.border_clearance) / distance).min(1.0).asin();
        if azimuth - clearance < spec.azimuth_range.0 || azimuth + clearance > spec.azimuth_range.1 {
            continue;
        }
        let dir = beam_direction(azimuth, 0.0);
        let center = [dir[0] * distance, dir[1] * distance];
        match &mut obj.shape {
            Shape::Box { center: c, .. } | Shape::Cylinder { center: c, .. } => *c = center,
        }
        let overlaps = objects.iter().any(|o| {
            let (c, r) = o.footprint();
            (c[0] - center[0]).hypot(c[1] - center[1]) < r + radius + 0.05
        });
        if !overlaps {
            objects.push(obj);
        }
    }
    SyntheticScene { sensor, objects, seed }
}

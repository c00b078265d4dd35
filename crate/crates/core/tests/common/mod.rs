#![allow(dead_code)]

use std::f64::consts::TAU;

use contseg_core::config::Config;
use contseg_core::eval::mask_stream;
use contseg_core::ingest::{random_scene, raycast_stream, LabeledStream, RandomSceneSpec, SensorModel, SyntheticScene};

pub const D_T: f64 = 0.7;

/// Smaller than the default sensor so the brute-force oracle stays fast.
pub fn test_sensor() -> SensorModel {
    SensorModel { rows: 32, n_firings: 512, ..SensorModel::default() }
}

/// Objects stay clear of the azimuth where the stream starts: a single
/// revolution never links its first and last columns.
pub fn scene_spec() -> RandomSceneSpec {
    RandomSceneSpec {
        azimuth_range: (0.05, TAU - 0.05),
        border_clearance: D_T + 0.1,
        ..RandomSceneSpec::default()
    }
}

pub fn scene(seed: u64) -> SyntheticScene {
    random_scene(seed, test_sensor(), &scene_spec())
}

/// The stream with every ground return removed.
pub fn obstacle_stream(scene: &SyntheticScene) -> LabeledStream {
    let mut stream = raycast_stream(scene).expect("valid scene");
    let labels = stream.labels.clone();
    mask_stream(&stream.header, &mut stream.firings, 0, |id| labels.get(&id).is_some_and(|&l| l != 0));
    stream.labels.retain(|_, l| *l != 0);
    stream
}

pub fn config(mode: contseg_core::AssociationMode) -> Config {
    let mut c = Config::default();
    c.cluster.d_t = D_T;
    c.cluster.mode = mode;
    c
}

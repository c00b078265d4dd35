//! Fixtures shared by the benchmarks.

use contseg_core::ingest::{random_scene, raycast_stream, LabeledStream, RandomSceneSpec, SensorModel};
use contseg_core::{run_reference, AssociationMode, Config, Pipeline, RunSummary};

/// One revolution of a 64-row sensor over a busy random scene.
pub fn fixture(seed: u64) -> LabeledStream {
    let sensor = SensorModel { rows: 64, n_firings: 1024, ..SensorModel::default() };
    let spec = RandomSceneSpec { min_objects: 30, max_objects: 40, ..RandomSceneSpec::default() };
    raycast_stream(&random_scene(seed, sensor, &spec)).expect("fixture scene is valid")
}

pub fn cluster(stream: &LabeledStream, mode: AssociationMode) -> RunSummary {
    let mut config = Config::default();
    config.cluster.mode = mode;
    let mut pipeline = Pipeline::new(stream.header.clone(), config).expect("valid config");
    run_reference(&mut pipeline, stream.firings.iter().cloned().map(Ok), |_| Ok(())).expect("clean run")
}

//! Stream producers: the ray-cast simulator, the SemanticKITTI adapter, and the
//! batch single-linkage oracle used to check them.

pub mod kitti;
pub mod oracle;
pub mod synth;

use crate::io::labels::LabelTable;
use crate::range_image::{Firing, StreamHeader};

pub use oracle::oracle_single_linkage;
pub use synth::{random_scene, raycast_stream, RandomSceneSpec, SensorModel, SyntheticScene};

/// A firing stream with per-point ground truth.
#[derive(Debug, Clone)]
pub struct LabeledStream {
    pub header: StreamHeader,
    pub firings: Vec<Firing>,
    /// point_id → instance id (0 = ground or no instance), valid points only.
    pub labels: LabelTable,
}

//! Streaming, column-wise Euclidean clustering of rotating-LiDAR data.
//!
//! Firings are written into a horizontally continuous range image. Each column
//! is ground-segmented and clustered as soon as the rearmost laser has passed
//! it, and every cluster is published the moment no future point can join it.

pub mod ccl;
pub mod config;
pub mod error;
pub mod eval;
pub mod geom;
pub mod ground;
pub mod ingest;
pub mod io;
pub mod pipeline;
pub mod range_image;
pub mod tree;

pub use ccl::{ClusterMessage, ClusterPoint, FinishReason};
pub use config::{AssociationMode, Config, Frame};
pub use error::{Error, Result};
pub use geom::CellIndex;
pub use pipeline::{run_reference, run_staged, LatencyClock, Pipeline, RunSummary};
pub use range_image::{Firing, FiringPoint, Label, StreamHeader};

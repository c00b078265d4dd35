//! On-disk formats: firing streams, label tables and cluster records.

pub mod cfs1;
pub mod clusters;
pub mod labels;

pub use cfs1::{read_stream, write_stream, Cfs1Reader, Cfs1Writer};
pub use clusters::{read_clusters, write_cluster, ClusterRecord};
pub use labels::{read_labels, write_labels, LabelTable};

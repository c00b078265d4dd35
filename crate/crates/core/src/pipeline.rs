//! The full streaming engine: insert → ground → trees → CCL → publish.
//!
//! [`Pipeline`] is the single-threaded core. [`run_staged`] splits decoding,
//! firing preparation, the engine and the consumer into threads connected by
//! bounded channels. Both produce the same messages in the same order.

use std::collections::BTreeSet;
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::time::Instant;

use serde::Serialize;

use crate::ccl::{CclStats, ClusterMessage, Publisher};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::geom::CellIndex;
use crate::ground::{GroundSegmenter, GroundStats};
use crate::range_image::{prepare_firing, Firing, InsertStats, Label, PreparedFiring, RangeImage, StreamHeader};
use crate::tree::{TraceEntry, TreeBuilder, TreeStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LatencyClock {
    /// Trigger firing timestamp minus reference timestamp. Deterministic.
    #[default]
    Stream,
    /// Stream latency plus the measured processing time of the trigger firing.
    Wall,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub insert: InsertStats,
    pub ground: GroundStats,
    pub trees: TreeStats,
    pub ccl: CclStats,
    pub clustered_columns: u64,
    pub clusters: u64,
}

pub struct Pipeline {
    header: StreamHeader,
    config: Config,
    image: RangeImage,
    ground: GroundSegmenter,
    trees: TreeBuilder,
    publisher: Publisher,
    roots: BTreeSet<CellIndex>,
    clock: LatencyClock,
    last_timestamp_ns: u64,
    last_clustered: Option<i64>,
    clustered_columns: u64,
    clusters: u64,
    next_ordinal: u64,
    label_log: Option<Vec<(u64, Label)>>,
}

impl Pipeline {
    pub fn new(header: StreamHeader, config: Config) -> Result<Self> {
        header.validate()?;
        config.validate()?;
        let width = config.range_image.width_for(header.n_firings);
        let image = RangeImage::new(header.rows, header.n_firings, width);
        Ok(Self {
            ground: GroundSegmenter::new(&config.ground, config.ego.bounds),
            trees: TreeBuilder::new(&config.cluster),
            publisher: Publisher::new(&config.ccl),
            image,
            header,
            config,
            roots: BTreeSet::new(),
            clock: LatencyClock::Stream,
            last_timestamp_ns: 0,
            last_clustered: None,
            clustered_columns: 0,
            clusters: 0,
            next_ordinal: 0,
            label_log: None,
        })
    }

    pub fn set_latency_clock(&mut self, clock: LatencyClock) {
        self.clock = clock;
    }

    /// Record every association; see [`Pipeline::trace`].
    pub fn enable_trace(&mut self) {
        self.trees.enable_trace();
    }

    pub fn trace(&self) -> Option<&[TraceEntry]> {
        self.trees.trace()
    }

    /// Record the ground-stage label of every stored point.
    pub fn enable_label_log(&mut self) {
        self.label_log.get_or_insert_with(Vec::new);
    }

    /// `(point_id, label)` in processing order; see [`Pipeline::enable_label_log`].
    pub fn label_log(&self) -> Option<&[(u64, Label)]> {
        self.label_log.as_deref()
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    pub fn image(&self) -> &RangeImage {
        &self.image
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            insert: *self.image.stats(),
            ground: *self.ground.stats(),
            trees: *self.trees.stats(),
            ccl: *self.publisher.stats(),
            clustered_columns: self.clustered_columns,
            clusters: self.clusters,
        }
    }

    /// Transform a raw firing; the next ordinal is assigned automatically.
    pub fn prepare(&mut self, firing: &Firing) -> Result<PreparedFiring> {
        let prepared = prepare_firing(&self.header, firing, self.next_ordinal, self.config.range_image.frame)?;
        self.next_ordinal += 1;
        Ok(prepared)
    }

    pub fn push_firing(&mut self, firing: &Firing) -> Result<Vec<ClusterMessage>> {
        let prepared = self.prepare(firing)?;
        self.push_prepared(&prepared)
    }

    pub fn push_prepared(&mut self, firing: &PreparedFiring) -> Result<Vec<ClusterMessage>> {
        let started = Instant::now();
        if firing.timestamp_ns < self.last_timestamp_ns {
            return Err(Error::Format(format!(
                "firing {} goes back in time ({} < {})",
                firing.ordinal, firing.timestamp_ns, self.last_timestamp_ns
            )));
        }
        self.last_timestamp_ns = firing.timestamp_ns;
        self.next_ordinal = self.next_ordinal.max(firing.ordinal + 1);
        let finished = self.image.insert_firing(firing)?;
        let mut out = Vec::new();
        for col in finished {
            self.process_column(col, &mut out)?;
        }
        self.stamp_latency(&mut out, started);
        Ok(out)
    }

    /// Cluster whatever is left and publish all pending trees.
    pub fn finish(&mut self) -> Result<Vec<ClusterMessage>> {
        let started = Instant::now();
        let mut out = Vec::new();
        if let (Some(next), Some(last)) = (self.image.next_unfinished_col(), self.image.max_written_col()) {
            for col in next.max(self.last_clustered.map_or(next, |c| c + 1))..=last {
                self.process_column(col, &mut out)?;
            }
        }
        let publish_col = self.last_clustered.map_or(0, |c| c + 1);
        let rest = self.publisher.flush(&mut self.image, &mut self.roots, publish_col)?;
        self.clusters += rest.len() as u64;
        out.extend(rest);
        self.stamp_latency(&mut out, started);
        Ok(out)
    }

    fn process_column(&mut self, col: i64, out: &mut Vec<ClusterMessage>) -> Result<()> {
        let cells = self
            .image
            .column_mut(col)
            .ok_or_else(|| Error::Invariant(format!("finished column {col} is not live")))?;
        self.ground.process_column(cells);
        if let Some(log) = &mut self.label_log {
            log.extend(cells.iter().filter(|c| !c.is_empty()).map(|c| (c.point_id, c.label)));
        }
        self.trees.process_column(&mut self.image, col, &mut self.roots)?;
        self.last_clustered = Some(col);
        self.clustered_columns += 1;
        if self.clustered_columns.is_multiple_of(self.config.ccl.every as u64) {
            let before = out.len();
            out.extend(self.publisher.ccl_run(&mut self.image, &mut self.roots, col)?);
            out.extend(self.publisher.forced_finish(&mut self.image, &mut self.roots, col)?);
            self.publisher.reclaim(&mut self.image, &self.roots, col);
            self.clusters += (out.len() - before) as u64;
        }
        Ok(())
    }

    fn stamp_latency(&self, out: &mut [ClusterMessage], started: Instant) {
        let extra = match self.clock {
            LatencyClock::Stream => 0,
            LatencyClock::Wall => started.elapsed().as_nanos() as u64,
        };
        for msg in out {
            msg.latency_ns = self.last_timestamp_ns.saturating_sub(msg.reference_timestamp_ns) + extra;
        }
    }
}

/// Run a whole stream on the calling thread.
pub fn run_reference<I, F>(pipeline: &mut Pipeline, firings: I, mut sink: F) -> Result<RunSummary>
where
    I: IntoIterator<Item = Result<Firing>>,
    F: FnMut(ClusterMessage) -> Result<()>,
{
    for firing in firings {
        for msg in pipeline.push_firing(&firing?)? {
            sink(msg)?;
        }
    }
    for msg in pipeline.finish()? {
        sink(msg)?;
    }
    Ok(pipeline.summary())
}

const CHANNEL_DEPTH: usize = 64;

fn forward<T>(tx: &SyncSender<Result<T>>, item: Result<T>) -> bool {
    let failed = item.is_err();
    tx.send(item).is_ok() && !failed
}

/// Run a whole stream on four threads: decode, prepare, engine, and the caller as sink.
pub fn run_staged<I, F>(pipeline: &mut Pipeline, firings: I, mut sink: F) -> Result<RunSummary>
where
    I: IntoIterator<Item = Result<Firing>>,
    I::IntoIter: Send,
    F: FnMut(ClusterMessage) -> Result<()>,
{
    let header = pipeline.header.clone();
    let frame = pipeline.config.range_image.frame;
    let first_ordinal = pipeline.next_ordinal;
    let firings = firings.into_iter();

    std::thread::scope(|scope| {
        let (raw_tx, raw_rx) = sync_channel::<Result<Firing>>(CHANNEL_DEPTH);
        let (prep_tx, prep_rx) = sync_channel::<Result<PreparedFiring>>(CHANNEL_DEPTH);
        let (out_tx, out_rx) = sync_channel::<Result<Vec<ClusterMessage>>>(CHANNEL_DEPTH);

        scope.spawn(move || {
            for firing in firings {
                if !forward(&raw_tx, firing) {
                    break;
                }
            }
        });
        scope.spawn(move || {
            for (ordinal, firing) in (first_ordinal..).zip(raw_rx) {
                let prepared = firing.and_then(|f| prepare_firing(&header, &f, ordinal, frame));
                if !forward(&prep_tx, prepared) {
                    break;
                }
            }
        });
        let engine = scope.spawn(move || engine_stage(pipeline, prep_rx, out_tx));

        let mut result = Ok(());
        for batch in out_rx {
            match batch {
                Ok(msgs) => {
                    if let Err(e) = msgs.into_iter().try_for_each(&mut sink) {
                        result = Err(e);
                        break;
                    }
                }
                Err(e) => {
                    result = Err(e);
                    break;
                }
            }
        }
        // Dropping the receiver makes the upstream stages stop early on error.
        let summary = engine.join().expect("engine thread panicked");
        result.map(|_| summary)
    })
}

fn engine_stage(
    pipeline: &mut Pipeline,
    input: Receiver<Result<PreparedFiring>>,
    output: SyncSender<Result<Vec<ClusterMessage>>>,
) -> RunSummary {
    for prepared in input {
        let batch = prepared.and_then(|p| pipeline.push_prepared(&p));
        if !forward(&output, batch) {
            return pipeline.summary();
        }
    }
    let _ = output.send(pipeline.finish());
    pipeline.summary()
}

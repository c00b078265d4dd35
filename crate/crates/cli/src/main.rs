use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use contseg_core::eval::{check_against_oracle, latency_stats, mask_stream, segmentation_report};
use contseg_core::ingest::kitti::{KittiOptions, KittiSource};
use contseg_core::ingest::{random_scene, raycast_stream, RandomSceneSpec, SensorModel, SyntheticScene};
use contseg_core::io::cfs1::{read_stream, Cfs1Reader, Cfs1Writer};
use contseg_core::io::{read_clusters, read_labels, write_cluster, write_labels, LabelTable};
use contseg_core::{run_reference, run_staged, AssociationMode, Config, Error, LatencyClock, Pipeline, Result};
use serde_json::json;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "contseg", version, about = "Streaming LiDAR instance segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ray-cast a synthetic scene into a firing stream and ground-truth labels.
    Synth {
        /// Scene description (JSON).
        #[arg(long, conflicts_with = "random", required_unless_present = "random")]
        scene: Option<PathBuf>,
        /// Generate a random scene from this seed instead.
        #[arg(long)]
        random: Option<u64>,
        /// Sensor revolutions for random scenes.
        #[arg(long, default_value_t = 1.0)]
        rotations: f64,
        /// Write the random scene description here.
        #[arg(long)]
        save_scene: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
    /// Convert SemanticKITTI scans into a firing stream and ground-truth labels.
    ImportKitti {
        #[arg(long)]
        velodyne: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        labels_out: PathBuf,
        #[arg(long)]
        max_scans: Option<usize>,
        /// Firings per scan.
        #[arg(long, default_value_t = 2048)]
        firings: u32,
    },
    /// Run the streaming engine over a firing stream.
    Cluster {
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// `exact` or `heuristic_a`; overrides the config file.
        #[arg(long)]
        mode: Option<AssociationMode>,
        /// Cluster records as JSON lines.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Binary `{point_id, cluster_id}` table.
        #[arg(long)]
        export_labels: Option<PathBuf>,
        /// Single-threaded reference run instead of the staged pipeline.
        #[arg(long)]
        reference: bool,
        /// Add measured processing time to each latency.
        #[arg(long)]
        wall_clock: bool,
    },
    /// USE / OSE of predicted labels against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Stream the labels belong to; frames are whole revolutions. Without it
        /// everything is one frame.
        #[arg(long)]
        stream: Option<PathBuf>,
    },
    /// Compare the streaming partition with the batch single-linkage oracle.
    OracleCheck {
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mode: Option<AssociationMode>,
        /// Ground-truth labels; points labeled 0 are removed before clustering.
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// Latency statistics of a cluster file.
    Latency {
        #[arg(long)]
        clusters: PathBuf,
    },
}

fn load_config(path: Option<&Path>, mode: Option<AssociationMode>) -> Result<Config> {
    let mut config = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(m) = mode {
        config.cluster.mode = m;
    }
    Ok(config)
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn synth(
    scene: Option<PathBuf>,
    seed: Option<u64>,
    rotations: f64,
    save_scene: Option<PathBuf>,
    out: &Path,
    labels: &Path,
) -> Result<()> {
    let scene = match (scene, seed) {
        (Some(path), _) => SyntheticScene::from_json(&std::fs::read_to_string(path)?)?,
        (None, Some(seed)) => {
            let sensor = SensorModel { rotations, ..SensorModel::default() };
            random_scene(seed, sensor, &RandomSceneSpec::default())
        }
        (None, None) => return Err(Error::Config("either --scene or --random is required".into())),
    };
    if let Some(path) = save_scene {
        std::fs::write(path, serde_json::to_string_pretty(&scene)?)?;
    }
    let stream = raycast_stream(&scene)?;
    contseg_core::io::write_stream(out, &stream.header, &stream.firings)?;
    write_labels(labels, &stream.labels)?;
    let valid: usize = stream.firings.iter().map(|f| f.points.iter().filter(|p| p.valid).count()).sum();
    let obstacle = stream.labels.values().filter(|&&l| l != 0).count();
    print_json(&json!({
        "objects": scene.objects.len(),
        "rows": stream.header.rows,
        "firings": stream.firings.len(),
        "valid_points": valid,
        "object_points": obstacle,
    }))
}

fn import_kitti(
    velodyne: &Path,
    labels: &Path,
    out: &Path,
    labels_out: &Path,
    max_scans: Option<usize>,
    firings: u32,
) -> Result<()> {
    let options = KittiOptions { n_firings: firings, max_scans, ..KittiOptions::default() };
    let mut source = KittiSource::open(velodyne, labels, options)?;
    let mut writer = Cfs1Writer::new(BufWriter::new(File::create(out)?), &source.header())?;
    let mut table = LabelTable::new();
    while let Some(scan) = source.next_scan()? {
        for f in &scan.firings {
            writer.write_firing(f)?;
        }
        table.extend(scan.labels);
    }
    writer.finish()?.flush()?;
    write_labels(labels_out, &table)?;
    print_json(&source.report)
}

#[allow(clippy::too_many_arguments)]
fn cluster(
    stream: &Path,
    config: Option<&Path>,
    mode: Option<AssociationMode>,
    out: Option<&Path>,
    export_labels: Option<&Path>,
    reference: bool,
    wall_clock: bool,
) -> Result<()> {
    let config = load_config(config, mode)?;
    let reader = Cfs1Reader::open(stream)?;
    let mut pipeline = Pipeline::new(reader.header().clone(), config.clone())?;
    if wall_clock {
        pipeline.set_latency_clock(LatencyClock::Wall);
    }
    let mut writer = out.map(|p| File::create(p).map(BufWriter::new)).transpose()?;
    let mut labels = export_labels.map(|_| LabelTable::new());
    let mut latencies = Vec::new();
    let sink = |m: contseg_core::ClusterMessage| -> Result<()> {
        if let Some(w) = writer.as_mut() {
            write_cluster(w, &m)?;
        }
        if let Some(table) = labels.as_mut() {
            for p in &m.points {
                if table.insert(p.point_id, m.cluster_id as u32).is_some() {
                    return Err(Error::Invariant(format!("point {} published twice", p.point_id)));
                }
            }
        }
        latencies.push((m.latency_ns, m.force_finished()));
        Ok(())
    };
    let started = Instant::now();
    let summary = if reference {
        run_reference(&mut pipeline, reader, sink)?
    } else {
        run_staged(&mut pipeline, reader, sink)?
    };
    let elapsed = started.elapsed().as_secs_f64();
    if let Some(mut w) = writer {
        w.flush()?;
    }
    if let (Some(path), Some(table)) = (export_labels, &labels) {
        write_labels(path, table)?;
    }
    print_json(&json!({
        "mode": config.cluster.mode,
        "staged": !reference,
        "elapsed_s": elapsed,
        "summary": summary,
        "latency": latency_stats(latencies),
    }))
}

fn evaluate(pred: &Path, gt: &Path, stream: Option<&Path>) -> Result<()> {
    let pred = read_labels(pred)?;
    let gt = read_labels(gt)?;
    let frame = match stream {
        Some(p) => {
            let h = Cfs1Reader::open(p)?.header().clone();
            h.rows as u64 * h.n_firings as u64
        }
        None => u64::MAX,
    };
    print_json(&segmentation_report(&pred, &gt, |id| id / frame)?)
}

fn oracle_check(stream: &Path, config: Option<&Path>, mode: Option<AssociationMode>, gt: Option<&Path>) -> Result<()> {
    let config = load_config(config, mode)?;
    let (header, mut firings) = read_stream(stream)?;
    if let Some(gt) = gt {
        let gt = read_labels(gt)?;
        mask_stream(&header, &mut firings, 0, |id| gt.get(&id).is_some_and(|&l| l != 0));
    }
    let (report, _) = check_against_oracle(&header, firings.into_iter().map(Ok), &config)?;
    print_json(&report)?;
    if config.cluster.mode == AssociationMode::Exact && !report.exact() {
        return Err(Error::Invariant(format!("exact mode disagrees with the oracle (agreement {})", report.agreement)));
    }
    Ok(())
}

fn latency(clusters: &Path) -> Result<()> {
    let records = read_clusters(BufReader::new(File::open(clusters)?))?;
    print_json(&latency_stats(records.iter().map(|r| (r.latency_ns, r.force_finished))))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { scene, random, rotations, save_scene, out, labels } => {
            synth(scene, random, rotations, save_scene, &out, &labels)
        }
        Command::ImportKitti { velodyne, labels, out, labels_out, max_scans, firings } => {
            import_kitti(&velodyne, &labels, &out, &labels_out, max_scans, firings)
        }
        Command::Cluster { stream, config, mode, out, export_labels, reference, wall_clock } => cluster(
            &stream,
            config.as_deref(),
            mode,
            out.as_deref(),
            export_labels.as_deref(),
            reference,
            wall_clock,
        ),
        Command::Evaluate { pred, gt, stream } => evaluate(&pred, &gt, stream.as_deref()),
        Command::OracleCheck { stream, config, mode, gt } => oracle_check(&stream, config.as_deref(), mode, gt.as_deref()),
        Command::Latency { clusters } => latency(&clusters),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

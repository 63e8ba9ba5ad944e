//! Argument parsing and command execution for the `plagdet` binary.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;

use plagdet_core::evaluation::{evaluate_segments, evaluate_song_level, GroundTruth, DEFAULT_TOLERANCE_BARS};
use plagdet_core::ingest::{bundle_to_json, load_bundle, load_smp_manifest_file, TrackBundle};
use plagdet_core::quantizer::QuantizedTrack;
use plagdet_core::retrieval::{analyze_bundle, load_index, query_segment, rank_songs, save_index, Aggregation, SegmentIndex};
use plagdet_core::segmenter::{segment_track, SegmentationConfig, DEFAULT_SEGMENT_BARS};
use plagdet_core::similarity::{combined_score, Ablation, SimilarityParams};
use plagdet_core::synth::{generate_planted_corpus, PlantedConfig};

#[derive(Debug, Clone, PartialEq, Parser)]
#[command(name = "plagdet", version, about = "Symbolic music plagiarism detection")]
pub struct RunConfig {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct CommonArgs {
    /// JSON file overriding similarity parameters.
    #[arg(long, global = true, value_name = "FILE")]
    pub params: Option<PathBuf>,
    /// Song-level aggregation.
    #[arg(long, global = true, default_value = "top20", value_parser = parse_variant)]
    pub variant: Aggregation,
    /// Component mask applied to the similarity score.
    #[arg(long, global = true, default_value = "none", value_parser = parse_ablation)]
    pub ablate: Ablation,
    /// Segment length in bars.
    #[arg(long, global = true, default_value_t = DEFAULT_SEGMENT_BARS)]
    pub segment_bars: usize,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file for the machine-readable result.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum Command {
    /// Validate bundles and summarize them.
    Ingest {
        #[arg(long = "bundle", required = true, num_args = 1..)]
        bundles: Vec<PathBuf>,
    },
    /// Segment one bundle.
    Segment {
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Score every segment of one bundle against every segment of another.
    Score {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Segment index operations.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Top-K segment matches and a song ranking for one bundle.
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(short, long, default_value_t = 5)]
        k: usize,
    },
    /// Evaluation drivers.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Write a seeded corpus with planted copies and its SMP manifest.
    Synth {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        songs: usize,
        #[arg(long, default_value_t = 5)]
        plants: usize,
        #[arg(long, default_value_t = 32)]
        bars: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum IndexCommand {
    /// Build an index from bundle files or directories of bundles.
    Build {
        #[arg(long = "bundles", required = true, num_args = 1..)]
        bundles: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum EvalCommand {
    /// Song-level evaluation: Avg. Index, Top-1 and Top-5 accuracy.
    Smp {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Report every ablation condition instead of only `--ablate`.
        #[arg(long)]
        all_conditions: bool,
    },
    /// Segment-level evaluation: Precision@K and annotated-time hits.
    Segments {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(short, long, default_value_t = 100)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE_BARS)]
        tolerance_bars: f64,
    },
}

fn parse_variant(s: &str) -> Result<Aggregation, String> {
    s.parse()
}

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    s.parse().map_err(|e: plagdet_core::error::SimilarityError| e.to_string())
}

/// Parses `argv` (program name first). Errors carry clap's usage text and
/// exit code.
pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    RunConfig::try_parse_from(argv)
}

impl RunConfig {
    fn inputs(&self) -> Vec<&Path> {
        let mut paths: Vec<&Path> = self.common.params.iter().map(PathBuf::as_path).collect();
        match &self.command {
            Command::Ingest { bundles } | Command::Index(IndexCommand::Build { bundles }) => {
                paths.extend(bundles.iter().map(PathBuf::as_path))
            }
            Command::Segment { bundle } => paths.push(bundle),
            Command::Score { a, b } => paths.extend([a.as_path(), b.as_path()]),
            Command::Query { index, bundle, .. } => paths.extend([index.as_path(), bundle.as_path()]),
            Command::Eval(EvalCommand::Smp { index, manifest, .. })
            | Command::Eval(EvalCommand::Segments { index, manifest, .. }) => {
                paths.extend([index.as_path(), manifest.as_path()])
            }
            Command::Synth { .. } => {}
        }
        paths
    }

    /// Checks flag values and input paths before any work starts.
    pub fn validate(&self) -> Result<(), String> {
        if self.common.segment_bars == 0 {
            return Err("--segment-bars must be at least 1".into());
        }
        if self.common.threads == Some(0) {
            return Err("--threads must be at least 1".into());
        }
        if let Some(missing) = self.inputs().into_iter().find(|p| !p.exists()) {
            return Err(format!("input path {} does not exist", missing.display()));
        }
        match &self.command {
            Command::Query { k: 0, .. } | Command::Eval(EvalCommand::Segments { k: 0, .. }) => {
                Err("-k must be at least 1".into())
            }
            Command::Synth { .. } if self.common.out.is_none() => Err("synth requires --out <directory>".into()),
            _ => Ok(()),
        }
    }

    /// `--params` if given, else `base`, else the defaults; no ablation.
    fn base_params(&self, base: Option<&SimilarityParams>) -> anyhow::Result<SimilarityParams> {
        match &self.common.params {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Ok(SimilarityParams::from_json(&text).map_err(plagdet_core::Error::from)?)
            }
            None => Ok(base.copied().unwrap_or_default()),
        }
    }

    fn params(&self, base: Option<&SimilarityParams>) -> anyhow::Result<SimilarityParams> {
        Ok(self.base_params(base)?.ablated(self.common.ablate))
    }

    fn segmentation(&self) -> SegmentationConfig {
        SegmentationConfig { segment_bars: self.common.segment_bars, ..SegmentationConfig::default() }
    }
}

/// Bundle files given directly, plus every `*.json` file of given
/// directories, in sorted order.
fn expand_bundle_paths(paths: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(path)
                .with_context(|| format!("listing {}", path.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != MANIFEST_FILE))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(path.clone());
        }
    }
    Ok(out)
}

const MANIFEST_FILE: &str = "smp.json";

fn load_bundles(paths: &[PathBuf]) -> anyhow::Result<Vec<TrackBundle>> {
    expand_bundle_paths(paths)?
        .iter()
        .map(|p| load_bundle(p).map_err(plagdet_core::Error::from).with_context(|| format!("loading {}", p.display())))
        .collect()
}

fn write_out(path: Option<&Path>, contents: &str) -> anyhow::Result<()> {
    if let Some(path) = path {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
        info!("wrote {}", path.display());
    }
    Ok(())
}

fn sibling(path: &Path, extension: &str) -> PathBuf {
    path.with_extension(extension)
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serialization is infallible");
    s.push('\n');
    s
}

/// Runs one command, writing artifacts and printing a human-readable summary.
pub fn execute(config: &RunConfig) -> anyhow::Result<()> {
    if let Some(n) = config.common.threads {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = config.common.out.as_deref();
    match &config.command {
        Command::Ingest { bundles } => {
            let loaded = load_bundles(bundles)?;
            let mut summary = Vec::new();
            for b in &loaded {
                let track = QuantizedTrack::analyze(b).map_err(plagdet_core::Error::from)?;
                println!(
                    "{}: {} notes, {} bars, {:.2} bpm, {}",
                    b.track_id,
                    b.note_count(),
                    track.grid.n_bars,
                    track.grid.bpm,
                    track.key
                );
                summary.push(serde_json::json!({
                    "track_id": b.track_id,
                    "title": b.title,
                    "notes": b.note_count(),
                    "bars": track.grid.n_bars,
                    "bpm": track.grid.bpm,
                    "key": track.key,
                    "warnings": track.grid.warnings,
                    "dropped_notes": track.dropped_notes,
                }));
            }
            write_out(out, &to_json(&summary))
        }
        Command::Segment { bundle } => {
            let b = load_bundle(bundle).map_err(plagdet_core::Error::from)?;
            let track = QuantizedTrack::analyze(&b).map_err(plagdet_core::Error::from)?;
            let seg = segment_track(&track, &config.params(None)?, &config.segmentation())
                .map_err(plagdet_core::Error::from)?;
            for s in &seg.segments {
                println!("{}", s.describe());
            }
            write_out(out, &to_json(&seg.segments))
        }
        Command::Score { a, b } => {
            let params = config.params(None)?;
            let seg_config = config.segmentation();
            let (ba, bb) = (
                load_bundle(a).map_err(plagdet_core::Error::from)?,
                load_bundle(b).map_err(plagdet_core::Error::from)?,
            );
            let (sa, sb) = (analyze_bundle(&ba, &params, &seg_config)?, analyze_bundle(&bb, &params, &seg_config)?);
            let mut pairs = Vec::new();
            for ea in &sa.entries {
                for eb in &sb.entries {
                    let score = combined_score(&ea.features, &eb.features, &params);
                    pairs.push(serde_json::json!({ "a": ea.segment, "b": eb.segment, "score": score }));
                }
            }
            for (ea, eb) in sa.entries.iter().zip(&sb.entries) {
                let s = combined_score(&ea.features, &eb.features, &params);
                println!("{} <-> {}: {:.2}", ea.segment.describe(), eb.segment.describe(), s.normalized);
            }
            write_out(out, &to_json(&serde_json::json!({ "params": params, "pairs": pairs })))
        }
        Command::Index(IndexCommand::Build { bundles }) => {
            let Some(out) = out else { bail!("index build requires --out <path>") };
            let loaded = load_bundles(bundles)?;
            let index = SegmentIndex::build(&loaded, &config.params(None)?, &config.segmentation())?;
            save_index(&index, out).map_err(plagdet_core::Error::from)?;
            println!("indexed {} tracks, {} segments -> {}", index.tracks().len(), index.entries().len(), out.display());
            Ok(())
        }
        Command::Query { index, bundle, k } => {
            let index = load_index(index).map_err(plagdet_core::Error::from)?;
            let params = config.params(Some(index.params()))?;
            let b = load_bundle(bundle).map_err(plagdet_core::Error::from)?;
            let song = analyze_bundle(&b, &params, index.config())?;
            let mut matches = Vec::new();
            for e in &song.entries {
                let top = query_segment(&index, &e.segment, &e.features, *k, &params).map_err(plagdet_core::Error::from)?;
                for m in &top {
                    println!(
                        "{} -> {} {} ({:.2})",
                        m.query.describe(),
                        m.source.track_id,
                        m.source.describe(),
                        m.score.normalized
                    );
                }
                matches.extend(top);
            }
            let ranking = rank_songs(&index, &b.track_id, &song.entries, &params, config.common.variant);
            for (i, r) in ranking.ranked.iter().take(10).enumerate() {
                println!("{:>3}. {} {:.2}", i + 1, r.track_id, r.score);
            }
            write_out(
                out,
                &to_json(&serde_json::json!({
                    "query": b.track_id,
                    "variant": config.common.variant,
                    "params": params,
                    "matches": matches,
                    "ranking": ranking,
                })),
            )
        }
        Command::Eval(EvalCommand::Smp { index, manifest, all_conditions }) => {
            let index = load_index(index).map_err(plagdet_core::Error::from)?;
            let truth = GroundTruth::from_pairs(load_smp_manifest_file(manifest).map_err(plagdet_core::Error::from)?);
            let base = config.base_params(Some(index.params()))?;
            let conditions: Vec<Ablation> = if *all_conditions { Ablation::ALL.to_vec() } else { vec![config.common.ablate] };
            let report = evaluate_song_level(&index, &truth, &base, config.common.variant, &conditions)?;
            print!("{}", report.to_text());
            if let Some(out) = out {
                write_out(Some(out), &to_json(&report))?;
                write_out(Some(&sibling(out, "txt")), &report.to_text())?;
                write_out(Some(&sibling(out, "csv")), &report.to_csv())?;
            }
            Ok(())
        }
        Command::Eval(EvalCommand::Segments { index, manifest, k, tolerance_bars }) => {
            let index = load_index(index).map_err(plagdet_core::Error::from)?;
            let truth = GroundTruth::from_pairs(load_smp_manifest_file(manifest).map_err(plagdet_core::Error::from)?);
            let params = config.params(Some(index.params()))?;
            let report = evaluate_segments(&index, &truth, &params, *k, *tolerance_bars)?;
            print!("{}", report.to_text());
            if let Some(out) = out {
                write_out(Some(out), &to_json(&report))?;
                write_out(Some(&sibling(out, "txt")), &report.to_text())?;
            }
            Ok(())
        }
        Command::Synth { seed, songs, plants, bars } => {
            let dir = out.expect("validated");
            let corpus = generate_planted_corpus(&PlantedConfig {
                songs: *songs,
                bars: *bars,
                plants: *plants,
                seed: *seed,
                ..PlantedConfig::default()
            });
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for b in &corpus.bundles {
                write_out(Some(&dir.join(format!("{}.json", b.track_id))), &bundle_to_json(b))?;
            }
            write_out(Some(&dir.join(MANIFEST_FILE)), &to_json(&corpus.pairs))?;
            println!("wrote {} bundles and {} pairs to {}", corpus.bundles.len(), corpus.pairs.len(), dir.display());
            Ok(())
        }
    }
}

/// The error chain joined with `: `, skipping causes already quoted by the
/// message above them.
pub fn error_message(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !msg.ends_with(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
    }
    msg
}

/// Process exit status: 0 success, 1 processing error, 2 usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let config = match parse_args(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match config.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Err(msg) = config.validate() {
        eprintln!("error: {msg}");
        return 2;
    }
    match execute(&config) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", error_message(&e));
            1
        }
    }
}

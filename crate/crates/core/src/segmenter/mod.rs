//! Segment start points.
//!
//! Every downbeat that can open a full window is a candidate. Candidates are
//! compared pairwise with the segment scorer, clustered with Ward linkage,
//! and the phrase phase (bar mod segment length) most common in the largest
//! cluster decides where structure boundaries are snapped to.

mod ward;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SegmentError;
use crate::ingest::Instrument;
use crate::quantizer::QuantizedTrack;
use crate::similarity::{combined_score, extract_features, pattern_similarity, SegmentFeatures, SimilarityParams};

pub use ward::ward_cluster;

pub const DEFAULT_SEGMENT_BARS: usize = 4;

/// A fixed-length window of bars. `start_bar` is 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentDescriptor {
    pub track_id: String,
    pub start_bar: usize,
    pub length_bars: usize,
    pub start_s: f64,
    pub bar_duration_s: f64,
    pub structure_label: String,
    pub cluster_id: usize,
}

impl SegmentDescriptor {
    pub fn end_s(&self) -> f64 {
        self.start_s + self.length_bars as f64 * self.bar_duration_s
    }

    /// e.g. `chorus 00:35-00:43 (bars 16-19)`, bars 1-based.
    pub fn describe(&self) -> String {
        let label = if self.structure_label.is_empty() { "segment" } else { &self.structure_label };
        format!(
            "{label} {}-{} (bars {}-{})",
            clock(self.start_s),
            clock(self.end_s()),
            self.start_bar + 1,
            self.start_bar + self.length_bars
        )
    }
}

fn clock(seconds: f64) -> String {
    let total = seconds.max(0.0).round() as u64;
    format!("{:02}:{:02}", total / 60, total % 60)
}

/// Symmetric matrix of distances in `[0, 1]` with a zero diagonal, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub n: usize,
    pub entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }
}

/// Which score the self-similarity matrix is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// `1 - normalized / 100` of the full combined score.
    #[default]
    Combined,
    /// `1 - p`, cheaper.
    PatternOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    pub segment_bars: usize,
    pub distance: DistanceMode,
    /// Instruments used for features; empty means all.
    pub instruments: Vec<Instrument>,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig { segment_bars: DEFAULT_SEGMENT_BARS, distance: DistanceMode::Combined, instruments: vec![] }
    }
}

/// Bars that can open a full window of `segment_bars`.
pub fn candidate_starts(n_bars: usize, segment_bars: usize) -> Vec<usize> {
    if n_bars < segment_bars {
        log::warn!("track has {n_bars} bars, fewer than one {segment_bars}-bar segment");
        return Vec::new();
    }
    (0..=n_bars - segment_bars).collect()
}

fn window(track: &QuantizedTrack, start_bar: usize, length_bars: usize) -> SegmentDescriptor {
    SegmentDescriptor {
        track_id: track.track_id.clone(),
        start_bar,
        length_bars,
        start_s: track.grid.bar_start(start_bar),
        bar_duration_s: track.grid.bar_duration_s(),
        structure_label: String::new(),
        cluster_id: 0,
    }
}

/// Pairwise distances between the windows opening at each candidate bar.
pub fn build_distance_matrix(
    track: &QuantizedTrack,
    candidates: &[usize],
    params: &SimilarityParams,
    config: &SegmentationConfig,
) -> DistanceMatrix {
    let feats: Vec<SegmentFeatures> = candidates
        .iter()
        .map(|&b| extract_features(track, &window(track, b, config.segment_bars), &config.instruments))
        .collect();
    distance_matrix_from_features(&feats, params, config.distance)
}

pub fn distance_matrix_from_features(
    feats: &[SegmentFeatures],
    params: &SimilarityParams,
    mode: DistanceMode,
) -> DistanceMatrix {
    let n = feats.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        return 0.0;
                    }
                    let (a, b) = if i < j { (&feats[i], &feats[j]) } else { (&feats[j], &feats[i]) };
                    let d = match mode {
                        DistanceMode::Combined => 1.0 - combined_score(a, b, params).normalized / 100.0,
                        DistanceMode::PatternOnly => 1.0 - pattern_similarity(a, b).0,
                    };
                    d.clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect();
    DistanceMatrix { n, entries: rows.concat() }
}

/// `clamp(round(n / 4), 2, 12)`, or 1 for fewer than two points.
pub fn choose_cluster_count(n: usize) -> usize {
    if n < 2 {
        return n.max(1);
    }
    ((n as f64 / 4.0).round() as usize).clamp(2, 12)
}

/// Snaps structure boundaries onto the dominant phrase phase.
///
/// The phase is the residue `bar mod phrase_bars` shared by most members of
/// the largest cluster (lowest label, then lowest phase, on ties). Each
/// boundary moves to the nearest candidate in that phase, earlier bar on
/// ties. Without any boundaries every candidate in the phase is used.
pub fn refine_start_points(
    structure_bars: &[usize],
    labels: &[usize],
    candidates: &[usize],
    phrase_bars: usize,
) -> Vec<usize> {
    if candidates.is_empty() || labels.len() != candidates.len() {
        return Vec::new();
    }
    let phrase = phrase_bars.max(1);
    let n_labels = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; n_labels];
    for &l in labels {
        counts[l] += 1;
    }
    let largest = (0..n_labels).fold(0, |best, l| if counts[l] > counts[best] { l } else { best });

    let mut votes = vec![0usize; phrase];
    for (&bar, _) in candidates.iter().zip(labels).filter(|(_, &l)| l == largest) {
        votes[bar % phrase] += 1;
    }
    let phase = (0..phrase).fold(0, |best, p| if votes[p] > votes[best] { p } else { best });
    let in_phase: Vec<usize> = candidates.iter().copied().filter(|b| b % phrase == phase).collect();

    let mut points: Vec<usize> = if structure_bars.is_empty() {
        in_phase
    } else {
        structure_bars
            .iter()
            .map(|&boundary| {
                in_phase
                    .iter()
                    .copied()
                    .fold(None, |best: Option<usize>, c| match best {
                        Some(b) if b.abs_diff(boundary) <= c.abs_diff(boundary) => Some(b),
                        _ => Some(c),
                    })
                    .expect("the phase comes from a candidate")
            })
            .collect()
    };
    points.sort_unstable();
    points.dedup();
    points
}

/// One descriptor per start point whose window fits inside the track.
pub fn extract_segments(
    track: &QuantizedTrack,
    start_points: &[usize],
    candidates: &[usize],
    labels: &[usize],
    segment_bars: usize,
) -> Vec<SegmentDescriptor> {
    start_points
        .iter()
        .filter(|&&s| s + segment_bars <= track.grid.n_bars)
        .map(|&s| {
            let mut seg = window(track, s, segment_bars);
            seg.cluster_id = candidates.iter().position(|&c| c == s).and_then(|i| labels.get(i)).copied().unwrap_or(0);
            seg.structure_label = track
                .structure
                .iter()
                .rev()
                .find(|(_, bar)| *bar <= s)
                .map(|(label, _)| label.clone())
                .unwrap_or_default();
            seg
        })
        .collect()
}

/// Intermediate products of segmenting one track.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub candidates: Vec<usize>,
    pub distances: DistanceMatrix,
    pub cluster_count: usize,
    pub labels: Vec<usize>,
    pub start_points: Vec<usize>,
    pub segments: Vec<SegmentDescriptor>,
}

pub fn segment_track(
    track: &QuantizedTrack,
    params: &SimilarityParams,
    config: &SegmentationConfig,
) -> Result<Segmentation, SegmentError> {
    if config.segment_bars == 0 {
        return Err(SegmentError::ZeroLength);
    }
    let candidates = candidate_starts(track.grid.n_bars, config.segment_bars);
    let distances = build_distance_matrix(track, &candidates, params, config);
    let k = if candidates.is_empty() { 0 } else { choose_cluster_count(candidates.len()) };
    let labels = ward_cluster(&distances, k)?;
    let structure_bars: Vec<usize> = track.structure.iter().map(|(_, b)| *b).collect();
    let start_points = refine_start_points(&structure_bars, &labels, &candidates, config.segment_bars);
    let segments = extract_segments(track, &start_points, &candidates, &labels, config.segment_bars);
    Ok(Segmentation { candidates, distances, cluster_count: k, labels, start_points, segments })
}

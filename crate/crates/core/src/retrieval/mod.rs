//! Segment index and song-level ranking.
//!
//! Retrieval is an exhaustive scan: every query segment is scored against
//! every indexed segment of another track.

mod persist;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IndexError};
use crate::ingest::TrackBundle;
use crate::quantizer::{KeySignature, QuantizedTrack};
use crate::segmenter::{segment_track, SegmentDescriptor, SegmentationConfig};
use crate::similarity::{combined_score, extract_features, ScoreBreakdown, SegmentFeatures, SimilarityParams};

pub use persist::{index_from_bytes, index_to_bytes, load_index, save_index};

pub const INDEX_FORMAT_VERSION: u32 = 1;
/// Segment pairs summed per candidate by [`Aggregation::Top20Sum`].
pub const TOP_PAIRS: usize = 20;
/// Matches kept per query segment by [`Aggregation::WeightedTop5`].
pub const WEIGHTED_MATCHES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub segment: SegmentDescriptor,
    pub features: SegmentFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackInfo {
    pub title: String,
    pub segment_count: usize,
    pub n_bars: usize,
    pub bpm: f64,
    pub key: KeySignature,
}

/// Segments plus features of a whole corpus. Entries are ordered by
/// `(track_id, start_bar)` and the index is never modified after building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentIndex {
    format_version: u32,
    params: SimilarityParams,
    config: SegmentationConfig,
    tracks: BTreeMap<String, TrackInfo>,
    entries: Vec<IndexEntry>,
}

/// A bundle taken through quantization, segmentation and feature extraction.
#[derive(Debug, Clone)]
pub struct AnalyzedSong {
    pub track: QuantizedTrack,
    pub entries: Vec<IndexEntry>,
}

pub fn analyze_bundle(
    bundle: &TrackBundle,
    params: &SimilarityParams,
    config: &SegmentationConfig,
) -> Result<AnalyzedSong, Error> {
    let track = QuantizedTrack::analyze(bundle)?;
    let segmentation = segment_track(&track, params, config)?;
    let entries = segmentation
        .segments
        .into_iter()
        .map(|segment| {
            let features = extract_features(&track, &segment, &config.instruments);
            IndexEntry { segment, features }
        })
        .collect();
    Ok(AnalyzedSong { track, entries })
}

impl SegmentIndex {
    pub fn build(
        bundles: &[TrackBundle],
        params: &SimilarityParams,
        config: &SegmentationConfig,
    ) -> Result<SegmentIndex, Error> {
        params.validate()?;
        let mut ids: Vec<&str> = bundles.iter().map(|b| b.track_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(IndexError::DuplicateTrack(w[0].to_string()).into());
        }
        let mut songs: Vec<AnalyzedSong> =
            bundles.par_iter().map(|b| analyze_bundle(b, params, config)).collect::<Result<_, _>>()?;
        songs.sort_by(|a, b| a.track.track_id.cmp(&b.track.track_id));

        let mut tracks = BTreeMap::new();
        let mut entries = Vec::new();
        for song in songs {
            tracks.insert(
                song.track.track_id.clone(),
                TrackInfo {
                    title: song.track.title.clone(),
                    segment_count: song.entries.len(),
                    n_bars: song.track.grid.n_bars,
                    bpm: song.track.grid.bpm,
                    key: song.track.key,
                },
            );
            entries.extend(song.entries);
        }
        Ok(SegmentIndex { format_version: INDEX_FORMAT_VERSION, params: *params, config: config.clone(), tracks, entries })
    }

    pub fn format_version(&self) -> u32 {
        self.format_version
    }

    pub fn params(&self) -> &SimilarityParams {
        &self.params
    }

    pub fn config(&self) -> &SegmentationConfig {
        &self.config
    }

    pub fn tracks(&self) -> &BTreeMap<String, TrackInfo> {
        &self.tracks
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn track_entries(&self, track_id: &str) -> &[IndexEntry] {
        let start = self.entries.partition_point(|e| e.segment.track_id.as_str() < track_id);
        let end = self.entries.partition_point(|e| e.segment.track_id.as_str() <= track_id);
        &self.entries[start..end]
    }
}

/// One retrieved segment pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMatch {
    pub query: SegmentDescriptor,
    pub source: SegmentDescriptor,
    pub score: ScoreBreakdown,
}

fn match_order(a: &SegmentMatch, b: &SegmentMatch) -> Ordering {
    b.score
        .normalized
        .total_cmp(&a.score.normalized)
        .then_with(|| a.source.track_id.cmp(&b.source.track_id))
        .then(a.source.start_bar.cmp(&b.source.start_bar))
        .then_with(|| a.query.track_id.cmp(&b.query.track_id))
        .then(a.query.start_bar.cmp(&b.query.start_bar))
}

/// Scores the query against every entry from another track, in index order.
fn score_against_index(
    index: &SegmentIndex,
    query: &SegmentDescriptor,
    features: &SegmentFeatures,
    params: &SimilarityParams,
) -> Vec<(usize, ScoreBreakdown)> {
    index
        .entries
        .par_iter()
        .enumerate()
        .filter(|(_, e)| e.segment.track_id != query.track_id)
        .map(|(i, e)| (i, combined_score(features, &e.features, params)))
        .collect()
}

/// Top-`k` matches for one query segment, by normalized score then
/// `(track_id, start_bar)`.
pub fn query_segment(
    index: &SegmentIndex,
    query: &SegmentDescriptor,
    features: &SegmentFeatures,
    k: usize,
    params: &SimilarityParams,
) -> Result<Vec<SegmentMatch>, IndexError> {
    if k == 0 {
        return Err(IndexError::ZeroK);
    }
    let mut matches: Vec<SegmentMatch> = score_against_index(index, query, features, params)
        .into_iter()
        .map(|(i, score)| SegmentMatch { query: query.clone(), source: index.entries[i].segment.clone(), score })
        .collect();
    matches.sort_by(match_order);
    matches.truncate(k);
    Ok(matches)
}

/// How segment-pair scores become one score per candidate song.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Aggregation {
    /// Sum of the 20 highest segment-pair scores (all of them if fewer).
    #[default]
    #[serde(rename = "top20")]
    Top20Sum,
    /// Keep each query segment's 5 best matches; per candidate, the
    /// score-weighted mean `sum(s^2) / sum(s)` of the retained scores.
    #[serde(rename = "weighted")]
    WeightedTop5,
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "top20" => Ok(Aggregation::Top20Sum),
            "weighted" => Ok(Aggregation::WeightedTop5),
            other => Err(format!("unknown aggregation {other:?} (expected top20 or weighted)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSong {
    pub track_id: String,
    pub score: f64,
}

/// Candidates ordered by score descending, then track id ascending. The query
/// track never appears.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongRanking {
    pub query_track: String,
    pub ranked: Vec<RankedSong>,
}

impl SongRanking {
    /// 1-based rank of a candidate.
    pub fn rank_of(&self, track_id: &str) -> Option<usize> {
        self.ranked.iter().position(|r| r.track_id == track_id).map(|p| p + 1)
    }
}

pub fn sum_top_scores(scores: &mut [f64], n: usize) -> f64 {
    scores.sort_by(|a, b| b.total_cmp(a));
    scores.iter().take(n).sum()
}

pub fn weighted_mean(scores: &[f64]) -> f64 {
    let total: f64 = scores.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    scores.iter().map(|s| s * s).sum::<f64>() / total
}

fn finish_ranking(query_track: &str, per_track: BTreeMap<String, f64>) -> SongRanking {
    let mut ranked: Vec<RankedSong> =
        per_track.into_iter().map(|(track_id, score)| RankedSong { track_id, score }).collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.track_id.cmp(&b.track_id)));
    SongRanking { query_track: query_track.to_string(), ranked }
}

/// Ranks the other songs of the index against a set of query segments.
/// A candidate is listed once it has at least one scored (top-20) or
/// retained (weighted) segment pair.
pub fn rank_songs(
    index: &SegmentIndex,
    query_track: &str,
    query: &[IndexEntry],
    params: &SimilarityParams,
    aggregation: Aggregation,
) -> SongRanking {
    let mut per_track: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for q in query {
        let mut scored = score_against_index(index, &q.segment, &q.features, params);
        if aggregation == Aggregation::WeightedTop5 {
            scored.sort_by(|(ia, a), (ib, b)| {
                let (ea, eb) = (&index.entries[*ia].segment, &index.entries[*ib].segment);
                b.normalized
                    .total_cmp(&a.normalized)
                    .then_with(|| ea.track_id.cmp(&eb.track_id))
                    .then(ea.start_bar.cmp(&eb.start_bar))
            });
            scored.truncate(WEIGHTED_MATCHES);
        }
        for (i, score) in scored {
            let track = &index.entries[i].segment.track_id;
            if track != query_track {
                per_track.entry(track.clone()).or_default().push(score.normalized);
            }
        }
    }
    let aggregated = per_track
        .into_iter()
        .map(|(track, mut scores)| {
            let value = match aggregation {
                Aggregation::Top20Sum => sum_top_scores(&mut scores, TOP_PAIRS),
                Aggregation::WeightedTop5 => weighted_mean(&scores),
            };
            (track, value)
        })
        .collect();
    finish_ranking(query_track, aggregated)
}

/// Song ranking for a track already in the index, using its indexed segments.
pub fn song_ranking(
    index: &SegmentIndex,
    query_track: &str,
    params: &SimilarityParams,
    aggregation: Aggregation,
) -> Result<SongRanking, IndexError> {
    if !index.tracks.contains_key(query_track) {
        return Err(IndexError::UnknownTrack(query_track.to_string()));
    }
    Ok(rank_songs(index, query_track, index.track_entries(query_track), params, aggregation))
}

pub fn song_score_top20(index: &SegmentIndex, query_track: &str) -> Result<SongRanking, IndexError> {
    song_ranking(index, query_track, &index.params, Aggregation::Top20Sum)
}

pub fn song_score_weighted(index: &SegmentIndex, query_track: &str) -> Result<SongRanking, IndexError> {
    song_ranking(index, query_track, &index.params, Aggregation::WeightedTop5)
}

/// The `limit` best cross-track segment pairs of the whole index, each
/// unordered pair counted once (the entry earlier in index order is the query).
pub fn global_matches(index: &SegmentIndex, params: &SimilarityParams, limit: usize) -> Vec<SegmentMatch> {
    let entries = &index.entries;
    let mut all: Vec<SegmentMatch> = (0..entries.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut row: Vec<SegmentMatch> = entries[i + 1..]
                .iter()
                .filter(|e| e.segment.track_id != entries[i].segment.track_id)
                .map(|e| SegmentMatch {
                    query: entries[i].segment.clone(),
                    source: e.segment.clone(),
                    score: combined_score(&entries[i].features, &e.features, params),
                })
                .collect();
            row.sort_by(match_order);
            row.truncate(limit);
            row
        })
        .collect();
    all.sort_by(match_order);
    all.truncate(limit);
    all
}

//! Retrieval metrics and evaluation drivers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, EvalError};
use crate::ingest::SmpPair;
use crate::retrieval::{global_matches, song_ranking, Aggregation, RankedSong, SegmentIndex, SegmentMatch, SongRanking};
use crate::similarity::{combined_score, Ablation, SimilarityParams};

/// Default hit tolerance for annotated segment times, in bars.
pub const DEFAULT_TOLERANCE_BARS: f64 = 1.0;

/// Track groups plus the SMP pairs they came from. Two tracks are related
/// when they share a group label.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    groups: BTreeMap<String, String>,
    pairs: Vec<SmpPair>,
}

impl GroundTruth {
    /// Groups are the connected components of the pair graph, labelled by
    /// their smallest track id.
    pub fn from_pairs(pairs: Vec<SmpPair>) -> GroundTruth {
        let mut parent: BTreeMap<String, String> = BTreeMap::new();
        fn find(parent: &mut BTreeMap<String, String>, x: &str) -> String {
            let mut root = x.to_string();
            while parent[&root] != root {
                root = parent[&root].clone();
            }
            let mut cur = x.to_string();
            while cur != root {
                let next = parent[&cur].clone();
                parent.insert(cur, root.clone());
                cur = next;
            }
            root
        }
        for p in &pairs {
            for id in [&p.original_id, &p.comparison_id] {
                parent.entry(id.clone()).or_insert_with(|| id.clone());
            }
            let (a, b) = (find(&mut parent, &p.original_id), find(&mut parent, &p.comparison_id));
            if a != b {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                parent.insert(hi, lo);
            }
        }
        let ids: Vec<String> = parent.keys().cloned().collect();
        let groups = ids.into_iter().map(|id| (id.clone(), find(&mut parent, &id))).collect();
        GroundTruth { groups, pairs }
    }

    pub fn from_groups(groups: BTreeMap<String, String>) -> GroundTruth {
        GroundTruth { groups, pairs: Vec::new() }
    }

    pub fn groups(&self) -> &BTreeMap<String, String> {
        &self.groups
    }

    pub fn pairs(&self) -> &[SmpPair] {
        &self.pairs
    }

    pub fn same_group(&self, a: &str, b: &str) -> bool {
        matches!((self.groups.get(a), self.groups.get(b)), (Some(x), Some(y)) if x == y)
    }

    /// The single other member of `track`'s group.
    pub fn counterpart(&self, track: &str) -> Result<&str, EvalError> {
        let group = self.groups.get(track).ok_or_else(|| EvalError::NoCounterpart(track.to_string()))?;
        let mut others = self.groups.iter().filter(|(id, g)| *g == group && id.as_str() != track);
        match (others.next(), others.next()) {
            (Some((id, _)), None) => Ok(id),
            (None, _) => Err(EvalError::NoCounterpart(track.to_string())),
            (Some(_), Some(_)) => Err(EvalError::AmbiguousCounterpart(track.to_string())),
        }
    }

    pub fn check_corpus<'a>(&self, corpus: impl IntoIterator<Item = &'a str>) -> Result<(), EvalError> {
        let present: BTreeSet<&str> = corpus.into_iter().collect();
        match self.groups.keys().find(|id| !present.contains(id.as_str())) {
            Some(missing) => Err(EvalError::MissingTrack(missing.clone())),
            None => Ok(()),
        }
    }

    /// `(query, counterpart)` pairs: both directions of every SMP pair, or,
    /// for group-only truth, every track whose group has exactly two members.
    pub fn directed_queries(&self) -> Vec<(String, String)> {
        if !self.pairs.is_empty() {
            return self
                .pairs
                .iter()
                .flat_map(|p| {
                    [(p.original_id.clone(), p.comparison_id.clone()), (p.comparison_id.clone(), p.original_id.clone())]
                })
                .collect();
        }
        self.groups
            .keys()
            .filter_map(|id| self.counterpart(id).ok().map(|c| (id.clone(), c.to_string())))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Precision {
    pub k: usize,
    /// Matches actually examined; smaller than `k` when fewer were available.
    pub evaluated: usize,
    pub correct: usize,
    pub value: f64,
}

/// Precision over the first `k` flags, or over all of them when fewer exist.
pub fn precision_from_flags(flags: &[bool], k: usize) -> Result<Precision, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    let evaluated = k.min(flags.len());
    if evaluated == 0 {
        return Err(EvalError::NoQueries);
    }
    let correct = flags[..evaluated].iter().filter(|&&f| f).count();
    Ok(Precision { k, evaluated, correct, value: correct as f64 / evaluated as f64 })
}

/// Share of the top-`k` matches whose two tracks share a group.
pub fn precision_at_k(matches: &[SegmentMatch], truth: &GroundTruth, k: usize) -> Result<Precision, EvalError> {
    let flags: Vec<bool> =
        matches.iter().map(|m| truth.same_group(&m.query.track_id, &m.source.track_id)).collect();
    precision_from_flags(&flags, k)
}

/// Rank with the miss penalty applied.
pub fn penalized_index(rank: Option<usize>, corpus_size: usize) -> usize {
    rank.unwrap_or(corpus_size)
}

pub fn average_index(ranks: &[Option<usize>], corpus_size: usize) -> Result<f64, EvalError> {
    if ranks.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let total: usize = ranks.iter().map(|&r| penalized_index(r, corpus_size)).sum();
    Ok(total as f64 / ranks.len() as f64)
}

pub fn accuracy_at(ranks: &[Option<usize>], n: usize) -> Result<f64, EvalError> {
    if n == 0 {
        return Err(EvalError::ZeroN);
    }
    if ranks.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let hits = ranks.iter().filter(|r| matches!(r, Some(x) if *x <= n)).count();
    Ok(hits as f64 / ranks.len() as f64)
}

fn counterpart_ranks(rankings: &[SongRanking], truth: &GroundTruth) -> Result<Vec<Option<usize>>, EvalError> {
    rankings
        .iter()
        .map(|r| truth.counterpart(&r.query_track).map(|c| r.rank_of(c)))
        .collect()
}

/// Mean 1-based rank of each query's counterpart; a counterpart absent from
/// the ranking counts as rank `corpus_size`.
pub fn top_average_index(rankings: &[SongRanking], truth: &GroundTruth, corpus_size: usize) -> Result<f64, EvalError> {
    average_index(&counterpart_ranks(rankings, truth)?, corpus_size)
}

/// Share of queries whose counterpart ranks within the top `n`.
pub fn top_n_accuracy(rankings: &[SongRanking], truth: &GroundTruth, n: usize) -> Result<f64, EvalError> {
    if n == 0 {
        return Err(EvalError::ZeroN);
    }
    accuracy_at(&counterpart_ranks(rankings, truth)?, n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query: String,
    pub counterpart: String,
    pub rank: Option<usize>,
    pub index: usize,
    pub top1: bool,
    pub top5: bool,
    pub ranking: Vec<RankedSong>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: Ablation,
    pub label: String,
    pub params: SimilarityParams,
    pub avg_index: f64,
    pub top1: f64,
    pub top5: f64,
    pub queries: Vec<QueryResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub notes: Vec<String>,
    pub corpus_size: usize,
    pub query_count: usize,
    pub variant: Aggregation,
    pub params: SimilarityParams,
    pub conditions: Vec<ConditionResult>,
}

impl EvalReport {
    pub fn condition(&self, ablation: Ablation) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.condition == ablation)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }

    /// Notes followed by a `condition x (Avg. Index, Top-1, Top-5)` table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for note in &self.notes {
            let _ = writeln!(out, "# {note}");
        }
        let width = self.conditions.iter().map(|c| c.label.len()).max().unwrap_or(0).max("Condition".len());
        let _ = writeln!(out, "{:<width$}  {:>10}  {:>10}  {:>10}", "Condition", "Avg. Index", "Top-1 Acc.", "Top-5 Acc.");
        for c in &self.conditions {
            let _ = writeln!(out, "{:<width$}  {:>10.4}  {:>10.4}  {:>10.4}", c.label, c.avg_index, c.top1, c.top5);
        }
        out
    }

    /// One row per query and condition.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("condition,query,counterpart,rank,index\n");
        for c in &self.conditions {
            for q in &c.queries {
                let rank = q.rank.map(|r| r.to_string()).unwrap_or_default();
                let _ = writeln!(out, "{},{},{},{},{}", c.label, csv_field(&q.query), csv_field(&q.counterpart), rank, q.index);
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Queries every truth track against the index in both directions and
/// reports Avg. Index, Top-1 and Top-5 for each requested condition.
pub fn evaluate_song_level(
    index: &SegmentIndex,
    truth: &GroundTruth,
    params: &SimilarityParams,
    variant: Aggregation,
    conditions: &[Ablation],
) -> Result<EvalReport, Error> {
    params.validate()?;
    truth.check_corpus(index.tracks().keys().map(String::as_str))?;
    let queries = truth.directed_queries();
    if queries.is_empty() {
        return Err(EvalError::NoQueries.into());
    }
    let n = index.tracks().len();
    let query_tracks: BTreeSet<&str> = queries.iter().map(|(q, _)| q.as_str()).collect();
    let mut results = Vec::with_capacity(conditions.len());
    for &condition in conditions {
        let cond_params = params.ablated(condition);
        let rankings: BTreeMap<&str, SongRanking> = query_tracks
            .par_iter()
            .map(|&q| song_ranking(index, q, &cond_params, variant).map(|r| (q, r)))
            .collect::<Result<_, _>>()?;
        let per_query: Vec<QueryResult> = queries
            .iter()
            .map(|(q, c)| {
                let ranking = &rankings[q.as_str()];
                let rank = ranking.rank_of(c);
                QueryResult {
                    query: q.clone(),
                    counterpart: c.clone(),
                    rank,
                    index: penalized_index(rank, n),
                    top1: matches!(rank, Some(1)),
                    top5: matches!(rank, Some(r) if r <= 5),
                    ranking: ranking.ranked.clone(),
                }
            })
            .collect();
        let ranks: Vec<Option<usize>> = per_query.iter().map(|q| q.rank).collect();
        results.push(ConditionResult {
            condition,
            label: condition.label().to_string(),
            params: cond_params,
            avg_index: average_index(&ranks, n)?,
            top1: accuracy_at(&ranks, 1)?,
            top5: accuracy_at(&ranks, 5)?,
            queries: per_query,
        });
    }
    let notes = vec![
        "every pair is queried in both directions (original->comparison and comparison->original)".to_string(),
        format!("undetected counterparts are penalized with index N = {n} (corpus size)"),
        format!("song aggregation: {}", match variant {
            Aggregation::Top20Sum => "sum of the 20 highest segment-pair scores",
            Aggregation::WeightedTop5 => "score-weighted mean of each query segment's top-5 matches",
        }),
    ];
    Ok(EvalReport { notes, corpus_size: n, query_count: queries.len(), variant, params: *params, conditions: results })
}

fn near_any(t: f64, times: &[f64], tolerance_s: f64) -> bool {
    times.iter().any(|&a| (t - a).abs() <= tolerance_s)
}

/// Hit flag per match: both segment starts lie within `tolerance_bars` bar
/// durations of an annotated time on their side of the pair. Matches between
/// other tracks are misses.
pub fn match_annotated_times(matches: &[SegmentMatch], pair: &SmpPair, tolerance_bars: f64) -> Vec<bool> {
    matches
        .iter()
        .map(|m| {
            let (orig, comp) = if m.query.track_id == pair.original_id && m.source.track_id == pair.comparison_id {
                (&m.query, &m.source)
            } else if m.query.track_id == pair.comparison_id && m.source.track_id == pair.original_id {
                (&m.source, &m.query)
            } else {
                return false;
            };
            near_any(orig.start_s, &pair.original_times_s, tolerance_bars * orig.bar_duration_s)
                && near_any(comp.start_s, &pair.comparison_times_s, tolerance_bars * comp.bar_duration_s)
        })
        .collect()
}

/// Best segment matches between the two tracks of a pair, original side as
/// the query.
pub fn pair_matches(index: &SegmentIndex, pair: &SmpPair, params: &SimilarityParams, k: usize) -> Vec<SegmentMatch> {
    let originals = index.track_entries(&pair.original_id);
    let comparisons = index.track_entries(&pair.comparison_id);
    let mut matches: Vec<SegmentMatch> = originals
        .iter()
        .flat_map(|o| {
            comparisons.iter().map(move |c| SegmentMatch {
                query: o.segment.clone(),
                source: c.segment.clone(),
                score: combined_score(&o.features, &c.features, params),
            })
        })
        .collect();
    matches.sort_by(|a, b| {
        b.score
            .normalized
            .total_cmp(&a.score.normalized)
            .then(a.query.start_bar.cmp(&b.query.start_bar))
            .then(a.source.start_bar.cmp(&b.source.start_bar))
    });
    matches.truncate(k);
    matches
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairHit {
    pub pair_no: i64,
    pub original_id: String,
    pub comparison_id: String,
    pub best_match: Option<SegmentMatch>,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub k: usize,
    pub precision: Precision,
    pub tolerance_bars: f64,
    pub matches: Vec<SegmentMatch>,
    pub correct: Vec<bool>,
    pub pair_hits: Vec<PairHit>,
}

impl SegmentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let p = &self.precision;
        let _ = writeln!(out, "Precision@{}: {:.4} ({}/{})", p.k, p.value, p.correct, p.evaluated);
        for (i, (m, ok)) in self.matches.iter().zip(&self.correct).enumerate() {
            let _ = writeln!(
                out,
                "{:>4}  {:>7.2}  {} {}  <->  {} {}  {}",
                i + 1,
                m.score.normalized,
                m.query.track_id,
                m.query.describe(),
                m.source.track_id,
                m.source.describe(),
                if *ok { "correct" } else { "wrong" }
            );
        }
        if !self.pair_hits.is_empty() {
            let hits = self.pair_hits.iter().filter(|h| h.hit).count();
            let _ = writeln!(out, "Annotated-time hits: {hits}/{} (tolerance {} bar)", self.pair_hits.len(), self.tolerance_bars);
        }
        out
    }
}

/// Precision@K over the globally ranked cross-track segment pairs, plus an
/// annotated-time check of each SMP pair's best match.
pub fn evaluate_segments(
    index: &SegmentIndex,
    truth: &GroundTruth,
    params: &SimilarityParams,
    k: usize,
    tolerance_bars: f64,
) -> Result<SegmentReport, Error> {
    if k == 0 {
        return Err(EvalError::ZeroK.into());
    }
    params.validate()?;
    truth.check_corpus(index.tracks().keys().map(String::as_str))?;
    let matches = global_matches(index, params, k);
    let correct: Vec<bool> = matches.iter().map(|m| truth.same_group(&m.query.track_id, &m.source.track_id)).collect();
    let precision = precision_from_flags(&correct, k)?;
    let pair_hits = truth
        .pairs()
        .iter()
        .map(|pair| {
            let best = pair_matches(index, pair, params, 1).into_iter().next();
            let hit = best.as_ref().is_some_and(|m| match_annotated_times(std::slice::from_ref(m), pair, tolerance_bars)[0]);
            PairHit {
                pair_no: pair.pair_no,
                original_id: pair.original_id.clone(),
                comparison_id: pair.comparison_id.clone(),
                best_match: best,
                hit,
            }
        })
        .collect();
    Ok(SegmentReport { k, precision, tolerance_bars, matches, correct, pair_hits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Relation;

    fn pair(a: &str, b: &str) -> SmpPair {
        SmpPair {
            original_id: a.into(),
            comparison_id: b.into(),
            relation: Relation::PlagiarismCase,
            original_times_s: vec![73.0],
            comparison_times_s: vec![85.0],
            pair_no: 1,
        }
    }

    #[test]
    fn groups_from_pairs() {
        let t = GroundTruth::from_pairs(vec![pair("b", "a"), pair("c", "d"), pair("d", "e")]);
        assert!(t.same_group("a", "b"));
        assert!(t.same_group("c", "e"));
        assert!(!t.same_group("a", "c"));
        assert_eq!(t.counterpart("a").unwrap(), "b");
        assert!(matches!(t.counterpart("d"), Err(EvalError::AmbiguousCounterpart(_))));
        assert!(matches!(t.counterpart("zz"), Err(EvalError::NoCounterpart(_))));
        assert_eq!(t.directed_queries().len(), 6);
    }

    #[test]
    fn precision_cases() {
        let p = precision_from_flags(&[true, false, true, false], 4).unwrap();
        assert_eq!(p.value, 0.5);
        let mut flags = vec![true; 98];
        flags.extend([false, false]);
        assert_eq!(precision_from_flags(&flags, 100).unwrap().value, 0.98);
        assert!(matches!(precision_from_flags(&flags, 0), Err(EvalError::ZeroK)));
        let short = precision_from_flags(&[true, true], 10).unwrap();
        assert_eq!((short.evaluated, short.value), (2, 1.0));
    }

    #[test]
    fn index_and_accuracy() {
        assert_eq!(average_index(&[Some(1), Some(2), Some(3)], 70).unwrap(), 2.0);
        assert_eq!(average_index(&[None], 70).unwrap(), 70.0);
        let ranks = [Some(1), Some(1), Some(3)];
        assert!((accuracy_at(&ranks, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(accuracy_at(&ranks, 5).unwrap(), 1.0);
        assert!(matches!(accuracy_at(&[], 1), Err(EvalError::NoQueries)));
        assert!(matches!(accuracy_at(&ranks, 0), Err(EvalError::ZeroN)));
    }
}

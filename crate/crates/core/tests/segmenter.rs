mod common;

use plagdet_core::quantizer::QuantizedTrack;
use plagdet_core::segmenter::{
    build_distance_matrix, candidate_starts, extract_segments, refine_start_points, segment_track, ward_cluster,
    DistanceMatrix, SegmentationConfig,
};
use plagdet_core::synth::{generate_planted_corpus, PlantedConfig};
use plagdet_core::SimilarityParams;
use proptest::prelude::*;
use rand::Rng;

fn matrix(n: usize, f: impl Fn(usize, usize) -> f64) -> DistanceMatrix {
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                entries[i * n + j] = f(i.min(j), i.max(j));
            }
        }
    }
    DistanceMatrix { n, entries }
}

fn euclidean(points: &[(f64, f64)]) -> DistanceMatrix {
    matrix(points.len(), |i, j| {
        let (dx, dy) = (points[i].0 - points[j].0, points[i].1 - points[j].1);
        (dx * dx + dy * dy).sqrt() / 2f64.sqrt()
    })
}

fn ss(d: &DistanceMatrix, members: &[usize]) -> f64 {
    let mut sum = 0.0;
    for (x, &i) in members.iter().enumerate() {
        for &j in &members[x + 1..] {
            sum += d.get(i, j).powi(2);
        }
    }
    sum / members.len() as f64
}

fn merge_cost(d: &DistanceMatrix, a: &[usize], b: &[usize]) -> f64 {
    let joined: Vec<usize> = a.iter().chain(b).copied().collect();
    ss(d, &joined) - ss(d, a) - ss(d, b)
}

fn labels_of(n: usize, clusters: &[Vec<usize>]) -> Vec<usize> {
    let mut owner = vec![0; n];
    for (c, members) in clusters.iter().enumerate() {
        for &m in members {
            owner[m] = c;
        }
    }
    let mut map = vec![usize::MAX; clusters.len()];
    let mut next = 0;
    owner
        .into_iter()
        .map(|o| {
            if map[o] == usize::MAX {
                map[o] = next;
                next += 1;
            }
            map[o]
        })
        .collect()
}

/// Every merge sequence down to `k` clusters with its summed Ward cost.
fn all_merge_sequences(d: &DistanceMatrix, clusters: Vec<Vec<usize>>, k: usize, cost: f64, out: &mut Vec<(f64, Vec<usize>)>) {
    if clusters.len() == k {
        out.push((cost, labels_of(d.n, &clusters)));
        return;
    }
    for i in 0..clusters.len() {
        for j in i + 1..clusters.len() {
            let step = merge_cost(d, &clusters[i], &clusters[j]);
            let mut next = clusters.clone();
            let merged: Vec<usize> = next[i].iter().chain(&next[j]).copied().collect();
            next[i] = merged;
            next.remove(j);
            all_merge_sequences(d, next, k, cost + step, out);
        }
    }
}

/// Greedy Ward computed from cluster sums of squares instead of the
/// Lance-Williams recurrence.
fn naive_ward(d: &DistanceMatrix, k: usize) -> Vec<usize> {
    let mut clusters: Vec<Vec<usize>> = (0..d.n).map(|i| vec![i]).collect();
    while clusters.len() > k {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let c = merge_cost(d, &clusters[i], &clusters[j]);
                if c < best.0 {
                    best = (c, i, j);
                }
            }
        }
        let moved = clusters.remove(best.2);
        clusters[best.1].extend(moved);
    }
    labels_of(d.n, &clusters)
}

#[test]
fn two_tight_pairs_match_the_best_merge_sequence() {
    // pairs {0, 2} and {1, 3}
    let d = matrix(4, |i, j| if (i + j) % 2 == 0 { 0.01 } else { 0.9 });
    let mut sequences = Vec::new();
    all_merge_sequences(&d, (0..4).map(|i| vec![i]).collect(), 2, 0.0, &mut sequences);
    assert_eq!(sequences.len(), 18);
    let best = sequences.iter().min_by(|a, b| a.0.total_cmp(&b.0)).unwrap();
    let labels = ward_cluster(&d, 2).unwrap();
    assert_eq!(labels, best.1);
    assert_eq!(labels, vec![0, 1, 0, 1]);
}

#[test]
fn trivial_cluster_counts() {
    let d = matrix(2, |_, _| 0.0);
    assert_eq!(ward_cluster(&d, 1).unwrap(), vec![0, 0]);
    let d = euclidean(&[(0.0, 0.0), (0.3, 0.1), (0.9, 0.4)]);
    assert_eq!(ward_cluster(&d, 3).unwrap(), vec![0, 1, 2]);
    assert!(ward_cluster(&d, 4).is_err());
    assert!(ward_cluster(&matrix(0, |_, _| 0.0), 0).unwrap().is_empty());
}

#[test]
fn generated_sections_become_segments() {
    let corpus = generate_planted_corpus(&PlantedConfig { songs: 1, bars: 24, plants: 0, ..PlantedConfig::default() });
    let track = QuantizedTrack::analyze(&corpus.bundles[0]).unwrap();
    let seg = segment_track(&track, &SimilarityParams::default(), &SegmentationConfig::default()).unwrap();
    assert_eq!(seg.candidates, (0..=20).collect::<Vec<_>>());
    assert_eq!(seg.cluster_count, 5);
    assert_eq!(seg.start_points, vec![0, 8, 16]);
    let bars: Vec<(usize, usize)> = seg.segments.iter().map(|s| (s.start_bar, s.length_bars)).collect();
    assert_eq!(bars, vec![(0, 4), (8, 4), (16, 4)]);
    let labels: Vec<&str> = seg.segments.iter().map(|s| s.structure_label.as_str()).collect();
    assert_eq!(labels, vec!["verse", "chorus", "verse"]);
    assert!(seg.segments[1].describe().contains("(bars 9-12)"));
}

#[test]
fn extraction_drops_windows_past_the_end() {
    let bundle = common::random_bundle(&mut common::rng(1), "e", 16, 4);
    let track = QuantizedTrack::analyze(&bundle).unwrap();
    let candidates = candidate_starts(16, 4);
    let labels = vec![0; candidates.len()];
    let segs = extract_segments(&track, &[0, 8], &candidates, &labels, 4);
    let bars: Vec<(usize, usize)> = segs.iter().map(|s| (s.start_bar, s.length_bars)).collect();
    assert_eq!(bars, vec![(0, 4), (8, 4)]);
    assert_eq!(extract_segments(&track, &[14], &candidates, &labels, 4), vec![]);
    assert_eq!(extract_segments(&track, &[], &candidates, &labels, 4), vec![]);
}

proptest! {
    #[test]
    fn lance_williams_agrees_with_direct_ward(seed in any::<u64>(), n in 2usize..9) {
        let mut rng = common::rng(seed);
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0))).collect();
        let d = euclidean(&pts);
        for k in 1..=n {
            prop_assert_eq!(ward_cluster(&d, k).unwrap(), naive_ward(&d, k), "k = {}", k);
        }
    }

    #[test]
    fn refine_ignores_boundary_order(
        n_bars in 4usize..40,
        seed in any::<u64>(),
        boundaries in proptest::collection::vec(0usize..40, 0..6),
    ) {
        let candidates = candidate_starts(n_bars, 4);
        let mut rng = common::rng(seed);
        let labels: Vec<usize> = candidates.iter().map(|_| rng.random_range(0..3)).collect();
        let mut shuffled = boundaries.clone();
        shuffled.reverse();
        shuffled.rotate_left(boundaries.len() / 2);
        let a = refine_start_points(&boundaries, &labels, &candidates, 4);
        let b = refine_start_points(&shuffled, &labels, &candidates, 4);
        prop_assert_eq!(&a, &b);
        prop_assert!(a.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(a.iter().all(|s| candidates.contains(s)));
        if let Some(first) = a.first() {
            prop_assert!(a.iter().all(|s| s % 4 == first % 4));
        }
    }

    #[test]
    fn segmentation_respects_the_grid(seed in any::<u64>(), n_bars in 3usize..14) {
        let bundle = common::random_bundle(&mut common::rng(seed), "s", n_bars, 4);
        let track = QuantizedTrack::analyze(&bundle).unwrap();
        let params = SimilarityParams::default();
        let config = SegmentationConfig::default();
        let seg = segment_track(&track, &params, &config).unwrap();
        let d = &seg.distances;
        for i in 0..d.n {
            prop_assert_eq!(d.get(i, i), 0.0);
            for j in 0..d.n {
                prop_assert!((0.0..=1.0).contains(&d.get(i, j)));
                prop_assert_eq!(d.get(i, j), d.get(j, i));
            }
        }
        prop_assert_eq!(d, &build_distance_matrix(&track, &seg.candidates, &params, &config));
        prop_assert!(seg.labels.iter().all(|&l| l < seg.cluster_count.max(1)));
        prop_assert!(seg.start_points.iter().all(|s| seg.candidates.contains(s)));
        prop_assert!(seg.start_points.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(seg.segments.len(), seg.start_points.len());
        for s in &seg.segments {
            prop_assert!(s.start_bar + s.length_bars <= track.grid.n_bars);
            prop_assert_eq!(s.start_s, track.grid.bar_start_s[s.start_bar]);
        }
        if n_bars < 4 {
            prop_assert!(seg.segments.is_empty());
        }
    }
}

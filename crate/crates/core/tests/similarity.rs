mod common;

use std::collections::BTreeMap;

use plagdet_core::ingest::{ChordQuality, Instrument, InstrumentTrack, NoteEvent, TrackAnnotation, TrackBundle};
use plagdet_core::quantizer::{degree_for_interval, BeatChord, KeySignature, Mode};
use plagdet_core::similarity::{
    bpm_similarity, chord_similarity, combine, combined_score, complexity, pattern_similarity, rhythm_similarity,
    Components, SegmentFeatures,
};
use plagdet_core::SimilarityParams;
use proptest::prelude::*;

/// (pitch, onset in 16ths, duration in 16ths) on a 4-bar 4/4 grid at 120 bpm.
fn features(notes: &[(u8, u32, u32)]) -> SegmentFeatures {
    let events = notes
        .iter()
        .map(|&(pitch, on, dur)| NoteEvent {
            pitch,
            onset_s: f64::from(on) * 0.125,
            duration_s: f64::from(dur) * 0.125,
            velocity: 100,
        })
        .collect();
    let bundle = TrackBundle {
        track_id: "f".into(),
        title: String::new(),
        tracks: vec![InstrumentTrack::new(Instrument::Melody, events)],
        annotation: TrackAnnotation {
            key: Some(KeySignature { tonic_pc: 0, mode: Mode::Major }),
            ..common::annotation(120.0, 4, 5, 0.0)
        },
        metadata: BTreeMap::new(),
    };
    common::features_of(&bundle)
}

fn chord(interval: u8, quality: ChordQuality) -> Option<BeatChord> {
    Some(BeatChord { degree: degree_for_interval(interval, Mode::Major), quality })
}

fn comps(p: f64, m: f64, r: f64, b: f64, r_n: f64, q: f64) -> Components {
    Components { p, m, r, b, r_n, q, best_shift: 0 }
}

#[test]
fn single_whole_segment_note() {
    let f = features(&[(60, 0, 64)]);
    assert!(f.chroma.iter().all(|col| col[0] == 1.0 && col[1..].iter().all(|&v| v == 0.0)));
    assert_eq!(f.pitch_classes(), vec![0]);
    assert_eq!(f.onsets(), vec![0]);
}

#[test]
fn empty_segment_has_zero_chroma() {
    let f = features(&[(60, 64, 4)]);
    assert!(f.is_empty());
    assert!(f.chroma.iter().all(|col| col.iter().all(|&v| v == 0.0)));
    assert_eq!(f.onset_set, 0);
    let (p, _) = pattern_similarity(&f, &features(&[(60, 0, 64)]));
    assert_eq!(p, 0.0);
}

#[test]
fn simultaneous_notes_split_a_column() {
    let f = features(&[(60, 0, 16), (67, 0, 16)]);
    for col in &f.chroma[..16] {
        assert_eq!((col[0], col[7]), (0.5, 0.5));
        assert_eq!(col.iter().sum::<f64>(), 1.0);
    }
    assert!(f.chroma[16..].iter().all(|col| col.iter().all(|&v| v == 0.0)));
}

#[test]
fn three_four_segments_resample_to_64_columns() {
    let mut rng = common::rng(9);
    let bundle = common::random_bundle(&mut rng, "w", 4, 3);
    let f = common::features_of(&bundle);
    assert_eq!(f.chroma.len(), 64);
    assert_eq!(f.harmony.len(), 12);
    for col in &f.chroma {
        let sum: f64 = col.iter().sum();
        assert!(sum == 0.0 || (sum - 1.0).abs() < 1e-9);
    }
}

#[test]
fn transposed_copy_matches_at_complementary_shift() {
    let a = features(&[(60, 0, 8), (64, 8, 8), (67, 16, 16), (71, 32, 32)]);
    let b = features(&[(63, 0, 8), (67, 8, 8), (70, 16, 16), (74, 32, 32)]);
    let (p, shift) = pattern_similarity(&a, &b);
    assert!((p - 1.0).abs() < 1e-12);
    assert_eq!(shift, 9);
    assert_eq!(pattern_similarity(&a, &a), (1.0, 0));
}

#[test]
fn complexity_examples() {
    let all: Vec<(u8, u32, u32)> = (0..12).map(|i| (60 + i, 4 * u32::from(i), 4)).collect();
    let full = features(&all);
    let rap = features(&[(50, 0, 2), (50, 4, 2), (50, 8, 2)]);
    assert_eq!(complexity(&full, &full, false), 1.0);
    assert_eq!(complexity(&rap, &full, false), 1.0 / 12.0);
    assert_eq!(complexity(&full, &rap, false), 1.0 / 12.0);
    assert_eq!(complexity(&features(&[]), &full, false), 0.0);
    let octaves = features(&[(48, 0, 4), (60, 4, 4), (72, 8, 4)]);
    assert_eq!(complexity(&octaves, &octaves, false), 1.0 / 12.0);
    assert_eq!(complexity(&octaves, &octaves, true), 3.0 / 12.0);
}

#[test]
fn rhythm_examples() {
    let mask = |bits: &[u32]| bits.iter().fold(0u64, |m, &b| m | 1 << b);
    let a = common::onset_features(mask(&[0, 4, 8]));
    let b = common::onset_features(mask(&[0, 4, 12]));
    let c = common::onset_features(mask(&[1, 5]));
    assert_eq!(rhythm_similarity(&a, &b), 0.5);
    assert_eq!(rhythm_similarity(&a, &a), 1.0);
    assert_eq!(rhythm_similarity(&a, &c), 0.0);
    assert_eq!(rhythm_similarity(&common::onset_features(0), &common::onset_features(0)), 0.0);
}

#[test]
fn bpm_examples() {
    assert_eq!(bpm_similarity(120.0, 120.0, false).unwrap(), 1.0);
    assert_eq!(bpm_similarity(60.0, 120.0, false).unwrap(), 0.5);
    assert_eq!(bpm_similarity(100.0, 75.0, false).unwrap(), 0.75);
    assert_eq!(bpm_similarity(60.0, 120.0, true).unwrap(), 1.0);
    assert!(bpm_similarity(0.0, 120.0, false).is_err());
    assert!(bpm_similarity(120.0, -1.0, false).is_err());
}

#[test]
fn chord_examples() {
    let params = SimilarityParams::default();
    let prog = [chord(0, ChordQuality::Maj), chord(7, ChordQuality::Maj), chord(9, ChordQuality::Min), chord(5, ChordQuality::Maj)];
    let a: Vec<_> = prog.iter().flat_map(|c| [*c; 4]).collect();
    assert_eq!(chord_similarity(&a, &a, &params).unwrap(), (1.0, 1.0, 1.0));

    let maj = vec![chord(2, ChordQuality::Maj); 16];
    let dim = vec![chord(2, ChordQuality::Dim); 16];
    let (c, r_n, q) = chord_similarity(&maj, &dim, &params).unwrap();
    assert_eq!((r_n, q), (1.0, 0.0));
    assert!((c - 0.85).abs() < 1e-15);

    let dom7 = vec![chord(2, ChordQuality::Dom7); 16];
    assert_eq!(chord_similarity(&maj, &dom7, &params).unwrap().2, 0.5);

    assert_eq!(chord_similarity(&a, &[None; 16], &params).unwrap(), (0.0, 0.0, 0.0));
    let mut half = a.clone();
    half[8..].iter_mut().for_each(|b| *b = None);
    assert_eq!(chord_similarity(&a, &half, &params).unwrap(), (1.0, 1.0, 1.0));
    assert!(chord_similarity(&a, &a[..12], &params).is_err());
}

#[test]
fn combined_examples() {
    let params = SimilarityParams::default();
    let top = combine(&comps(1.0, 1.0, 1.0, 1.0, 1.0, 1.0), &params);
    assert_eq!((top.raw, top.normalized), (3.0, 100.0));
    let zero = combine(&comps(0.0, 0.7, 0.0, 0.3, 0.0, 0.0), &params);
    assert_eq!((zero.raw, zero.normalized), (0.0, 0.0));

    // c = 0.4 from R_n = 0.4, Q = 0.4
    let s = combine(&comps(0.5, 0.5, 0.25, 1.0, 0.4, 0.4), &params);
    let hand = (1.0 + 0.5 * 0.5) * (1.0 * 0.5) * 1.0 + 1.0 * 0.4;
    assert!((s.raw - 1.025).abs() < 1e-12 && (s.raw - hand).abs() < 1e-12);
    assert_eq!((s.normalized * 100.0).round() / 100.0, 34.17);
}

#[test]
fn ablation_masks() {
    use plagdet_core::Ablation;
    let base = SimilarityParams::default();
    let c = comps(0.6, 0.5, 0.2, 0.9, 0.7, 0.4);
    assert_eq!(combine(&c, &base.ablated(Ablation::Pattern)).raw, 0.6);
    assert_eq!(combine(&c, &base.ablated(Ablation::Rhythm)).raw, 0.2);
    let chord_only = combine(&c, &base.ablated(Ablation::Chord));
    assert!((chord_only.raw - (0.85 * 0.7 + 0.15 * 0.4)).abs() < 1e-15);
    let midi_only = combine(&c, &base.ablated(Ablation::Midi));
    assert!((midi_only.raw - (1.0 + 0.3) * 0.6 * 0.9f64.sqrt()).abs() < 1e-15);
    for a in Ablation::ALL {
        let s = combine(&c, &base.ablated(a));
        assert!((0.0..=100.0).contains(&s.normalized), "{a:?}: {}", s.normalized);
    }
}

#[test]
fn self_similarity_is_maximal() {
    let params = SimilarityParams::default();
    let mut rng = common::rng(12);
    for _ in 0..50 {
        let f = common::random_features(&mut rng);
        if f.is_empty() {
            continue;
        }
        let s = combined_score(&f, &f, &params);
        assert!((s.p - 1.0).abs() < 1e-12);
        assert_eq!(s.r, 1.0);
        assert_eq!(s.b, 1.0);
        if f.harmony.iter().any(Option::is_some) {
            assert_eq!((s.r_n, s.q), (1.0, 1.0));
        }
    }
}

proptest! {
    #[test]
    fn raw_is_monotone_in_each_component(
        base in proptest::array::uniform6(0.0f64..=1.0),
        bump in 0.0f64..=1.0,
        which in 0usize..6,
    ) {
        let params = SimilarityParams::default();
        let mut hi = base;
        hi[which] = (hi[which] + bump).min(1.0);
        let lo = combine(&comps(base[0], base[1], base[2], base[3], base[4], base[5]), &params);
        let up = combine(&comps(hi[0], hi[1], hi[2], hi[3], hi[4], hi[5]), &params);
        prop_assert!(up.raw >= lo.raw - 1e-15, "{:?} -> {:?}", lo, up);
    }

    #[test]
    fn pattern_ignores_transposition(seed in any::<u64>(), s in 0u8..12, t in 0u8..12) {
        let mut rng = common::rng(seed);
        let a = common::random_bundle(&mut rng, "a", 4, 4);
        let b = common::random_bundle(&mut rng, "b", 4, 4);
        let (fa, fb) = (common::features_of(&a), common::features_of(&b));
        let moved = common::features_of(&common::transpose_bundle(&b, s));
        let twice = common::features_of(&common::transpose_bundle(&a, t));
        let (p0, _) = pattern_similarity(&fa, &fb);
        let (p1, _) = pattern_similarity(&fa, &moved);
        let (p2, _) = pattern_similarity(&twice, &moved);
        prop_assert!((p0 - p1).abs() < 1e-12 && (p0 - p2).abs() < 1e-12, "{} {} {}", p0, p1, p2);
    }

    #[test]
    fn scores_are_symmetric_and_bounded(seed in any::<u64>()) {
        let params = SimilarityParams::default();
        let mut rng = common::rng(seed);
        let (a, b) = (common::random_features(&mut rng), common::random_features(&mut rng));
        let (ab, ba) = (combined_score(&a, &b, &params), combined_score(&b, &a, &params));
        for (x, y) in [(ab.p, ba.p), (ab.m, ba.m), (ab.r, ba.r), (ab.b, ba.b), (ab.r_n, ba.r_n), (ab.q, ba.q), (ab.c, ba.c)] {
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!((ab.normalized - ba.normalized).abs() < 1e-12);
    }
}

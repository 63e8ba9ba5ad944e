//! Random corpora and feature builders shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use plagdet_core::ingest::{
    ChordEvent, ChordQuality, Instrument, InstrumentTrack, NoteEvent, StructureMark, TrackAnnotation, TrackBundle,
};
use plagdet_core::quantizer::QuantizedTrack;
use plagdet_core::segmenter::SegmentDescriptor;
use plagdet_core::similarity::{extract_features, SegmentFeatures};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const QUALITIES: [ChordQuality; 8] = [
    ChordQuality::Maj,
    ChordQuality::Min,
    ChordQuality::Dim,
    ChordQuality::Aug,
    ChordQuality::Dom7,
    ChordQuality::Maj7,
    ChordQuality::Min7,
    ChordQuality::Other,
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Exact downbeats for `n_bars` bars starting at `offset_s`.
pub fn annotation(bpm: f64, ts_num: u8, n_bars: usize, offset_s: f64) -> TrackAnnotation {
    let bar_s = 60.0 / bpm * f64::from(ts_num);
    TrackAnnotation {
        bpm,
        ts_num,
        downbeats_s: (0..=n_bars).map(|i| offset_s + i as f64 * bar_s).collect(),
        structure: vec![],
        chords: vec![],
        key: None,
    }
}

/// A bundle with a few random notes per bar and one random chord per bar.
pub fn random_bundle(rng: &mut ChaCha8Rng, id: &str, n_bars: usize, ts_num: u8) -> TrackBundle {
    let bpm = rng.random_range(80.0..160.0);
    let mut ann = annotation(bpm, ts_num, n_bars, 0.0);
    let bar_s = ann.downbeats_s[1];
    let mut notes = Vec::new();
    for bar in 0..n_bars {
        for _ in 0..rng.random_range(2..8) {
            notes.push(NoteEvent {
                pitch: rng.random_range(48..84),
                onset_s: (bar as f64 + rng.random_range(0.0..1.0)) * bar_s,
                duration_s: rng.random_range(0.1..1.0),
                velocity: rng.random_range(40..120),
            });
        }
        if rng.random_bool(0.8) {
            ann.chords.push(ChordEvent {
                start_s: bar as f64 * bar_s,
                root_pc: rng.random_range(0..12),
                quality: QUALITIES[rng.random_range(0..QUALITIES.len())],
            });
        }
    }
    ann.structure.push(StructureMark { label: "intro".into(), start_s: 0.0 });
    TrackBundle {
        track_id: id.to_string(),
        title: id.to_uppercase(),
        tracks: vec![InstrumentTrack::new(Instrument::Melody, notes)],
        annotation: ann,
        metadata: BTreeMap::new(),
    }
}

pub fn window(track: &QuantizedTrack, start_bar: usize, length_bars: usize) -> SegmentDescriptor {
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

/// Features of the first four bars of a bundle.
pub fn features_of(bundle: &TrackBundle) -> SegmentFeatures {
    let track = QuantizedTrack::analyze(bundle).expect("valid bundle");
    extract_features(&track, &window(&track, 0, 4), &[])
}

pub fn random_features(rng: &mut ChaCha8Rng) -> SegmentFeatures {
    let ts = if rng.random_bool(0.2) { 3 } else { 4 };
    features_of(&random_bundle(rng, "x", 4, ts))
}

pub fn transpose_bundle(bundle: &TrackBundle, semitones: u8) -> TrackBundle {
    let mut out = bundle.clone();
    for track in &mut out.tracks {
        for note in &mut track.notes {
            note.pitch += semitones;
        }
    }
    out
}

/// Features with the given onset bitmask and nothing else.
pub fn onset_features(onset_set: u64) -> SegmentFeatures {
    SegmentFeatures {
        chroma: vec![[0.0; 12]; 64],
        pc_set: 0,
        pitch_count: 0,
        onset_set,
        bpm: 120.0,
        harmony: vec![None; 16],
        velocity_profile: vec![],
    }
}

/// Random bitmask whose density varies from call to call.
pub fn random_mask(rng: &mut ChaCha8Rng) -> u64 {
    let density = rng.random_range(0.0..1.0);
    (0..64).filter(|_| rng.random_bool(density)).fold(0u64, |m, i| m | (1 << i))
}

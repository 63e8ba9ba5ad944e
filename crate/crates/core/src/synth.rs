//! Seeded generator for corpora with planted segment copies.
//!
//! A song repeats one 4-bar phrase shape: every phrase shares the rhythm and
//! the pitch contour, transposed by a random per-phrase interval, over its
//! own chord progression. Because the contour only lines up under one shift when windows
//! start on a phrase boundary, phrase-aligned windows are the most
//! self-similar ones. Structure marks open a section every 8 bars.
//!
//! A plagiarist song is in the key two semitones above its source, 10%
//! faster, and replaces the phrase opening its third section with one of the
//! source's section-opening phrases.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{
    ChordEvent, ChordQuality, Instrument, InstrumentTrack, NoteEvent, Relation, SmpPair, StructureMark, TrackAnnotation,
    TrackBundle,
};
use crate::quantizer::{KeySignature, Mode, QuantizedTrack};
use crate::segmenter::{segment_track, SegmentationConfig};
use crate::similarity::SimilarityParams;

pub const MAX_DRAWS: usize = 50;
const PHRASE_BARS: usize = 4;
const SECTION_PHRASES: usize = 2;
const STEPS_PER_BAR: usize = 16;
const SECTION_LABELS: [&str; 4] = ["verse", "chorus", "verse", "chorus"];
/// Major-scale degrees and their diatonic triad qualities.
const DIATONIC: [(u8, ChordQuality); 7] = [
    (0, ChordQuality::Maj),
    (2, ChordQuality::Min),
    (4, ChordQuality::Min),
    (5, ChordQuality::Maj),
    (7, ChordQuality::Maj),
    (9, ChordQuality::Min),
    (11, ChordQuality::Dim),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub songs: usize,
    /// Rounded up to whole 8-bar sections.
    pub bars: usize,
    pub plants: usize,
    pub transpose: u8,
    pub tempo_ratio: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig { songs: 20, bars: 32, plants: 5, transpose: 2, tempo_ratio: 1.1, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedCorpus {
    pub bundles: Vec<TrackBundle>,
    /// Source as original, plagiarist as comparison.
    pub pairs: Vec<SmpPair>,
}

#[derive(Debug, Clone, Copy)]
struct StepNote {
    step: usize,
    len: usize,
    /// Semitones above the tonic, 0..24.
    pitch: u8,
    velocity: u8,
}

/// A 4-bar phrase in grid units, relative to the song's tonic.
#[derive(Debug, Clone)]
struct Phrase {
    notes: Vec<StepNote>,
    /// One chord per bar: (root interval above tonic, quality).
    chords: Vec<(u8, ChordQuality)>,
}

fn random_phrases(rng: &mut ChaCha8Rng, count: usize) -> Vec<Phrase> {
    let total = PHRASE_BARS * STEPS_PER_BAR;
    let density = rng.random_range(0.25..0.5);
    let onsets: Vec<usize> = (0..total).filter(|&s| s == 0 || rng.random_bool(density)).collect();
    let contour: Vec<(u8, u8)> = onsets.iter().map(|_| (rng.random_range(0..24), rng.random_range(60..=110))).collect();
    // Distinct progressions keep every phrase's harmony unique within the song.
    let mut progressions: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut harmony = Vec::with_capacity(count);
    while harmony.len() < count {
        let prog: Vec<usize> = (0..PHRASE_BARS).map(|_| rng.random_range(0..DIATONIC.len())).collect();
        if progressions.insert(prog.clone()) {
            harmony.push(prog);
        }
    }

    (0..count)
        .map(|i| {
            let shift = rng.random_range(0..12u8);
            let notes = onsets
                .iter()
                .zip(&contour)
                .enumerate()
                .map(|(k, (&step, &(pitch, velocity)))| StepNote {
                    step,
                    len: onsets.get(k + 1).copied().unwrap_or(total) - step,
                    pitch: (pitch + shift) % 24,
                    velocity,
                })
                .collect();
            let chords = harmony[i].iter().map(|&d| DIATONIC[d]).collect();
            Phrase { notes, chords }
        })
        .collect()
}

struct Song {
    id: String,
    tonic: u8,
    bpm: f64,
    /// Phrase per 4-bar slot.
    phrases: Vec<Phrase>,
}

impl Song {
    fn bar_s(&self) -> f64 {
        4.0 * 60.0 / self.bpm
    }

    fn slot_start_s(&self, slot: usize) -> f64 {
        (slot * PHRASE_BARS) as f64 * self.bar_s()
    }

    fn render(&self) -> TrackBundle {
        let bar_s = self.bar_s();
        let step_s = bar_s / STEPS_PER_BAR as f64;
        let n_bars = self.phrases.len() * PHRASE_BARS;
        let mut notes = Vec::new();
        let mut chords = Vec::new();
        for (slot, phrase) in self.phrases.iter().enumerate() {
            let base_step = slot * PHRASE_BARS * STEPS_PER_BAR;
            for n in &phrase.notes {
                notes.push(NoteEvent {
                    pitch: 60 + (self.tonic + n.pitch) % 24,
                    onset_s: (base_step + n.step) as f64 * step_s,
                    duration_s: n.len as f64 * step_s,
                    velocity: n.velocity,
                });
            }
            for (bar, &(root, quality)) in phrase.chords.iter().enumerate() {
                chords.push(ChordEvent {
                    start_s: (slot * PHRASE_BARS + bar) as f64 * bar_s,
                    root_pc: (self.tonic + root) % 12,
                    quality,
                });
            }
        }
        let structure = (0..self.phrases.len())
            .step_by(SECTION_PHRASES)
            .enumerate()
            .map(|(i, slot)| StructureMark {
                label: SECTION_LABELS[i % SECTION_LABELS.len()].to_string(),
                start_s: self.slot_start_s(slot),
            })
            .collect();
        let annotation = TrackAnnotation {
            bpm: self.bpm,
            ts_num: 4,
            downbeats_s: (0..=n_bars).map(|b| b as f64 * bar_s).collect(),
            structure,
            chords,
            key: Some(KeySignature { tonic_pc: self.tonic, mode: Mode::Major }),
        };
        TrackBundle {
            track_id: self.id.clone(),
            title: format!("Synthetic {}", self.id),
            tracks: vec![InstrumentTrack::new(Instrument::Melody, notes)],
            annotation,
            metadata: BTreeMap::new(),
        }
    }
}

/// Whether the segmenter opens segments exactly on the section boundaries.
fn sections_align(bundle: &TrackBundle, section_bars: usize) -> bool {
    let Ok(track) = QuantizedTrack::analyze(bundle) else { return false };
    let params = SimilarityParams::default();
    let config = SegmentationConfig::default();
    let Ok(seg) = segment_track(&track, &params, &config) else { return false };
    let expected: Vec<usize> = (0..track.grid.n_bars).step_by(section_bars).collect();
    seg.start_points == expected
}

/// Songs are redrawn (up to [`MAX_DRAWS`] times) until the default segmenter
/// starts its segments on the section boundaries, so that planted copies sit
/// on segment starts. Songs shorter than 24 bars rarely align: with fewer
/// than four clusters the largest one merges two off-phase groups.
pub fn generate_planted_corpus(config: &PlantedConfig) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let section_bars = PHRASE_BARS * SECTION_PHRASES;
    let slots = config.bars.div_ceil(section_bars).max(1) * SECTION_PHRASES;
    let plants = config.plants.min(config.songs / 2);
    let mut order: Vec<usize> = (0..config.songs).collect();
    order.shuffle(&mut rng);
    let source_of: BTreeMap<usize, usize> = (0..plants).map(|i| (order[plants + i], order[i])).collect();
    let section_slots: Vec<usize> = (0..slots).step_by(SECTION_PHRASES).collect();
    let target_slot = section_slots[section_slots.len().min(3) - 1];

    let draw = |rng: &mut ChaCha8Rng, idx: usize, plant: Option<(&Song, usize)>| -> Song {
        let mut song = None;
        for _ in 0..MAX_DRAWS {
            let mut candidate = Song {
                id: song_id(idx),
                tonic: rng.random_range(0..12),
                bpm: rng.random_range(70.0..130.0f64).round(),
                phrases: random_phrases(rng, slots),
            };
            if let Some((source, from_slot)) = plant {
                candidate.tonic = (source.tonic + config.transpose) % 12;
                candidate.bpm = source.bpm * config.tempo_ratio;
                candidate.phrases[target_slot] = source.phrases[from_slot].clone();
            }
            let aligned = sections_align(&candidate.render(), section_bars);
            song = Some(candidate);
            if aligned {
                break;
            }
            log::debug!("redrawing {} for section alignment", song_id(idx));
        }
        let song = song.expect("at least one draw");
        if !sections_align(&song.render(), section_bars) {
            log::warn!("{}: segments do not open on section boundaries after {MAX_DRAWS} draws", song.id);
        }
        song
    };

    let mut songs: BTreeMap<usize, Song> = BTreeMap::new();
    for idx in (0..config.songs).filter(|i| !source_of.contains_key(i)) {
        let song = draw(&mut rng, idx, None);
        songs.insert(idx, song);
    }
    let mut pairs = Vec::new();
    for (pair_no, (&plag, &src)) in source_of.iter().enumerate() {
        let from_slot = section_slots[rng.random_range(0..section_slots.len())];
        let source = &songs[&src];
        let original_times_s = vec![source.slot_start_s(from_slot)];
        let song = draw(&mut rng, plag, Some((source, from_slot)));
        pairs.push(SmpPair {
            original_id: song_id(src),
            comparison_id: song_id(plag),
            relation: Relation::PlagiarismCase,
            original_times_s,
            comparison_times_s: vec![song.slot_start_s(target_slot)],
            pair_no: pair_no as i64 + 1,
        });
        songs.insert(plag, song);
    }
    PlantedCorpus { bundles: songs.values().map(Song::render).collect(), pairs }
}

fn song_id(i: usize) -> String {
    format!("song-{i:02}")
}

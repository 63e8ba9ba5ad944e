//! Song records: notes per instrument, annotation (tempo, downbeats, structure,
//! chords, key) and the SMP ground-truth manifest.
//!
//! Everything here is validated on construction, so downstream stages can rely
//! on the invariants documented on each type.

mod bundle;
mod midi;
mod smp;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::IngestError;
use crate::quantizer::KeySignature;

pub use bundle::{bundle_to_json, load_bundle, load_bundle_str, BundleDocument, TrackSource};
pub use midi::{instrument_from_name, instrument_from_program, parse_standard_midi, write_standard_midi};
pub use smp::{load_smp_manifest, load_smp_manifest_file, Relation, SmpPair};

/// One transcribed note in continuous time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub pitch: u8,
    pub onset_s: f64,
    pub duration_s: f64,
    pub velocity: u8,
}

impl NoteEvent {
    pub fn end_s(&self) -> f64 {
        self.onset_s + self.duration_s
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.pitch > 127 {
            return Err(IngestError::Validation(format!("pitch {} out of range", self.pitch)));
        }
        if self.velocity == 0 || self.velocity > 127 {
            return Err(IngestError::Validation(format!(
                "velocity {} out of range 1..=127",
                self.velocity
            )));
        }
        if !self.onset_s.is_finite() || self.onset_s < 0.0 {
            return Err(IngestError::Validation(format!("onset {} must be finite and >= 0", self.onset_s)));
        }
        if !self.duration_s.is_finite() || self.duration_s <= 0.0 {
            return Err(IngestError::Validation(format!("duration {} must be > 0", self.duration_s)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Instrument {
    Vocal,
    Melody,
    Bass,
    Chords,
    Other,
}

impl Instrument {
    pub const ALL: [Instrument; 5] = [
        Instrument::Vocal,
        Instrument::Melody,
        Instrument::Bass,
        Instrument::Chords,
        Instrument::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Instrument::Vocal => "vocal",
            Instrument::Melody => "melody",
            Instrument::Bass => "bass",
            Instrument::Chords => "chords",
            Instrument::Other => "other",
        }
    }
}

impl std::str::FromStr for Instrument {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Instrument::ALL
            .into_iter()
            .find(|i| i.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| IngestError::Schema(format!("unknown instrument {s:?}")))
    }
}

/// Notes of one instrument, sorted by onset then pitch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentTrack {
    pub instrument: Instrument,
    pub notes: Vec<NoteEvent>,
}

impl InstrumentTrack {
    /// Sorts the notes and merges overlapping duplicates (same pitch,
    /// overlapping spans) into a single note covering their union.
    pub fn new(instrument: Instrument, mut notes: Vec<NoteEvent>) -> Self {
        notes.sort_by(note_order);
        let mut merged: Vec<NoteEvent> = Vec::with_capacity(notes.len());
        let mut open: [Option<usize>; 128] = [None; 128];
        for note in notes {
            let slot = &mut open[note.pitch as usize & 127];
            if let Some(idx) = *slot {
                let prev = &mut merged[idx];
                if note.onset_s < prev.end_s() {
                    let end = prev.end_s().max(note.end_s());
                    prev.duration_s = end - prev.onset_s;
                    continue;
                }
            }
            *slot = Some(merged.len());
            merged.push(note);
        }
        InstrumentTrack { instrument, notes: merged }
    }
}

pub(crate) fn note_order(a: &NoteEvent, b: &NoteEvent) -> Ordering {
    a.onset_s
        .total_cmp(&b.onset_s)
        .then(a.pitch.cmp(&b.pitch))
        .then(a.duration_s.total_cmp(&b.duration_s))
        .then(a.velocity.cmp(&b.velocity))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChordQuality {
    Maj,
    Min,
    Dim,
    Aug,
    Dom7,
    Maj7,
    Min7,
    Other,
}

impl ChordQuality {
    pub fn as_str(self) -> &'static str {
        match self {
            ChordQuality::Maj => "maj",
            ChordQuality::Min => "min",
            ChordQuality::Dim => "dim",
            ChordQuality::Aug => "aug",
            ChordQuality::Dom7 => "dom7",
            ChordQuality::Maj7 => "maj7",
            ChordQuality::Min7 => "min7",
            ChordQuality::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChordEvent {
    pub start_s: f64,
    pub root_pc: u8,
    pub quality: ChordQuality,
}

/// A structure boundary ("verse", "chorus", ...) in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureMark {
    pub label: String,
    pub start_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackAnnotation {
    pub bpm: f64,
    pub ts_num: u8,
    pub downbeats_s: Vec<f64>,
    pub structure: Vec<StructureMark>,
    pub chords: Vec<ChordEvent>,
    pub key: Option<KeySignature>,
}

impl TrackAnnotation {
    pub fn validate(&self) -> Result<(), IngestError> {
        let invalid = |msg: String| Err(IngestError::Validation(msg));
        if !(self.bpm.is_finite() && self.bpm > 0.0) {
            return invalid(format!("bpm {} must be positive", self.bpm));
        }
        if self.ts_num != 3 && self.ts_num != 4 {
            return invalid(format!("ts_num {} must be 3 or 4", self.ts_num));
        }
        if self.downbeats_s.len() < 2 {
            return invalid(format!("need at least 2 downbeats, got {}", self.downbeats_s.len()));
        }
        if self.downbeats_s.iter().any(|t| !t.is_finite()) {
            return invalid("downbeats must be finite".into());
        }
        if self.downbeats_s.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("downbeats not increasing".into());
        }
        let first = self.downbeats_s[0];
        let last = *self.downbeats_s.last().unwrap();
        for mark in &self.structure {
            if !(mark.start_s >= first && mark.start_s <= last) {
                return invalid(format!(
                    "structure boundary {:?} at {} s lies outside the downbeat span [{first}, {last}]",
                    mark.label, mark.start_s
                ));
            }
        }
        if self.chords.windows(2).any(|w| w[1].start_s <= w[0].start_s) {
            return invalid("chord start times not increasing".into());
        }
        for chord in &self.chords {
            if chord.root_pc > 11 || !chord.start_s.is_finite() {
                return invalid(format!("bad chord event {chord:?}"));
            }
        }
        if let Some(key) = &self.key {
            if key.tonic_pc > 11 {
                return invalid(format!("key tonic {} out of range", key.tonic_pc));
            }
        }
        Ok(())
    }
}

/// One song: instrument tracks plus annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackBundle {
    pub track_id: String,
    pub title: String,
    pub tracks: Vec<InstrumentTrack>,
    pub annotation: TrackAnnotation,
    /// Opaque metadata (lyrics, credits, ...). Carried through, never scored.
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl TrackBundle {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.track_id.trim().is_empty() {
            return Err(IngestError::Validation("track_id must not be empty".into()));
        }
        self.annotation.validate()?;
        for track in &self.tracks {
            for note in &track.notes {
                note.validate()?;
            }
        }
        if !self.tracks.iter().any(|t| !t.notes.is_empty()) {
            return Err(IngestError::Validation(format!(
                "bundle {:?} has no instrument track with notes",
                self.track_id
            )));
        }
        Ok(())
    }

    pub fn note_count(&self) -> usize {
        self.tracks.iter().map(|t| t.notes.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn note(pitch: u8, onset_s: f64, duration_s: f64) -> NoteEvent {
        NoteEvent { pitch, onset_s, duration_s, velocity: 80 }
    }

    #[test]
    fn sorts_by_onset_then_pitch() {
        let track = InstrumentTrack::new(
            Instrument::Melody,
            vec![note(64, 1.0, 0.5), note(67, 0.0, 0.5), note(60, 0.0, 0.5)],
        );
        let order: Vec<u8> = track.notes.iter().map(|n| n.pitch).collect();
        assert_eq!(order, vec![60, 67, 64]);
    }

    #[test]
    fn merges_overlapping_duplicates() {
        let track = InstrumentTrack::new(
            Instrument::Vocal,
            vec![note(60, 0.0, 1.0), note(60, 0.5, 1.0), note(60, 1.5, 0.5), note(62, 0.5, 0.1)],
        );
        assert_eq!(track.notes.len(), 3);
        assert_eq!(track.notes[0].pitch, 60);
        assert!((track.notes[0].duration_s - 1.5).abs() < 1e-12);
        // touching, not overlapping
        assert_eq!(track.notes[2].onset_s, 1.5);
    }

    #[test]
    fn rejects_velocity_zero() {
        let n = NoteEvent { pitch: 60, onset_s: 0.0, duration_s: 1.0, velocity: 0 };
        assert!(n.validate().is_err());
    }

    #[test]
    fn instrument_parsing() {
        assert_eq!("Vocal".parse::<Instrument>().unwrap(), Instrument::Vocal);
        assert!("drums".parse::<Instrument>().is_err());
    }
}

//! The per-song JSON bundle.
//!
//! ```json
//! {
//!   "track_id": "song-01", "title": "Song", "bpm": 120, "ts_num": 4,
//!   "downbeats_s": [0.0, 2.0, 4.0],
//!   "structure": [{"label": "verse", "start_s": 0.0}],
//!   "chords": [{"start_s": 0.0, "root_pc": 0, "quality": "maj"}],
//!   "key": {"tonic_pc": 0, "mode": "major"},
//!   "tracks": [
//!     {"instrument": "vocal", "notes": [{"pitch": 60, "onset_s": 0.0, "duration_s": 0.5, "velocity": 90}]},
//!     {"instrument": "bass", "midi_path": "bass.mid"}
//!   ],
//!   "metadata": {}
//! }
//! ```
//!
//! `midi_path` is resolved relative to the bundle file. When a MIDI entry
//! names an instrument, every note in the file is assigned to it; otherwise
//! the file's own track-name/program mapping decides.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    parse_standard_midi, ChordEvent, Instrument, InstrumentTrack, NoteEvent, StructureMark, TrackAnnotation,
    TrackBundle,
};
use crate::error::IngestError;
use crate::quantizer::KeySignature;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleDocument {
    pub track_id: String,
    pub title: String,
    pub bpm: f64,
    pub ts_num: u8,
    pub downbeats_s: Vec<f64>,
    pub structure: Vec<StructureMark>,
    pub chords: Vec<ChordEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<KeySignature>,
    pub tracks: Vec<TrackSource>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instrument: Option<Instrument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub midi_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<Vec<NoteEvent>>,
}

/// Loads and validates a bundle from a JSON string. `base_dir` resolves
/// relative `midi_path` entries.
pub fn load_bundle_str(json: &str, base_dir: Option<&Path>) -> Result<TrackBundle, IngestError> {
    let doc: BundleDocument = serde_json::from_str(json).map_err(|e| IngestError::Schema(e.to_string()))?;
    from_document(doc, base_dir)
}

pub fn load_bundle(path: &Path) -> Result<TrackBundle, IngestError> {
    let json = std::fs::read_to_string(path)
        .map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    load_bundle_str(&json, path.parent())
}

fn from_document(doc: BundleDocument, base_dir: Option<&Path>) -> Result<TrackBundle, IngestError> {
    let mut tracks = Vec::new();
    for (i, src) in doc.tracks.into_iter().enumerate() {
        match (src.midi_path, src.notes) {
            (Some(_), Some(_)) => {
                return Err(IngestError::Schema(format!("tracks[{i}]: give either midi_path or notes, not both")))
            }
            (None, None) => return Err(IngestError::Schema(format!("missing field `tracks[{i}].notes`"))),
            (None, Some(notes)) => {
                let instrument = src
                    .instrument
                    .ok_or_else(|| IngestError::Schema(format!("missing field `tracks[{i}].instrument`")))?;
                tracks.push(InstrumentTrack::new(instrument, notes));
            }
            (Some(rel), None) => {
                let path = match base_dir {
                    Some(dir) => dir.join(&rel),
                    None => rel.clone().into(),
                };
                let bytes = std::fs::read(&path)
                    .map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
                let parsed = parse_standard_midi(&bytes)?;
                match src.instrument {
                    Some(instrument) => {
                        let notes = parsed.into_iter().flat_map(|t| t.notes).collect();
                        tracks.push(InstrumentTrack::new(instrument, notes));
                    }
                    None => tracks.extend(parsed.into_iter().filter(|t| !t.notes.is_empty())),
                }
            }
        }
    }
    let bundle = TrackBundle {
        track_id: doc.track_id,
        title: doc.title,
        tracks,
        annotation: TrackAnnotation {
            bpm: doc.bpm,
            ts_num: doc.ts_num,
            downbeats_s: doc.downbeats_s,
            structure: doc.structure,
            chords: doc.chords,
            key: doc.key,
        },
        metadata: doc.metadata,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Serializes a bundle with inline notes. Loading the output yields an equal bundle.
pub fn bundle_to_json(bundle: &TrackBundle) -> String {
    let a = &bundle.annotation;
    let doc = BundleDocument {
        track_id: bundle.track_id.clone(),
        title: bundle.title.clone(),
        bpm: a.bpm,
        ts_num: a.ts_num,
        downbeats_s: a.downbeats_s.clone(),
        structure: a.structure.clone(),
        chords: a.chords.clone(),
        key: a.key,
        tracks: bundle
            .tracks
            .iter()
            .map(|t| TrackSource { instrument: Some(t.instrument), midi_path: None, notes: Some(t.notes.clone()) })
            .collect(),
        metadata: bundle.metadata.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("bundle serialization is infallible")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::Mode;

    const MINIMAL: &str = r#"{
        "track_id": "t1", "title": "One", "bpm": 120, "ts_num": 4,
        "downbeats_s": [0.0, 2.0], "structure": [], "chords": [],
        "tracks": [{"instrument": "vocal", "notes": [{"pitch": 60, "onset_s": 0.0, "duration_s": 0.5, "velocity": 90}]}]
    }"#;

    #[test]
    fn minimal_bundle_verbatim() {
        let b = load_bundle_str(MINIMAL, None).unwrap();
        assert_eq!(b.track_id, "t1");
        assert_eq!(b.annotation.downbeats_s, vec![0.0, 2.0]);
        assert_eq!(b.tracks[0].notes, vec![NoteEvent { pitch: 60, onset_s: 0.0, duration_s: 0.5, velocity: 90 }]);
        assert_eq!(b.annotation.key, None);
    }

    #[test]
    fn non_increasing_downbeats() {
        let json = MINIMAL.replace("[0.0, 2.0]", "[0.0, 2.0, 1.0]");
        let err = load_bundle_str(&json, None).unwrap_err();
        assert!(err.to_string().contains("downbeats not increasing"), "{err}");
    }

    #[test]
    fn missing_field_is_named() {
        let json = MINIMAL.replace(r#""bpm": 120,"#, "");
        let err = load_bundle_str(&json, None).unwrap_err();
        assert!(matches!(err, IngestError::Schema(_)));
        assert!(err.to_string().contains("bpm"), "{err}");
    }

    #[test]
    fn key_is_parsed_when_present() {
        let json = MINIMAL.replace(r#""chords": [],"#, r#""chords": [], "key": {"tonic_pc": 9, "mode": "minor"},"#);
        let b = load_bundle_str(&json, None).unwrap();
        assert_eq!(b.annotation.key, Some(KeySignature { tonic_pc: 9, mode: Mode::Minor }));
    }

    #[test]
    fn inline_track_needs_instrument() {
        let json = MINIMAL.replace(r#""instrument": "vocal", "#, "");
        let err = load_bundle_str(&json, None).unwrap_err();
        assert!(err.to_string().contains("tracks[0].instrument"), "{err}");
    }

    #[test]
    fn no_notes_rejected() {
        let json = MINIMAL.replace(r#"{"pitch": 60, "onset_s": 0.0, "duration_s": 0.5, "velocity": 90}"#, "");
        assert!(matches!(load_bundle_str(&json, None), Err(IngestError::Validation(_))));
    }

    #[test]
    fn structure_outside_span_rejected() {
        let json = MINIMAL.replace(r#""structure": []"#, r#""structure": [{"label": "outro", "start_s": 5.0}]"#);
        assert!(matches!(load_bundle_str(&json, None), Err(IngestError::Validation(_))));
    }

    #[test]
    fn round_trip() {
        let b = load_bundle_str(MINIMAL, None).unwrap();
        let again = load_bundle_str(&bundle_to_json(&b), None).unwrap();
        assert_eq!(b, again);
    }
}

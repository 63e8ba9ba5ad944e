//! Bar grid, note quantization and per-beat harmony.
//!
//! Downbeats are regularized to an arithmetic sequence (least-squares fit),
//! and every note becomes an integer tuple `(pitch, bar, pos, qdur, velocity)`
//! on a 16th-note grid. Bars are 0-based here; reports add 1.

mod harmony;
mod key;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::GridError;
use crate::ingest::{Instrument, NoteEvent, TrackAnnotation, TrackBundle};

pub use harmony::{beat_chords, degree_for_interval, Alteration, BeatChord, BeatChordSeq, ScaleDegree};
pub use key::{estimate_key, resolve_key, KeySignature, Mode, MAJOR_PROFILE, MINOR_PROFILE};

/// Maximum deviation of any inter-downbeat gap from the median gap.
pub const DOWNBEAT_TOLERANCE_S: f64 = 0.03;
/// Relative disagreement between declared and measured bpm that triggers a warning.
pub const BPM_DISAGREEMENT: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatGrid {
    pub bpm: f64,
    pub ts_num: u8,
    pub bar_start_s: Vec<f64>,
    pub sixteenth_s: f64,
    pub n_bars: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl BeatGrid {
    pub fn build(annotation: &TrackAnnotation) -> Result<BeatGrid, GridError> {
        let ts = annotation.ts_num;
        if ts != 3 && ts != 4 {
            return Err(GridError::TimeSignature(ts));
        }
        let db = &annotation.downbeats_s;
        if db.len() < 2 {
            return Err(GridError::TooFewDownbeats(db.len()));
        }
        let gaps: Vec<f64> = db.windows(2).map(|w| w[1] - w[0]).collect();
        let median = median(&gaps);
        let bad: Vec<usize> = gaps
            .iter()
            .enumerate()
            .filter(|(_, g)| (*g - median).abs() > DOWNBEAT_TOLERANCE_S + 1e-9)
            .map(|(i, _)| i)
            .collect();
        if !bad.is_empty() {
            return Err(GridError::IrregularDownbeats { indices: bad, tolerance_s: DOWNBEAT_TOLERANCE_S });
        }

        // least-squares line through (i, downbeat_i)
        let n = db.len() as f64;
        let x_mean = (n - 1.0) / 2.0;
        let y_mean = db.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (i, &y) in db.iter().enumerate() {
            let dx = i as f64 - x_mean;
            sxy += dx * (y - y_mean);
            sxx += dx * dx;
        }
        let period = sxy / sxx;
        let origin = y_mean - period * x_mean;
        let n_bars = db.len() - 1;
        let sixteenth_s = period / (4.0 * f64::from(ts));
        let bpm = 60.0 / (4.0 * sixteenth_s);

        let mut warnings = Vec::new();
        let median_bpm = 60.0 * f64::from(ts) / median;
        if ((annotation.bpm - median_bpm) / median_bpm).abs() > BPM_DISAGREEMENT {
            let msg = format!(
                "declared bpm {} disagrees with downbeat spacing ({median_bpm:.3} bpm); using {bpm:.3}",
                annotation.bpm
            );
            warn!("{msg}");
            warnings.push(msg);
        }
        Ok(BeatGrid {
            bpm,
            ts_num: ts,
            bar_start_s: (0..n_bars).map(|i| origin + i as f64 * period).collect(),
            sixteenth_s,
            n_bars,
            warnings,
        })
    }

    pub fn steps_per_bar(&self) -> u32 {
        4 * u32::from(self.ts_num)
    }

    pub fn bar_duration_s(&self) -> f64 {
        self.sixteenth_s * f64::from(self.steps_per_bar())
    }

    /// Start time of any bar index, including indices past the last bar.
    pub fn bar_start(&self, bar: usize) -> f64 {
        self.bar_start_s[0] + bar as f64 * self.bar_duration_s()
    }

    pub fn end_s(&self) -> f64 {
        self.bar_start(self.n_bars)
    }

    /// Whether an onset falls inside the grid span. Onsets up to half a
    /// 16th before the first bar still count (they round onto it).
    pub fn contains(&self, onset_s: f64) -> bool {
        onset_s >= self.bar_start_s[0] - self.sixteenth_s / 2.0 && onset_s < self.end_s()
    }

    /// Time of a grid position; the inverse of quantization.
    pub fn time_of(&self, bar: u32, pos: u32) -> f64 {
        self.bar_start(bar as usize) + f64::from(pos) * self.sixteenth_s
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

/// A note on the bar grid: all fields integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantizedNote {
    pub pitch: u8,
    pub bar: u32,
    pub pos: u32,
    pub qdur: u32,
    pub velocity: u8,
}

impl QuantizedNote {
    /// Absolute position in 16ths from the start of bar 0.
    pub fn abs_step(&self, steps_per_bar: u32) -> u64 {
        u64::from(self.bar) * u64::from(steps_per_bar) + u64::from(self.pos)
    }
}

/// Quantizes one note. The caller drops notes outside [`BeatGrid::contains`].
pub fn quantize_note(note: &NoteEvent, grid: &BeatGrid) -> QuantizedNote {
    let idx = grid.bar_start_s.partition_point(|&s| s <= note.onset_s);
    let mut bar = idx.saturating_sub(1) as u32;
    let offset = note.onset_s - grid.bar_start(bar as usize);
    let mut pos = (offset / grid.sixteenth_s).round().max(0.0) as u32;
    let steps = grid.steps_per_bar();
    if pos >= steps {
        bar += pos / steps;
        pos %= steps;
    }
    let qdur = ((note.duration_s / grid.sixteenth_s).round() as u32).max(1);
    QuantizedNote { pitch: note.pitch, bar, pos, qdur, velocity: note.velocity }
}

/// Maps structure boundaries to their nearest bar (ties go to the earlier
/// bar). Boundaries landing on the same bar keep the first label; a boundary
/// on the closing downbeat opens no bar and is dropped.
pub fn snap_structure(annotation: &TrackAnnotation, grid: &BeatGrid) -> Vec<(String, usize)> {
    let bar_s = grid.bar_duration_s();
    let mut snapped: Vec<(String, usize)> = annotation
        .structure
        .iter()
        .map(|m| {
            let x = (m.start_s - grid.bar_start_s[0]) / bar_s;
            let lower = x.floor().max(0.0);
            let bar = if x - lower > 0.5 { lower + 1.0 } else { lower };
            (m.label.clone(), (bar as usize).min(grid.n_bars))
        })
        .filter(|(_, bar)| *bar < grid.n_bars)
        .collect();
    snapped.sort_by_key(|(_, bar)| *bar);
    snapped.dedup_by_key(|(_, bar)| *bar);
    snapped
}

/// A bundle run through the grid: quantized notes per instrument, key,
/// per-beat harmony and bar-snapped structure.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTrack {
    pub track_id: String,
    pub title: String,
    pub grid: BeatGrid,
    pub key: KeySignature,
    pub notes: Vec<(Instrument, QuantizedNote)>,
    pub harmony: BeatChordSeq,
    pub structure: Vec<(String, usize)>,
    pub dropped_notes: usize,
}

impl QuantizedTrack {
    pub fn analyze(bundle: &TrackBundle) -> Result<QuantizedTrack, GridError> {
        let grid = BeatGrid::build(&bundle.annotation)?;
        let mut notes = Vec::new();
        let mut dropped = 0;
        for track in &bundle.tracks {
            for note in &track.notes {
                if grid.contains(note.onset_s) {
                    notes.push((track.instrument, quantize_note(note, &grid)));
                } else {
                    dropped += 1;
                }
            }
        }
        if dropped > 0 {
            warn!("{}: {dropped} notes outside the downbeat span were dropped", bundle.track_id);
        }
        let plain: Vec<QuantizedNote> = notes.iter().map(|(_, n)| *n).collect();
        let key = resolve_key(bundle.annotation.key, &plain)?;
        let harmony = beat_chords(&bundle.annotation.chords, key, &grid);
        let structure = snap_structure(&bundle.annotation, &grid);
        Ok(QuantizedTrack {
            track_id: bundle.track_id.clone(),
            title: bundle.title.clone(),
            grid,
            key,
            notes,
            harmony,
            structure,
            dropped_notes: dropped,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::StructureMark;

    fn annotation(downbeats: &[f64], bpm: f64) -> TrackAnnotation {
        TrackAnnotation {
            bpm,
            ts_num: 4,
            downbeats_s: downbeats.to_vec(),
            structure: vec![],
            chords: vec![],
            key: None,
        }
    }

    fn note(onset_s: f64, duration_s: f64) -> NoteEvent {
        NoteEvent { pitch: 64, onset_s, duration_s, velocity: 100 }
    }

    #[test]
    fn grid_from_regular_downbeats() {
        let g = BeatGrid::build(&annotation(&[0.0, 2.0, 4.0, 6.0], 120.0)).unwrap();
        assert!((g.bpm - 120.0).abs() < 1e-12);
        assert!((g.sixteenth_s - 0.125).abs() < 1e-12);
        assert_eq!(g.n_bars, 3);
        assert!(g.warnings.is_empty());
    }

    #[test]
    fn minimal_grid() {
        let g = BeatGrid::build(&annotation(&[0.0, 2.0], 120.0)).unwrap();
        assert_eq!(g.n_bars, 1);
        assert_eq!(g.bar_start_s, vec![0.0]);
    }

    #[test]
    fn irregular_downbeats_rejected() {
        match BeatGrid::build(&annotation(&[0.0, 2.0, 3.0], 120.0)) {
            Err(GridError::IrregularDownbeats { indices, .. }) => assert_eq!(indices, vec![0, 1]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bpm_disagreement_warns() {
        let g = BeatGrid::build(&annotation(&[0.0, 2.0, 4.0], 100.0)).unwrap();
        assert_eq!(g.warnings.len(), 1);
        assert!((g.bpm - 120.0).abs() < 1e-9);
    }

    #[test]
    fn three_four_rejects_other_meters() {
        let mut a = annotation(&[0.0, 2.0], 120.0);
        a.ts_num = 5;
        assert!(matches!(BeatGrid::build(&a), Err(GridError::TimeSignature(5))));
    }

    #[test]
    fn quantize_examples() {
        let g = BeatGrid::build(&annotation(&[0.0, 2.0, 4.0], 120.0)).unwrap();
        let q = quantize_note(&note(1.0, 0.25), &g);
        assert_eq!((q.bar, q.pos, q.qdur, q.velocity), (0, 8, 2, 100));
        let q = quantize_note(&note(2.0, 0.01), &g);
        assert_eq!((q.bar, q.pos, q.qdur), (1, 0, 1));
        let q = quantize_note(&note(1.99, 0.5), &g);
        assert_eq!((q.bar, q.pos), (1, 0));
    }

    #[test]
    fn snapping() {
        let g = BeatGrid::build(&annotation(&[0.0, 2.0, 4.0, 6.0, 8.0], 120.0)).unwrap();
        let mut a = annotation(&[0.0, 2.0, 4.0, 6.0, 8.0], 120.0);
        a.structure = vec![
            StructureMark { label: "intro".into(), start_s: 0.0 },
            StructureMark { label: "verse".into(), start_s: 4.02 },
            StructureMark { label: "pre".into(), start_s: 3.9 },
            StructureMark { label: "chorus".into(), start_s: 6.0 },
            StructureMark { label: "end".into(), start_s: 8.0 },
        ];
        assert_eq!(
            snap_structure(&a, &g),
            vec![("intro".to_string(), 0), ("verse".to_string(), 2), ("chorus".to_string(), 3)]
        );
    }

    #[test]
    fn snapping_tie_goes_to_earlier_bar() {
        let g = BeatGrid::build(&annotation(&[0.0, 2.0, 4.0], 120.0)).unwrap();
        let mut a = annotation(&[0.0, 2.0, 4.0], 120.0);
        a.structure = vec![StructureMark { label: "x".into(), start_s: 1.0 }];
        assert_eq!(snap_structure(&a, &g), vec![("x".to_string(), 0)]);
    }
}

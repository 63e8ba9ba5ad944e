//! Key-relative (Roman numeral) harmony sampled once per beat.

use serde::{Deserialize, Serialize};

use super::{BeatGrid, KeySignature, Mode};
use crate::ingest::{ChordEvent, ChordQuality};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alteration {
    Natural,
    Flat,
    Sharp,
}

/// Scale degree 1..=7 with a chromatic flag relative to the key's scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScaleDegree {
    pub step: u8,
    pub alteration: Alteration,
}

const MAJOR_DEGREES: [(u8, Alteration); 12] = [
    (1, Alteration::Natural),
    (2, Alteration::Flat),
    (2, Alteration::Natural),
    (3, Alteration::Flat),
    (3, Alteration::Natural),
    (4, Alteration::Natural),
    (4, Alteration::Sharp),
    (5, Alteration::Natural),
    (6, Alteration::Flat),
    (6, Alteration::Natural),
    (7, Alteration::Flat),
    (7, Alteration::Natural),
];

const MINOR_DEGREES: [(u8, Alteration); 12] = [
    (1, Alteration::Natural),
    (2, Alteration::Flat),
    (2, Alteration::Natural),
    (3, Alteration::Natural),
    (3, Alteration::Sharp),
    (4, Alteration::Natural),
    (4, Alteration::Sharp),
    (5, Alteration::Natural),
    (6, Alteration::Natural),
    (6, Alteration::Sharp),
    (7, Alteration::Natural),
    (7, Alteration::Sharp),
];

/// Maps a semitone interval above the tonic to a scale degree of the mode
/// (natural minor for [`Mode::Minor`]).
pub fn degree_for_interval(interval: u8, mode: Mode) -> ScaleDegree {
    let table = match mode {
        Mode::Major => &MAJOR_DEGREES,
        Mode::Minor => &MINOR_DEGREES,
    };
    let (step, alteration) = table[usize::from(interval % 12)];
    ScaleDegree { step, alteration }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BeatChord {
    pub degree: ScaleDegree,
    pub quality: ChordQuality,
}

impl std::fmt::Display for BeatChord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        const UPPER: [&str; 7] = ["I", "II", "III", "IV", "V", "VI", "VII"];
        let accidental = match self.degree.alteration {
            Alteration::Natural => "",
            Alteration::Flat => "b",
            Alteration::Sharp => "#",
        };
        let numeral = UPPER[usize::from(self.degree.step.clamp(1, 7) - 1)];
        let lower = matches!(self.quality, ChordQuality::Min | ChordQuality::Min7 | ChordQuality::Dim);
        let numeral = if lower { numeral.to_lowercase() } else { numeral.to_string() };
        let suffix = match self.quality {
            ChordQuality::Maj | ChordQuality::Min => "",
            ChordQuality::Dim => "o",
            ChordQuality::Aug => "+",
            ChordQuality::Dom7 | ChordQuality::Min7 => "7",
            ChordQuality::Maj7 => "M7",
            ChordQuality::Other => "?",
        };
        write!(f, "{accidental}{numeral}{suffix}")
    }
}

/// One entry per beat; `None` marks beats with no chord.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeatChordSeq(pub Vec<Option<BeatChord>>);

impl BeatChordSeq {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Beats `[start, start + len)`; beats past the end are `None`.
    pub fn slice(&self, start: usize, len: usize) -> Vec<Option<BeatChord>> {
        (start..start + len).map(|i| self.0.get(i).copied().flatten()).collect()
    }
}

/// Samples the chord sounding on every beat of the grid. A chord counts from
/// half a 16th before its annotated start so that slightly late annotations
/// still land on the beat they belong to.
pub fn beat_chords(chords: &[ChordEvent], key: KeySignature, grid: &BeatGrid) -> BeatChordSeq {
    let ts = usize::from(grid.ts_num);
    let beat_s = grid.bar_duration_s() / ts as f64;
    let slack = grid.sixteenth_s / 2.0;
    let mut out = Vec::with_capacity(grid.n_bars * ts);
    for bar in 0..grid.n_bars {
        for beat in 0..ts {
            let t = grid.bar_start(bar) + beat as f64 * beat_s;
            let idx = chords.partition_point(|c| c.start_s <= t + slack);
            out.push(idx.checked_sub(1).map(|i| {
                let c = &chords[i];
                let interval = (12 + c.root_pc % 12 - key.tonic_pc % 12) % 12;
                BeatChord { degree: degree_for_interval(interval, key.mode), quality: c.quality }
            }));
        }
    }
    BeatChordSeq(out)
}

use serde::{Deserialize, Serialize};

use crate::ingest::Instrument;
use crate::quantizer::{BeatChord, QuantizedTrack};
use crate::segmenter::SegmentDescriptor;

/// Columns of the segment chromagram: 4 bars of 4/4 at 16th resolution.
/// Segments with another step count are resampled to this width.
pub const CHROMA_COLUMNS: usize = 64;

/// Everything the scorer needs from one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentFeatures {
    /// 64 columns of 12 pitch-class weights; each column sums to 1 or is all zero.
    pub chroma: Vec<[f64; 12]>,
    /// Bit `pc` set when pitch class `pc` sounds in the segment.
    pub pc_set: u16,
    /// Number of distinct MIDI pitches (octave-sensitive complexity).
    pub pitch_count: u8,
    /// Bit `i` set when a note starts in column `i`.
    pub onset_set: u64,
    pub bpm: f64,
    pub harmony: Vec<Option<BeatChord>>,
    /// Mean velocity of the notes sounding in each column; reported, not scored.
    pub velocity_profile: Vec<f64>,
}

impl SegmentFeatures {
    pub fn pitch_classes(&self) -> Vec<u8> {
        (0..12).filter(|pc| self.pc_set & (1 << pc) != 0).collect()
    }

    pub fn onsets(&self) -> Vec<u8> {
        (0..64).filter(|i| self.onset_set & (1u64 << i) != 0).collect()
    }

    pub fn active_columns(&self) -> usize {
        self.chroma.iter().filter(|col| col.iter().any(|&v| v > 0.0)).count()
    }

    pub fn is_empty(&self) -> bool {
        self.pc_set == 0
    }
}

fn column_map(src_cols: usize) -> impl Fn(usize) -> usize {
    move |j| ((j as f64 + 0.5) * src_cols as f64 / CHROMA_COLUMNS as f64).floor() as usize
}

/// Builds features for a window of `segment.length_bars` bars. Notes that
/// started earlier but still sound inside the window contribute to the
/// chromagram; only notes starting inside it contribute onsets.
/// `instruments` restricts which tracks are used (empty = all).
pub fn extract_features(
    track: &QuantizedTrack,
    segment: &SegmentDescriptor,
    instruments: &[Instrument],
) -> SegmentFeatures {
    let steps = track.grid.steps_per_bar() as u64;
    let start = segment.start_bar as u64 * steps;
    let cols = segment.length_bars as u64 * steps;
    let end = start + cols;

    let mut raw = vec![[0.0f64; 12]; cols as usize];
    let mut vel_sum = vec![0.0f64; cols as usize];
    let mut vel_n = vec![0u32; cols as usize];
    let mut onset_src = Vec::new();
    let mut pc_set = 0u16;
    let mut pitches = [false; 128];

    for (inst, note) in &track.notes {
        if !instruments.is_empty() && !instruments.contains(inst) {
            continue;
        }
        let n_start = note.abs_step(steps as u32);
        let n_end = n_start + u64::from(note.qdur);
        if n_end <= start || n_start >= end {
            continue;
        }
        let pc = usize::from(note.pitch % 12);
        for col in n_start.max(start)..n_end.min(end) {
            let c = (col - start) as usize;
            raw[c][pc] += f64::from(note.velocity);
            vel_sum[c] += f64::from(note.velocity);
            vel_n[c] += 1;
        }
        pc_set |= 1 << pc;
        pitches[usize::from(note.pitch & 127)] = true;
        if n_start >= start {
            onset_src.push((n_start - start) as usize);
        }
    }

    let (chroma, velocity_profile): (Vec<[f64; 12]>, Vec<f64>) = if cols as usize == CHROMA_COLUMNS {
        let vel = vel_sum.iter().zip(&vel_n).map(|(s, &n)| if n > 0 { s / f64::from(n) } else { 0.0 }).collect();
        (raw, vel)
    } else {
        let map = column_map(cols as usize);
        (0..CHROMA_COLUMNS)
            .map(|j| {
                let src = map(j);
                let v = if vel_n[src] > 0 { vel_sum[src] / f64::from(vel_n[src]) } else { 0.0 };
                (raw[src], v)
            })
            .unzip()
    };
    let chroma = chroma
        .into_iter()
        .map(|mut col| {
            let total: f64 = col.iter().sum();
            if total > 0.0 {
                col.iter_mut().for_each(|v| *v /= total);
            }
            col
        })
        .collect();

    let mut onset_set = 0u64;
    for rel in onset_src {
        let idx = rel * CHROMA_COLUMNS / cols as usize;
        onset_set |= 1u64 << idx;
    }

    let ts = usize::from(track.grid.ts_num);
    SegmentFeatures {
        chroma,
        pc_set,
        pitch_count: pitches.iter().filter(|&&p| p).count() as u8,
        onset_set,
        bpm: track.grid.bpm,
        harmony: track.harmony.slice(segment.start_bar * ts, segment.length_bars * ts),
        velocity_profile,
    }
}

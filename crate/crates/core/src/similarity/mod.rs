//! Segment-pair similarity.
//!
//! Components, all in `[0, 1]`:
//! - `p` pattern: chromagram intersection, maximized over 12 circular pitch shifts
//! - `m` complexity: distinct pitch classes of the simpler segment, over 12
//! - `r` rhythm: Jaccard index of quantized onset sets
//! - `b` tempo: ratio of the slower to the faster bpm
//! - `c` chord: `w_R * R_n + w_Q * Q` (Roman numeral and chord-quality agreement)
//!
//! Combined: `raw = (alpha + m*p) * (beta * max(r, p)) * b^delta + gamma * c`,
//! reported as `normalized = 100 * raw / ((alpha + 1) * beta + gamma)`.

mod features;

use serde::{Deserialize, Serialize};

use crate::error::SimilarityError;
use crate::ingest::ChordQuality;
use crate::quantizer::BeatChord;

pub use features::{extract_features, SegmentFeatures, CHROMA_COLUMNS};

/// How the final score is formed. `PatternOnly`/`RhythmOnly` replace the
/// combined formula by a single component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    #[default]
    Full,
    PatternOnly,
    RhythmOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub w_r: f64,
    pub w_q: f64,
    pub mode: ScoreMode,
    /// Treat bpm ratios of 2x/0.5x as the same tempo.
    pub fold_tempo_octaves: bool,
    /// Count distinct pitches (with octave) instead of pitch classes for `m`.
    pub count_octaves: bool,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        SimilarityParams {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            delta: 0.5,
            w_r: 0.85,
            w_q: 0.15,
            mode: ScoreMode::Full,
            fold_tempo_octaves: false,
            count_octaves: false,
        }
    }
}

impl SimilarityParams {
    pub fn validate(&self) -> Result<(), SimilarityError> {
        let fields = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("w_r", self.w_r),
            ("w_q", self.w_q),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(SimilarityError::Params(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if (self.w_r + self.w_q - 1.0).abs() > 1e-9 {
            return Err(SimilarityError::Params(format!("w_r + w_q = {} must equal 1", self.w_r + self.w_q)));
        }
        Ok(())
    }

    /// Upper bound of the raw score: `(alpha + 1) * beta + gamma`.
    pub fn max_raw(&self) -> f64 {
        match self.mode {
            ScoreMode::Full => (self.alpha + 1.0) * self.beta + self.gamma,
            ScoreMode::PatternOnly | ScoreMode::RhythmOnly => 1.0,
        }
    }

    pub fn from_json(json: &str) -> Result<Self, SimilarityError> {
        let params: SimilarityParams =
            serde_json::from_str(json).map_err(|e| SimilarityError::Params(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn ablated(&self, ablation: Ablation) -> SimilarityParams {
        let mut p = *self;
        match ablation {
            Ablation::None => {}
            Ablation::Pattern => p.mode = ScoreMode::PatternOnly,
            Ablation::Rhythm => p.mode = ScoreMode::RhythmOnly,
            Ablation::Chord => p.beta = 0.0,
            Ablation::Midi => p.gamma = 0.0,
        }
        p
    }
}

/// Component-masking conditions: pattern only, rhythm only, chord only
/// (`beta = 0`), MIDI only (`gamma = 0`), or everything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    None,
    Pattern,
    Rhythm,
    Chord,
    Midi,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [Ablation::Pattern, Ablation::Rhythm, Ablation::Chord, Ablation::Midi, Ablation::None];

    pub fn label(self) -> &'static str {
        match self {
            Ablation::None => "All",
            Ablation::Pattern => "Pattern only",
            Ablation::Rhythm => "Rhythm only",
            Ablation::Chord => "Chord only",
            Ablation::Midi => "MIDI only",
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = SimilarityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "all" => Ok(Ablation::None),
            "pattern" => Ok(Ablation::Pattern),
            "rhythm" => Ok(Ablation::Rhythm),
            "chord" => Ok(Ablation::Chord),
            "midi" => Ok(Ablation::Midi),
            other => Err(SimilarityError::Params(format!("unknown ablation {other:?}"))),
        }
    }
}

/// All components of one segment-pair comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub p: f64,
    pub m: f64,
    pub r: f64,
    pub b: f64,
    pub r_n: f64,
    pub q: f64,
    pub c: f64,
    /// Upward shift applied to the second segment that maximized `p`.
    pub best_shift: u8,
    pub raw: f64,
    pub normalized: f64,
}

/// Chromagram intersection. For each shift `s`, the second chromagram is
/// rotated up by `s` semitones and the per-column minima are summed; the sum
/// is divided by the number of columns active in either segment, so a
/// segment compared with itself scores 1. Returns `(p, best_shift)`, lowest
/// shift on ties.
pub fn pattern_similarity(a: &SegmentFeatures, b: &SegmentFeatures) -> (f64, u8) {
    let active = a.active_columns().max(b.active_columns());
    if active == 0 {
        return (0.0, 0);
    }
    let mut best = (f64::NEG_INFINITY, 0u8);
    for shift in 0..12usize {
        let mut total = 0.0;
        for (ca, cb) in a.chroma.iter().zip(&b.chroma) {
            for pc in 0..12 {
                total += ca[pc].min(cb[(pc + 12 - shift) % 12]);
            }
        }
        if total > best.0 {
            best = (total, shift as u8);
        }
    }
    ((best.0 / active as f64).clamp(0.0, 1.0), best.1)
}

pub fn complexity(a: &SegmentFeatures, b: &SegmentFeatures, count_octaves: bool) -> f64 {
    let count = |f: &SegmentFeatures| {
        if count_octaves {
            u32::from(f.pitch_count)
        } else {
            f.pc_set.count_ones()
        }
    };
    (f64::from(count(a).min(count(b))) / 12.0).min(1.0)
}

pub fn rhythm_similarity(a: &SegmentFeatures, b: &SegmentFeatures) -> f64 {
    let union = (a.onset_set | b.onset_set).count_ones();
    if union == 0 {
        return 0.0;
    }
    f64::from((a.onset_set & b.onset_set).count_ones()) / f64::from(union)
}

pub fn bpm_similarity(a: f64, b: f64, fold_octaves: bool) -> Result<f64, SimilarityError> {
    if !(a > 0.0 && b > 0.0) {
        return Err(SimilarityError::NonPositiveBpm(a, b));
    }
    Ok(bpm_ratio(a, b, fold_octaves))
}

fn bpm_ratio(a: f64, b: f64, fold_octaves: bool) -> f64 {
    let (lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    if fold_octaves {
        hi /= 2f64.powi((hi / lo).log2().round() as i32);
        return lo.min(hi) / lo.max(hi);
    }
    lo / hi
}

/// Agreement between two chord qualities: same quality 1, a triad against its
/// own seventh extension (maj/maj7, maj/dom7, min/min7) 0.5, otherwise 0.
pub fn quality_similarity(a: ChordQuality, b: ChordQuality) -> f64 {
    use ChordQuality::*;
    if a == b {
        return 1.0;
    }
    match (a, b) {
        (Maj, Maj7) | (Maj7, Maj) | (Maj, Dom7) | (Dom7, Maj) | (Min, Min7) | (Min7, Min) => 0.5,
        _ => 0.0,
    }
}

/// Returns `(c, R_n, Q)`. Beats where either side has no chord are skipped;
/// with no scored beats all three are 0.
pub fn chord_similarity(
    a: &[Option<BeatChord>],
    b: &[Option<BeatChord>],
    params: &SimilarityParams,
) -> Result<(f64, f64, f64), SimilarityError> {
    if a.len() != b.len() {
        return Err(SimilarityError::HarmonyLength(a.len(), b.len()));
    }
    let (mut scored, mut rn, mut q) = (0usize, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        if let (Some(x), Some(y)) = (x, y) {
            scored += 1;
            if x.degree == y.degree {
                rn += 1.0;
            }
            q += quality_similarity(x.quality, y.quality);
        }
    }
    if scored == 0 {
        return Ok((0.0, 0.0, 0.0));
    }
    let (rn, q) = (rn / scored as f64, q / scored as f64);
    Ok((params.w_r * rn + params.w_q * q, rn, q))
}

fn resample_harmony(h: &[Option<BeatChord>], len: usize) -> Vec<Option<BeatChord>> {
    if h.len() == len || h.is_empty() {
        return h.to_vec();
    }
    (0..len).map(|i| h[i * h.len() / len]).collect()
}

/// The independent components of a comparison, before combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Components {
    pub p: f64,
    pub m: f64,
    pub r: f64,
    pub b: f64,
    pub r_n: f64,
    pub q: f64,
    pub best_shift: u8,
}

/// Fills in `c` and the combined score from the other components.
pub fn combine(components: &Components, params: &SimilarityParams) -> ScoreBreakdown {
    let Components { p, m, r, b, r_n, q, best_shift } = *components;
    let c = params.w_r * r_n + params.w_q * q;
    let raw = match params.mode {
        ScoreMode::Full => (params.alpha + m * p) * (params.beta * r.max(p)) * b.powf(params.delta) + params.gamma * c,
        ScoreMode::PatternOnly => p,
        ScoreMode::RhythmOnly => r,
    };
    let max = params.max_raw();
    let normalized = if max > 0.0 { 100.0 * raw / max } else { 0.0 };
    ScoreBreakdown { p, m, r, b, r_n, q, c, best_shift, raw, normalized }
}

/// Scores a segment pair. Harmony of different lengths (3/4 against 4/4)
/// is resampled to the longer length before the beat-wise comparison.
pub fn combined_score(a: &SegmentFeatures, b: &SegmentFeatures, params: &SimilarityParams) -> ScoreBreakdown {
    let (p, best_shift) = pattern_similarity(a, b);
    let m = complexity(a, b, params.count_octaves);
    let r = rhythm_similarity(a, b);
    let bpm = if a.bpm > 0.0 && b.bpm > 0.0 { bpm_ratio(a.bpm, b.bpm, params.fold_tempo_octaves) } else { 0.0 };
    let len = a.harmony.len().max(b.harmony.len());
    let (ha, hb) = (resample_harmony(&a.harmony, len), resample_harmony(&b.harmony, len));
    let (_, r_n, q) = chord_similarity(&ha, &hb, params).unwrap_or((0.0, 0.0, 0.0));
    combine(&Components { p, m, r, b: bpm, r_n, q, best_shift }, params)
}

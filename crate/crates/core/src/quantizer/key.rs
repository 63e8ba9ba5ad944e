use serde::{Deserialize, Serialize};

use super::QuantizedNote;
use crate::error::GridError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Major,
    Minor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeySignature {
    pub tonic_pc: u8,
    pub mode: Mode,
}

impl std::fmt::Display for KeySignature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        const NAMES: [&str; 12] = ["C", "C#", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B"];
        let mode = match self.mode {
            Mode::Major => "major",
            Mode::Minor => "minor",
        };
        write!(f, "{} {mode}", NAMES[usize::from(self.tonic_pc % 12)])
    }
}

/// Krumhansl-Kessler probe-tone profiles, index 0 = tonic.
pub const MAJOR_PROFILE: [f64; 12] = [6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88];
pub const MINOR_PROFILE: [f64; 12] = [6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17];

fn pearson(x: &[f64; 12], y: &[f64; 12]) -> f64 {
    let mx = x.iter().sum::<f64>() / 12.0;
    let my = y.iter().sum::<f64>() / 12.0;
    let (mut num, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for i in 0..12 {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        num += dx * dy;
        sx += dx * dx;
        sy += dy * dy;
    }
    let denom = (sx * sy).sqrt();
    if denom < 1e-12 {
        0.0
    } else {
        num / denom
    }
}

/// Krumhansl-Schmuckler key finding over a duration-weighted pitch-class
/// histogram. Ties resolve to the lowest tonic, major before minor.
pub fn estimate_key(notes: &[QuantizedNote]) -> Result<KeySignature, GridError> {
    if notes.is_empty() {
        return Err(GridError::EmptyNotes);
    }
    let mut hist = [0.0f64; 12];
    for n in notes {
        hist[usize::from(n.pitch % 12)] += f64::from(n.qdur);
    }
    let mut best = (f64::NEG_INFINITY, KeySignature { tonic_pc: 0, mode: Mode::Major });
    for tonic in 0..12u8 {
        let mut rotated = [0.0; 12];
        for (i, r) in rotated.iter_mut().enumerate() {
            *r = hist[(i + usize::from(tonic)) % 12];
        }
        for (mode, profile) in [(Mode::Major, &MAJOR_PROFILE), (Mode::Minor, &MINOR_PROFILE)] {
            let corr = pearson(&rotated, profile);
            if corr > best.0 {
                best = (corr, KeySignature { tonic_pc: tonic, mode });
            }
        }
    }
    Ok(best.1)
}

/// An annotated key always wins over estimation.
pub fn resolve_key(annotated: Option<KeySignature>, notes: &[QuantizedNote]) -> Result<KeySignature, GridError> {
    match annotated {
        Some(key) => Ok(key),
        None => estimate_key(notes),
    }
}

//! Standard MIDI File (SMF 0/1) reading and writing.
//!
//! Only PPQ timing is supported. Tempo changes anywhere in the file form a
//! single tempo map that is applied to every track.

use std::collections::{HashMap, VecDeque};

use log::warn;

use super::{Instrument, InstrumentTrack, NoteEvent};
use crate::error::IngestError;

const DEFAULT_TEMPO_US: u32 = 500_000;

/// Case-insensitive keyword table for track names. Order matters:
/// "bass guitar" must hit bass before the guitar entry.
const NAME_KEYWORDS: &[(&str, Instrument)] = &[
    ("vox", Instrument::Vocal),
    ("vocal", Instrument::Vocal),
    ("voice", Instrument::Vocal),
    ("sing", Instrument::Vocal),
    ("bass", Instrument::Bass),
    ("melody", Instrument::Melody),
    ("lead", Instrument::Melody),
    ("solo", Instrument::Melody),
    ("chord", Instrument::Chords),
    ("piano", Instrument::Chords),
    ("keys", Instrument::Chords),
    ("pad", Instrument::Chords),
    ("comp", Instrument::Chords),
    ("organ", Instrument::Chords),
    ("guitar", Instrument::Chords),
];

pub fn instrument_from_name(name: &str) -> Option<Instrument> {
    let lower = name.to_ascii_lowercase();
    NAME_KEYWORDS
        .iter()
        .find(|(kw, _)| lower.contains(kw))
        .map(|&(_, inst)| inst)
}

/// General MIDI program (0-based) to instrument role.
pub fn instrument_from_program(program: u8) -> Option<Instrument> {
    match program {
        0..=7 | 16..=31 => Some(Instrument::Chords),
        32..=39 => Some(Instrument::Bass),
        52..=54 => Some(Instrument::Vocal),
        56..=87 => Some(Instrument::Melody),
        _ => None,
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> IngestError {
        IngestError::Midi { offset: self.pos, message: message.into() }
    }

    fn u8(&mut self) -> Result<u8, IngestError> {
        let b = *self.data.get(self.pos).ok_or_else(|| self.err("unexpected end of data"))?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], IngestError> {
        if self.data.len() - self.pos < n {
            return Err(self.err(format!("need {n} bytes, {} left", self.data.len() - self.pos)));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, IngestError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, IngestError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32, IngestError> {
        let start = self.pos;
        let mut value: u32 = 0;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | u32::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(IngestError::Midi { offset: start, message: "variable-length quantity longer than 4 bytes".into() })
    }
}

#[derive(Default)]
struct RawTrack {
    name: Option<String>,
    program: Option<u8>,
    end_tick: u64,
    // (channel, pitch, velocity, on_tick, off_tick)
    notes: Vec<(u8, u8, u8, u64, u64)>,
}

struct TempoMap {
    ppq: f64,
    // (tick, seconds at tick, microseconds per quarter from tick on)
    points: Vec<(u64, f64, u32)>,
}

impl TempoMap {
    fn new(ppq: u16, mut changes: Vec<(u64, u32)>) -> Self {
        changes.sort_by_key(|&(tick, _)| tick);
        let ppq = f64::from(ppq);
        let mut points: Vec<(u64, f64, u32)> = vec![(0, 0.0, DEFAULT_TEMPO_US)];
        for (tick, tempo) in changes {
            let &(last_tick, last_s, last_tempo) = points.last().unwrap();
            if tick == last_tick {
                // a later event at the same tick overrides
                points.last_mut().unwrap().2 = tempo;
                continue;
            }
            let s = last_s + (tick - last_tick) as f64 / ppq * f64::from(last_tempo) / 1e6;
            points.push((tick, s, tempo));
        }
        TempoMap { ppq, points }
    }

    fn seconds(&self, tick: u64) -> f64 {
        let idx = self.points.partition_point(|p| p.0 <= tick) - 1;
        let (t0, s0, tempo) = self.points[idx];
        s0 + (tick - t0) as f64 / self.ppq * f64::from(tempo) / 1e6
    }
}

/// Parses an SMF format 0/1 document into one instrument track per `MTrk` chunk.
pub fn parse_standard_midi(bytes: &[u8]) -> Result<Vec<InstrumentTrack>, IngestError> {
    let mut r = Reader { data: bytes, pos: 0 };
    if r.take(4).map_err(|_| r.err("missing MThd header"))? != b"MThd" {
        return Err(IngestError::Midi { offset: 0, message: "missing MThd header".into() });
    }
    let header_len = r.u32()? as usize;
    if header_len < 6 {
        return Err(r.err(format!("header length {header_len} < 6")));
    }
    let format_at = r.pos;
    let format = r.u16()?;
    let ntrks = r.u16()?;
    let division_at = r.pos;
    let division = r.u16()?;
    r.take(header_len - 6)?;
    if format > 1 {
        return Err(IngestError::Midi { offset: format_at, message: format!("unsupported SMF format {format}") });
    }
    if division & 0x8000 != 0 {
        return Err(IngestError::Midi {
            offset: division_at,
            message: "SMPTE time division is not supported, only PPQ".into(),
        });
    }
    if division == 0 {
        return Err(IngestError::Midi { offset: division_at, message: "PPQ division of 0".into() });
    }

    let mut raw_tracks = Vec::new();
    let mut tempo_changes = Vec::new();
    while r.pos < bytes.len() {
        let chunk_at = r.pos;
        let id = r.take(4)?;
        let len = r.u32()? as usize;
        if bytes.len() - r.pos < len {
            return Err(IngestError::Midi {
                offset: chunk_at,
                message: format!("chunk length {len} runs past end of file"),
            });
        }
        let body_at = r.pos;
        let body = r.take(len)?;
        if id == b"MTrk" {
            raw_tracks.push(parse_track(body, body_at, &mut tempo_changes)?);
        }
    }
    if raw_tracks.len() != usize::from(ntrks) {
        warn!("SMF header declares {ntrks} tracks, found {}", raw_tracks.len());
    }

    let tempo = TempoMap::new(division, tempo_changes);
    Ok(raw_tracks.into_iter().map(|raw| finish_track(raw, &tempo)).collect())
}

fn parse_track(body: &[u8], base: usize, tempo_changes: &mut Vec<(u64, u32)>) -> Result<RawTrack, IngestError> {
    let mut r = Reader { data: body, pos: 0 };
    let offset_err = |r: &Reader, msg: String| IngestError::Midi { offset: base + r.pos, message: msg };
    let mut track = RawTrack::default();
    let mut open: HashMap<(u8, u8), VecDeque<(u64, u8)>> = HashMap::new();
    let mut tick: u64 = 0;
    let mut running: Option<u8> = None;

    while r.pos < body.len() {
        tick += u64::from(r.vlq().map_err(|e| rebase(e, base))?);
        let first = r.u8().map_err(|e| rebase(e, base))?;
        let status = if first & 0x80 != 0 {
            first
        } else {
            r.pos -= 1;
            running.ok_or_else(|| offset_err(&r, "data byte without running status".into()))?
        };
        match status {
            0xff => {
                let kind = r.u8().map_err(|e| rebase(e, base))?;
                let len = r.vlq().map_err(|e| rebase(e, base))? as usize;
                let data = r.take(len).map_err(|e| rebase(e, base))?;
                match kind {
                    0x2f => break,
                    0x51 if len == 3 => {
                        let us = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        if us == 0 {
                            return Err(offset_err(&r, "tempo of 0 us per quarter".into()));
                        }
                        tempo_changes.push((tick, us));
                    }
                    0x03 if track.name.is_none() => {
                        track.name = Some(String::from_utf8_lossy(data).into_owned());
                    }
                    _ => {}
                }
                running = None;
            }
            0xf0 | 0xf7 => {
                let len = r.vlq().map_err(|e| rebase(e, base))? as usize;
                r.take(len).map_err(|e| rebase(e, base))?;
                running = None;
            }
            0x80..=0xef => {
                running = Some(status);
                let channel = status & 0x0f;
                let data_len = if matches!(status & 0xf0, 0xc0 | 0xd0) { 1 } else { 2 };
                let d = r.take(data_len).map_err(|e| rebase(e, base))?;
                if d.iter().any(|b| b & 0x80 != 0) {
                    return Err(offset_err(&r, format!("status byte inside channel message {status:#04x}")));
                }
                match status & 0xf0 {
                    0x90 if d[1] > 0 => {
                        open.entry((channel, d[0])).or_default().push_back((tick, d[1]));
                    }
                    0x80 | 0x90 => {
                        if let Some((on, vel)) = open.get_mut(&(channel, d[0])).and_then(VecDeque::pop_front) {
                            track.notes.push((channel, d[0], vel, on, tick));
                        }
                    }
                    0xc0 if track.program.is_none() && channel != 9 => track.program = Some(d[0]),
                    _ => {}
                }
            }
            other => return Err(offset_err(&r, format!("unexpected status byte {other:#04x}"))),
        }
    }
    track.end_tick = tick;

    let mut dangling: Vec<_> = open
        .into_iter()
        .flat_map(|((ch, pitch), q)| q.into_iter().map(move |(on, vel)| (ch, pitch, vel, on)))
        .collect();
    dangling.sort_unstable();
    for (ch, pitch, vel, on) in dangling {
        warn!("note-on pitch {pitch} channel {ch} at tick {on} never released; closed at track end");
        track.notes.push((ch, pitch, vel, on, tick));
    }
    Ok(track)
}

fn rebase(err: IngestError, base: usize) -> IngestError {
    match err {
        IngestError::Midi { offset, message } => IngestError::Midi { offset: offset + base, message },
        other => other,
    }
}

fn finish_track(raw: RawTrack, tempo: &TempoMap) -> InstrumentTrack {
    let drums_only = !raw.notes.is_empty() && raw.notes.iter().all(|n| n.0 == 9);
    let instrument = if drums_only {
        Instrument::Other
    } else {
        raw.name
            .as_deref()
            .and_then(instrument_from_name)
            .or_else(|| raw.program.and_then(instrument_from_program))
            .unwrap_or(Instrument::Other)
    };
    let mut notes = Vec::with_capacity(raw.notes.len());
    for (_, pitch, velocity, on, off) in raw.notes {
        let onset_s = tempo.seconds(on);
        let duration_s = tempo.seconds(off) - onset_s;
        if duration_s <= 0.0 {
            warn!("dropping zero-length note pitch {pitch} at tick {on}");
            continue;
        }
        notes.push(NoteEvent { pitch, onset_s, duration_s, velocity });
    }
    InstrumentTrack::new(instrument, notes)
}

fn push_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut stack = [0u8; 4];
    let mut n = 0;
    loop {
        stack[n] = (value & 0x7f) as u8;
        n += 1;
        value >>= 7;
        if value == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(stack[i] | if i > 0 { 0x80 } else { 0 });
    }
}

fn push_chunk(out: &mut Vec<u8>, id: &[u8; 4], body: &[u8]) {
    out.extend_from_slice(id);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
}

/// Writes tracks as an SMF format-1 file at a constant tempo. Track 0 holds
/// the tempo; each instrument track is named after its role so that reading
/// the file back maps it to the same instrument.
pub fn write_standard_midi(tracks: &[InstrumentTrack], bpm: f64, ppq: u16) -> Vec<u8> {
    let mut out = Vec::new();
    let mut header = Vec::new();
    header.extend_from_slice(&1u16.to_be_bytes());
    header.extend_from_slice(&((tracks.len() + 1) as u16).to_be_bytes());
    header.extend_from_slice(&ppq.to_be_bytes());
    push_chunk(&mut out, b"MThd", &header);

    let us = (60e6 / bpm).round() as u32;
    let mut conductor = vec![0x00, 0xff, 0x51, 0x03];
    conductor.extend_from_slice(&us.to_be_bytes()[1..]);
    conductor.extend_from_slice(&[0x00, 0xff, 0x2f, 0x00]);
    push_chunk(&mut out, b"MTrk", &conductor);

    let ticks_per_s = f64::from(ppq) * 1e6 / f64::from(us);
    for (i, track) in tracks.iter().enumerate() {
        let channel = match i % 15 {
            c if c >= 9 => c as u8 + 1,
            c => c as u8,
        };
        // (tick, is_on, pitch, velocity); offs sort before ons at equal ticks
        let mut events: Vec<(u64, bool, u8, u8)> = Vec::with_capacity(track.notes.len() * 2);
        for n in &track.notes {
            let on = (n.onset_s * ticks_per_s).round() as u64;
            let off = ((n.end_s() * ticks_per_s).round() as u64).max(on + 1);
            events.push((on, true, n.pitch, n.velocity));
            events.push((off, false, n.pitch, 0));
        }
        events.sort_unstable();
        let mut body = Vec::new();
        let name = track.instrument.as_str().as_bytes();
        body.extend_from_slice(&[0x00, 0xff, 0x03]);
        push_vlq(&mut body, name.len() as u32);
        body.extend_from_slice(name);
        let mut last = 0u64;
        for (tick, is_on, pitch, vel) in events {
            push_vlq(&mut body, (tick - last) as u32);
            last = tick;
            if is_on {
                body.extend_from_slice(&[0x90 | channel, pitch, vel]);
            } else {
                body.extend_from_slice(&[0x80 | channel, pitch, 0x40]);
            }
        }
        body.extend_from_slice(&[0x00, 0xff, 0x2f, 0x00]);
        push_chunk(&mut out, b"MTrk", &body);
    }
    out
}

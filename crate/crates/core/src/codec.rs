//! Performance-event encoding.
//!
//! A piece is a stream over a 240-symbol vocabulary:
//!
//! | index     | event                              |
//! |-----------|------------------------------------|
//! | 0..=87    | `NOTE_ON` pitch 21..=108           |
//! | 88..=175  | `NOTE_OFF` pitch 21..=108          |
//! | 176..=207 | `TIME_SHIFT` of 1..=32 quanta      |
//! | 208..=239 | `VELOCITY` bin 0..=31              |
//!
//! One quantum is 1/32 s, so the longest single shift is one second.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::midi::{Note, NoteList, MAX_PITCH, MIN_PITCH};

pub const VOCAB_SIZE: usize = 240;
pub const NUM_PITCHES: usize = (MAX_PITCH - MIN_PITCH + 1) as usize;
pub const MAX_SHIFT: u8 = 32;
pub const VELOCITY_BINS: u8 = 32;
/// Length of one time-shift quantum in seconds.
pub const TIME_QUANTUM: f64 = 1.0 / 32.0;

const NOTE_OFF_BASE: usize = NUM_PITCHES;
const SHIFT_BASE: usize = 2 * NUM_PITCHES;
const VELOCITY_BASE: usize = SHIFT_BASE + MAX_SHIFT as usize;

/// Velocity bin used by the decoder before any `VELOCITY` event is seen.
pub const DEFAULT_VELOCITY_BIN: u8 = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("event index {0} outside vocabulary")]
    IndexOutOfRange(usize),
    #[error("invalid {kind} value {value}")]
    InvalidValue { kind: &'static str, value: i64 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PerformanceEvent {
    NoteOn(u8),
    NoteOff(u8),
    /// Number of quanta, 1..=32.
    TimeShift(u8),
    /// Velocity bin, 0..=31.
    Velocity(u8),
}

impl PerformanceEvent {
    pub fn note_on(pitch: u8) -> Result<Self, CodecError> {
        check_pitch(pitch).map(|_| PerformanceEvent::NoteOn(pitch))
    }

    pub fn note_off(pitch: u8) -> Result<Self, CodecError> {
        check_pitch(pitch).map(|_| PerformanceEvent::NoteOff(pitch))
    }

    pub fn time_shift(quanta: u8) -> Result<Self, CodecError> {
        if (1..=MAX_SHIFT).contains(&quanta) {
            Ok(PerformanceEvent::TimeShift(quanta))
        } else {
            Err(CodecError::InvalidValue {
                kind: "TIME_SHIFT",
                value: quanta as i64,
            })
        }
    }

    pub fn velocity(bin: u8) -> Result<Self, CodecError> {
        if bin < VELOCITY_BINS {
            Ok(PerformanceEvent::Velocity(bin))
        } else {
            Err(CodecError::InvalidValue {
                kind: "VELOCITY",
                value: bin as i64,
            })
        }
    }

    /// Position in the 240-symbol vocabulary.
    pub fn index(self) -> usize {
        match self {
            PerformanceEvent::NoteOn(p) => (p - MIN_PITCH) as usize,
            PerformanceEvent::NoteOff(p) => NOTE_OFF_BASE + (p - MIN_PITCH) as usize,
            PerformanceEvent::TimeShift(k) => SHIFT_BASE + k as usize - 1,
            PerformanceEvent::Velocity(b) => VELOCITY_BASE + b as usize,
        }
    }

    pub fn from_index(index: usize) -> Result<Self, CodecError> {
        Ok(match index {
            i if i < NOTE_OFF_BASE => PerformanceEvent::NoteOn(MIN_PITCH + i as u8),
            i if i < SHIFT_BASE => PerformanceEvent::NoteOff(MIN_PITCH + (i - NOTE_OFF_BASE) as u8),
            i if i < VELOCITY_BASE => PerformanceEvent::TimeShift((i - SHIFT_BASE + 1) as u8),
            i if i < VOCAB_SIZE => PerformanceEvent::Velocity((i - VELOCITY_BASE) as u8),
            i => return Err(CodecError::IndexOutOfRange(i)),
        })
    }

    pub fn is_note_on(self) -> bool {
        matches!(self, PerformanceEvent::NoteOn(_))
    }
}

fn check_pitch(pitch: u8) -> Result<(), CodecError> {
    if (MIN_PITCH..=MAX_PITCH).contains(&pitch) {
        Ok(())
    } else {
        Err(CodecError::InvalidValue {
            kind: "pitch",
            value: pitch as i64,
        })
    }
}

pub fn event_index(e: PerformanceEvent) -> usize {
    e.index()
}

pub fn index_to_event(index: usize) -> Result<PerformanceEvent, CodecError> {
    PerformanceEvent::from_index(index)
}

/// Indices of all `NOTE_ON` events.
pub fn note_on_indices() -> std::ops::Range<usize> {
    0..NOTE_OFF_BASE
}

impl fmt::Display for PerformanceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerformanceEvent::NoteOn(p) => write!(f, "ON {p}"),
            PerformanceEvent::NoteOff(p) => write!(f, "OFF {p}"),
            PerformanceEvent::TimeShift(k) => write!(f, "SHIFT {k}"),
            PerformanceEvent::Velocity(b) => write!(f, "VEL {b}"),
        }
    }
}

impl FromStr for PerformanceEvent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split_whitespace();
        let (Some(kind), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format!("expected `KIND VALUE`, got {s:?}"));
        };
        let value: u8 = value
            .parse()
            .map_err(|_| format!("bad value {value:?}"))?;
        let ev = match kind {
            "ON" => PerformanceEvent::note_on(value),
            "OFF" => PerformanceEvent::note_off(value),
            "SHIFT" => PerformanceEvent::time_shift(value),
            "VEL" => PerformanceEvent::velocity(value),
            other => return Err(format!("unknown event kind {other:?}")),
        };
        ev.map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventSequence {
    pub events: Vec<PerformanceEvent>,
}

impl EventSequence {
    pub fn new(events: Vec<PerformanceEvent>) -> Self {
        EventSequence { events }
    }

    pub fn from_indices(indices: &[usize]) -> Result<Self, CodecError> {
        indices
            .iter()
            .map(|&i| PerformanceEvent::from_index(i))
            .collect::<Result<Vec<_>, _>>()
            .map(EventSequence::new)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.events.iter().map(|e| e.index()).collect()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Clock time in seconds at which each event occurs, i.e. the sum of all
    /// preceding time shifts.
    pub fn event_times(&self) -> Vec<f64> {
        let mut quanta = 0u64;
        self.events
            .iter()
            .map(|e| {
                let t = quanta as f64 * TIME_QUANTUM;
                if let PerformanceEvent::TimeShift(k) = e {
                    quanta += *k as u64;
                }
                t
            })
            .collect()
    }

    /// One event per line: `ON 60`, `OFF 60`, `SHIFT 16`, `VEL 16`.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.events.len() * 8);
        for e in &self.events {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }

    /// Parses the line format produced by [`EventSequence::to_text`]. Blank
    /// lines and lines starting with `#` are skipped.
    pub fn from_text(text: &str) -> Result<Self, CodecError> {
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let ev = line
                .parse()
                .map_err(|msg| CodecError::Parse { line: i + 1, msg })?;
            events.push(ev);
        }
        Ok(EventSequence { events })
    }
}

pub fn velocity_bin(velocity: u8) -> u8 {
    (velocity / 4).min(VELOCITY_BINS - 1)
}

pub fn bin_velocity(bin: u8) -> u8 {
    (4 * bin as u16 + 2).clamp(1, 127) as u8
}

fn push_shifts(events: &mut Vec<PerformanceEvent>, mut quanta: u64) {
    while quanta > 0 {
        let k = quanta.min(MAX_SHIFT as u64) as u8;
        events.push(PerformanceEvent::TimeShift(k));
        quanta -= k as u64;
    }
}

/// Encodes a note list as a performance-event stream.
///
/// Every event time is rounded to the nearest quantum on the absolute
/// timeline, so timing error stays within half a quantum however long the
/// piece. A note is held for at least one quantum.
pub fn encode(notes: &NoteList) -> EventSequence {
    let quantize = |t: f64| (t / TIME_QUANTUM).round().max(0.0) as u64;

    // (quantum, is_on, pitch, velocity); offs precede ons at the same quantum
    let mut points: Vec<(u64, bool, u8, u8)> = Vec::with_capacity(notes.len() * 2);
    for n in &notes.notes {
        let on = quantize(n.onset);
        let off = quantize(n.offset).max(on + 1);
        points.push((on, true, n.pitch, n.velocity));
        points.push((off, false, n.pitch, n.velocity));
    }
    points.sort_by_key(|&(q, is_on, pitch, _)| (q, is_on, pitch));

    let mut events = Vec::with_capacity(points.len() * 2);
    let mut clock = 0u64;
    let mut active_bin: Option<u8> = None;
    for (q, is_on, pitch, velocity) in points {
        push_shifts(&mut events, q - clock);
        clock = q;
        if is_on {
            let bin = velocity_bin(velocity);
            if active_bin != Some(bin) {
                events.push(PerformanceEvent::Velocity(bin));
                active_bin = Some(bin);
            }
            events.push(PerformanceEvent::NoteOn(pitch));
        } else {
            events.push(PerformanceEvent::NoteOff(pitch));
        }
    }
    EventSequence { events }
}

/// Replays an event stream into notes. Never fails: orphan note-offs are
/// ignored, a repeated note-on closes the sounding note first, and notes
/// still open at the end are released one quantum after the final clock.
pub fn decode(events: &EventSequence) -> NoteList {
    let mut open: [Option<(u64, u8)>; NUM_PITCHES] = [None; NUM_PITCHES];
    let mut notes = Vec::new();
    let mut clock = 0u64;
    let mut bin = DEFAULT_VELOCITY_BIN;
    let secs = |q: u64| q as f64 * TIME_QUANTUM;

    let close = |notes: &mut Vec<Note>, pitch: u8, start: u64, vel_bin: u8, end: u64| {
        // zero-length notes only arise from ill-formed streams; give them one quantum
        let end = end.max(start + 1);
        notes.push(Note::new(pitch, secs(start), secs(end), bin_velocity(vel_bin)));
    };

    for &e in &events.events {
        match e {
            PerformanceEvent::NoteOn(p) => {
                let slot = &mut open[(p - MIN_PITCH) as usize];
                if let Some((start, b)) = slot.take() {
                    if clock > start {
                        close(&mut notes, p, start, b, clock);
                    }
                }
                *slot = Some((clock, bin));
            }
            PerformanceEvent::NoteOff(p) => {
                if let Some((start, b)) = open[(p - MIN_PITCH) as usize].take() {
                    close(&mut notes, p, start, b, clock);
                }
            }
            PerformanceEvent::TimeShift(k) => clock += k as u64,
            PerformanceEvent::Velocity(b) => bin = b,
        }
    }
    for (i, slot) in open.iter().enumerate() {
        if let Some((start, b)) = *slot {
            close(&mut notes, MIN_PITCH + i as u8, start, b, clock + 1);
        }
    }
    NoteList::from_notes(notes)
}

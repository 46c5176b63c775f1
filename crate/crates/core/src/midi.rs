//! Standard MIDI File reading and writing.
//!
//! Only the parts of SMF needed for piano performances are interpreted:
//! note-on/note-off pairs and tempo meta events. Everything else (controllers,
//! sysex, other meta events) is skipped. Notes outside the 88-key piano range
//! are dropped.

use std::collections::HashMap;

use thiserror::Error;

/// Lowest piano key (A0).
pub const MIN_PITCH: u8 = 21;
/// Highest piano key (C8).
pub const MAX_PITCH: u8 = 108;

/// Resolution used by [`write_midi`].
pub const WRITE_TICKS_PER_QUARTER: u16 = 480;
const DEFAULT_US_PER_QUARTER: u32 = 500_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MidiError {
    #[error("malformed MIDI file: {0}")]
    MalformedFile(String),
    #[error("unsupported SMF format {0}")]
    UnsupportedFormat(u16),
}

fn malformed<T>(msg: impl Into<String>) -> Result<T, MidiError> {
    Err(MidiError::MalformedFile(msg.into()))
}

/// A sounded piano note. Times are in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Note {
    pub pitch: u8,
    pub onset: f64,
    pub offset: f64,
    pub velocity: u8,
}

impl Note {
    pub fn new(pitch: u8, onset: f64, offset: f64, velocity: u8) -> Self {
        Note {
            pitch,
            onset,
            offset,
            velocity,
        }
    }

    pub fn pitch_class(&self) -> usize {
        (self.pitch % 12) as usize
    }

    pub fn is_valid(&self) -> bool {
        (MIN_PITCH..=MAX_PITCH).contains(&self.pitch)
            && self.onset >= 0.0
            && self.offset > self.onset
            && (1..=127).contains(&self.velocity)
    }
}

/// Notes of one piece, sorted by `(onset, pitch)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoteList {
    pub notes: Vec<Note>,
    pub ticks_per_quarter: u16,
    pub source_name: String,
}

impl Default for NoteList {
    fn default() -> Self {
        NoteList {
            notes: Vec::new(),
            ticks_per_quarter: WRITE_TICKS_PER_QUARTER,
            source_name: String::new(),
        }
    }
}

impl NoteList {
    /// Builds a list from arbitrary notes, sorting them into canonical order.
    pub fn from_notes(mut notes: Vec<Note>) -> Self {
        sort_notes(&mut notes);
        NoteList {
            notes,
            ..Default::default()
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.source_name = name.into();
        self
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    /// Time of the last note release, or 0 for an empty list.
    pub fn end_time(&self) -> f64 {
        self.notes.iter().map(|n| n.offset).fold(0.0, f64::max)
    }

    /// Returns a copy with every pitch shifted by `semitones`, dropping notes
    /// that leave the piano range.
    pub fn transposed(&self, semitones: i32) -> NoteList {
        let notes = self
            .notes
            .iter()
            .filter_map(|n| {
                let p = n.pitch as i32 + semitones;
                (MIN_PITCH as i32..=MAX_PITCH as i32)
                    .contains(&p)
                    .then_some(Note { pitch: p as u8, ..*n })
            })
            .collect();
        NoteList {
            notes,
            ticks_per_quarter: self.ticks_per_quarter,
            source_name: self.source_name.clone(),
        }
    }
}

pub(crate) fn sort_notes(notes: &mut [Note]) {
    notes.sort_by(|a, b| {
        a.onset
            .total_cmp(&b.onset)
            .then(a.pitch.cmp(&b.pitch))
            .then(a.offset.total_cmp(&b.offset))
    });
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Reader { data, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MidiError> {
        if self.remaining() < n {
            return malformed(format!("unexpected end of data at byte {}", self.pos));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, MidiError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, MidiError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Variable-length quantity, at most four bytes.
    fn vlq(&mut self) -> Result<u32, MidiError> {
        let mut value: u32 = 0;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | (b & 0x7f) as u32;
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        malformed("variable-length quantity longer than 4 bytes")
    }
}

#[derive(Debug, Clone, Copy)]
enum Timing {
    Metrical(u16),
    /// frames per second, ticks per frame
    Timecode(u8, u8),
}

#[derive(Debug, Clone, Copy)]
enum RawKind {
    On { channel: u8, pitch: u8, velocity: u8 },
    Off { channel: u8, pitch: u8 },
}

#[derive(Debug, Clone, Copy)]
struct RawEvent {
    tick: u64,
    track: usize,
    kind: RawKind,
}

struct TrackData {
    events: Vec<RawEvent>,
    tempos: Vec<(u64, u32)>,
    end_tick: u64,
}

fn parse_track(body: &[u8], track: usize) -> Result<TrackData, MidiError> {
    let mut r = Reader::new(body);
    let mut tick: u64 = 0;
    let mut running: Option<u8> = None;
    let mut events = Vec::new();
    let mut tempos = Vec::new();

    while r.remaining() > 0 {
        tick += r.vlq()? as u64;
        let first = r.u8()?;
        let status = if first & 0x80 != 0 {
            first
        } else {
            match running {
                Some(s) => {
                    r.pos -= 1;
                    s
                }
                None => return malformed("running status without a preceding status byte"),
            }
        };

        match status {
            0xff => {
                let kind = r.u8()?;
                let len = r.vlq()? as usize;
                let data = r.take(len)?;
                match kind {
                    0x2f => break,
                    0x51 => {
                        if len != 3 {
                            return malformed("tempo meta event with length other than 3");
                        }
                        let us = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        if us == 0 {
                            return malformed("zero tempo");
                        }
                        tempos.push((tick, us));
                    }
                    _ => {}
                }
                running = None;
            }
            0xf0 | 0xf7 => {
                let len = r.vlq()? as usize;
                r.take(len)?;
                running = None;
            }
            0x80..=0xef => {
                running = Some(status);
                let channel = status & 0x0f;
                let n_data = match status & 0xf0 {
                    0xc0 | 0xd0 => 1,
                    _ => 2,
                };
                let data = r.take(n_data)?;
                if data.iter().any(|b| b & 0x80 != 0) {
                    return malformed("data byte with the high bit set");
                }
                match status & 0xf0 {
                    0x90 if data[1] > 0 => events.push(RawEvent {
                        tick,
                        track,
                        kind: RawKind::On {
                            channel,
                            pitch: data[0],
                            velocity: data[1],
                        },
                    }),
                    0x80 | 0x90 => events.push(RawEvent {
                        tick,
                        track,
                        kind: RawKind::Off {
                            channel,
                            pitch: data[0],
                        },
                    }),
                    _ => {}
                }
            }
            _ => return malformed(format!("unexpected status byte {status:#04x}")),
        }
    }

    Ok(TrackData {
        events,
        tempos,
        end_tick: tick,
    })
}

/// Piecewise-linear tick to seconds conversion.
struct TempoMap {
    timing: Timing,
    /// (start tick, seconds at start tick, microseconds per quarter)
    segments: Vec<(u64, f64, u32)>,
}

impl TempoMap {
    fn new(timing: Timing, mut changes: Vec<(u64, u32)>) -> Self {
        changes.sort_by_key(|&(t, _)| t);
        let mut segments = vec![(0u64, 0.0f64, DEFAULT_US_PER_QUARTER)];
        for (tick, us) in changes {
            let (start, secs, cur) = *segments.last().unwrap();
            if tick == start {
                segments.last_mut().unwrap().2 = us;
            } else {
                let at = secs + Self::span(timing, tick - start, cur);
                segments.push((tick, at, us));
            }
        }
        TempoMap { timing, segments }
    }

    fn span(timing: Timing, ticks: u64, us_per_quarter: u32) -> f64 {
        match timing {
            Timing::Metrical(tpq) => ticks as f64 * us_per_quarter as f64 / 1e6 / tpq as f64,
            Timing::Timecode(fps, tpf) => ticks as f64 / (fps as f64 * tpf as f64),
        }
    }

    fn seconds(&self, tick: u64) -> f64 {
        let idx = self.segments.partition_point(|s| s.0 <= tick) - 1;
        let (start, secs, us) = self.segments[idx];
        secs + Self::span(self.timing, tick - start, us)
    }
}

/// Parses an SMF (format 0 or 1) into a merged, sorted note list.
pub fn parse_midi(bytes: &[u8]) -> Result<NoteList, MidiError> {
    let mut r = Reader::new(bytes);
    if r.remaining() < 4 || r.take(4)? != b"MThd" {
        return malformed("missing MThd header");
    }
    let header_len = r.u32()? as usize;
    if header_len < 6 {
        return malformed("header chunk shorter than 6 bytes");
    }
    let header = r.take(header_len)?;
    let format = u16::from_be_bytes([header[0], header[1]]);
    let n_tracks = u16::from_be_bytes([header[2], header[3]]) as usize;
    let division = u16::from_be_bytes([header[4], header[5]]);
    if format > 1 {
        return Err(MidiError::UnsupportedFormat(format));
    }
    let timing = if division & 0x8000 != 0 {
        let fps = ((division >> 8) as u8 as i8).wrapping_neg() as u8;
        let tpf = (division & 0xff) as u8;
        if fps == 0 || tpf == 0 {
            return malformed("invalid SMPTE division");
        }
        Timing::Timecode(fps, tpf)
    } else {
        if division == 0 {
            return malformed("zero ticks per quarter note");
        }
        Timing::Metrical(division)
    };

    let mut tracks = Vec::with_capacity(n_tracks.min(64));
    while tracks.len() < n_tracks {
        if r.remaining() < 8 {
            return malformed(format!(
                "expected {n_tracks} tracks, found {}",
                tracks.len()
            ));
        }
        let id = r.take(4)?;
        let len = r.u32()? as usize;
        let body = r.take(len)?;
        if id == b"MTrk" {
            tracks.push(parse_track(body, tracks.len())?);
        }
    }

    let tempos: Vec<(u64, u32)> = tracks.iter().flat_map(|t| t.tempos.iter().copied()).collect();
    let map = TempoMap::new(timing, tempos);

    let mut events: Vec<RawEvent> = tracks.iter().flat_map(|t| t.events.iter().copied()).collect();
    // stable: within a track, file order is kept for equal ticks
    events.sort_by_key(|e| (e.tick, e.track));

    let mut open: HashMap<(u8, u8), (u64, u8, usize)> = HashMap::new();
    let mut notes = Vec::new();
    let mut push = |pitch: u8, on: u64, off: u64, velocity: u8| {
        if off > on && (MIN_PITCH..=MAX_PITCH).contains(&pitch) {
            notes.push(Note::new(pitch, map.seconds(on), map.seconds(off), velocity));
        }
    };
    for e in &events {
        match e.kind {
            RawKind::On {
                channel,
                pitch,
                velocity,
            } => {
                // a re-strike closes the sounding note of the same key
                if let Some((on, vel, _)) = open.insert((channel, pitch), (e.tick, velocity, e.track)) {
                    push(pitch, on, e.tick, vel);
                }
            }
            RawKind::Off { channel, pitch } => {
                if let Some((on, vel, _)) = open.remove(&(channel, pitch)) {
                    push(pitch, on, e.tick, vel);
                }
            }
        }
    }
    let mut dangling: Vec<_> = open.into_iter().collect();
    dangling.sort_by_key(|&((c, p), (t, _, _))| (t, c, p));
    for ((_, pitch), (on, vel, track)) in dangling {
        let end = tracks[track].end_tick.max(on + 1);
        push(pitch, on, end, vel);
    }

    sort_notes(&mut notes);
    Ok(NoteList {
        notes,
        ticks_per_quarter: match timing {
            Timing::Metrical(tpq) => tpq,
            Timing::Timecode(..) => WRITE_TICKS_PER_QUARTER,
        },
        source_name: String::new(),
    })
}

fn write_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 5];
    let mut i = buf.len() - 1;
    buf[i] = (value & 0x7f) as u8;
    value >>= 7;
    while value > 0 {
        i -= 1;
        buf[i] = (value & 0x7f) as u8 | 0x80;
        value >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}

/// Writes a single-track format-0 file at 120 BPM and 480 ticks per quarter.
pub fn write_midi(notes: &NoteList) -> Vec<u8> {
    let tpq = WRITE_TICKS_PER_QUARTER;
    let ticks_per_second = tpq as f64 * 1e6 / DEFAULT_US_PER_QUARTER as f64;
    let to_tick = |s: f64| (s.max(0.0) * ticks_per_second).round() as u64;

    // (tick, order, status, pitch, velocity); note-offs sort before note-ons
    let mut events: Vec<(u64, u8, u8, u8, u8)> = Vec::with_capacity(notes.len() * 2);
    for n in &notes.notes {
        let on = to_tick(n.onset);
        let off = to_tick(n.offset).max(on + 1);
        events.push((on, 1, 0x90, n.pitch, n.velocity.max(1)));
        events.push((off, 0, 0x80, n.pitch, 0x40));
    }
    events.sort();

    let mut track = Vec::with_capacity(events.len() * 4 + 16);
    write_vlq(&mut track, 0);
    track.extend_from_slice(&[0xff, 0x51, 0x03]);
    track.extend_from_slice(&DEFAULT_US_PER_QUARTER.to_be_bytes()[1..]);
    let mut last = 0u64;
    for (tick, _, status, pitch, vel) in events {
        write_vlq(&mut track, (tick - last) as u32);
        track.extend_from_slice(&[status, pitch & 0x7f, vel & 0x7f]);
        last = tick;
    }
    write_vlq(&mut track, 0);
    track.extend_from_slice(&[0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&tpq.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}

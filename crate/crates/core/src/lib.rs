//! Emotion-conditioned piano music generation.
//!
//! Piano MIDI is encoded as a stream of note-on, note-off, time-shift and
//! velocity events. A GRU language model over that stream is conditioned at
//! every step on the upcoming pitch-class histogram and note density, so at
//! generation time a mode (major/minor) and a tempo (fast/slow) can be dialed
//! in to target one of four emotions: happy, tensional, sad or peaceful.

pub mod cli;
pub mod codec;
pub mod config;
pub mod eval;
pub mod exec;
pub mod features;
pub mod generation;
pub mod io;
pub mod midi;
pub mod nn;
pub mod toy;
pub mod training;

pub use codec::{decode, encode, EventSequence, PerformanceEvent};
pub use exec::Execution;
pub use features::Emotion;
pub use midi::{parse_midi, write_midi, Note, NoteList};
pub use nn::{Checkpoint, ConditioningMode};

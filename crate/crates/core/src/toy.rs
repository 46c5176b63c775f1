//! Synthetic piano pieces built from the emotion presets, used to exercise
//! training and conditioning without a real corpus.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::TIME_QUANTUM;
use crate::features::{emotion_preset, Emotion};
use crate::midi::{Note, NoteList};

/// A monophonic line in one octave from middle C: pitch classes drawn from
/// the emotion's preset weights, onsets on a regular grid whose spacing gives
/// the preset density per two seconds, one velocity per piece.
pub fn toy_piece(emotion: Emotion, tonic: usize, n_notes: usize, seed: u64) -> NoteList {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hist, density) = emotion_preset(emotion, tonic);
    let classes = WeightedIndex::new(hist.0).expect("preset has positive weight");
    let ioi_quanta = (2.0 / density as f64 / TIME_QUANTUM).round() as u64;
    let hold_quanta = (ioi_quanta * 3 / 4).max(1);
    let velocity = rng.gen_range(60..100u8);
    let notes = (0..n_notes as u64)
        .map(|i| {
            let pc = classes.sample(&mut rng) as u8;
            let onset = (i * ioi_quanta) as f64 * TIME_QUANTUM;
            let offset = (i * ioi_quanta + hold_quanta) as f64 * TIME_QUANTUM;
            Note::new(60 + pc, onset, offset, velocity)
        })
        .collect();
    NoteList::from_notes(notes).with_name(format!("toy-{emotion}-{seed}"))
}

/// Notes per piece so that fast and slow pieces both span several windows.
pub fn default_note_count(emotion: Emotion) -> usize {
    if emotion.is_fast() {
        100
    } else {
        60
    }
}

/// `per_emotion` pieces for each listed emotion, tonic C.
pub fn toy_corpus(emotions: &[Emotion], per_emotion: usize, seed: u64) -> Vec<(Emotion, NoteList)> {
    let mut out = Vec::with_capacity(emotions.len() * per_emotion);
    for (k, &e) in emotions.iter().enumerate() {
        for i in 0..per_emotion {
            let s = seed.wrapping_mul(1_000_003).wrapping_add((k * per_emotion + i) as u64);
            out.push((e, toy_piece(e, 0, default_note_count(e), s)));
        }
    }
    out
}

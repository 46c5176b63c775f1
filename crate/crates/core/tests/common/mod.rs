//! Helpers shared by the integration tests.
#![allow(dead_code)]

use emotionbox::codec::TIME_QUANTUM;
use emotionbox::nn::{cross_entropy, forward, loss_and_gradients, Dropout, ModelConfig, ModelParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use emotionbox::{Note, NoteList};
use rand::Rng;

/// Random note list that the event grid can represent: durations of at least
/// one quantum and no two notes of the same pitch sounding at once.
pub fn random_notes<R: Rng>(rng: &mut R, max_notes: usize, span: f64) -> NoteList {
    let n = rng.gen_range(0..=max_notes);
    let mut notes = Vec::with_capacity(n);
    let mut attempts = 0;
    while notes.len() < n && attempts < 20 * max_notes.max(1) {
        attempts += 1;
        let pitch = rng.gen_range(21..=108u8);
        let onset = rng.gen_range(0.0..span);
        let offset = onset + rng.gen_range(TIME_QUANTUM..4.0);
        let free = notes
            .iter()
            .filter(|m: &&Note| m.pitch == pitch)
            .all(|m| offset <= m.onset || onset >= m.offset);
        if !free {
            continue;
        }
        notes.push(Note::new(pitch, onset, offset, rng.gen_range(1..=127)));
    }
    NoteList::from_notes(notes)
}

/// Largest onset/offset error and velocity error after pairing notes of each
/// pitch in time order. `None` when the note counts per pitch differ.
pub fn roundtrip_errors(original: &NoteList, decoded: &NoteList) -> Option<(f64, u8)> {
    let mut time_err: f64 = 0.0;
    let mut vel_err = 0u8;
    for pitch in 21..=108u8 {
        let a: Vec<&Note> = original.notes.iter().filter(|n| n.pitch == pitch).collect();
        let b: Vec<&Note> = decoded.notes.iter().filter(|n| n.pitch == pitch).collect();
        if a.len() != b.len() {
            return None;
        }
        for (x, y) in a.iter().zip(&b) {
            time_err = time_err.max((x.onset - y.onset).abs()).max((x.offset - y.offset).abs());
            vel_err = vel_err.max(x.velocity.abs_diff(y.velocity));
        }
    }
    Some((time_err, vel_err))
}

/// `n_notes` notes cycling through `pattern`, one every `ioi` seconds, each
/// held for three quarters of the interval at a fixed velocity.
pub fn melody(pattern: &[u8], n_notes: usize, ioi: f64) -> NoteList {
    NoteList::from_notes(
        (0..n_notes)
            .map(|i| {
                let t = i as f64 * ioi;
                Note::new(pattern[i % pattern.len()], t, t + 0.75 * ioi, 72)
            })
            .collect(),
    )
}

/// C-major arpeggio, 80 notes: 320 events of which the first 200 form the
/// overfitting window.
pub fn arpeggio() -> NoteList {
    melody(&[60, 64, 67, 72], 80, 0.25)
}

/// For every epoch `e >= 10` with `e + 20` in range, the loss twenty epochs
/// later is at most 5 % above `losses[e]`. Returns the offending epochs.
pub fn non_decreasing_spans(losses: &[f64]) -> Vec<usize> {
    (10..losses.len().saturating_sub(20))
        .filter(|&e| losses[e + 20] > 1.05 * losses[e])
        .collect()
}

/// Central-difference step of the gradient check.
pub const STEP: f64 = 1e-4;
/// Denominator floor so that parameters with vanishing gradients are compared
/// on an absolute scale.
pub const FLOOR: f64 = 1e-6;

pub fn small_config() -> ModelConfig {
    ModelConfig {
        vocab: 6,
        hidden: 4,
        conditioning_dim: 3,
        layers: 3,
        dropout: 0.3,
    }
}

fn loss_at(p: &ModelParams<f64>, idx: &[usize], cond: &[f64], tgt: &[usize], d: Dropout) -> f64 {
    let tr = forward(p, idx, cond, d).unwrap();
    cross_entropy(&tr.logits, p.config.vocab, tgt).unwrap()
}

/// Largest relative error between analytic and central-difference gradients
/// over every parameter, with the name of the worst tensor.
pub fn max_relative_error(seed: u64, dropout: Dropout) -> (f64, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = small_config();
    let params = ModelParams::<f64>::init(cfg, &mut rng);
    let idx: Vec<usize> = (0..5).map(|_| rng.gen_range(0..6)).collect();
    let tgt: Vec<usize> = (0..5).map(|_| rng.gen_range(0..6)).collect();
    let cond: Vec<f64> = (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (_, grads) = loss_and_gradients(&params, &idx, &cond, &tgt, dropout).unwrap();
    let names = params.tensor_names();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();

    let mut worst = (0.0, String::new());
    let mut p = params.clone();
    for (k, name) in names.iter().enumerate() {
        for i in 0..analytic[k].len() {
            let orig = p.tensors()[k][i];
            p.tensors_mut()[k][i] = orig + STEP;
            let up = loss_at(&p, &idx, &cond, &tgt, dropout);
            p.tensors_mut()[k][i] = orig - STEP;
            let down = loss_at(&p, &idx, &cond, &tgt, dropout);
            p.tensors_mut()[k][i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let a = analytic[k][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{i}] analytic {a:e} numeric {numeric:e}"));
            }
        }
    }
    worst
}


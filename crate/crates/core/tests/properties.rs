mod common;

use common::{random_notes, roundtrip_errors};
use emotionbox::codec::{decode, encode, event_index, index_to_event, EventSequence, PerformanceEvent, TIME_QUANTUM};
use emotionbox::eval::adherence;
use emotionbox::features::{
    conditioning_row, conditioning_track, emotion_preset, mean_density, normalize, note_density, pitch_histogram,
    Emotion, PitchHistogram, CONDITIONING_DIM, FEATURE_WINDOW,
};
use emotionbox::generation::{argmax, sample_next, SamplerConfig};
use emotionbox::midi::{parse_midi, write_midi, WRITE_TICKS_PER_QUARTER};
use emotionbox::nn::{gru_cell, AdamState, Checkpoint, ConditioningMode, GruLayerParams, ModelConfig, ModelParams};
use emotionbox::training::{label_conditioning, make_windows, window_count, TrainingConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Half a tick at 120 BPM and the writer's resolution.
const HALF_TICK: f64 = 0.5 * 0.5 / WRITE_TICKS_PER_QUARTER as f64;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn emotion() -> impl Strategy<Value = Emotion> {
    prop::sample::select(Emotion::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn midi_roundtrip_within_half_tick(seed in any::<u64>()) {
        let notes = random_notes(&mut rng(seed), 100, 60.0);
        let back = parse_midi(&write_midi(&notes)).unwrap();
        let (dt, dv) = roundtrip_errors(&notes, &back).expect("same notes per pitch");
        prop_assert!(dt <= HALF_TICK + 1e-9, "time error {dt}");
        prop_assert_eq!(dv, 0);
    }

    #[test]
    fn parse_midi_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = parse_midi(&bytes);
    }

    #[test]
    fn parse_midi_survives_corrupted_files(seed in any::<u64>(), flips in prop::collection::vec((any::<usize>(), any::<u8>()), 1..8)) {
        let mut bytes = write_midi(&random_notes(&mut rng(seed), 20, 10.0));
        for (pos, val) in flips {
            let i = pos % bytes.len();
            bytes[i] = val;
        }
        let _ = parse_midi(&bytes);
        let cut = seed as usize % bytes.len();
        let _ = parse_midi(&bytes[..cut]);
    }

    #[test]
    fn codec_roundtrip_within_half_quantum(seed in any::<u64>()) {
        let notes = random_notes(&mut rng(seed), 200, 30.0);
        let back = decode(&encode(&notes));
        let (dt, dv) = roundtrip_errors(&notes, &back).expect("same notes per pitch");
        prop_assert!(dt <= TIME_QUANTUM / 2.0 + 1e-9, "time error {dt}");
        prop_assert!(dv <= 2, "velocity error {dv}");
    }

    #[test]
    fn decode_is_total(indices in prop::collection::vec(0usize..240, 0..400)) {
        let seq = EventSequence::from_indices(&indices).unwrap();
        let notes = decode(&seq);
        for w in notes.notes.windows(2) {
            prop_assert!((w[0].onset, w[0].pitch) <= (w[1].onset, w[1].pitch));
        }
        for n in &notes.notes {
            prop_assert!(n.is_valid(), "{n:?}");
        }
    }

    #[test]
    fn normalize_is_idempotent(w in prop::array::uniform12(prop_oneof![Just(0.0), 0.0..50.0f64])) {
        let once = normalize(&PitchHistogram(w));
        let twice = normalize(&once);
        for (a, b) in once.0.iter().zip(&twice.0) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        if !once.is_zero() {
            prop_assert!((once.total() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn transposition_rotates_histogram(seed in any::<u64>(), k in 0usize..12, t in 0.0..20.0f64) {
        let notes = random_notes(&mut rng(seed), 60, 20.0);
        let low = emotionbox::NoteList::from_notes(notes.notes.iter().filter(|n| n.pitch <= 96).cloned().collect());
        let up = low.transposed(k as i32);
        prop_assert_eq!(up.len(), low.len());
        prop_assert_eq!(pitch_histogram(&up, t, FEATURE_WINDOW), pitch_histogram(&low, t, FEATURE_WINDOW).rotate(k));
    }

    #[test]
    fn presets_rotate_with_tonic(e in emotion(), k in 0usize..12) {
        let (base, d0) = emotion_preset(e, 0);
        let (rotated, d) = emotion_preset(e, k);
        prop_assert_eq!(d, d0);
        for i in 0..12 {
            prop_assert_eq!(rotated.0[(i + k) % 12], base.0[i]);
        }
    }

    #[test]
    fn note_density_matches_brute_force(seed in any::<u64>(), t in -1.0..25.0f64) {
        let notes = random_notes(&mut rng(seed), 20, 20.0);
        let brute = notes.notes.iter().filter(|n| t <= n.onset && n.onset < t + 2.0).count() as u32;
        prop_assert_eq!(note_density(&notes, t, 2.0), brute);
    }

    #[test]
    fn conditioning_track_matches_brute_force(seed in any::<u64>()) {
        let notes = random_notes(&mut rng(seed), 40, 15.0);
        let events = encode(&notes);
        let track = conditioning_track(&notes, &events);
        prop_assert_eq!(track.len(), events.len());
        // replay the clock independently of EventSequence::event_times
        let mut clock = 0.0;
        for (row, e) in track.iter().zip(&events.events) {
            let mut counts = [0.0; 12];
            let mut n = 0;
            for note in &notes.notes {
                if note.onset >= clock && note.onset < clock + 2.0 {
                    counts[(note.pitch % 12) as usize] += 1.0;
                    n += 1;
                }
            }
            prop_assert_eq!(row, &conditioning_row(&PitchHistogram(counts), n));
            prop_assert_eq!(row.0.len(), CONDITIONING_DIM);
            prop_assert_eq!(row.density_onehot().iter().sum::<f32>(), 1.0);
            prop_assert_eq!(row.0[CONDITIONING_DIM - 1], 0.0);
            if let PerformanceEvent::TimeShift(k) = e {
                clock += *k as f64 * TIME_QUANTUM;
            }
        }
    }

    #[test]
    fn adherence_matches_brute_force(seed in any::<u64>(), e in emotion(), tonic in 0usize..12) {
        let mut r = rng(seed);
        let notes = random_notes(&mut r, 50, 20.0);
        let seq = encode(&notes);
        let preset = emotion_preset(e, tonic);
        let report = adherence(&seq, &preset);
        let decoded = decode(&seq);
        prop_assert_eq!(report.n_notes, decoded.len());
        if decoded.is_empty() {
            prop_assert!(report.out_of_scale_fraction.is_none() && report.histogram_l1.is_none());
        } else {
            let outside = decoded.notes.iter().filter(|n| preset.0 .0[(n.pitch % 12) as usize] == 0.0).count();
            let oos = outside as f64 / decoded.len() as f64;
            prop_assert!((report.out_of_scale_fraction.unwrap() - oos).abs() < 1e-12);
            let mut counts = [0.0; 12];
            for n in &decoded.notes {
                counts[(n.pitch % 12) as usize] += 1.0;
            }
            let total_w: f64 = preset.0 .0.iter().sum();
            let l1: f64 = (0..12).map(|i| (counts[i] / decoded.len() as f64 - preset.0 .0[i] / total_w).abs()).sum();
            prop_assert!((report.histogram_l1.unwrap() - l1).abs() < 1e-12);
            // density windows [t, t+2) at t = 0, 0.5, ... ending inside the piece
            let end = decoded.notes.iter().map(|n| n.offset).fold(0.0, f64::max);
            let mut starts = vec![0.0];
            let mut t = 0.5;
            while t + 2.0 <= end + 1e-12 {
                starts.push(t);
                t += 0.5;
            }
            let md = starts
                .iter()
                .map(|&s| decoded.notes.iter().filter(|n| n.onset >= s && n.onset < s + 2.0).count() as f64)
                .sum::<f64>() / starts.len() as f64;
            prop_assert!((report.mean_density - md).abs() < 1e-9, "{} vs {md}", report.mean_density);
            prop_assert!((report.density_abs_error - (md - preset.1 as f64).abs()).abs() < 1e-9);
        }
        prop_assert_eq!(adherence(&seq, &preset), report);
    }

    #[test]
    fn trailing_silence_keeps_pitch_metrics(seed in any::<u64>(), pad in 1usize..40, e in emotion()) {
        let mut seq = encode(&random_notes(&mut rng(seed), 30, 10.0));
        let preset = emotion_preset(e, 0);
        let before = adherence(&seq, &preset);
        seq.events.extend(std::iter::repeat_n(PerformanceEvent::TimeShift(32), pad));
        let after = adherence(&seq, &preset);
        prop_assert_eq!(after.out_of_scale_fraction, before.out_of_scale_fraction);
        prop_assert_eq!(after.histogram_l1, before.histogram_l1);
        prop_assert_eq!(after.n_notes, before.n_notes);
    }

    #[test]
    fn windows_follow_the_stride_formula(len in 0usize..1200, seed in any::<u64>()) {
        let mut r = rng(seed);
        let events: Vec<usize> = (0..len).map(|_| r.gen_range(0..240)).collect();
        let rows: Vec<[f32; 1]> = (0..len).map(|i| [i as f32]).collect();
        let cfg = TrainingConfig::default();
        let windows = make_windows(&events, &rows, &cfg);
        let expected = if len < 200 { 0 } else { (len - 200) / 10 + 1 };
        prop_assert_eq!(windows.len(), expected);
        prop_assert_eq!(window_count(len, 200, 10), expected);
        for (w, ex) in windows.iter().enumerate() {
            let start = w * 10;
            prop_assert_eq!(ex.input.len(), 199);
            for i in 0..199 {
                prop_assert_eq!(ex.input[i], events[start + i]);
                prop_assert_eq!(ex.target[i], events[start + i + 1]);
                prop_assert_eq!(ex.conditioning[i], (start + i) as f32);
            }
        }
    }

    #[test]
    fn checkpoint_bytes_roundtrip(seed in any::<u64>(), hidden in 1usize..6, labels in any::<bool>(), step in 0u64..1000) {
        let mode = if labels { ConditioningMode::Labels } else { ConditioningMode::Features };
        let params = ModelParams::init(mode.model_config().with_hidden(hidden), &mut rng(seed));
        let mut adam = AdamState::for_params(&params, 1e-3);
        adam.step = step;
        adam.m[1][0] = seed as f32;
        let ck = Checkpoint { mode, params, adam, seed, epochs_completed: step as u32 };
        prop_assert_eq!(Checkpoint::from_bytes(&ck.to_bytes()).unwrap(), ck);
    }

    #[test]
    fn gru_output_is_bounded(seed in any::<u64>(), scale in 0.1..5.0f64) {
        let mut r = rng(seed);
        let mut p = GruLayerParams::<f64>::zeros(3, 4);
        for t in p.tensors_mut() {
            for v in t.iter_mut() {
                *v = r.gen_range(-scale..scale);
            }
        }
        let x: Vec<f64> = (0..3).map(|_| r.gen_range(-3.0..3.0)).collect();
        let h: Vec<f64> = (0..4).map(|_| r.gen_range(-2.0..2.0)).collect();
        let out = gru_cell(&x, &h, &p);
        for (o, hp) in out.iter().zip(&h) {
            prop_assert!(o.abs() <= hp.abs().max(1.0) + 1e-12);
        }
    }

    #[test]
    fn greedy_threshold_is_argmax(logits in prop::collection::vec((-3i32..3).prop_map(|v| v as f32), 240), seed in any::<u64>()) {
        let cfg = SamplerConfig { threshold: 0.0, ..Default::default() };
        let pick = sample_next(&logits, &cfg, &mut rng(seed));
        prop_assert_eq!(pick, argmax(&logits));
        let first_max = logits.iter().position(|&v| v == logits[pick]).unwrap();
        prop_assert_eq!(pick, first_max);
    }

    #[test]
    fn label_rows_recover_the_label(e in emotion(), len in 1usize..50) {
        let rows = label_conditioning(e, len);
        prop_assert_eq!(rows.len(), len);
        for r in rows {
            let hot = r.iter().position(|&v| v == 1.0).unwrap();
            prop_assert_eq!(hot, e.index());
            prop_assert_eq!(r.iter().sum::<f32>(), 1.0);
        }
    }
}

#[test]
fn event_index_is_a_bijection() {
    for i in 0..240 {
        assert_eq!(event_index(index_to_event(i).unwrap()), i);
    }
    assert!(index_to_event(240).is_err());
}

#[test]
fn preset_arousal_ordering() {
    let d = |e| emotion_preset(e, 0).1;
    assert_eq!(d(Emotion::Happy), d(Emotion::Tensional));
    assert_eq!(d(Emotion::Sad), d(Emotion::Peaceful));
    assert!(d(Emotion::Happy) > d(Emotion::Sad));
}

#[test]
fn mean_density_of_silence_is_zero() {
    assert_eq!(mean_density(&emotionbox::NoteList::default(), FEATURE_WINDOW, 0.5), 0.0);
}

#[test]
fn small_config_is_consistent() {
    let c = ModelConfig { vocab: 6, hidden: 4, conditioning_dim: 3, layers: 3, dropout: 0.3 };
    assert_eq!(ModelParams::<f32>::zeros(c).parameter_count(), c.parameter_count());
}

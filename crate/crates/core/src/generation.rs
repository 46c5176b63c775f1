//! Autoregressive sampling under a fixed emotion.

use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{decode, note_on_indices, EventSequence};
use crate::features::{conditioning_row, emotion_preset, Emotion};
use crate::midi::write_midi;
use crate::nn::loss::softmax_f64;
use crate::nn::{Checkpoint, ConditioningMode, InferenceState, ModelError, ModelParams};
use crate::training::label_conditioning;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    /// Probability of drawing from the distribution instead of taking the argmax.
    pub threshold: f64,
    pub temperature: f64,
    pub max_events: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            threshold: 0.9,
            temperature: 1.0,
            max_events: 600,
            seed: 0,
        }
    }
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax(logits: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Draws `u` uniform in `[0, 1)`. When `u >= threshold` the argmax is taken,
/// otherwise an index is sampled from `softmax(logits / temperature)`.
pub fn sample_next<R: Rng + ?Sized>(logits: &[f32], cfg: &SamplerConfig, rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    if u >= cfg.threshold {
        return argmax(logits);
    }
    let t = cfg.temperature.max(f64::MIN_POSITIVE);
    let scaled: Vec<f64> = logits.iter().map(|&l| l as f64 / t).collect();
    let probs = softmax_f64(&scaled);
    match WeightedIndex::new(&probs) {
        Ok(dist) => dist.sample(rng),
        Err(_) => argmax(logits),
    }
}

/// The conditioning row held fixed for a whole generated piece.
pub fn generation_conditioning(mode: ConditioningMode, emotion: Emotion, tonic: usize) -> Vec<f32> {
    match mode {
        ConditioningMode::Features => {
            let (h, d) = emotion_preset(emotion, tonic);
            conditioning_row(&h, d).0.to_vec()
        }
        ConditioningMode::Labels => label_conditioning(emotion, 1)[0].to_vec(),
    }
}

/// Generates up to `cfg.max_events` events. `observe` is called with the
/// conditioning row fed at every model step.
pub fn generate_with<F>(
    params: &ModelParams<f32>,
    mode: ConditioningMode,
    emotion: Emotion,
    tonic: usize,
    cfg: &SamplerConfig,
    mut observe: F,
) -> Result<EventSequence, ModelError>
where
    F: FnMut(&[f32]),
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cond = generation_conditioning(mode, emotion, tonic);
    let mut state = InferenceState::new(params);
    let mut indices = Vec::with_capacity(cfg.max_events);
    if cfg.max_events == 0 {
        return Ok(EventSequence::default());
    }
    indices.push(rng.gen_range(note_on_indices()));
    while indices.len() < cfg.max_events {
        observe(&cond);
        let logits = state.step(params, *indices.last().unwrap(), &cond)?;
        indices.push(sample_next(&logits, cfg, &mut rng));
    }
    Ok(EventSequence::from_indices(&indices).expect("sampled indices lie in the vocabulary"))
}

pub fn generate(ckpt: &Checkpoint, emotion: Emotion, tonic: usize, cfg: &SamplerConfig) -> Result<EventSequence, ModelError> {
    generate_with(&ckpt.params, ckpt.mode, emotion, tonic, cfg, |_| {})
}

/// Generates, decodes and writes a MIDI file; returns the file bytes.
pub fn generate_to_midi(
    ckpt: &Checkpoint,
    emotion: Emotion,
    tonic: usize,
    cfg: &SamplerConfig,
    out: &Path,
) -> anyhow::Result<Vec<u8>> {
    let events = generate(ckpt, emotion, tonic, cfg)?;
    let bytes = write_midi(&decode(&events));
    crate::io::write_atomic(out, &bytes)?;
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::PerformanceEvent;
    use crate::nn::{AdamState, ModelConfig};

    fn tiny_checkpoint(mode: ConditioningMode) -> Checkpoint {
        let cfg = mode.model_config().with_hidden(8);
        let params = ModelParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(1));
        Checkpoint {
            mode,
            adam: AdamState::for_params(&params, 1e-3),
            params,
            seed: 1,
            epochs_completed: 0,
        }
    }

    #[test]
    fn zero_threshold_is_greedy() {
        let mut logits = vec![0.0f32; 240];
        logits[7] = 2.0;
        let cfg = SamplerConfig {
            threshold: 0.0,
            ..Default::default()
        };
        for seed in 0..50 {
            assert_eq!(sample_next(&logits, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)), 7);
        }
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 0.0]), 1);
    }

    #[test]
    fn cold_temperature_approaches_argmax() {
        let logits: Vec<f32> = (0..240).map(|i| ((i * 37) % 240) as f32 / 50.0).collect();
        let cfg = SamplerConfig {
            threshold: 1.0,
            temperature: 1e-4,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(sample_next(&logits, &cfg, &mut rng), argmax(&logits));
        }
    }

    #[test]
    fn single_event_is_note_on() {
        let ck = tiny_checkpoint(ConditioningMode::Features);
        let cfg = SamplerConfig {
            max_events: 1,
            ..Default::default()
        };
        let seq = generate(&ck, Emotion::Happy, 0, &cfg).unwrap();
        assert_eq!(seq.len(), 1);
        assert!(matches!(seq.events[0], PerformanceEvent::NoteOn(_)));
    }

    #[test]
    fn generation_is_seeded_and_conditioning_constant() {
        for mode in [ConditioningMode::Features, ConditioningMode::Labels] {
            let ck = tiny_checkpoint(mode);
            let cfg = SamplerConfig {
                max_events: 50,
                seed: 11,
                ..Default::default()
            };
            let mut seen: Vec<Vec<f32>> = Vec::new();
            let a = generate_with(&ck.params, mode, Emotion::Sad, 0, &cfg, |c| seen.push(c.to_vec())).unwrap();
            let b = generate(&ck, Emotion::Sad, 0, &cfg).unwrap();
            assert_eq!(a, b);
            assert_eq!(seen.len(), 49);
            assert!(seen.iter().all(|c| *c == seen[0]));
            assert_eq!(seen[0].len(), mode.dim());
        }
    }

    #[test]
    fn label_mode_uses_label_width() {
        assert_eq!(ModelConfig::labels().conditioning_dim, 4);
        assert_eq!(
            generation_conditioning(ConditioningMode::Labels, Emotion::Peaceful, 0),
            vec![0.0, 0.0, 0.0, 1.0]
        );
    }
}

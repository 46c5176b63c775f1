//! Corpus slicing and the optimization loop.

use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::encode;
use crate::exec::{map_ordered, Execution};
use crate::features::{conditioning_track, emotion_preset, piece_summary, Emotion, FAST_DENSITY, SLOW_DENSITY};
use crate::midi::{parse_midi, NoteList};
use crate::nn::{
    adam_step, backward_into, forward, AdamState, Checkpoint, CheckpointError, ConditioningMode, Dropout,
    ModelError, ModelParams,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("corpus yields no training windows")]
    EmptyCorpus,
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub window_len: usize,
    pub stride: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub mode: ConditioningMode,
    pub hidden: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            window_len: 200,
            stride: 10,
            batch_size: 64,
            epochs: 100,
            lr: crate::nn::adam::DEFAULT_LR,
            seed: 0,
            mode: ConditioningMode::Features,
            hidden: 512,
        }
    }
}

/// One window: `input[i]` is followed by `target[i]` in the source piece.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub input: Vec<usize>,
    pub target: Vec<usize>,
    /// `input.len() × conditioning_dim`, row-major
    pub conditioning: Vec<f32>,
}

impl TrainingExample {
    pub fn steps(&self) -> usize {
        self.input.len()
    }
}

/// Number of windows a piece of `len` events yields.
pub fn window_count(len: usize, window_len: usize, stride: usize) -> usize {
    if len < window_len {
        0
    } else {
        (len - window_len) / stride + 1
    }
}

/// Slices a piece into overlapping windows of `cfg.window_len` events starting
/// every `cfg.stride` events. Each window drops its last event from the input
/// and its first from the target. Pieces shorter than a window yield nothing.
pub fn make_windows<R: AsRef<[f32]>>(events: &[usize], conditioning: &[R], cfg: &TrainingConfig) -> Vec<TrainingExample> {
    assert_eq!(events.len(), conditioning.len(), "one conditioning row per event");
    assert!(cfg.window_len > 1 && cfg.stride >= 1);
    let n = window_count(events.len(), cfg.window_len, cfg.stride);
    (0..n)
        .map(|w| {
            let start = w * cfg.stride;
            let window = &events[start..start + cfg.window_len];
            TrainingExample {
                input: window[..cfg.window_len - 1].to_vec(),
                target: window[1..].to_vec(),
                conditioning: conditioning[start..start + cfg.window_len - 1]
                    .iter()
                    .flat_map(|r| r.as_ref().iter().copied())
                    .collect(),
            }
        })
        .collect()
}

/// Emotion one-hot (order happy, tensional, sad, peaceful) repeated `len` times.
pub fn label_conditioning(label: Emotion, len: usize) -> Vec<[f32; 4]> {
    let mut row = [0.0; 4];
    row[label.index()] = 1.0;
    vec![row; len]
}

/// Assigns the emotion whose preset best matches a piece: the mode whose
/// template (at its best tonic) is nearest in L1 to the piece's pitch-class
/// distribution, and fast when the mean density is at least halfway between
/// the slow and fast presets.
pub fn infer_label(notes: &NoteList) -> Emotion {
    let summary = piece_summary(notes);
    let best = |e: Emotion| {
        (0..12)
            .map(|k| emotion_preset(e, k).0.normalize().l1_distance(&summary.histogram))
            .fold(f64::INFINITY, f64::min)
    };
    let major = best(Emotion::Happy) <= best(Emotion::Sad);
    let fast = summary.mean_density >= (FAST_DENSITY + SLOW_DENSITY) as f64 / 2.0;
    Emotion::from_mode_and_tempo(major, fast)
}

/// Encodes a piece and builds its training windows under `cfg.mode`.
/// `label` overrides [`infer_label`] in label mode.
pub fn piece_examples(notes: &NoteList, label: Option<Emotion>, cfg: &TrainingConfig) -> Vec<TrainingExample> {
    let events = encode(notes);
    let indices = events.indices();
    match cfg.mode {
        ConditioningMode::Features => make_windows(&indices, &conditioning_track(notes, &events), cfg),
        ConditioningMode::Labels => {
            let label = label.unwrap_or_else(|| infer_label(notes));
            make_windows(&indices, &label_conditioning(label, indices.len()), cfg)
        }
    }
}

/// Windows for many pieces, prepared concurrently, concatenated in input order.
pub fn corpus_examples(pieces: &[NoteList], cfg: &TrainingConfig, exec: Execution) -> Vec<TrainingExample> {
    map_ordered(pieces, exec, |p| piece_examples(p, None, cfg))
        .into_iter()
        .flatten()
        .collect()
}

/// Reads every `.mid`/`.midi` file in `dir` (sorted by name). Files that fail
/// to parse are skipped with a warning.
pub fn load_corpus(dir: &Path) -> Result<Vec<NoteList>, TrainError> {
    let io_err = |source| TrainError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"))
        })
        .collect();
    paths.sort();
    let mut pieces = Vec::with_capacity(paths.len());
    for path in paths {
        let bytes = std::fs::read(&path).map_err(|source| TrainError::Io {
            path: path.clone(),
            source,
        })?;
        match parse_midi(&bytes) {
            Ok(notes) => pieces.push(notes.with_name(path.display().to_string())),
            Err(e) => warn!("skipping {}: {e}", path.display()),
        }
    }
    Ok(pieces)
}

/// Mean loss and mean gradient over a batch.
///
/// The batch is split into at most eight fixed chunks whose partial sums are
/// added in order, so the result does not depend on the execution mode or the
/// number of threads.
pub fn batch_gradients(
    params: &ModelParams<f32>,
    batch: &[&TrainingExample],
    dropout_seeds: &[u64],
    exec: Execution,
) -> Result<(f64, ModelParams<f32>), ModelError> {
    assert_eq!(batch.len(), dropout_seeds.len());
    let scale = 1.0 / batch.len().max(1) as f64;
    let chunk = batch.len().div_ceil(8).max(1);
    let jobs: Vec<(&[&TrainingExample], &[u64])> = batch.chunks(chunk).zip(dropout_seeds.chunks(chunk)).collect();
    let partials = map_ordered(&jobs, exec, |(examples, seeds)| {
        let mut grads = params.zeros_like();
        let mut loss = 0.0;
        for (ex, &seed) in examples.iter().zip(seeds.iter()) {
            let trace = forward(params, &ex.input, &ex.conditioning, Dropout::On { seed })?;
            loss += backward_into(params, &trace, &ex.target, scale, &mut grads)?;
        }
        Ok::<_, ModelError>((loss, grads))
    });
    let mut total = params.zeros_like();
    let mut loss = 0.0;
    for part in partials {
        let (l, g) = part?;
        loss += l;
        total.add_assign(&g);
    }
    Ok((loss * scale, total))
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
}

/// Freshly initialized checkpoint for `cfg`, with the generator that continues
/// the seeded stream (used for shuffling and dropout).
pub fn initial_checkpoint(cfg: &TrainingConfig) -> (Checkpoint, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let config = cfg.mode.model_config().with_hidden(cfg.hidden);
    let params = ModelParams::init(config, &mut rng);
    let adam = AdamState::for_params(&params, cfg.lr);
    (
        Checkpoint {
            mode: cfg.mode,
            params,
            adam,
            seed: cfg.seed,
            epochs_completed: 0,
        },
        rng,
    )
}

/// Runs `cfg.epochs` epochs over `examples`. `on_epoch` sees the checkpoint
/// and mean loss after every epoch.
pub fn train_examples<F>(
    examples: &[TrainingExample],
    cfg: &TrainingConfig,
    exec: Execution,
    mut on_epoch: F,
) -> Result<TrainOutcome, TrainError>
where
    F: FnMut(&Checkpoint, usize, f64) -> Result<(), TrainError>,
{
    if examples.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let (mut ck, mut rng) = initial_checkpoint(cfg);
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for idx in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<&TrainingExample> = idx.iter().map(|&i| &examples[i]).collect();
            let seeds: Vec<u64> = (0..batch.len()).map(|_| rng.gen()).collect();
            let (loss, grads) = batch_gradients(&ck.params, &batch, &seeds, exec)?;
            adam_step(&mut ck.params, &grads, &mut ck.adam);
            epoch_loss += loss * batch.len() as f64;
        }
        let mean = epoch_loss / examples.len() as f64;
        ck.epochs_completed = epoch as u32;
        losses.push(mean);
        info!("epoch {epoch}: mean loss {mean:.4}");
        on_epoch(&ck, epoch, mean)?;
    }
    Ok(TrainOutcome { checkpoint: ck, losses })
}

/// `model.ckpt` → `model.loss.csv`
pub fn loss_log_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("loss.csv")
}

pub fn loss_log_csv(losses: &[f64]) -> String {
    let mut s = String::from("epoch,mean_loss\n");
    for (i, l) in losses.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, l));
    }
    s
}

/// Trains on every MIDI file in `corpus`, writing the checkpoint and the loss
/// log (see [`loss_log_path`]) after each epoch.
pub fn train(corpus: &Path, cfg: &TrainingConfig, checkpoint_out: &Path, exec: Execution) -> Result<TrainOutcome, TrainError> {
    let pieces = load_corpus(corpus)?;
    let examples = corpus_examples(&pieces, cfg, exec);
    info!("{} pieces, {} windows", pieces.len(), examples.len());
    if examples.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let log_path = loss_log_path(checkpoint_out);
    let write = |ck: &Checkpoint, losses: &[f64]| -> Result<(), TrainError> {
        ck.save(checkpoint_out)?;
        crate::io::write_atomic(&log_path, loss_log_csv(losses).as_bytes()).map_err(|source| TrainError::Io {
            path: log_path.clone(),
            source,
        })
    };
    if cfg.epochs == 0 {
        let (ck, _) = initial_checkpoint(cfg);
        write(&ck, &[])?;
        return Ok(TrainOutcome {
            checkpoint: ck,
            losses: Vec::new(),
        });
    }
    let mut so_far = Vec::new();
    train_examples(&examples, cfg, exec, |ck, _, loss| {
        so_far.push(loss);
        write(ck, &so_far)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{ConditioningRow, CONDITIONING_DIM};

    fn rows(n: usize) -> Vec<ConditioningRow> {
        (0..n)
            .map(|i| {
                let mut r = [0.0; CONDITIONING_DIM];
                r[0] = i as f32;
                ConditioningRow(r)
            })
            .collect()
    }

    #[test]
    fn window_counts() {
        let cfg = TrainingConfig::default();
        for (len, expected) in [(150, 0), (200, 1), (230, 4), (1000, 81)] {
            let events: Vec<usize> = (0..len).map(|i| i % 240).collect();
            assert_eq!(make_windows(&events, &rows(len), &cfg).len(), expected, "length {len}");
            assert_eq!(window_count(len, 200, 10), expected);
        }
    }

    #[test]
    fn windows_shift_targets_and_align_conditioning() {
        let cfg = TrainingConfig {
            window_len: 5,
            stride: 2,
            ..Default::default()
        };
        let events: Vec<usize> = (0..9).collect();
        let w = make_windows(&events, &rows(9), &cfg);
        assert_eq!(w.len(), 3);
        for (k, ex) in w.iter().enumerate() {
            let start = 2 * k;
            assert_eq!(ex.input, (start..start + 4).collect::<Vec<_>>());
            assert_eq!(ex.target, (start + 1..start + 5).collect::<Vec<_>>());
            assert_eq!(ex.conditioning.len(), 4 * CONDITIONING_DIM);
            assert_eq!(ex.conditioning[0], start as f32);
        }
    }

    #[test]
    fn label_rows() {
        assert_eq!(label_conditioning(Emotion::Happy, 3), vec![[1.0, 0.0, 0.0, 0.0]; 3]);
        assert_eq!(label_conditioning(Emotion::Sad, 1), vec![[0.0, 0.0, 1.0, 0.0]]);
        for e in Emotion::ALL {
            let row = label_conditioning(e, 1)[0];
            let argmax = (0..4).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(argmax, e.index());
        }
    }

    #[test]
    fn empty_examples_rejected() {
        let r = train_examples(&[], &TrainingConfig::default(), Execution::Sequential, |_, _, _| Ok(()));
        assert!(matches!(r, Err(TrainError::EmptyCorpus)));
    }

    #[test]
    fn loss_log_format() {
        assert_eq!(loss_log_csv(&[]), "epoch,mean_loss\n");
        assert_eq!(loss_log_csv(&[1.5, 0.25]), "epoch,mean_loss\n1,1.5\n2,0.25\n");
        assert_eq!(loss_log_path(Path::new("out/m.ckpt")), PathBuf::from("out/m.loss.csv"));
    }
}

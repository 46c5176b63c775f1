//! Objective adherence metrics for generated pieces and the
//! feature-conditioned vs. label-conditioned comparison.

use crate::codec::{decode, EventSequence};
use crate::exec::{map_ordered, Execution};
use crate::features::{emotion_preset, mean_density, pitch_histogram, Emotion, PitchHistogram, FEATURE_WINDOW};
use crate::generation::{generate, SamplerConfig};
use crate::nn::{Checkpoint, ModelError};

/// Step between density windows.
pub const DENSITY_STEP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdherenceReport {
    /// Share of notes whose pitch class has zero preset weight; `None` when
    /// the piece has no notes.
    pub out_of_scale_fraction: Option<f64>,
    pub mean_density: f64,
    pub density_abs_error: f64,
    /// L1 distance between normalized pitch-class distributions; `None` when
    /// the piece has no notes.
    pub histogram_l1: Option<f64>,
    pub n_notes: usize,
}

/// Measures a generated sequence against a (histogram, density) preset.
pub fn adherence(seq: &EventSequence, preset: &(PitchHistogram, u32)) -> AdherenceReport {
    let (hist, density) = preset;
    let notes = decode(seq);
    let n_notes = notes.len();
    let md = if n_notes == 0 {
        0.0
    } else {
        mean_density(&notes, FEATURE_WINDOW, DENSITY_STEP)
    };
    let (oos, l1) = if n_notes == 0 {
        (None, None)
    } else {
        let outside = notes.notes.iter().filter(|n| hist.0[n.pitch_class()] == 0.0).count();
        let generated = pitch_histogram(&notes, 0.0, f64::INFINITY).normalize();
        (
            Some(outside as f64 / n_notes as f64),
            Some(generated.l1_distance(&hist.normalize())),
        )
    };
    AdherenceReport {
        out_of_scale_fraction: oos,
        mean_density: md,
        density_abs_error: (md - *density as f64).abs(),
        histogram_l1: l1,
        n_notes,
    }
}

/// Field-wise mean of reports; optional fields average over pieces that have them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanReport {
    pub out_of_scale_fraction: Option<f64>,
    pub mean_density: f64,
    pub density_abs_error: f64,
    pub histogram_l1: Option<f64>,
    pub n_notes: f64,
}

impl MeanReport {
    pub fn of(reports: &[AdherenceReport]) -> Option<MeanReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let opt_mean = |f: fn(&AdherenceReport) -> Option<f64>| {
            let v: Vec<f64> = reports.iter().filter_map(f).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        Some(MeanReport {
            out_of_scale_fraction: opt_mean(|r| r.out_of_scale_fraction),
            mean_density: reports.iter().map(|r| r.mean_density).sum::<f64>() / n,
            density_abs_error: reports.iter().map(|r| r.density_abs_error).sum::<f64>() / n,
            histogram_l1: opt_mean(|r| r.histogram_l1),
            n_notes: reports.iter().map(|r| r.n_notes as f64).sum::<f64>() / n,
        })
    }
}

/// Generates `n_samples` pieces for `emotion` (seeds `cfg.seed`, `cfg.seed + 1`,
/// ...) and reports each against the emotion's preset.
pub fn sample_reports(
    ckpt: &Checkpoint,
    emotion: Emotion,
    tonic: usize,
    n_samples: usize,
    cfg: &SamplerConfig,
    exec: Execution,
) -> Result<Vec<AdherenceReport>, ModelError> {
    let preset = emotion_preset(emotion, tonic);
    let seeds: Vec<u64> = (0..n_samples as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    map_ordered(&seeds, exec, |&seed| {
        let c = SamplerConfig { seed, ..*cfg };
        generate(ckpt, emotion, tonic, &c).map(|seq| adherence(&seq, &preset))
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub emotion: Emotion,
    pub model: &'static str,
    pub report: MeanReport,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

pub const CSV_HEADER: &str = "emotion,model,out_of_scale_fraction,mean_density,density_abs_error,histogram_l1,n_notes";

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

/// Lower is better; `None` loses to any value.
fn winner(a: Option<f64>, b: Option<f64>) -> &'static str {
    match (a, b) {
        (Some(x), Some(y)) if x < y => "features",
        (Some(x), Some(y)) if y < x => "labels",
        (Some(_), None) => "features",
        (None, Some(_)) => "labels",
        _ => "tie",
    }
}

impl ComparisonTable {
    pub fn get(&self, emotion: Emotion, model: &str) -> Option<&MeanReport> {
        self.rows
            .iter()
            .find(|r| r.emotion == emotion && r.model == model)
            .map(|r| &r.report)
    }

    /// Per-emotion winner of each lower-is-better metric, in column order
    /// (out_of_scale_fraction, density_abs_error, histogram_l1).
    pub fn winners(&self, emotion: Emotion) -> Option<[&'static str; 3]> {
        let f = self.get(emotion, "features")?;
        let l = self.get(emotion, "labels")?;
        Some([
            winner(f.out_of_scale_fraction, l.out_of_scale_fraction),
            winner(Some(f.density_abs_error), Some(l.density_abs_error)),
            winner(f.histogram_l1, l.histogram_l1),
        ])
    }

    /// Metric rows followed, per emotion, by a `winner` row naming the better
    /// model for each lower-is-better column (`-` where no winner applies).
    pub fn to_csv(&self) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let m = &r.report;
            s.push_str(&format!(
                "{},{},{},{:.6},{:.6},{},{:.2}\n",
                r.emotion,
                r.model,
                fmt_opt(m.out_of_scale_fraction),
                m.mean_density,
                m.density_abs_error,
                fmt_opt(m.histogram_l1),
                m.n_notes
            ));
        }
        for e in Emotion::ALL {
            if let Some([oos, dens, l1]) = self.winners(e) {
                s.push_str(&format!("{e},winner,{oos},-,{dens},{l1},-\n"));
            }
        }
        s
    }
}

/// Generates `n_samples` pieces per emotion from each model (same seeds on
/// both sides) and tabulates mean adherence. Pass `None` for `labels` to
/// evaluate a single model.
pub fn compare(
    features: &Checkpoint,
    labels: Option<&Checkpoint>,
    n_samples: usize,
    cfg: &SamplerConfig,
    tonic: usize,
    exec: Execution,
) -> Result<ComparisonTable, ModelError> {
    let mut table = ComparisonTable::default();
    if n_samples == 0 {
        return Ok(table);
    }
    let models: Vec<(&'static str, &Checkpoint)> = std::iter::once(("features", features))
        .chain(labels.map(|l| ("labels", l)))
        .collect();
    for emotion in Emotion::ALL {
        for &(name, ck) in &models {
            let reports = sample_reports(ck, emotion, tonic, n_samples, cfg, exec)?;
            table.rows.push(ComparisonRow {
                emotion,
                model: name,
                report: MeanReport::of(&reports).expect("n_samples > 0"),
            });
        }
    }
    Ok(table)
}

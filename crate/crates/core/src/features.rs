//! Pitch histograms, note density, and the per-step conditioning rows fed to
//! the model alongside each event.

use std::fmt;
use std::str::FromStr;

use crate::codec::EventSequence;
use crate::midi::NoteList;

/// Forward-looking window used for per-step features, in seconds.
pub const FEATURE_WINDOW: f64 = 2.0;
pub const DENSITY_CLASSES: usize = 12;
pub const CONDITIONING_DIM: usize = 12 + DENSITY_CLASSES + 1;

pub const MAJOR_TEMPLATE: [f64; 12] = [2., 0., 1., 0., 1., 2., 0., 2., 0., 1., 0., 1.];
pub const MINOR_TEMPLATE: [f64; 12] = [2., 0., 1., 1., 0., 2., 0., 2., 1., 0., 1., 0.];
pub const FAST_DENSITY: u32 = 5;
pub const SLOW_DENSITY: u32 = 1;

/// Weights over pitch classes C = 0 .. B = 11.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PitchHistogram(pub [f64; 12]);

impl PitchHistogram {
    pub fn weights(&self) -> &[f64; 12] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&w| w == 0.0)
    }

    /// Divides by the total; an all-zero histogram is returned as is.
    pub fn normalize(&self) -> PitchHistogram {
        let total = self.total();
        if total == 0.0 {
            return *self;
        }
        PitchHistogram(self.0.map(|w| w / total))
    }

    /// Moves the weight of class `i` to class `i + k` (mod 12).
    pub fn rotate(&self, k: usize) -> PitchHistogram {
        let mut out = [0.0; 12];
        for (i, &w) in self.0.iter().enumerate() {
            out[(i + k) % 12] = w;
        }
        PitchHistogram(out)
    }

    pub fn l1_distance(&self, other: &PitchHistogram) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum()
    }
}

pub fn normalize(h: &PitchHistogram) -> PitchHistogram {
    h.normalize()
}

/// Onsets in `[t, t + window)` counted per pitch class.
pub fn pitch_histogram(notes: &NoteList, t: f64, window: f64) -> PitchHistogram {
    let mut counts = [0.0; 12];
    for n in notes.notes.iter().filter(|n| n.onset >= t && n.onset < t + window) {
        counts[n.pitch_class()] += 1.0;
    }
    PitchHistogram(counts)
}

/// Number of onsets in `[t, t + window)`.
pub fn note_density(notes: &NoteList, t: f64, window: f64) -> u32 {
    notes
        .notes
        .iter()
        .filter(|n| n.onset >= t && n.onset < t + window)
        .count() as u32
}

/// The four Russell-quadrant emotions, in one-hot order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Emotion {
    Happy,
    Tensional,
    Sad,
    Peaceful,
}

impl Emotion {
    pub const ALL: [Emotion; 4] = [Emotion::Happy, Emotion::Tensional, Emotion::Sad, Emotion::Peaceful];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_major(self) -> bool {
        matches!(self, Emotion::Happy | Emotion::Peaceful)
    }

    pub fn is_fast(self) -> bool {
        matches!(self, Emotion::Happy | Emotion::Tensional)
    }

    pub fn from_mode_and_tempo(major: bool, fast: bool) -> Emotion {
        match (major, fast) {
            (true, true) => Emotion::Happy,
            (false, true) => Emotion::Tensional,
            (false, false) => Emotion::Sad,
            (true, false) => Emotion::Peaceful,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Happy => "happy",
            Emotion::Tensional => "tensional",
            Emotion::Sad => "sad",
            Emotion::Peaceful => "peaceful",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Emotion::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown emotion {s:?} (expected happy, tensional, sad or peaceful)"))
    }
}

/// Histogram template and note density for an emotion, with the scale
/// transposed to `tonic` (0 = C).
pub fn emotion_preset(emotion: Emotion, tonic: usize) -> (PitchHistogram, u32) {
    let template = if emotion.is_major() { MAJOR_TEMPLATE } else { MINOR_TEMPLATE };
    let density = if emotion.is_fast() { FAST_DENSITY } else { SLOW_DENSITY };
    (PitchHistogram(template).rotate(tonic % 12), density)
}

/// 12 normalized histogram weights, a 12-way density one-hot, and a zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditioningRow(pub [f32; CONDITIONING_DIM]);

impl ConditioningRow {
    pub fn histogram(&self) -> &[f32] {
        &self.0[..12]
    }

    pub fn density_onehot(&self) -> &[f32] {
        &self.0[12..24]
    }

    pub fn density_index(&self) -> usize {
        self.density_onehot().iter().position(|&v| v == 1.0).unwrap_or(0)
    }
}

impl AsRef<[f32]> for ConditioningRow {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

pub fn conditioning_row(h: &PitchHistogram, density: u32) -> ConditioningRow {
    let mut row = [0.0f32; CONDITIONING_DIM];
    for (dst, w) in row.iter_mut().zip(h.normalize().0) {
        *dst = w as f32;
    }
    let d = (density as usize).min(DENSITY_CLASSES - 1);
    row[12 + d] = 1.0;
    ConditioningRow(row)
}

/// One conditioning row per event, computed over the 2 s window that starts
/// at the event's clock time.
pub fn conditioning_track(notes: &NoteList, events: &EventSequence) -> Vec<ConditioningRow> {
    let onsets: Vec<(f64, usize)> = notes.notes.iter().map(|n| (n.onset, n.pitch_class())).collect();
    let mut lo = 0;
    let mut hi = 0;
    let mut counts = [0u32; 12];
    let mut rows = Vec::with_capacity(events.len());
    // event times never decrease, so both window edges move forward only
    for t in events.event_times() {
        while hi < onsets.len() && onsets[hi].0 < t + FEATURE_WINDOW {
            counts[onsets[hi].1] += 1;
            hi += 1;
        }
        while lo < hi && onsets[lo].0 < t {
            counts[onsets[lo].1] -= 1;
            lo += 1;
        }
        let h = PitchHistogram(counts.map(|c| c as f64));
        rows.push(conditioning_row(&h, (hi - lo) as u32));
    }
    rows
}

/// Whole-piece summary used by the `features` command.
#[derive(Debug, Clone, PartialEq)]
pub struct PieceSummary {
    pub histogram: PitchHistogram,
    pub mean_density: f64,
}

pub fn piece_summary(notes: &NoteList) -> PieceSummary {
    PieceSummary {
        histogram: pitch_histogram(notes, 0.0, f64::INFINITY).normalize(),
        mean_density: mean_density(notes, FEATURE_WINDOW, 0.5),
    }
}

/// Mean onset count over windows `[t, t + window)` with `t = 0, step, 2*step, ...`
/// for every window that ends inside the piece. Pieces shorter than one
/// window get a single window at 0.
pub fn mean_density(notes: &NoteList, window: f64, step: f64) -> f64 {
    let end = notes.end_time();
    let n_windows = if end <= window {
        1
    } else {
        ((end - window) / step).floor() as usize + 1
    };
    let total: u64 = (0..n_windows)
        .map(|i| note_density(notes, i as f64 * step, window) as u64)
        .sum();
    total as f64 / n_windows as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::encode;
    use crate::midi::Note;

    fn notes(spec: &[(u8, f64)]) -> NoteList {
        NoteList::from_notes(spec.iter().map(|&(p, t)| Note::new(p, t, t + 0.25, 64)).collect())
    }

    #[test]
    fn histogram_counts_pitch_classes() {
        let n = notes(&[(60, 0.1), (64, 0.5), (67, 1.0)]);
        assert_eq!(
            pitch_histogram(&n, 0.0, 2.0).0,
            [1., 0., 0., 0., 1., 0., 0., 1., 0., 0., 0., 0.]
        );
        assert!(pitch_histogram(&NoteList::default(), 0.0, 2.0).is_zero());
        assert!(pitch_histogram(&n, 5.0, 2.0).is_zero());
        // window is half-open
        assert_eq!(pitch_histogram(&n, 0.5, 0.5).total(), 1.0);
    }

    #[test]
    fn normalize_table_values() {
        let h = normalize(&PitchHistogram(MAJOR_TEMPLATE));
        assert_eq!(h.0, [0.2, 0., 0.1, 0., 0.1, 0.2, 0., 0.2, 0., 0.1, 0., 0.1]);
        assert!(normalize(&PitchHistogram::default()).is_zero());
        let mut single = [0.0; 12];
        single[0] = 3.0;
        assert_eq!(normalize(&PitchHistogram(single)).0[0], 1.0);
    }

    #[test]
    fn density_counts() {
        let n = notes(&[(60, 0.0), (62, 0.3), (64, 0.9), (65, 1.2), (67, 1.99), (69, 2.0)]);
        assert_eq!(note_density(&n, 0.0, 2.0), 5);
        assert_eq!(note_density(&NoteList::default(), 0.0, 2.0), 0);
    }

    #[test]
    fn presets() {
        assert_eq!(emotion_preset(Emotion::Happy, 0), (PitchHistogram(MAJOR_TEMPLATE), 5));
        assert_eq!(emotion_preset(Emotion::Sad, 0), (PitchHistogram(MINOR_TEMPLATE), 1));
        assert_eq!(emotion_preset(Emotion::Tensional, 0).1, 5);
        let (h, d) = emotion_preset(Emotion::Peaceful, 2);
        assert_eq!(d, 1);
        assert_eq!(h.0, [0., 1., 2., 0., 1., 0., 1., 2., 0., 2., 0., 1.]);
    }

    #[test]
    fn minor_template_zeros_off_scale() {
        let zeros: Vec<usize> = (0..12).filter(|&i| MINOR_TEMPLATE[i] == 0.0).collect();
        assert_eq!(zeros, vec![1, 4, 6, 9, 11]);
    }

    #[test]
    fn row_layout() {
        let row = conditioning_row(&PitchHistogram(MAJOR_TEMPLATE), 5);
        let mut expected = [0.0f32; 25];
        expected[..12].copy_from_slice(&[0.2, 0., 0.1, 0., 0.1, 0.2, 0., 0.2, 0., 0.1, 0., 0.1]);
        expected[12 + 5] = 1.0;
        assert_eq!(row.0, expected);
        assert_eq!(conditioning_row(&PitchHistogram::default(), 0).density_index(), 0);
        let clamped = conditioning_row(&PitchHistogram::default(), 40);
        assert_eq!(clamped.density_index(), 11);
        assert_eq!(clamped.0[24], 0.0);
    }

    #[test]
    fn emotion_parsing() {
        assert_eq!("SAD".parse::<Emotion>().unwrap(), Emotion::Sad);
        assert!("angry".parse::<Emotion>().is_err());
        for e in Emotion::ALL {
            assert_eq!(e.to_string().parse::<Emotion>().unwrap(), e);
        }
    }

    #[test]
    fn track_for_single_chord() {
        let chord = NoteList::from_notes(vec![
            Note::new(60, 0.0, 3.0, 64),
            Note::new(64, 0.0, 3.0, 64),
            Note::new(67, 0.0, 3.0, 64),
        ]);
        let events = encode(&chord);
        let track = conditioning_track(&chord, &events);
        assert_eq!(track.len(), events.len());
        let times = events.event_times();
        for (row, t) in track.iter().zip(times) {
            if t == 0.0 {
                assert_eq!(*row, track[0]);
                assert_eq!(row.density_index(), 3);
            } else {
                assert!(row.histogram().iter().all(|&w| w == 0.0));
            }
        }
        assert!(conditioning_track(&NoteList::default(), &EventSequence::default()).is_empty());
    }

    #[test]
    fn mean_density_of_regular_pulse() {
        let pulse: Vec<(u8, f64)> = (0..40).map(|i| (60, i as f64 * 0.4)).collect();
        let d = mean_density(&notes(&pulse), 2.0, 0.5);
        assert!((d - 5.0).abs() < 0.2, "{d}");
    }
}

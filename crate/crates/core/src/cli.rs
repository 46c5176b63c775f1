//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::codec::{decode, encode, EventSequence};
use crate::config::AppConfig;
use crate::eval::compare;
use crate::exec::Execution;
use crate::features::{conditioning_track, piece_summary, Emotion, CONDITIONING_DIM, DENSITY_CLASSES};
use crate::generation::{generate_to_midi, SamplerConfig};
use crate::io::write_atomic;
use crate::midi::{parse_midi, write_midi, NoteList};
use crate::nn::{Checkpoint, ConditioningMode};
use crate::toy::toy_corpus;
use crate::training::{train, TrainingConfig};

#[derive(Debug, Parser)]
#[command(name = "emotionbox", version, about = "Emotion-conditioned piano music generation")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Config file of key = value defaults (default: ./emotionbox.conf if present)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Run data-parallel work on the calling thread only
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a MIDI file to the text event format
    Encode {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a text event file back to MIDI
    Decode {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-event conditioning rows (CSV) and a whole-piece summary
    Features {
        input: PathBuf,
        /// CSV destination; standard output when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model on a directory of MIDI files
    Train(TrainArgs),
    /// Generate a piece for one emotion
    Generate(GenerateArgs),
    /// Adherence metrics for one model, or a comparison of two
    Evaluate(EvaluateArgs),
    /// Write a synthetic corpus built from the emotion presets
    ToyCorpus {
        #[arg(long)]
        out: PathBuf,
        /// Pieces per emotion
        #[arg(long, default_value_t = 10)]
        per_emotion: usize,
        /// Emotions to include (default: happy and sad)
        #[arg(long, value_delimiter = ',')]
        emotions: Vec<Emotion>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mode: Option<ConditioningMode>,
    /// GRU width (512 for the full model)
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SamplerArgs {
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Number of events to generate
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Tonic pitch class of the emotion preset (0 = C)
    #[arg(long)]
    pub tonic: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub emotion: Option<Emotion>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Feature-conditioned checkpoint
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Label-conditioned checkpoint to compare against
    #[arg(long)]
    pub labels_ckpt: Option<PathBuf>,
    /// Pieces per emotion and model
    #[arg(long)]
    pub samples: Option<usize>,
    /// CSV destination; standard output when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code: 0 on success, 1 on domain errors, 2 on usage errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            1
        }
    }
}

fn one_line(e: &anyhow::Error) -> String {
    e.chain().map(|c| c.to_string()).collect::<Vec<_>>().join(": ").replace('\n', " ")
}

fn required<T>(v: Option<T>, flag: &str) -> anyhow::Result<T> {
    v.with_context(|| format!("missing --{flag} (not set on the command line or in the config file)"))
}

fn read_midi(path: &Path) -> anyhow::Result<NoteList> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let notes = parse_midi(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    Ok(notes.with_name(path.display().to_string()))
}

fn write_out(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    write_atomic(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn sampler_config(cfg: &AppConfig, a: &SamplerArgs) -> anyhow::Result<(SamplerConfig, usize)> {
    let d = SamplerConfig::default();
    let s = SamplerConfig {
        threshold: cfg.resolve(a.threshold, "threshold", d.threshold)?,
        temperature: cfg.resolve(a.temperature, "temperature", d.temperature)?,
        max_events: cfg.resolve(a.length, "length", d.max_events)?,
        seed: cfg.resolve(a.seed, "seed", d.seed)?,
    };
    if !(0.0..=1.0).contains(&s.threshold) {
        bail!("threshold must lie in [0, 1], got {}", s.threshold);
    }
    if !(s.temperature > 0.0 && s.temperature.is_finite()) {
        bail!("temperature must be positive, got {}", s.temperature);
    }
    if s.max_events == 0 {
        bail!("length must be positive");
    }
    let tonic = cfg.resolve(a.tonic, "tonic", 0)?;
    if tonic > 11 {
        bail!("tonic must be a pitch class 0..11, got {tonic}");
    }
    Ok((s, tonic))
}

fn features_csv(notes: &NoteList) -> String {
    let events = encode(notes);
    let rows = conditioning_track(notes, &events);
    let mut header: Vec<String> = (0..12).map(|i| format!("pc{i}")).collect();
    header.extend((0..DENSITY_CLASSES).map(|i| format!("density{i}")));
    header.push("pad".into());
    debug_assert_eq!(header.len(), CONDITIONING_DIM);
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.0.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let cfg = AppConfig::discover(cli.config.as_deref())?;
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::Encode { input, out } => {
            let events = encode(&read_midi(&input)?);
            write_out(&out, events.to_text().as_bytes())
        }
        Command::Decode { input, out } => {
            let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let events = EventSequence::from_text(&text).with_context(|| format!("parsing {}", input.display()))?;
            write_out(&out, &write_midi(&decode(&events)))
        }
        Command::Features { input, out } => {
            let notes = read_midi(&input)?;
            let csv = features_csv(&notes);
            let summary = piece_summary(&notes);
            let hist: Vec<String> = summary.histogram.normalize().0.iter().map(|v| format!("{v:.4}")).collect();
            let line = format!(
                "notes {}, histogram [{}], mean density {:.3}\n",
                notes.len(),
                hist.join(" "),
                summary.mean_density
            );
            let mut stdout = std::io::stdout().lock();
            match out {
                Some(p) => {
                    write_out(&p, csv.as_bytes())?;
                    stdout.write_all(line.as_bytes())?;
                }
                None => {
                    stdout.write_all(csv.as_bytes())?;
                    eprint!("{line}");
                }
            }
            Ok(())
        }
        Command::Train(a) => {
            let d = TrainingConfig::default();
            let tc = TrainingConfig {
                window_len: cfg.resolve(a.window, "window", d.window_len)?,
                stride: cfg.resolve(a.stride, "stride", d.stride)?,
                batch_size: cfg.resolve(a.batch, "batch", d.batch_size)?,
                epochs: cfg.resolve(a.epochs, "epochs", d.epochs)?,
                lr: cfg.resolve(a.lr, "lr", d.lr)?,
                seed: cfg.resolve(a.seed, "seed", d.seed)?,
                mode: cfg.resolve(a.mode, "mode", d.mode)?,
                hidden: cfg.resolve(a.hidden, "hidden", d.hidden)?,
            };
            if tc.window_len < 2 || tc.stride == 0 || tc.batch_size == 0 || tc.hidden == 0 {
                bail!("window must exceed 1 and stride, batch and hidden must be positive");
            }
            let corpus: PathBuf = required(cfg.resolve_opt(a.corpus, "corpus")?, "corpus")?;
            let outcome = train(&corpus, &tc, &a.out, exec)?;
            if let Some(l) = outcome.losses.last() {
                println!("trained {} epochs, final mean loss {l:.4}", outcome.losses.len());
            }
            Ok(())
        }
        Command::Generate(a) => {
            let ckpt_path: PathBuf = required(cfg.resolve_opt(a.ckpt, "ckpt")?, "ckpt")?;
            let emotion = required(cfg.resolve_opt(a.emotion, "emotion")?, "emotion")?;
            let (sc, tonic) = sampler_config(&cfg, &a.sampler)?;
            let ck = Checkpoint::load(&ckpt_path).with_context(|| format!("loading {}", ckpt_path.display()))?;
            generate_to_midi(&ck, emotion, tonic, &sc, &a.out)?;
            Ok(())
        }
        Command::Evaluate(a) => {
            let ckpt_path: PathBuf = required(cfg.resolve_opt(a.ckpt, "ckpt")?, "ckpt")?;
            let labels_path: Option<PathBuf> = cfg.resolve_opt(a.labels_ckpt, "labels_ckpt")?;
            let samples = cfg.resolve(a.samples, "samples", 20usize)?;
            let (sc, tonic) = sampler_config(&cfg, &a.sampler)?;
            let load = |p: &Path| Checkpoint::load(p).with_context(|| format!("loading {}", p.display()));
            let features = load(&ckpt_path)?;
            let labels = labels_path.as_deref().map(load).transpose()?;
            let table = compare(&features, labels.as_ref(), samples, &sc, tonic, exec)?;
            let csv = table.to_csv();
            match a.out {
                Some(p) => write_out(&p, csv.as_bytes()),
                None => Ok(std::io::stdout().write_all(csv.as_bytes())?),
            }
        }
        Command::ToyCorpus {
            out,
            per_emotion,
            emotions,
            seed,
        } => {
            let emotions = if emotions.is_empty() {
                vec![Emotion::Happy, Emotion::Sad]
            } else {
                emotions
            };
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for (i, (e, piece)) in toy_corpus(&emotions, per_emotion, seed).iter().enumerate() {
                let path = out.join(format!("{:03}_{}.mid", i, e.name()));
                write_out(&path, &write_midi(piece))?;
            }
            Ok(())
        }
    }
}

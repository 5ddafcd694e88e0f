//! Command-line front end. Exit codes: 0 success, 2 bad input, 3 runtime or
//! numeric failure.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::conditioning::ConditioningError;
use crate::duration::{default_table, plan_from_table, DurationError, DurationPlan, DurationTable};
use crate::io::phrases::read_sidecar;
use crate::io::{
    load_phrase_list, read_checkpoint, read_f0, write_checkpoint, write_corpus, CorpusSource, DurationMode,
    FeatureFile, IoError, RunConfig,
};
use crate::model::{Model, ModelError};
use crate::numerics::NumericsError;
use crate::score::{default_inventory, PhonemeInventory, Score, ScoreError};
use crate::training::{
    evaluate, generate_corpus, prepare_examples, run_ablation, train, Checkpoint, CorpusConfig, DurationSource,
    Phrase, TrainingError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ffsing", version, about = "Feed-forward singing synthesizer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Alignment {
    Table,
    Gt,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the duration plan of a score.
    Align {
        #[arg(long)]
        score: PathBuf,
        /// Mean-duration table; defaults to the shipped one.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Train a model and write a checkpoint and metrics log.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render features for a score and F0 track.
    Synth {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        score: PathBuf,
        #[arg(long)]
        f0: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Duration sidecar to use instead of the duration table.
        #[arg(long)]
        gt_durations: Option<PathBuf>,
    },
    /// Per-phrase L1 of a checkpoint on a phrase list.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        phrases: PathBuf,
        /// Write the metrics CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        alignment: Alignment,
    },
    /// Train all four ablation variants and write the report.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the configured synthetic corpus to a directory.
    Corpus {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Numerics(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<ScoreError> for CliError {
    fn from(e: ScoreError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<DurationError> for CliError {
    fn from(e: DurationError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ConditioningError> for CliError {
    fn from(e: ConditioningError) -> Self {
        match e {
            ConditioningError::Numerics(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<NumericsError> for CliError {
    fn from(e: NumericsError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Numerics(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<TrainingError> for CliError {
    fn from(e: TrainingError) -> Self {
        match e {
            TrainingError::NonFiniteLoss { .. }
            | TrainingError::NonFiniteGradient
            | TrainingError::Numerics(_)
            | TrainingError::LayoutMismatch
            | TrainingError::MissingVariant(_) => CliError::Runtime(e.to_string()),
            TrainingError::Model(m) => m.into(),
            _ => CliError::Input(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Parses arguments, runs the command and returns the process exit code.
/// Normal output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Align { score, table } => cmd_align(&score, table.as_deref(), out),
        Command::Train { config, seed } => cmd_train(&config, seed, out, err),
        Command::Synth {
            checkpoint,
            score,
            f0,
            out: path,
            gt_durations,
        } => cmd_synth(&checkpoint, &score, &f0, &path, gt_durations.as_deref(), out),
        Command::Eval {
            checkpoint,
            phrases,
            out: path,
            alignment,
        } => cmd_eval(&checkpoint, &phrases, path.as_deref(), alignment, out),
        Command::Ablate { config, seed } => cmd_ablate(&config, seed, out, err),
        Command::Corpus { config, out: dir } => cmd_corpus(&config, &dir, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Runtime(format!("cannot write output: {e}")))
}

/// Human-readable duration plan.
pub fn format_plan(plan: &DurationPlan) -> String {
    let mut s = String::new();
    for (i, g) in plan.groups.iter().enumerate() {
        let note = g.note.map_or("-".to_string(), |n| n.to_string());
        let _ = writeln!(
            s,
            "group {i} note {note} start {} frames {}",
            g.start_frame,
            g.frames()
        );
        let _ = writeln!(s, "  phonemes {}", g.phonemes.join(" "));
        if !g.raw.is_empty() {
            let raw: Vec<String> = g.raw.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(s, "  raw [{}]", raw.join(", "));
        }
        let adj: Vec<String> = g.durations.iter().map(u32::to_string).collect();
        let _ = writeln!(s, "  adjusted [{}]", adj.join(", "));
        if let Some(rc) = g.consonant_scale {
            let _ = writeln!(s, "  r_c {rc}");
        }
    }
    s
}

pub fn cmd_align(score: &Path, table: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let (score, inv) = Score::load(score)?;
    let table = match table {
        Some(p) => DurationTable::load(p)?,
        None => default_table(),
    };
    let plan = plan_from_table(&score, &inv, &table)?;
    emit(out, &format_plan(&plan))
}

struct Setup {
    cfg: RunConfig,
    inv: PhonemeInventory,
    table: DurationTable,
}

fn setup(config: &Path, seed: Option<u64>) -> Result<Setup, CliError> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    let inv = match &cfg.inventory {
        Some(p) => PhonemeInventory::load(p)?,
        None => default_inventory(),
    };
    let table = match &cfg.duration_table {
        Some(p) => DurationTable::load(p)?,
        None => default_table(),
    };
    table.check_complete(&inv)?;
    Ok(Setup { cfg, inv, table })
}

fn corpus_config(cfg: &RunConfig) -> CorpusConfig {
    CorpusConfig {
        feature_dim: cfg.model.decoder.out_dim,
        f0: cfg.model.f0,
        ..CorpusConfig::default()
    }
}

fn load_phrases(s: &Setup) -> Result<(Vec<Phrase>, Vec<Phrase>), CliError> {
    match &s.cfg.corpus {
        CorpusSource::Synthetic => {
            let corpus = generate_corpus(
                s.cfg.corpus_seed,
                s.cfg.corpus_phrases + s.cfg.val_phrases,
                &s.inv,
                &s.table,
                &corpus_config(&s.cfg),
            )?;
            Ok(corpus.split(s.cfg.corpus_phrases))
        }
        CorpusSource::List(path) => {
            let list = |p: &Path| -> Result<Vec<Phrase>, CliError> {
                load_phrase_list(p)?
                    .into_iter()
                    .map(|r| {
                        if r.inventory != s.inv {
                            return Err(CliError::Input(format!(
                                "{}: inventory differs from the configured one",
                                r.score_path.display()
                            )));
                        }
                        Ok(r.into_phrase(&s.table)?)
                    })
                    .collect()
            };
            let train = list(path)?;
            let val = match &s.cfg.val_corpus {
                Some(p) => list(p)?,
                None => Vec::new(),
            };
            Ok((train, val))
        }
    }
}

pub fn cmd_train(config: &Path, seed: Option<u64>, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let s = setup(config, seed)?;
    let (train_phrases, val_phrases) = load_phrases(&s)?;
    let (model, init) = Model::init(s.cfg.model, s.inv.len(), s.cfg.train.seed)?;
    let source = match s.cfg.durations {
        DurationMode::Table => DurationSource::Table(&s.table),
        DurationMode::GroundTruth => DurationSource::GroundTruth,
    };
    let train_set = prepare_examples(&model, &s.inv, &train_phrases, source)?;
    let val_set = prepare_examples(&model, &s.inv, &val_phrases, source)?;
    let checkpoint = |state| Checkpoint {
        model: s.cfg.model,
        inventory: s.inv.clone(),
        table: s.table.clone(),
        state,
    };
    let every = (s.cfg.train.updates / 20).max(1);
    let result = train(&model, init, &train_set, &val_set, &s.cfg.train, |row| {
        if row.step % every == 0 || row.val_l1.is_some() {
            let val = row.val_l1.map_or(String::new(), |v| format!(" val_l1 {v:.5}"));
            let _ = writeln!(err, "step {} lr {:.3e} train_l1 {:.5}{val}", row.step, row.lr, row.train_l1);
        }
    });
    let outcome = match result {
        Ok(o) => o,
        Err(TrainingError::NonFiniteLoss { step, last_good }) => {
            write_checkpoint(&s.cfg.checkpoint, &checkpoint(*last_good))?;
            return Err(CliError::Runtime(format!(
                "non-finite loss at update {step}; last good state written to {}",
                s.cfg.checkpoint.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    write_checkpoint(&s.cfg.checkpoint, &checkpoint(outcome.state))?;
    write_text(&s.cfg.log, &outcome.log.to_csv())?;
    let mut summary = format!("checkpoint {}\nlog {}\n", s.cfg.checkpoint.display(), s.cfg.log.display());
    if let Some(l) = outcome.log.final_train_l1() {
        let _ = writeln!(summary, "final train_l1 {l}");
    }
    if let Some(v) = outcome.log.last_val_l1() {
        let _ = writeln!(summary, "final val_l1 {v}");
    }
    emit(out, &summary)
}

pub fn cmd_synth(
    checkpoint: &Path,
    score_path: &Path,
    f0_path: &Path,
    out_path: &Path,
    gt: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let ck = read_checkpoint(checkpoint)?;
    let model = ck.build_model()?;
    let score = Score::parse(read_text(score_path)?.as_bytes()).map_err(|e| CliError::Input(format!("{}: {e}", score_path.display())))?;
    score.validate_against_inventory(&ck.inventory)?;
    let f0 = read_f0(f0_path)?;
    if f0.len() != score.total_frames as usize {
        return Err(CliError::Input(format!(
            "F0 has {} frames but the score has {}",
            f0.len(),
            score.total_frames
        )));
    }
    let plan = match gt {
        Some(p) => read_sidecar(p, &score, &ck.inventory)?,
        None => plan_from_table(&score, &ck.inventory, &ck.table)?,
    };
    let input = model.prepare(&ck.inventory, &plan, &f0)?;
    let features = model.predict(&ck.state.shadow, &input)?;
    let file = FeatureFile::from_tensor(&features)?;
    file.write(out_path)?;
    emit(
        out,
        &format!("wrote {} frames × {} to {}\n", file.frames, file.dim, out_path.display()),
    )
}

pub fn cmd_eval(
    checkpoint: &Path,
    phrases: &Path,
    out_path: Option<&Path>,
    alignment: Alignment,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let ck = read_checkpoint(checkpoint)?;
    let model = ck.build_model()?;
    let records = load_phrase_list(phrases)?;
    let names: Vec<String> = records.iter().map(|r| r.score_path.display().to_string()).collect();
    let mut list = Vec::with_capacity(records.len());
    for r in records {
        r.score.validate_against_inventory(&ck.inventory)?;
        if alignment == Alignment::Gt && r.durations.is_none() {
            return Err(CliError::Input(format!(
                "{} has no duration sidecar",
                r.score_path.display()
            )));
        }
        list.push(r.into_phrase(&ck.table)?);
    }
    let source = match alignment {
        Alignment::Table => DurationSource::Table(&ck.table),
        Alignment::Gt => DurationSource::GroundTruth,
    };
    let examples = prepare_examples(&model, &ck.inventory, &list, source)?;
    let l1 = evaluate(&model, &ck.state.shadow, &examples)?;
    let mut csv = String::from("phrase,l1\n");
    for (n, v) in names.iter().zip(&l1) {
        let _ = writeln!(csv, "{n},{v}");
    }
    let mean = l1.iter().sum::<f64>() / l1.len() as f64;
    let _ = writeln!(csv, "mean,{mean}");
    match out_path {
        Some(p) => {
            write_text(p, &csv)?;
            emit(out, &format!("mean L1 {mean} over {} phrases\n", l1.len()))
        }
        None => emit(out, &csv),
    }
}

pub fn cmd_ablate(config: &Path, seed: Option<u64>, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let s = setup(config, seed)?;
    let (train_phrases, val_phrases) = load_phrases(&s)?;
    if val_phrases.is_empty() {
        return Err(CliError::Input("ablation needs validation phrases".into()));
    }
    let report = run_ablation(
        &train_phrases,
        &val_phrases,
        &s.inv,
        &s.table,
        s.cfg.model,
        &s.cfg.train,
        |v, l1| {
            let _ = writeln!(err, "{v}: val_l1 {l1:.5}");
        },
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_text(&s.cfg.report, &report.to_csv())?;
    let mut text = report.to_csv();
    let _ = writeln!(
        text,
        "# gt_durations <= avg_durations <= no_self_attention: {}",
        if report.ordering_holds() { "yes" } else { "no" }
    );
    emit(out, &text)
}

pub fn cmd_corpus(config: &Path, dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let s = setup(config, None)?;
    if s.cfg.corpus != CorpusSource::Synthetic {
        return Err(CliError::Input("corpus needs `corpus = synthetic`".into()));
    }
    let (train_phrases, val_phrases) = load_phrases(&s)?;
    write_corpus(dir, &train_phrases, &val_phrases, &s.inv)?;
    emit(
        out,
        &format!(
            "wrote {} training and {} validation phrases to {}\n",
            train_phrases.len(),
            val_phrases.len(),
            dir.display()
        ),
    )
}

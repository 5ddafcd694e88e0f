//! `key = value` run configuration. Blank lines and `#` comments are
//! ignored; an unknown key is an error.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `embed_dim` | 256 | phoneme embedding width |
//! | `encoder_channels` | 64 | encoder GLU width |
//! | `encoder_kernel` | 3 | encoder kernel size |
//! | `encoder_blocks` | 1 | encoder GLU blocks |
//! | `d_model` | 64 | decoder width |
//! | `layers` | 2 | decoder layers |
//! | `decoder_kernel` | 3 | decoder GLU kernel size |
//! | `reduction` | 2 | frames per decoder step |
//! | `out_dim` | 64 | feature dimension |
//! | `dropout` | 0.1 | dropout everywhere |
//! | `sigma_init` | 30 | initial attention bias width |
//! | `self_attention` | true | attention sub-layers on/off |
//! | `f0_min`, `f0_max`, `f0_dims` | 100, 420, 4 | F0 coder |
//! | `pos_dims` | 4 | position code width |
//! | `base_lr`, `warmup` | 1e-3, 500 | learning-rate schedule |
//! | `beta1`, `beta2`, `eps` | 0.9, 0.98, 1e-9 | Adam |
//! | `polyak_decay` | 0.995 | parameter averaging |
//! | `batch`, `updates`, `seed` | 8, 2000, 0 | run length and seed |
//! | `val_every` | 0 | validation interval (0: end only) |
//! | `corpus` | synthetic | `synthetic` or a phrase-list path |
//! | `val_corpus` | none | phrase list for validation with a list corpus |
//! | `corpus_phrases`, `val_phrases`, `corpus_seed` | 16, 4, 1 | synthetic corpus |
//! | `durations` | table | `table` or `gt` alignment for training |
//! | `duration_table`, `inventory` | shipped | lookup files |
//! | `checkpoint`, `log`, `report` | model.ffck, metrics.csv, ablation.csv | outputs |
//!
//! Relative paths are resolved against the directory of the config file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::model::ModelConfig;
use crate::training::TrainConfig;

use super::{read_file, IoError};

#[derive(Clone, Debug, PartialEq)]
pub enum CorpusSource {
    Synthetic,
    List(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DurationMode {
    Table,
    GroundTruth,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub corpus: CorpusSource,
    pub val_corpus: Option<PathBuf>,
    pub corpus_phrases: usize,
    pub val_phrases: usize,
    pub corpus_seed: u64,
    pub durations: DurationMode,
    pub duration_table: Option<PathBuf>,
    pub inventory: Option<PathBuf>,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub report: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::desk(),
            train: TrainConfig::desk(),
            corpus: CorpusSource::Synthetic,
            val_corpus: None,
            corpus_phrases: 16,
            val_phrases: 4,
            corpus_seed: 1,
            durations: DurationMode::Table,
            duration_table: None,
            inventory: None,
            checkpoint: PathBuf::from("model.ffck"),
            log: PathBuf::from("metrics.csv"),
            report: PathBuf::from("ablation.csv"),
        }
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, IoError> {
    value.parse().map_err(|_| IoError::Config {
        line,
        message: format!("invalid value {value:?} for {key}"),
    })
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, IoError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(IoError::Config {
            line,
            message: format!("invalid value {value:?} for {key} (expected true/false)"),
        }),
    }
}

impl RunConfig {
    /// Parses config text; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, IoError> {
        let mut cfg = Self::default();
        let path = |v: &str| base.join(v);
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| IoError::Config {
                line: n,
                message: format!("expected key = value, got {line:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let m = &mut cfg.model;
            let t = &mut cfg.train;
            match key {
                "embed_dim" => m.encoder.embed_dim = parse_value(n, key, value)?,
                "encoder_channels" => m.encoder.channels = parse_value(n, key, value)?,
                "encoder_kernel" => m.encoder.kernel = parse_value(n, key, value)?,
                "encoder_blocks" => m.encoder.blocks = parse_value(n, key, value)?,
                "d_model" => m.decoder.d_model = parse_value(n, key, value)?,
                "layers" => m.decoder.layers = parse_value(n, key, value)?,
                "decoder_kernel" => m.decoder.kernel = parse_value(n, key, value)?,
                "reduction" => m.decoder.reduction = parse_value(n, key, value)?,
                "out_dim" => m.decoder.out_dim = parse_value(n, key, value)?,
                "dropout" => {
                    let p: f64 = parse_value(n, key, value)?;
                    m.encoder.dropout = p;
                    m.decoder.dropout = p;
                }
                "sigma_init" => m.decoder.sigma_init = parse_value(n, key, value)?,
                "self_attention" => m.decoder.self_attention = parse_bool(n, key, value)?,
                "f0_min" => m.f0.f_min = parse_value(n, key, value)?,
                "f0_max" => m.f0.f_max = parse_value(n, key, value)?,
                "f0_dims" => m.f0.dims = parse_value(n, key, value)?,
                "pos_dims" => m.pos_dims = parse_value(n, key, value)?,
                "base_lr" => t.base_lr = parse_value(n, key, value)?,
                "warmup" => t.warmup = parse_value(n, key, value)?,
                "beta1" => t.adam.beta1 = parse_value(n, key, value)?,
                "beta2" => t.adam.beta2 = parse_value(n, key, value)?,
                "eps" => t.adam.eps = parse_value(n, key, value)?,
                "polyak_decay" => t.polyak_decay = parse_value(n, key, value)?,
                "batch" => t.batch = parse_value(n, key, value)?,
                "updates" => t.updates = parse_value(n, key, value)?,
                "seed" => t.seed = parse_value(n, key, value)?,
                "val_every" => t.val_every = parse_value(n, key, value)?,
                "corpus" => {
                    cfg.corpus = match value {
                        "synthetic" => CorpusSource::Synthetic,
                        p => CorpusSource::List(path(p)),
                    }
                }
                "val_corpus" => cfg.val_corpus = Some(path(value)),
                "corpus_phrases" => cfg.corpus_phrases = parse_value(n, key, value)?,
                "val_phrases" => cfg.val_phrases = parse_value(n, key, value)?,
                "corpus_seed" => cfg.corpus_seed = parse_value(n, key, value)?,
                "durations" => {
                    cfg.durations = match value {
                        "table" => DurationMode::Table,
                        "gt" => DurationMode::GroundTruth,
                        _ => {
                            return Err(IoError::Config {
                                line: n,
                                message: format!("durations must be table or gt, got {value:?}"),
                            })
                        }
                    }
                }
                "duration_table" => cfg.duration_table = Some(path(value)),
                "inventory" => cfg.inventory = Some(path(value)),
                "checkpoint" => cfg.checkpoint = PathBuf::from(value),
                "log" => cfg.log = PathBuf::from(value),
                "report" => cfg.report = PathBuf::from(value),
                _ => return Err(IoError::UnknownKey { line: n, key: key.to_string() }),
            }
        }
        for p in [&mut cfg.checkpoint, &mut cfg.log, &mut cfg.report] {
            *p = base.join(&*p);
        }
        cfg.model.validate().map_err(|e| IoError::Config {
            line: 0,
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes).map_err(|_| IoError::Format("config is not UTF-8".into()))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("."))).map_err(|e| e.at(path))
    }
}

/// Model keys only, in a form [`RunConfig::parse`] reads back exactly.
pub fn model_config_text(m: &ModelConfig) -> String {
    let mut out = String::new();
    let e = &m.encoder;
    let d = &m.decoder;
    let _ = writeln!(out, "embed_dim = {}", e.embed_dim);
    let _ = writeln!(out, "encoder_channels = {}", e.channels);
    let _ = writeln!(out, "encoder_kernel = {}", e.kernel);
    let _ = writeln!(out, "encoder_blocks = {}", e.blocks);
    let _ = writeln!(out, "d_model = {}", d.d_model);
    let _ = writeln!(out, "layers = {}", d.layers);
    let _ = writeln!(out, "decoder_kernel = {}", d.kernel);
    let _ = writeln!(out, "reduction = {}", d.reduction);
    let _ = writeln!(out, "out_dim = {}", d.out_dim);
    let _ = writeln!(out, "dropout = {}", d.dropout);
    let _ = writeln!(out, "sigma_init = {}", d.sigma_init);
    let _ = writeln!(out, "self_attention = {}", d.self_attention);
    let _ = writeln!(out, "f0_min = {}", m.f0.f_min);
    let _ = writeln!(out, "f0_max = {}", m.f0.f_max);
    let _ = writeln!(out, "f0_dims = {}", m.f0.dims);
    let _ = writeln!(out, "pos_dims = {}", m.pos_dims);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = RunConfig::parse("# desk run\nupdates = 100\nseed=7\nself_attention = false\ncorpus = list.txt\n", Path::new("/tmp/x")).unwrap();
        assert_eq!(cfg.train.updates, 100);
        assert_eq!(cfg.train.seed, 7);
        assert!(!cfg.model.decoder.self_attention);
        assert_eq!(cfg.corpus, CorpusSource::List(PathBuf::from("/tmp/x/list.txt")));
        assert_eq!(cfg.model.decoder.d_model, 64);
        assert_eq!(cfg.train.batch, 8);
        assert_eq!(cfg.checkpoint, PathBuf::from("/tmp/x/model.ffck"));
    }

    #[test]
    fn unknown_key_names_the_key() {
        let err = RunConfig::parse("updates = 3\nlearning_rate = 1\n", Path::new(".")).unwrap_err();
        match err {
            IoError::UnknownKey { line, key } => {
                assert_eq!(line, 2);
                assert_eq!(key, "learning_rate");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_values() {
        assert!(RunConfig::parse("updates = many\n", Path::new(".")).is_err());
        assert!(RunConfig::parse("durations = guess\n", Path::new(".")).is_err());
        assert!(RunConfig::parse("just text\n", Path::new(".")).is_err());
        assert!(RunConfig::parse("reduction = 0\n", Path::new(".")).is_err());
    }

    #[test]
    fn model_text_round_trip() {
        let mut m = ModelConfig::default();
        m.decoder.sigma_init = 12.345678901234567;
        m.decoder.self_attention = false;
        m.f0.f_max = 512.25;
        let back = RunConfig::parse(&model_config_text(&m), Path::new(".")).unwrap();
        assert_eq!(back.model, m);
    }
}

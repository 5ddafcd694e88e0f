//! Phrase lists and corpus directories.
//!
//! A phrase list has one phrase per line:
//!
//! ```text
//! <score> <f0 file> <target feature file> [<duration sidecar>]
//! ```
//!
//! with paths relative to the list file and `#` comments.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::conditioning::F0Track;
use crate::duration::{plan_from_table, DurationPlan, DurationTable};
use crate::numerics::Tensor;
use crate::score::{PhonemeInventory, Score};
use crate::training::Phrase;

use super::{read_file, write_file, FeatureFile, IoError};

#[derive(Clone, Debug, PartialEq)]
pub struct PhraseRecord {
    pub score_path: PathBuf,
    pub score: Score,
    pub inventory: PhonemeInventory,
    pub f0: F0Track,
    pub target: Tensor,
    pub durations: Option<DurationPlan>,
}

impl PhraseRecord {
    /// Training phrase; without a sidecar the table alignment stands in for
    /// the recorded one.
    pub fn into_phrase(self, table: &DurationTable) -> Result<Phrase, IoError> {
        let durations = match self.durations {
            Some(d) => d,
            None => plan_from_table(&self.score, &self.inventory, table)?,
        };
        Ok(Phrase {
            score: self.score,
            f0: self.f0,
            target: self.target,
            durations,
        })
    }
}

/// Text F0 track: one value in Hz per frame, `0` for unvoiced frames, `#`
/// comments allowed.
pub fn f0_to_text(values: &[f64]) -> String {
    let mut out = String::new();
    for v in values {
        let _ = writeln!(out, "{v}");
    }
    out
}

pub fn parse_f0_text(text: &str) -> Result<F0Track, IoError> {
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v = line
            .parse::<f64>()
            .map_err(|_| IoError::Format(format!("F0 line {}: bad value {line:?}", i + 1)))?;
        values.push(v);
    }
    Ok(F0Track::new(values)?)
}

/// Reads a text F0 track or a one-column feature file.
pub fn read_f0(path: &Path) -> Result<F0Track, IoError> {
    let bytes = read_file(path)?;
    if bytes.starts_with(&super::features::FEATURE_MAGIC) {
        let f = FeatureFile::from_bytes(&bytes).map_err(|e| e.at(path))?;
        if f.dim != 1 {
            return Err(IoError::File {
                path: path.to_path_buf(),
                message: format!("F0 file must have one column, found {}", f.dim),
            });
        }
        return Ok(F0Track::new(f.data.iter().map(|&v| f64::from(v)).collect())?);
    }
    let text = String::from_utf8(bytes).map_err(|_| IoError::File {
        path: path.to_path_buf(),
        message: "not UTF-8".into(),
    })?;
    parse_f0_text(&text).map_err(|e| e.at(path))
}

pub fn read_sidecar(path: &Path, score: &Score, inv: &PhonemeInventory) -> Result<DurationPlan, IoError> {
    let text = String::from_utf8(read_file(path)?).map_err(|_| IoError::File {
        path: path.to_path_buf(),
        message: "not UTF-8".into(),
    })?;
    Ok(DurationPlan::from_sidecar(score, inv, &text)?)
}

pub fn load_phrase_list(path: &Path) -> Result<Vec<PhraseRecord>, IoError> {
    let text = String::from_utf8(read_file(path)?).map_err(|_| IoError::File {
        path: path.to_path_buf(),
        message: "not UTF-8".into(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(IoError::File {
                path: path.to_path_buf(),
                message: format!("line {}: expected <score> <f0> <target> [<durations>]", i + 1),
            });
        }
        let score_path = base.join(fields[0]);
        let (score, inventory) = Score::load(&score_path)?;
        let f0 = read_f0(&base.join(fields[1]))?;
        let target = FeatureFile::read(&base.join(fields[2]))?.to_tensor()?;
        let durations = match fields.get(3) {
            Some(p) => Some(read_sidecar(&base.join(p), &score, &inventory)?),
            None => None,
        };
        if f0.len() != score.total_frames as usize || target.rows() != score.total_frames as usize {
            return Err(IoError::File {
                path: path.to_path_buf(),
                message: format!(
                    "line {}: score has {} frames, F0 {} and target {}",
                    i + 1,
                    score.total_frames,
                    f0.len(),
                    target.rows()
                ),
            });
        }
        out.push(PhraseRecord {
            score_path,
            score,
            inventory,
            f0,
            target,
            durations,
        });
    }
    if out.is_empty() {
        return Err(IoError::EmptyList(path.to_path_buf()));
    }
    Ok(out)
}

fn write_phrases(dir: &Path, prefix: &str, phrases: &[Phrase]) -> Result<String, IoError> {
    let mut list = String::new();
    for (i, p) in phrases.iter().enumerate() {
        let stem = format!("{prefix}{i:03}");
        write_file(&dir.join(format!("{stem}.score")), p.score.serialize().as_bytes())?;
        write_file(&dir.join(format!("{stem}.f0")), f0_to_text(p.f0.values()).as_bytes())?;
        FeatureFile::from_tensor(&p.target)?.write(&dir.join(format!("{stem}.feat")))?;
        write_file(&dir.join(format!("{stem}.dur")), p.durations.to_sidecar().as_bytes())?;
        let _ = writeln!(list, "{stem}.score {stem}.f0 {stem}.feat {stem}.dur");
    }
    Ok(list)
}

/// Writes phrases, the inventory and `train.list` / `val.list` into `dir`.
pub fn write_corpus(dir: &Path, train: &[Phrase], val: &[Phrase], inv: &PhonemeInventory) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::File {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })?;
    write_file(&dir.join(crate::training::corpus::CORPUS_INVENTORY), inv.to_text().as_bytes())?;
    let list = write_phrases(dir, "train", train)?;
    write_file(&dir.join("train.list"), list.as_bytes())?;
    let list = write_phrases(dir, "val", val)?;
    write_file(&dir.join("val.list"), list.as_bytes())?;
    Ok(())
}

//! Average-duration model.
//!
//! Each note's onset consonants are moved to the preceding group so that a
//! group runs from one vowel onset to the next. Within a group the vowel
//! (or silence) nucleus comes first, followed by codas and then the shifted
//! onset consonants of the following note. Table means are scaled so the
//! consonants fit and the vowel keeps at least about half of the group:
//!
//! ```text
//! r_c  = 1                                          if N = 1
//!      = min(1, (d_n - rint(r_v·d_n)) / Σ_{i≥2} d_i)  otherwise
//! d̂_i  = max(1, rint(r_c·d_i))                      for i ≥ 2
//! d̂_1  = d_n - Σ_{i≥2} d̂_i
//! ```
//!
//! `rint` rounds half away from zero. If the clamps leave the vowel with
//! fewer than one frame, frames are taken one at a time from the longest
//! consonant (latest on ties) until it has one.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::score::{PhonemeClass, PhonemeInventory, Score, ScoreError};

/// Minimum share of a group reserved for the vowel.
pub const VOWEL_RATIO: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DurationError {
    #[error("{} has {frames} frame(s) for {phonemes} phonemes", describe(*.group, *.note))]
    InsufficientFrames {
        group: usize,
        note: Option<usize>,
        frames: u32,
        phonemes: usize,
    },
    #[error("raw durations must be positive and finite")]
    InvalidRaw,
    #[error("note {note} has onset consonants but no frames before it")]
    LeadingConsonants { note: usize },
    #[error("no table entry for phoneme {0:?}")]
    MissingEntry(String),
    #[error("duration table line {line}: {message}")]
    Table { line: usize, message: String },
    #[error("duration sidecar line {line}: {message}")]
    Sidecar { line: usize, message: String },
    #[error(transparent)]
    Score(#[from] ScoreError),
}

fn describe(group: usize, note: Option<usize>) -> String {
    match note {
        Some(n) => format!("group {group} (note {n})"),
        None => format!("group {group} (silence gap)"),
    }
}

fn rint(x: f64) -> f64 {
    x.round()
}

/// Mean phoneme durations in frames.
#[derive(Clone, Debug, PartialEq)]
pub struct DurationTable {
    means: BTreeMap<String, f64>,
}

impl DurationTable {
    pub fn new(means: BTreeMap<String, f64>) -> Result<Self, DurationError> {
        if means.values().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(DurationError::InvalidRaw);
        }
        Ok(Self { means })
    }

    /// Parses `<symbol> <mean_frames>` lines.
    pub fn parse(text: &str) -> Result<Self, DurationError> {
        let mut means = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| DurationError::Table {
                line: n + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [sym, value] = fields[..] else {
                return Err(err("expected `<symbol> <mean_frames>`".into()));
            };
            let mean: f64 = value
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite() && *v > 0.0)
                .ok_or_else(|| err(format!("bad mean {value:?}")))?;
            if means.insert(sym.to_string(), mean).is_some() {
                return Err(err(format!("duplicate symbol {sym:?}")));
            }
        }
        Ok(Self { means })
    }

    pub fn load(path: &Path) -> Result<Self, DurationError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            DurationError::Score(ScoreError::Io {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        })?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (s, m) in &self.means {
            let _ = writeln!(out, "{s} {m}");
        }
        out
    }

    pub fn mean(&self, symbol: &str) -> Result<f64, DurationError> {
        self.means
            .get(symbol)
            .copied()
            .ok_or_else(|| DurationError::MissingEntry(symbol.to_string()))
    }

    /// Every inventory symbol must have an entry.
    pub fn check_complete(&self, inv: &PhonemeInventory) -> Result<(), DurationError> {
        for sym in inv.symbols() {
            self.mean(sym)?;
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.means.iter().map(|(s, &m)| (s.as_str(), m))
    }
}

pub const DEFAULT_DURATIONS: &str = include_str!("../data/durations.txt");

pub fn default_table() -> DurationTable {
    DurationTable::parse(DEFAULT_DURATIONS).expect("shipped duration table parses")
}

/// One vowel-onset-to-vowel-onset region after consonant shifting.
#[derive(Clone, Debug, PartialEq)]
pub struct NoteGroup {
    /// Source note, or `None` for an implicit silence between notes.
    pub note: Option<usize>,
    pub start_frame: u32,
    /// Target duration `d_n` in frames.
    pub frames: u32,
    /// Nucleus first, then codas, then shifted onset consonants.
    pub phonemes: Vec<String>,
}

impl NoteGroup {
    pub fn raw_durations(&self, table: &DurationTable) -> Result<Vec<f64>, DurationError> {
        self.phonemes.iter().map(|p| table.mean(p)).collect()
    }
}

/// Moves each note's onset consonants to the preceding group and fills
/// gaps with silence groups, so the groups partition `[0, total_frames)`.
pub fn shift_onset_consonants(
    score: &Score,
    inv: &PhonemeInventory,
) -> Result<Vec<NoteGroup>, DurationError> {
    score.validate_against_inventory(inv)?;
    let silence = inv.silence_symbol().to_string();
    let mut groups: Vec<NoteGroup> = Vec::new();
    let mut cursor = 0;
    let gap = |start: u32, end: u32| NoteGroup {
        note: None,
        start_frame: start,
        frames: end - start,
        phonemes: vec![silence.clone()],
    };
    for (i, note) in score.notes.iter().enumerate() {
        if note.onset_frames > cursor {
            groups.push(gap(cursor, note.onset_frames));
        }
        let nucleus = note
            .phonemes
            .iter()
            .position(|p| inv.class_of(p) != Some(PhonemeClass::Consonant))
            .unwrap_or(0);
        let (onsets, rest) = note.phonemes.split_at(nucleus);
        if !onsets.is_empty() {
            let prev = groups
                .last_mut()
                .ok_or(DurationError::LeadingConsonants { note: i })?;
            prev.phonemes.extend(onsets.iter().cloned());
        }
        groups.push(NoteGroup {
            note: Some(i),
            start_frame: note.onset_frames,
            frames: note.duration_frames,
            phonemes: rest.to_vec(),
        });
        cursor = note.end_frames();
    }
    if score.total_frames > cursor {
        groups.push(gap(cursor, score.total_frames));
    }
    Ok(groups)
}

/// Scale numerator and denominator, or `None` when `r_c = 1` exactly.
fn scale_ratio(frames: u32, raw: &[f64]) -> Option<(f64, f64)> {
    if raw.len() <= 1 {
        return None;
    }
    let d_n = f64::from(frames);
    let available = d_n - rint(VOWEL_RATIO * d_n);
    let consonants: f64 = raw[1..].iter().sum();
    (available < consonants).then_some((available, consonants))
}

fn check_inputs(frames: u32, raw: &[f64]) -> Result<(), DurationError> {
    if raw.is_empty() || raw.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(DurationError::InvalidRaw);
    }
    if (frames as usize) < raw.len() {
        return Err(DurationError::InsufficientFrames {
            group: 0,
            note: None,
            frames,
            phonemes: raw.len(),
        });
    }
    Ok(())
}

/// Consonant scaling factor `r_c` for a group of `frames` frames.
pub fn consonant_scale(frames: u32, raw: &[f64]) -> Result<f64, DurationError> {
    check_inputs(frames, raw)?;
    Ok(scale_ratio(frames, raw).map_or(1.0, |(num, den)| num / den))
}

/// Integer frame durations summing to `frames`, vowel first.
pub fn adjust_durations(frames: u32, raw: &[f64]) -> Result<Vec<u32>, DurationError> {
    check_inputs(frames, raw)?;
    let ratio = scale_ratio(frames, raw);
    let mut out = Vec::with_capacity(raw.len());
    out.push(0u32);
    for &d in &raw[1..] {
        // num·d/den keeps exact halves exact for integer means.
        let scaled = match ratio {
            Some((num, den)) => num * d / den,
            None => d,
        };
        out.push(rint(scaled).max(1.0) as u32);
    }
    let consonants: i64 = out[1..].iter().map(|&d| i64::from(d)).sum();
    let mut vowel = i64::from(frames) - consonants;
    while vowel < 1 {
        let (idx, _) = out
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, &d)| d > 1)
            .max_by_key(|&(i, &d)| (d, i))
            .expect("frames >= phonemes leaves a consonant above one frame");
        out[idx] -= 1;
        vowel += 1;
    }
    out[0] = vowel as u32;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannedGroup {
    pub note: Option<usize>,
    pub start_frame: u32,
    pub phonemes: Vec<String>,
    /// Table means, empty when durations came from a sidecar.
    pub raw: Vec<f64>,
    pub consonant_scale: Option<f64>,
    pub durations: Vec<u32>,
}

impl PlannedGroup {
    pub fn frames(&self) -> u32 {
        self.durations.iter().sum()
    }
}

/// Per-phoneme frame durations for a whole score.
#[derive(Clone, Debug, PartialEq)]
pub struct DurationPlan {
    pub groups: Vec<PlannedGroup>,
}

impl DurationPlan {
    pub fn total_frames(&self) -> u32 {
        self.groups.iter().map(PlannedGroup::frames).sum()
    }

    pub fn num_phonemes(&self) -> usize {
        self.groups.iter().map(|g| g.phonemes.len()).sum()
    }

    /// Phonemes in plan order, one per encoder state.
    pub fn phoneme_sequence(&self) -> Vec<&str> {
        self.groups
            .iter()
            .flat_map(|g| g.phonemes.iter().map(String::as_str))
            .collect()
    }

    pub fn durations(&self) -> Vec<u32> {
        self.groups
            .iter()
            .flat_map(|g| g.durations.iter().copied())
            .collect()
    }

    /// Builds a plan from explicit per-group durations, checking them
    /// against the score's shifted groups.
    pub fn from_durations(
        groups: &[NoteGroup],
        durations: &[Vec<u32>],
    ) -> Result<Self, DurationError> {
        let bad = |line: usize, message: String| DurationError::Sidecar { line, message };
        if groups.len() != durations.len() {
            return Err(bad(
                0,
                format!("expected {} groups, got {}", groups.len(), durations.len()),
            ));
        }
        let mut planned = Vec::with_capacity(groups.len());
        for (i, (g, d)) in groups.iter().zip(durations).enumerate() {
            if d.len() != g.phonemes.len() {
                return Err(bad(i + 1, format!("group {i} needs {} durations", g.phonemes.len())));
            }
            if d.contains(&0) || d.iter().sum::<u32>() != g.frames {
                return Err(bad(
                    i + 1,
                    format!("group {i} durations must be >= 1 and sum to {}", g.frames),
                ));
            }
            planned.push(PlannedGroup {
                note: g.note,
                start_frame: g.start_frame,
                phonemes: g.phonemes.clone(),
                raw: Vec::new(),
                consonant_scale: None,
                durations: d.clone(),
            });
        }
        Ok(Self { groups: planned })
    }

    /// Sidecar text: one line per group, `<note|-> <sym>:<frames> ...`.
    pub fn to_sidecar(&self) -> String {
        let mut out = String::from("# note phoneme:frames ...\n");
        for g in &self.groups {
            match g.note {
                Some(n) => {
                    let _ = write!(out, "{n}");
                }
                None => out.push('-'),
            }
            for (p, d) in g.phonemes.iter().zip(&g.durations) {
                let _ = write!(out, " {p}:{d}");
            }
            out.push('\n');
        }
        out
    }

    /// Reads ground-truth durations for `score` from sidecar text.
    pub fn from_sidecar(
        score: &Score,
        inv: &PhonemeInventory,
        text: &str,
    ) -> Result<Self, DurationError> {
        let groups = shift_onset_consonants(score, inv)?;
        let mut durations = Vec::new();
        let mut line_index = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| DurationError::Sidecar {
                line: n + 1,
                message,
            };
            let gi = durations.len();
            let group = groups
                .get(gi)
                .ok_or_else(|| err(format!("more groups than the score's {}", groups.len())))?;
            let mut fields = line.split_whitespace();
            let note = match fields.next() {
                Some("-") => None,
                Some(v) => Some(v.parse::<usize>().map_err(|_| err(format!("bad note {v:?}")))?),
                None => unreachable!(),
            };
            if note != group.note {
                return Err(err(format!("group {gi} belongs to {:?}", group.note)));
            }
            let mut ds = Vec::new();
            for (k, field) in fields.enumerate() {
                let (sym, d) = field
                    .split_once(':')
                    .ok_or_else(|| err(format!("expected <phoneme>:<frames>, got {field:?}")))?;
                if group.phonemes.get(k).map(String::as_str) != Some(sym) {
                    return Err(err(format!("phoneme {k} of group {gi} should be {:?}", group.phonemes.get(k))));
                }
                ds.push(d.parse::<u32>().map_err(|_| err(format!("bad frames {d:?}")))?);
            }
            durations.push(ds);
            line_index.push(n + 1);
        }
        Self::from_durations(&groups, &durations).map_err(|e| match e {
            DurationError::Sidecar { line, message } if line > 0 => DurationError::Sidecar {
                line: line_index[line - 1],
                message,
            },
            other => other,
        })
    }
}

/// Shift, look up and adjust every group of a score.
pub fn plan_from_table(
    score: &Score,
    inv: &PhonemeInventory,
    table: &DurationTable,
) -> Result<DurationPlan, DurationError> {
    let groups = shift_onset_consonants(score, inv)?;
    let mut planned = Vec::with_capacity(groups.len());
    for (gi, g) in groups.into_iter().enumerate() {
        let raw = g.raw_durations(table)?;
        let located = |e: DurationError| match e {
            DurationError::InsufficientFrames { frames, phonemes, .. } => {
                DurationError::InsufficientFrames {
                    group: gi,
                    note: g.note,
                    frames,
                    phonemes,
                }
            }
            other => other,
        };
        let scale = consonant_scale(g.frames, &raw).map_err(located)?;
        let durations = adjust_durations(g.frames, &raw).map_err(located)?;
        planned.push(PlannedGroup {
            note: g.note,
            start_frame: g.start_frame,
            phonemes: g.phonemes,
            raw,
            consonant_scale: Some(scale),
            durations,
        });
    }
    Ok(DurationPlan { groups: planned })
}

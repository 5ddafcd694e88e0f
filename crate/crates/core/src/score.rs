//! Score data model, phoneme inventory and the line-oriented score format.
//!
//! ```text
//! version 1
//! inventory phonemes.txt
//! frames 160            # optional, defaults to the end of the last note
//! note 10 50 60 s+i
//! note 60 40 R sil
//! ```
//!
//! Onsets are vowel onsets in 10 ms frames: a note's onset consonants are
//! sung before `onset_frames`, inside the preceding region.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const HOP_MS: u32 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{}", format_issues(.0))]
    Validation(Vec<ValidationIssue>),
    #[error("inventory line {line}: {message}")]
    Inventory { line: usize, message: String },
    #[error("unknown phoneme {0:?}")]
    UnknownPhoneme(String),
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn format_issues(issues: &[ValidationIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationIssue {
    pub note: usize,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "note {} (line {line}): {}", self.note, self.message),
            None => write!(f, "note {}: {}", self.note, self.message),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PhonemeClass {
    Vowel,
    Consonant,
    Silence,
}

impl PhonemeClass {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "vowel" => Some(Self::Vowel),
            "consonant" => Some(Self::Consonant),
            "silence" => Some(Self::Silence),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Vowel => "vowel",
            Self::Consonant => "consonant",
            Self::Silence => "silence",
        }
    }
}

/// Dense phoneme id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhonemeId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct PhonemeInventory {
    symbols: Vec<String>,
    classes: Vec<PhonemeClass>,
    index: HashMap<String, PhonemeId>,
    silence: PhonemeId,
}

impl PhonemeInventory {
    pub fn new(entries: &[(&str, PhonemeClass)]) -> Result<Self, ScoreError> {
        let owned: Vec<(String, PhonemeClass)> =
            entries.iter().map(|(s, c)| (s.to_string(), *c)).collect();
        Self::from_entries(owned, |i| i + 1)
    }

    fn from_entries(
        entries: Vec<(String, PhonemeClass)>,
        line_of: impl Fn(usize) -> usize,
    ) -> Result<Self, ScoreError> {
        let mut symbols = Vec::new();
        let mut classes = Vec::new();
        let mut index = HashMap::new();
        let mut silence = None;
        for (i, (sym, class)) in entries.into_iter().enumerate() {
            let err = |message: String| ScoreError::Inventory {
                line: line_of(i),
                message,
            };
            if sym.contains('+') || sym == "R" {
                return Err(err(format!("symbol {sym:?} is reserved")));
            }
            if index.contains_key(&sym) {
                return Err(err(format!("duplicate symbol {sym:?}")));
            }
            if class == PhonemeClass::Silence {
                if silence.is_some() {
                    return Err(err("more than one silence symbol".into()));
                }
                silence = Some(PhonemeId(symbols.len()));
            }
            index.insert(sym.clone(), PhonemeId(symbols.len()));
            symbols.push(sym);
            classes.push(class);
        }
        let silence = silence.ok_or(ScoreError::Inventory {
            line: 0,
            message: "no silence symbol".into(),
        })?;
        Ok(Self {
            symbols,
            classes,
            index,
            silence,
        })
    }

    /// Parses `<symbol> <vowel|consonant|silence>` lines.
    pub fn parse(text: &str) -> Result<Self, ScoreError> {
        let mut entries = Vec::new();
        let mut lines = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [sym, class] = fields[..] else {
                return Err(ScoreError::Inventory {
                    line: n + 1,
                    message: "expected `<symbol> <class>`".into(),
                });
            };
            let class = PhonemeClass::parse(class).ok_or_else(|| ScoreError::Inventory {
                line: n + 1,
                message: format!("unknown class {class:?}"),
            })?;
            entries.push((sym.to_string(), class));
            lines.push(n + 1);
        }
        Self::from_entries(entries, |i| lines[i])
    }

    pub fn load(path: &Path) -> Result<Self, ScoreError> {
        Self::parse(&read_text(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (s, c) in self.symbols.iter().zip(&self.classes) {
            let _ = writeln!(out, "{s} {}", c.as_str());
        }
        out
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn id(&self, symbol: &str) -> Option<PhonemeId> {
        self.index.get(symbol).copied()
    }

    pub fn require(&self, symbol: &str) -> Result<PhonemeId, ScoreError> {
        self.id(symbol)
            .ok_or_else(|| ScoreError::UnknownPhoneme(symbol.to_string()))
    }

    pub fn symbol(&self, id: PhonemeId) -> &str {
        &self.symbols[id.0]
    }

    pub fn class(&self, id: PhonemeId) -> PhonemeClass {
        self.classes[id.0]
    }

    pub fn class_of(&self, symbol: &str) -> Option<PhonemeClass> {
        self.id(symbol).map(|id| self.class(id))
    }

    pub fn silence(&self) -> PhonemeId {
        self.silence
    }

    pub fn silence_symbol(&self) -> &str {
        self.symbol(self.silence)
    }

    pub fn ids_of(&self, class: PhonemeClass) -> Vec<PhonemeId> {
        (0..self.len())
            .map(PhonemeId)
            .filter(|&id| self.class(id) == class)
            .collect()
    }

    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.symbols.iter().map(String::as_str)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pitch {
    Midi(u8),
    Rest,
}

impl Pitch {
    pub fn is_rest(self) -> bool {
        matches!(self, Pitch::Rest)
    }

    pub fn hz(self) -> Option<f64> {
        match self {
            Pitch::Midi(m) => Some(440.0 * 2f64.powf((f64::from(m) - 69.0) / 12.0)),
            Pitch::Rest => None,
        }
    }
}

impl fmt::Display for Pitch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pitch::Midi(m) => write!(f, "{m}"),
            Pitch::Rest => f.write_str("R"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Note {
    pub onset_frames: u32,
    pub duration_frames: u32,
    pub pitch: Pitch,
    pub phonemes: Vec<String>,
}

impl Note {
    pub fn end_frames(&self) -> u32 {
        self.onset_frames + self.duration_frames
    }
}

#[derive(Clone, Debug)]
pub struct Score {
    pub notes: Vec<Note>,
    pub total_frames: u32,
    /// Path of the inventory file as written in the score.
    pub inventory: String,
    note_lines: Vec<usize>,
}

/// Source line numbers are not part of a score's identity.
impl PartialEq for Score {
    fn eq(&self, other: &Self) -> bool {
        self.notes == other.notes && self.total_frames == other.total_frames && self.inventory == other.inventory
    }
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

fn read_text(path: &Path) -> Result<String, ScoreError> {
    std::fs::read_to_string(path).map_err(|e| ScoreError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

impl Score {
    /// Builds a score from notes, checking ordering and overlap.
    pub fn new(notes: Vec<Note>, total_frames: Option<u32>, inventory: impl Into<String>) -> Result<Self, ScoreError> {
        let lines = vec![0; notes.len()];
        Self::assemble(notes, lines, total_frames, inventory.into())
    }

    fn assemble(
        notes: Vec<Note>,
        note_lines: Vec<usize>,
        total_frames: Option<u32>,
        inventory: String,
    ) -> Result<Self, ScoreError> {
        let line_of = |i: usize| (note_lines[i] > 0).then_some(note_lines[i]);
        if notes.is_empty() {
            return Err(ScoreError::Syntax {
                line: note_lines.last().copied().unwrap_or(0),
                message: "score has no notes".into(),
            });
        }
        for (i, note) in notes.iter().enumerate() {
            if note.duration_frames == 0 || note.phonemes.is_empty() {
                return Err(ScoreError::Validation(vec![ValidationIssue {
                    note: i,
                    line: line_of(i),
                    message: "note needs a positive duration and at least one phoneme".into(),
                }]));
            }
            if i > 0 {
                let prev = &notes[i - 1];
                if note.onset_frames < prev.onset_frames {
                    return Err(ScoreError::Validation(vec![ValidationIssue {
                        note: i,
                        line: line_of(i),
                        message: "notes are not sorted by onset".into(),
                    }]));
                }
                if note.onset_frames < prev.end_frames() {
                    return Err(ScoreError::Validation(vec![ValidationIssue {
                        note: i,
                        line: line_of(i),
                        message: format!(
                            "overlaps note {} which ends at frame {}",
                            i - 1,
                            prev.end_frames()
                        ),
                    }]));
                }
            }
        }
        let end = notes.last().map(Note::end_frames).unwrap_or(0);
        let total_frames = total_frames.unwrap_or(end);
        if total_frames < end {
            return Err(ScoreError::Validation(vec![ValidationIssue {
                note: notes.len() - 1,
                line: line_of(notes.len() - 1),
                message: format!("ends at frame {end}, past total frames {total_frames}"),
            }]));
        }
        Ok(Self {
            notes,
            total_frames,
            inventory,
            note_lines,
        })
    }

    pub fn note_line(&self, index: usize) -> Option<usize> {
        self.note_lines.get(index).copied().filter(|&l| l > 0)
    }

    /// Parses the score text. Inventory-dependent checks are done by
    /// [`Score::validate_against_inventory`].
    pub fn parse(text: &[u8]) -> Result<Self, ScoreError> {
        let text = std::str::from_utf8(text).map_err(|e| ScoreError::Syntax {
            line: 1 + text[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count(),
            message: "invalid UTF-8".into(),
        })?;
        let mut version_seen = false;
        let mut inventory = None;
        let mut total = None;
        let mut notes = Vec::new();
        let mut lines = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let lineno = n + 1;
            let line = strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            let syntax = |message: String| ScoreError::Syntax {
                line: lineno,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if !version_seen {
                if fields != ["version", "1"] {
                    return Err(syntax("expected header `version 1`".into()));
                }
                version_seen = true;
                continue;
            }
            match fields[0] {
                "inventory" if inventory.is_none() && notes.is_empty() => {
                    if fields.len() != 2 {
                        return Err(syntax("expected `inventory <path>`".into()));
                    }
                    inventory = Some(fields[1].to_string());
                }
                "frames" if total.is_none() && inventory.is_some() && notes.is_empty() => {
                    let value = fields
                        .get(1)
                        .filter(|_| fields.len() == 2)
                        .and_then(|v| v.parse::<u32>().ok())
                        .filter(|&v| v > 0)
                        .ok_or_else(|| syntax("expected `frames <positive integer>`".into()))?;
                    total = Some(value);
                }
                "note" => {
                    if inventory.is_none() {
                        return Err(syntax("`inventory` line must precede notes".into()));
                    }
                    if fields.len() != 5 {
                        return Err(syntax(
                            "expected `note <onset> <duration> <pitch|R> <ph>[+<ph>...]`".into(),
                        ));
                    }
                    let onset = fields[1]
                        .parse::<u32>()
                        .map_err(|_| syntax(format!("bad onset {:?}", fields[1])))?;
                    let duration = fields[2]
                        .parse::<u32>()
                        .ok()
                        .filter(|&d| d > 0)
                        .ok_or_else(|| syntax(format!("bad duration {:?}", fields[2])))?;
                    let pitch = match fields[3] {
                        "R" => Pitch::Rest,
                        p => Pitch::Midi(
                            p.parse::<u8>()
                                .ok()
                                .filter(|&m| m <= 127)
                                .ok_or_else(|| syntax(format!("bad pitch {p:?}")))?,
                        ),
                    };
                    let phonemes: Vec<String> =
                        fields[4].split('+').map(str::to_string).collect();
                    if phonemes.iter().any(String::is_empty) {
                        return Err(syntax(format!("empty phoneme in {:?}", fields[4])));
                    }
                    notes.push(Note {
                        onset_frames: onset,
                        duration_frames: duration,
                        pitch,
                        phonemes,
                    });
                    lines.push(lineno);
                }
                other => return Err(syntax(format!("unexpected {other:?}"))),
            }
        }
        if !version_seen {
            return Err(ScoreError::Syntax {
                line: 1,
                message: "expected header `version 1`".into(),
            });
        }
        let inventory = inventory.ok_or(ScoreError::Syntax {
            line: text.lines().count().max(1),
            message: "missing `inventory` line".into(),
        })?;
        Self::assemble(notes, lines, total, inventory)
    }

    pub fn serialize(&self) -> String {
        let mut out = String::from("version 1\n");
        let _ = writeln!(out, "inventory {}", self.inventory);
        let _ = writeln!(out, "frames {}", self.total_frames);
        for note in &self.notes {
            let _ = writeln!(
                out,
                "note {} {} {} {}",
                note.onset_frames,
                note.duration_frames,
                note.pitch,
                note.phonemes.join("+")
            );
        }
        out
    }

    /// Checks every symbol resolves and every sung note has a vowel.
    /// Rests must carry exactly the silence symbol. All offending notes are
    /// reported together.
    pub fn validate_against_inventory(&self, inv: &PhonemeInventory) -> Result<(), ScoreError> {
        let mut issues = Vec::new();
        for (i, note) in self.notes.iter().enumerate() {
            let mut issue = |message: String| {
                issues.push(ValidationIssue {
                    note: i,
                    line: self.note_line(i),
                    message,
                })
            };
            let unknown: Vec<&str> = note
                .phonemes
                .iter()
                .filter(|p| inv.id(p).is_none())
                .map(String::as_str)
                .collect();
            if !unknown.is_empty() {
                issue(format!("unknown phoneme(s) {}", unknown.join(", ")));
                continue;
            }
            let classes: Vec<PhonemeClass> = note
                .phonemes
                .iter()
                .filter_map(|p| inv.class_of(p))
                .collect();
            if note.pitch.is_rest() {
                if classes != [PhonemeClass::Silence] {
                    issue(format!(
                        "rest must contain only the silence symbol {:?}",
                        inv.silence_symbol()
                    ));
                }
            } else if classes.contains(&PhonemeClass::Silence) {
                issue("sung note contains the silence symbol".into());
            } else if !classes.contains(&PhonemeClass::Vowel) {
                issue("sung note has no vowel".into());
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ScoreError::Validation(issues))
        }
    }

    /// Reads a score file plus the inventory it references (relative to
    /// the score's directory) and validates one against the other.
    pub fn load(path: &Path) -> Result<(Self, PhonemeInventory), ScoreError> {
        let bytes = std::fs::read(path).map_err(|e| ScoreError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let score = Self::parse(&bytes)?;
        let inv_path = path
            .parent()
            .unwrap_or(Path::new("."))
            .join(&score.inventory);
        let inv = PhonemeInventory::load(&inv_path)?;
        score.validate_against_inventory(&inv)?;
        Ok((score, inv))
    }
}

/// Inventory used by the synthetic corpus and the shipped duration table.
pub const DEFAULT_INVENTORY: &str = include_str!("../data/inventory.txt");

pub fn default_inventory() -> PhonemeInventory {
    PhonemeInventory::parse(DEFAULT_INVENTORY).expect("shipped inventory parses")
}

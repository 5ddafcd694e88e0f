//! Seeded synthetic singing corpus.
//!
//! A phrase is a random score, an F0 track and target features. The target
//! for a frame is a fixed random template of the phoneme sounding in that
//! frame (under the "true" alignment), plus a scaled log-F0 offset on every
//! channel, smoothed over a short window so that neighbouring phonemes blend.
//! The true alignment comes from a singer whose mean durations deviate from
//! the shipped table by a per-phoneme factor, with a little extra boundary
//! jitter.

use std::collections::BTreeMap;

use crate::conditioning::{expand_states, F0CoderConfig, F0Track};
use crate::duration::{plan_from_table, DurationPlan, DurationTable};
use crate::numerics::rng::streams;
use crate::numerics::{Rng, Tensor};
use crate::score::{Note, PhonemeClass, PhonemeInventory, Pitch, Score};

use super::TrainingError;

/// Inventory path written into generated scores.
pub const CORPUS_INVENTORY: &str = "inventory.txt";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorpusConfig {
    pub notes: (usize, usize),
    pub note_frames: (u32, u32),
    pub edge_silence: (u32, u32),
    pub gap_prob: f64,
    pub gap_frames: (u32, u32),
    pub rest_prob: f64,
    pub midi: (u8, u8),
    /// Standard deviation of per-frame F0 deviations, in cents.
    pub f0_jitter_cents: f64,
    /// Largest shift of an internal phoneme boundary, in frames.
    pub boundary_jitter: u32,
    /// Singer durations are table means times `U[1 − s, 1 + s]`.
    pub singer_spread: f64,
    pub feature_dim: usize,
    pub template_std: f64,
    pub f0_weight: f64,
    pub smoothing: usize,
    pub f0: F0CoderConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            notes: (2, 8),
            note_frames: (20, 80),
            edge_silence: (10, 30),
            gap_prob: 0.15,
            gap_frames: (5, 20),
            rest_prob: 0.1,
            midi: (45, 67),
            f0_jitter_cents: 15.0,
            boundary_jitter: 1,
            singer_spread: 0.25,
            feature_dim: 64,
            template_std: 0.5,
            f0_weight: 0.2,
            smoothing: 5,
            f0: F0CoderConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phrase {
    pub score: Score,
    pub f0: F0Track,
    /// `[T × feature_dim]`
    pub target: Tensor,
    /// The alignment the targets were rendered with.
    pub durations: DurationPlan,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub seed: u64,
    pub phrases: Vec<Phrase>,
}

impl SyntheticCorpus {
    /// Splits off everything after the first `n` phrases.
    pub fn split(mut self, n: usize) -> (Vec<Phrase>, Vec<Phrase>) {
        let rest = self.phrases.split_off(n.min(self.phrases.len()));
        (self.phrases, rest)
    }
}

/// `2·(ln f − ln f_min)/(ln f_max − ln f_min) − 1` after clipping; 0 when
/// unvoiced.
pub fn normalized_log_f0(f0: f64, cfg: &F0CoderConfig) -> f64 {
    if f0 <= 0.0 {
        return 0.0;
    }
    let (lo, hi) = (cfg.f_min.ln(), cfg.f_max.ln());
    let x = f0.ln().clamp(lo, hi);
    2.0 * (x - lo) / (hi - lo) - 1.0
}

/// Centered moving average with replicated edge rows.
pub fn smooth_rows(x: &Tensor, window: usize) -> Tensor {
    if window <= 1 {
        return x.clone();
    }
    let (t, c) = (x.rows(), x.cols());
    let half = (window / 2) as isize;
    let mut out = vec![0.0; t * c];
    for (r, dst) in out.chunks_mut(c).enumerate() {
        for k in -half..=half {
            let src = (r as isize + k).clamp(0, t as isize - 1) as usize;
            for (d, s) in dst.iter_mut().zip(x.row(src)) {
                *d += s;
            }
        }
        let n = (2 * half + 1) as f64;
        for d in dst.iter_mut() {
            *d /= n;
        }
    }
    Tensor::new(&[t, c], out).expect("same shape")
}

fn pick<'a>(rng: &mut Rng, items: &'a [String]) -> &'a String {
    &items[rng.index(items.len())]
}

fn range_u32(rng: &mut Rng, (lo, hi): (u32, u32)) -> u32 {
    rng.int_range(i64::from(lo), i64::from(hi)) as u32
}

fn symbols(inv: &PhonemeInventory, class: PhonemeClass) -> Vec<String> {
    inv.ids_of(class).into_iter().map(|id| inv.symbol(id).to_string()).collect()
}

fn random_score(rng: &mut Rng, inv: &PhonemeInventory, cfg: &CorpusConfig) -> Result<Score, TrainingError> {
    let vowels = symbols(inv, PhonemeClass::Vowel);
    let consonants = symbols(inv, PhonemeClass::Consonant);
    let n = rng.int_range(cfg.notes.0 as i64, cfg.notes.1 as i64) as usize;
    let mut cursor = range_u32(rng, cfg.edge_silence);
    let mut notes = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 && rng.bernoulli(cfg.gap_prob) {
            cursor += range_u32(rng, cfg.gap_frames);
        }
        let duration = range_u32(rng, cfg.note_frames);
        let note = if i > 0 && rng.bernoulli(cfg.rest_prob) {
            Note {
                onset_frames: cursor,
                duration_frames: duration,
                pitch: Pitch::Rest,
                phonemes: vec![inv.silence_symbol().to_string()],
            }
        } else {
            let mut phonemes = Vec::new();
            for _ in 0..rng.int_range(0, 2) {
                phonemes.push(pick(rng, &consonants).clone());
            }
            phonemes.push(pick(rng, &vowels).clone());
            if rng.bernoulli(0.5) {
                phonemes.push(pick(rng, &consonants).clone());
            }
            let midi = rng.int_range(i64::from(cfg.midi.0), i64::from(cfg.midi.1)) as u8;
            Note {
                onset_frames: cursor,
                duration_frames: duration,
                pitch: Pitch::Midi(midi),
                phonemes,
            }
        };
        cursor += duration;
        notes.push(note);
    }
    let total = cursor + range_u32(rng, cfg.edge_silence);
    Ok(Score::new(notes, Some(total), CORPUS_INVENTORY)?)
}

fn random_f0(rng: &mut Rng, score: &Score, cfg: &CorpusConfig) -> Result<F0Track, TrainingError> {
    let mut f0 = vec![0.0; score.total_frames as usize];
    for note in &score.notes {
        let Some(hz) = note.pitch.hz() else { continue };
        for v in &mut f0[note.onset_frames as usize..note.end_frames() as usize] {
            let cents = cfg.f0_jitter_cents * rng.normal();
            *v = (hz * (cents / 1200.0).exp2()).clamp(cfg.f0.f_min, cfg.f0.f_max);
        }
    }
    Ok(F0Track::new(f0)?)
}

/// Each table mean scaled by its own factor in `[1 − spread, 1 + spread]`.
pub fn singer_table(table: &DurationTable, spread: f64, rng: &mut Rng) -> Result<DurationTable, TrainingError> {
    let means: BTreeMap<String, f64> = table
        .iter()
        .map(|(s, m)| (s.to_string(), m * rng.uniform_range(1.0 - spread, 1.0 + spread)))
        .collect();
    Ok(DurationTable::new(means)?)
}

fn jitter_boundaries(plan: &mut DurationPlan, max: u32, rng: &mut Rng) {
    if max == 0 {
        return;
    }
    for group in &mut plan.groups {
        for k in 0..group.durations.len().saturating_sub(1) {
            let delta = rng.int_range(-i64::from(max), i64::from(max));
            let a = i64::from(group.durations[k]) + delta;
            let b = i64::from(group.durations[k + 1]) - delta;
            if a >= 1 && b >= 1 {
                group.durations[k] = a as u32;
                group.durations[k + 1] = b as u32;
            }
        }
        group.raw.clear();
        group.consonant_scale = None;
    }
}

/// Renders target features for a phrase under a given alignment.
pub fn render_targets(
    plan: &DurationPlan,
    f0: &F0Track,
    templates: &Tensor,
    inv: &PhonemeInventory,
    cfg: &CorpusConfig,
) -> Result<Tensor, TrainingError> {
    let phonemes = plan.phoneme_sequence();
    let ids = phonemes
        .iter()
        .map(|s| inv.require(s).map(|id| id.0))
        .collect::<Result<Vec<_>, _>>()?;
    let states = expand_states(plan);
    let dim = templates.cols();
    let mut data = Vec::with_capacity(states.len() * dim);
    for (t, &s) in states.iter().enumerate() {
        let offset = cfg.f0_weight * normalized_log_f0(f0.values()[t], &cfg.f0);
        data.extend(templates.row(ids[s]).iter().map(|v| v + offset));
    }
    let raw = Tensor::new(&[states.len(), dim], data)?;
    Ok(smooth_rows(&raw, cfg.smoothing))
}

/// Phoneme templates `[inventory × feature_dim]` for a corpus seed.
pub fn templates(seed: u64, inv: &PhonemeInventory, cfg: &CorpusConfig) -> Tensor {
    let mut rng = Rng::derive(seed, streams::CORPUS, &[0]);
    Tensor::normal(&[inv.len(), cfg.feature_dim], cfg.template_std, &mut rng)
}

/// Phrases `0..num_phrases` of the corpus with this seed. Phrase `i` does not
/// depend on how many phrases are requested.
pub fn generate_corpus(
    seed: u64,
    num_phrases: usize,
    inv: &PhonemeInventory,
    table: &DurationTable,
    cfg: &CorpusConfig,
) -> Result<SyntheticCorpus, TrainingError> {
    if inv.ids_of(PhonemeClass::Vowel).len() < 3 || inv.ids_of(PhonemeClass::Consonant).len() < 5 {
        return Err(TrainingError::Config(
            "corpus inventory needs at least 3 vowels and 5 consonants".into(),
        ));
    }
    cfg.f0.validate()?;
    table.check_complete(inv)?;
    let templates = templates(seed, inv, cfg);
    let singer = singer_table(table, cfg.singer_spread, &mut Rng::derive(seed, streams::CORPUS, &[1]))?;
    let mut phrases = Vec::with_capacity(num_phrases);
    for i in 0..num_phrases {
        let mut rng = Rng::derive(seed, streams::CORPUS, &[2, i as u64]);
        let score = random_score(&mut rng, inv, cfg)?;
        let f0 = random_f0(&mut rng, &score, cfg)?;
        let mut durations = plan_from_table(&score, inv, &singer)?;
        jitter_boundaries(&mut durations, cfg.boundary_jitter, &mut rng);
        let target = render_targets(&durations, &f0, &templates, inv, cfg)?;
        phrases.push(Phrase {
            score,
            f0,
            target,
            durations,
        });
    }
    Ok(SyntheticCorpus { seed, phrases })
}

/// Per-phoneme mean durations measured on a set of aligned phrases; symbols
/// that never occur keep their `fallback` value.
pub fn estimate_table(phrases: &[Phrase], fallback: &DurationTable) -> Result<DurationTable, TrainingError> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for p in phrases {
        for g in &p.durations.groups {
            for (s, &d) in g.phonemes.iter().zip(&g.durations) {
                let e = sums.entry(s.clone()).or_insert((0.0, 0));
                e.0 += f64::from(d);
                e.1 += 1;
            }
        }
    }
    let means = fallback
        .iter()
        .map(|(s, m)| {
            let v = sums.get(s).map_or(m, |&(sum, n)| sum / n as f64);
            (s.to_string(), v)
        })
        .collect();
    Ok(DurationTable::new(means)?)
}

//! Four-way comparison of alignment sources and the attention sub-layers.
//!
//! * `full`: shipped duration table (averages from another singer), attention on
//! * `no_self_attention`: shipped table, convolution-only decoder layers
//! * `gt_durations`: the corpus alignment itself
//! * `avg_durations`: averages re-measured on the training phrases

use std::fmt;

use crate::duration::DurationTable;
use crate::model::{Model, ModelConfig};
use crate::score::PhonemeInventory;

use super::{
    estimate_table, evaluate, mean, prepare_examples, train, DurationSource, Phrase, TrainConfig, TrainingError,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Full,
    NoSelfAttention,
    GtDurations,
    AvgDurations,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::NoSelfAttention,
        Variant::GtDurations,
        Variant::AvgDurations,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoSelfAttention => "no_self_attention",
            Variant::GtDurations => "gt_durations",
            Variant::AvgDurations => "avg_durations",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    /// Validation L1 per variant, in [`Variant::ALL`] order.
    pub rows: Vec<(Variant, f64)>,
}

impl AblationReport {
    pub fn get(&self, v: Variant) -> f64 {
        self.rows.iter().find(|(k, _)| *k == v).map(|r| r.1).expect("complete report")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,val_l1\n");
        for (v, l1) in &self.rows {
            out.push_str(&format!("{v},{l1}\n"));
        }
        out
    }

    /// Whether `gt_durations ≤ avg_durations ≤ no_self_attention` held.
    pub fn ordering_holds(&self) -> bool {
        let gt = self.get(Variant::GtDurations);
        let avg = self.get(Variant::AvgDurations);
        let no_attn = self.get(Variant::NoSelfAttention);
        gt <= avg && avg <= no_attn
    }
}

/// Collects one row per variant; every variant must be present once.
pub fn ablation_report(rows: &[(Variant, f64)]) -> Result<AblationReport, TrainingError> {
    let mut out = Vec::with_capacity(4);
    for v in Variant::ALL {
        let l1 = rows
            .iter()
            .find(|(k, _)| *k == v)
            .map(|r| r.1)
            .ok_or(TrainingError::MissingVariant(v.name()))?;
        out.push((v, l1));
    }
    Ok(AblationReport { rows: out })
}

/// Trains every variant from the same seed and reports validation L1 of the
/// Polyak weights.
pub fn run_ablation(
    train_phrases: &[Phrase],
    val_phrases: &[Phrase],
    inv: &PhonemeInventory,
    table: &DurationTable,
    model_cfg: ModelConfig,
    train_cfg: &TrainConfig,
    mut progress: impl FnMut(Variant, f64),
) -> Result<AblationReport, TrainingError> {
    if val_phrases.is_empty() {
        return Err(TrainingError::Config("ablation needs validation phrases".into()));
    }
    let measured = estimate_table(train_phrases, table)?;
    let mut rows = Vec::with_capacity(4);
    for v in Variant::ALL {
        let mut cfg = model_cfg;
        cfg.decoder.self_attention = v != Variant::NoSelfAttention;
        let source = match v {
            Variant::Full | Variant::NoSelfAttention => DurationSource::Table(table),
            Variant::GtDurations => DurationSource::GroundTruth,
            Variant::AvgDurations => DurationSource::Table(&measured),
        };
        let (model, init) = Model::init(cfg, inv.len(), train_cfg.seed)?;
        let train_set = prepare_examples(&model, inv, train_phrases, source)?;
        let val_set = prepare_examples(&model, inv, val_phrases, source)?;
        let out = train(&model, init, &train_set, &[], train_cfg, |_| {})?;
        let l1 = mean(&evaluate(&model, &out.state.shadow, &val_set)?);
        progress(v, l1);
        rows.push((v, l1));
    }
    ablation_report(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duration::default_table;
    use crate::training::tests::tiny_corpus;

    #[test]
    fn report_needs_every_variant() {
        let rows = [(Variant::Full, 1.0), (Variant::GtDurations, 0.5)];
        assert!(matches!(
            ablation_report(&rows),
            Err(TrainingError::MissingVariant("no_self_attention"))
        ));
        let rows: Vec<_> = Variant::ALL.iter().rev().map(|&v| (v, 0.1)).collect();
        let r = ablation_report(&rows).unwrap();
        assert_eq!(r.rows.iter().map(|r| r.0).collect::<Vec<_>>(), Variant::ALL);
        assert!(r.to_csv().starts_with("variant,val_l1\nfull,0.1\n"));
    }

    #[test]
    fn tiny_ablation_is_deterministic() {
        let (inv, phrases) = tiny_corpus();
        let mut cfg = ModelConfig::desk();
        cfg.encoder.embed_dim = 8;
        cfg.encoder.channels = 4;
        cfg.decoder.d_model = 8;
        cfg.decoder.out_dim = 6;
        let tc = TrainConfig {
            updates: 5,
            batch: 2,
            warmup: 5,
            ..TrainConfig::desk()
        };
        let run = || run_ablation(&phrases[..4], &phrases[4..], &inv, &default_table(), cfg, &tc, |_, _| {}).unwrap();
        let a = run();
        assert_eq!(a, run());
        assert_eq!(a.rows.len(), 4);
        assert!(a.rows.iter().all(|r| r.1.is_finite()));
    }
}

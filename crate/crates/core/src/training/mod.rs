//! L1 training with Adam, warm-up and Polyak averaging.

pub mod ablation;
pub mod corpus;
pub mod optim;

use rayon::prelude::*;
use thiserror::Error;

use crate::conditioning::ConditioningError;
use crate::duration::{plan_from_table, DurationError, DurationTable};
use crate::model::{Model, ModelConfig, ModelError, PhraseInput};
use crate::numerics::rng::streams;
use crate::numerics::{Graph, Gradients, Mode, NumericsError, ParamStore, Rng, Tensor};
use crate::score::{PhonemeInventory, ScoreError};

pub use ablation::{ablation_report, run_ablation, AblationReport, Variant};
pub use corpus::{estimate_table, generate_corpus, CorpusConfig, Phrase, SyntheticCorpus};
pub use optim::{adam_step, noam_lr, AdamConfig, OptimizerState, PolyakShadow};

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("learning-rate step must be at least 1, got {0}")]
    InvalidStep(u64),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("non-finite loss at update {step}")]
    NonFiniteLoss { step: u64, last_good: Box<TrainState> },
    #[error("parameter layout mismatch")]
    LayoutMismatch,
    #[error("no training phrases")]
    EmptyCorpus,
    #[error("ablation report is missing variant {0}")]
    MissingVariant(&'static str),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Duration(#[from] DurationError),
    #[error(transparent)]
    Conditioning(#[from] ConditioningError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub warmup: u64,
    pub adam: AdamConfig,
    pub polyak_decay: f64,
    pub batch: usize,
    pub updates: u64,
    pub seed: u64,
    /// Validate every this many updates; 0 validates only after the last.
    pub val_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-3,
            warmup: 4000,
            adam: AdamConfig::default(),
            polyak_decay: 0.995,
            batch: 32,
            updates: 50_000,
            seed: 0,
            val_every: 0,
        }
    }
}

impl TrainConfig {
    /// CPU-sized run: batches of 8, 2000 updates, warmup 500. A 4000-step
    /// warmup would never reach the peak rate inside 2000 updates.
    pub fn desk() -> Self {
        Self {
            batch: 8,
            updates: 2000,
            warmup: 500,
            ..Self::default()
        }
    }
}

/// Raw and averaged parameters after some number of updates.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: ParamStore,
    pub shadow: ParamStore,
    pub updates: u64,
}

/// Everything needed to synthesize: config, lookup tables and weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub inventory: PhonemeInventory,
    pub table: DurationTable,
    pub state: TrainState,
}

impl Checkpoint {
    pub fn build_model(&self) -> Result<Model, ModelError> {
        let model = Model::with_params(self.model, self.inventory.len(), &self.state.params)?;
        self.state
            .params
            .check_layout(&self.state.shadow)
            .map_err(|e| ModelError::Layout(e.to_string()))?;
        Ok(model)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricRow {
    pub step: u64,
    pub lr: f64,
    pub train_l1: f64,
    pub val_l1: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricRow>,
}

impl MetricsLog {
    pub fn to_csv(&self) -> String {
        let with_val = self.rows.iter().any(|r| r.val_l1.is_some());
        let mut out = String::from(if with_val { "step,lr,train_l1,val_l1\n" } else { "step,lr,train_l1\n" });
        for r in &self.rows {
            out.push_str(&format!("{},{:e},{}", r.step, r.lr, r.train_l1));
            if with_val {
                out.push(',');
                if let Some(v) = r.val_l1 {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn final_train_l1(&self) -> Option<f64> {
        self.rows.last().map(|r| r.train_l1)
    }

    pub fn last_val_l1(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.val_l1)
    }
}

/// A prepared phrase and its target features.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: PhraseInput,
    pub target: Tensor,
}

/// Where the aligner's durations come from.
#[derive(Clone, Copy, Debug)]
pub enum DurationSource<'a> {
    Table(&'a DurationTable),
    GroundTruth,
}

pub fn prepare_examples(
    model: &Model,
    inv: &PhonemeInventory,
    phrases: &[Phrase],
    source: DurationSource<'_>,
) -> Result<Vec<Example>, TrainingError> {
    phrases
        .iter()
        .map(|p| {
            let plan = match source {
                DurationSource::Table(t) => plan_from_table(&p.score, inv, t)?,
                DurationSource::GroundTruth => p.durations.clone(),
            };
            let input = model.prepare(inv, &plan, &p.f0)?;
            if p.target.rows() != input.frames() || p.target.cols() != model.cfg.decoder.out_dim {
                return Err(NumericsError::ShapeMismatch {
                    op: "target",
                    left: p.target.shape().to_vec(),
                    right: vec![input.frames(), model.cfg.decoder.out_dim],
                }
                .into());
            }
            Ok(Example {
                input,
                target: p.target.clone(),
            })
        })
        .collect()
}

/// Mean absolute error between two equally shaped tensors.
pub fn l1_distance(pred: &Tensor, target: &Tensor) -> Result<f64, NumericsError> {
    if pred.shape() != target.shape() {
        return Err(NumericsError::ShapeMismatch {
            op: "l1",
            left: pred.shape().to_vec(),
            right: target.shape().to_vec(),
        });
    }
    let s: f64 = pred.data().iter().zip(target.data()).map(|(a, b)| (a - b).abs()).sum();
    Ok(s / pred.len() as f64)
}

/// Per-example L1 of eval-mode predictions.
pub fn evaluate(model: &Model, params: &ParamStore, examples: &[Example]) -> Result<Vec<f64>, TrainingError> {
    examples
        .par_iter()
        .map(|ex| {
            let y = model.predict(params, &ex.input)?;
            Ok(l1_distance(&y, &ex.target)?)
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Loss and summed gradients of `Σ|pred − target| / N` over a batch, where
/// `N` counts every target element in the batch. Phrases are differentiated
/// independently and reduced in batch order.
pub fn batch_gradients(
    model: &Model,
    params: &ParamStore,
    examples: &[Example],
    batch: &[usize],
    mode: Mode,
    dropout_key: (u64, u64),
) -> Result<(f64, Gradients), TrainingError> {
    let total: usize = batch.iter().map(|&i| examples[i].target.len()).sum();
    let scale = 1.0 / total as f64;
    let parts: Vec<Result<(f64, Gradients), NumericsError>> = batch
        .par_iter()
        .enumerate()
        .map(|(k, &i)| {
            let ex = &examples[i];
            let mut g = Graph::with_params(params);
            let mut rng = Rng::derive(dropout_key.0, streams::DROPOUT, &[dropout_key.1, k as u64]);
            let y = model.forward(&mut g, &ex.input, mode, &mut rng)?;
            let t = g.constant(ex.target.clone());
            let loss = g.abs_diff_sum(y, t, scale)?;
            let value = g.value(loss).item();
            g.backward(loss)?;
            let mut grads = Gradients::zeros_for(params);
            g.accumulate_param_grads(&mut grads);
            Ok((value, grads))
        })
        .collect();
    let mut loss = 0.0;
    let mut grads = Gradients::zeros_for(params);
    for part in parts {
        let (l, g) = part?;
        loss += l;
        grads.add_assign(&g);
    }
    Ok((loss, grads))
}

/// Epoch-wise shuffled order over the training examples.
struct BatchSampler {
    seed: u64,
    len: usize,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
}

impl BatchSampler {
    fn new(seed: u64, len: usize) -> Self {
        Self {
            seed,
            len,
            epoch: 0,
            order: Vec::new(),
            pos: 0,
        }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        (0..size)
            .map(|_| {
                if self.pos == self.order.len() {
                    self.order = (0..self.len).collect();
                    Rng::derive(self.seed, streams::BATCH, &[self.epoch]).shuffle(&mut self.order);
                    self.epoch += 1;
                    self.pos = 0;
                }
                self.pos += 1;
                self.order[self.pos - 1]
            })
            .collect()
    }
}

pub struct TrainOutcome {
    pub state: TrainState,
    pub optimizer: OptimizerState,
    pub log: MetricsLog,
}

/// Runs `cfg.updates` optimizer steps from `init`. Validation uses the
/// Polyak weights. `on_row` sees every metrics row as it is produced.
pub fn train(
    model: &Model,
    init: ParamStore,
    train_set: &[Example],
    val_set: &[Example],
    cfg: &TrainConfig,
    mut on_row: impl FnMut(&MetricRow),
) -> Result<TrainOutcome, TrainingError> {
    if train_set.is_empty() {
        return Err(TrainingError::EmptyCorpus);
    }
    if cfg.batch == 0 {
        return Err(TrainingError::Config("batch must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&cfg.polyak_decay) {
        return Err(TrainingError::Config("polyak_decay must be in [0, 1)".into()));
    }
    let mut params = init;
    let mut shadow = PolyakShadow::new(cfg.polyak_decay, &params);
    let mut opt = OptimizerState::new(cfg.adam, &params);
    let mut sampler = BatchSampler::new(cfg.seed, train_set.len());
    let mut log = MetricsLog::default();
    for step in 1..=cfg.updates {
        let lr = noam_lr(step, cfg.base_lr, cfg.warmup)?;
        let batch = sampler.next_batch(cfg.batch);
        let (loss, grads) = batch_gradients(model, &params, train_set, &batch, Mode::Train, (cfg.seed, step))?;
        if !loss.is_finite() || !grads.all_finite() {
            return Err(TrainingError::NonFiniteLoss {
                step,
                last_good: Box::new(TrainState {
                    params,
                    shadow: shadow.params,
                    updates: step - 1,
                }),
            });
        }
        adam_step(&mut params, &grads, &mut opt, lr)?;
        shadow.update(&params)?;
        let validate = !val_set.is_empty()
            && (step == cfg.updates || (cfg.val_every > 0 && step % cfg.val_every == 0));
        let val_l1 = if validate {
            Some(mean(&evaluate(model, &shadow.params, val_set)?))
        } else {
            None
        };
        let row = MetricRow {
            step,
            lr,
            train_l1: loss,
            val_l1,
        };
        on_row(&row);
        log.rows.push(row);
    }
    Ok(TrainOutcome {
        state: TrainState {
            params,
            shadow: shadow.params,
            updates: cfg.updates,
        },
        optimizer: opt,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duration::default_table;
    use crate::score::default_inventory;

    pub(crate) fn tiny_model(inv: &PhonemeInventory) -> (Model, ParamStore) {
        let mut cfg = ModelConfig::desk();
        cfg.encoder.embed_dim = 16;
        cfg.encoder.channels = 8;
        cfg.decoder.d_model = 16;
        cfg.decoder.out_dim = 6;
        Model::init(cfg, inv.len(), 4).unwrap()
    }

    pub(crate) fn tiny_corpus() -> (PhonemeInventory, Vec<Phrase>) {
        let inv = default_inventory();
        let cfg = CorpusConfig {
            notes: (2, 3),
            feature_dim: 6,
            ..CorpusConfig::default()
        };
        let c = generate_corpus(1, 6, &inv, &default_table(), &cfg).unwrap();
        (inv, c.phrases)
    }

    #[test]
    fn l1_examples() {
        let a = Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(&[2, 2], vec![2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(l1_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(l1_distance(&a, &b).unwrap(), 1.0);
        assert!(l1_distance(&a, &Tensor::zeros(&[4])).is_err());
    }

    #[test]
    fn zero_updates_keep_init() {
        let (inv, phrases) = tiny_corpus();
        let (model, params) = tiny_model(&inv);
        let ex = prepare_examples(&model, &inv, &phrases, DurationSource::GroundTruth).unwrap();
        let cfg = TrainConfig {
            updates: 0,
            ..TrainConfig::desk()
        };
        let out = train(&model, params.clone(), &ex, &[], &cfg, |_| {}).unwrap();
        assert!(out.log.rows.is_empty());
        assert_eq!(out.state.params, params);
        assert_eq!(out.state.shadow, params);
    }

    #[test]
    fn batch_loss_matches_pooled_l1() {
        let (inv, phrases) = tiny_corpus();
        let (model, params) = tiny_model(&inv);
        let ex = prepare_examples(&model, &inv, &phrases, DurationSource::Table(&default_table())).unwrap();
        let (loss, _) = batch_gradients(&model, &params, &ex, &[0, 2, 3], Mode::Eval, (0, 0)).unwrap();
        let mut abs = 0.0;
        let mut n = 0;
        for i in [0, 2, 3] {
            let y = model.predict(&params, &ex[i].input).unwrap();
            abs += l1_distance(&y, &ex[i].target).unwrap() * y.len() as f64;
            n += y.len();
        }
        assert!((loss - abs / n as f64).abs() < 1e-12);
    }

    #[test]
    fn short_run_is_deterministic_and_learns() {
        let (inv, phrases) = tiny_corpus();
        let (model, params) = tiny_model(&inv);
        let ex = prepare_examples(&model, &inv, &phrases, DurationSource::GroundTruth).unwrap();
        let cfg = TrainConfig {
            updates: 40,
            warmup: 10,
            batch: 3,
            val_every: 20,
            ..TrainConfig::desk()
        };
        let a = train(&model, params.clone(), &ex, &ex[..2], &cfg, |_| {}).unwrap();
        let b = train(&model, params.clone(), &ex, &ex[..2], &cfg, |_| {}).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.state, b.state);
        let first = a.log.rows[0].train_l1;
        let last = a.log.final_train_l1().unwrap();
        assert!(last < first, "{first} -> {last}");
        assert!(a.log.rows[19].val_l1.is_some() && a.log.rows[18].val_l1.is_none());
        assert_eq!(a.optimizer.step, 40);
    }

    #[test]
    fn sampler_covers_each_epoch() {
        let mut s = BatchSampler::new(3, 5);
        let mut first: Vec<_> = s.next_batch(5);
        first.sort();
        assert_eq!(first, [0, 1, 2, 3, 4]);
        let mut next = s.next_batch(3);
        next.extend(s.next_batch(2));
        next.sort();
        assert_eq!(next, [0, 1, 2, 3, 4]);
    }

    #[test]
    fn csv_header() {
        let mut log = MetricsLog::default();
        log.rows.push(MetricRow {
            step: 1,
            lr: 2.5e-7,
            train_l1: 0.5,
            val_l1: None,
        });
        assert_eq!(log.to_csv(), "step,lr,train_l1\n1,2.5e-7,0.5\n");
        log.rows.push(MetricRow {
            step: 2,
            lr: 5e-7,
            train_l1: 0.25,
            val_l1: Some(0.75),
        });
        assert_eq!(log.to_csv(), "step,lr,train_l1,val_l1\n1,2.5e-7,0.5,\n2,5e-7,0.25,0.75\n");
    }
}

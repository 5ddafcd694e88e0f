//! Trains a small model, saves a checkpoint, reloads it and renders a
//! held-out phrase with table and recorded durations.
//!
//! cargo run --release --example train_and_synth

use ffsing::duration::default_table;
use ffsing::io::checkpoint::{checkpoint_from_bytes, checkpoint_to_bytes};
use ffsing::model::{Model, ModelConfig};
use ffsing::score::default_inventory;
use ffsing::training::{
    evaluate, generate_corpus, l1_distance, prepare_examples, train, Checkpoint, CorpusConfig, DurationSource,
    TrainConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inv = default_inventory();
    let table = default_table();
    let (train_phrases, val_phrases) = generate_corpus(2, 10, &inv, &table, &CorpusConfig::default())?.split(8);
    let cfg = ModelConfig::desk();
    let (model, init) = Model::init(cfg, inv.len(), 4)?;
    let train_set = prepare_examples(&model, &inv, &train_phrases, DurationSource::Table(&table))?;
    let val_set = prepare_examples(&model, &inv, &val_phrases, DurationSource::Table(&table))?;
    let tc = TrainConfig {
        updates: 300,
        warmup: 100,
        val_every: 100,
        ..TrainConfig::desk()
    };
    let outcome = train(&model, init, &train_set, &val_set, &tc, |row| {
        if let Some(v) = row.val_l1 {
            println!("step {:4}  train {:.4}  val {v:.4}", row.step, row.train_l1);
        }
    })?;

    let bytes = checkpoint_to_bytes(&Checkpoint {
        model: cfg,
        inventory: inv.clone(),
        table: table.clone(),
        state: outcome.state,
    });
    let ck = checkpoint_from_bytes(&bytes)?;
    let model = ck.build_model()?;
    println!("checkpoint: {} bytes, {} updates", bytes.len(), ck.state.updates);

    let phrase = &val_phrases[0];
    for (label, plan) in [
        ("table durations", ffsing::duration::plan_from_table(&phrase.score, &inv, &table)?),
        ("recorded durations", phrase.durations.clone()),
    ] {
        let input = model.prepare(&inv, &plan, &phrase.f0)?;
        let out = model.predict(&ck.state.shadow, &input)?;
        println!("{label}: {:?} features, L1 {:.4}", out.shape(), l1_distance(&out, &phrase.target)?);
    }
    let per_phrase = evaluate(&model, &ck.state.shadow, &val_set)?;
    println!("validation L1 per phrase {per_phrase:.4?}");
    Ok(())
}

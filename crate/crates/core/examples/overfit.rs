//! Overfits the desk-scale model on a small synthetic corpus and reports
//! training and resynthesis L1.
//!
//! cargo run --release --example overfit -- [updates] [warmup]

use std::time::Instant;

use ffsing::duration::default_table;
use ffsing::model::{Model, ModelConfig};
use ffsing::score::default_inventory;
use ffsing::training::{
    evaluate, generate_corpus, prepare_examples, train, CorpusConfig, DurationSource, TrainConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let inv = default_inventory();
    let table = default_table();
    let corpus = generate_corpus(1, 16, &inv, &table, &CorpusConfig::default())?;
    let (model, init) = Model::init(ModelConfig::desk(), inv.len(), 1)?;
    let examples = prepare_examples(&model, &inv, &corpus.phrases, DurationSource::Table(&table))?;
    let mut cfg = TrainConfig::desk();
    if let Some(&u) = args.first() {
        cfg.updates = u;
    }
    if let Some(&w) = args.get(1) {
        cfg.warmup = w;
    }
    let start = Instant::now();
    let out = train(&model, init, &examples, &[], &cfg, |row| {
        if row.step % 100 == 0 {
            println!("step {:5}  lr {:.2e}  train L1 {:.4}", row.step, row.lr, row.train_l1);
        }
    })?;
    let per_phrase = evaluate(&model, &out.state.shadow, &examples)?;
    let mean = per_phrase.iter().sum::<f64>() / per_phrase.len() as f64;
    let worst = per_phrase.iter().cloned().fold(0.0, f64::max);
    println!("resynthesis L1: mean {mean:.4}, worst {worst:.4}");
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

//! Short four-variant ablation: full model, no self-attention, recorded
//! durations and corpus-estimated average durations.
//!
//! cargo run --release --example ablation -- [updates]

use ffsing::duration::default_table;
use ffsing::model::ModelConfig;
use ffsing::score::default_inventory;
use ffsing::training::{generate_corpus, run_ablation, CorpusConfig, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let updates = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(300);
    let inv = default_inventory();
    let table = default_table();
    let (train, val) = generate_corpus(1, 20, &inv, &table, &CorpusConfig::default())?.split(16);
    let cfg = TrainConfig {
        updates,
        warmup: updates / 3 + 1,
        ..TrainConfig::desk()
    };
    let report = run_ablation(&train, &val, &inv, &table, ModelConfig::desk(), &cfg, |v, l1| {
        println!("{:>18}: validation L1 {l1:.4}", v.name());
    })?;
    print!("{}", report.to_csv());
    println!("gt <= avg <= no attention: {}", report.ordering_holds());
    Ok(())
}

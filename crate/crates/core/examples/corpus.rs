//! Generates the synthetic corpus, writes it as a phrase-list directory and
//! compares the recorded durations with the table alignment.
//!
//! cargo run --example corpus -- [out_dir]

use std::path::PathBuf;

use ffsing::duration::{default_table, plan_from_table};
use ffsing::io::{load_phrase_list, write_corpus};
use ffsing::score::default_inventory;
use ffsing::training::{estimate_table, generate_corpus, CorpusConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("ffsing-corpus"));
    let inv = default_inventory();
    let table = default_table();
    let corpus = generate_corpus(1, 12, &inv, &table, &CorpusConfig::default())?;
    for (i, p) in corpus.phrases.iter().take(3).enumerate() {
        let planned = plan_from_table(&p.score, &inv, &table)?;
        let moved: u32 = p
            .durations
            .durations()
            .iter()
            .zip(planned.durations())
            .map(|(a, b)| a.abs_diff(b))
            .sum();
        println!(
            "phrase {i}: {} notes, {} frames, {} phonemes, {moved} frames differ from the table plan",
            p.score.notes.len(),
            p.score.total_frames,
            p.durations.num_phonemes()
        );
    }
    let estimate = estimate_table(&corpus.phrases, &table)?;
    for s in ["a", "i", "s", "t", "sil"] {
        println!("  {s:>3}: shipped {:5.1}  estimated {:5.1}", table.mean(s)?, estimate.mean(s)?);
    }
    let (train, val) = corpus.split(10);
    write_corpus(&dir, &train, &val, &inv)?;
    let back = load_phrase_list(&dir.join("train.list"))?;
    println!("wrote {} + {} phrases to {}; reloaded {}", train.len(), val.len(), dir.display(), back.len());
    Ok(())
}

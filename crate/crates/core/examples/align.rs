//! Duration plan of a small score: onset consonants move into the previous
//! group and each group is squeezed into its note.
//!
//! cargo run --example align

use ffsing::cli::format_plan;
use ffsing::duration::{adjust_durations, consonant_scale, default_table, plan_from_table};
use ffsing::score::{default_inventory, Score};

const SCORE: &str = "\
version 1
inventory inventory.txt
frames 190
note 20 45 62 s+t+a+r
note 65 30 64 i+n
note 100 40 R sil
note 140 35 60 k+l+o
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inv = default_inventory();
    let score = Score::parse(SCORE.as_bytes())?;
    score.validate_against_inventory(&inv)?;
    let plan = plan_from_table(&score, &inv, &default_table())?;
    print!("{}", format_plan(&plan));

    // a short note with long consonants
    let raw = [8.0, 6.0, 4.0];
    println!(
        "\n10 frames, raw {raw:?}: r_c {} -> {:?}",
        consonant_scale(10, &raw)?,
        adjust_durations(10, &raw)?
    );
    // too short for the consonants even after scaling
    let raw = [10.0, 8.0, 8.0, 8.0];
    println!("4 frames, raw {raw:?} -> {:?}", adjust_durations(4, &raw)?);
    Ok(())
}

//! Frame-level conditioning: triangular log-F0 code and cyclical position
//! code for one phrase.
//!
//! cargo run --example conditioning

use ffsing::conditioning::{build_conditioning, code_f0, code_position, F0CoderConfig, F0Track};
use ffsing::duration::{default_table, plan_from_table};
use ffsing::score::{default_inventory, Score};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = F0CoderConfig::default();
    println!("F0 code (centers {:.1?} Hz)", cfg.centers().iter().map(|c| c.exp()).collect::<Vec<_>>());
    for f in [0.0, 90.0, 100.0, 150.0, 205.0, 300.0, 420.0, 500.0] {
        let v = code_f0(f, &cfg);
        println!("  {f:6.1} Hz  {v:.3?}  sum {:.3}", v.iter().sum::<f64>());
    }

    println!("position code over an 8-frame note");
    for t in 0..8 {
        println!("  frame {t}  {:.3?}", code_position(t, 8, 4));
    }

    let inv = default_inventory();
    let score = Score::parse(b"version 1\ninventory x\nnote 10 30 57 l+a\nnote 40 20 60 m+i\n")?;
    let plan = plan_from_table(&score, &inv, &default_table())?;
    let f0: Vec<f64> = (0..score.total_frames)
        .map(|t| if t < 8 { 0.0 } else { 220.0 + 10.0 * (t as f64 / 6.0).sin() })
        .collect();
    let cond = build_conditioning(&plan, &F0Track::new(f0)?, &cfg, 4)?;
    println!("phrase of {} frames, states {:?}", cond.frames(), cond.state_index);
    for t in [0, 9, 10, 25, 39, 40, 59] {
        println!(
            "  frame {t:2}  state {}  f0 {:.2?}  pos {:.2?}",
            cond.state_index[t],
            cond.f0_code.row(t),
            cond.pos_code.row(t)
        );
    }
    Ok(())
}

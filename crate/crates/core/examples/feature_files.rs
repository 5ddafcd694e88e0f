//! Writes a feature file and a text F0 track, reads them back and shows the
//! header bytes.
//!
//! cargo run --example feature_files

use ffsing::io::{f0_to_text, read_f0, FeatureFile};
use ffsing::numerics::{Rng, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("ffsing-feature-files");
    std::fs::create_dir_all(&dir)?;
    let mut rng = Rng::new(3, 0);
    let features = Tensor::normal(&[120, 64], 1.0, &mut rng);
    let file = FeatureFile::from_tensor(&features)?;
    let path = dir.join("phrase.feat");
    file.write(&path)?;
    let bytes = std::fs::read(&path)?;
    println!("{}: {} bytes, header {:02x?}", path.display(), bytes.len(), &bytes[..20]);
    let back = FeatureFile::read(&path)?;
    println!(
        "{} frames × {} at {} ms, byte-identical rewrite: {}",
        back.frames,
        back.dim,
        back.hop_ms,
        back.to_bytes() == bytes
    );
    println!("largest f32 narrowing error {:.2e}", back.to_tensor()?.max_abs_diff(&features));

    let f0: Vec<f64> = (0..120).map(|t| if t < 10 { 0.0 } else { 196.0 * (1.0 + 0.01 * (t as f64 / 5.0).sin()) }).collect();
    let f0_path = dir.join("phrase.f0");
    std::fs::write(&f0_path, f0_to_text(&f0))?;
    let track = read_f0(&f0_path)?;
    println!("F0 track of {} frames, first voiced value {:.2} Hz", track.len(), track.values()[10]);
    Ok(())
}

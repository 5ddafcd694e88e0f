//! The command-line workflow run in-process: write a config, train, export
//! the corpus, render one phrase and score the validation list.
//!
//! cargo run --release --example cli_pipeline -- [work_dir]

use std::path::PathBuf;

fn ffsing(args: &[&str]) -> Result<(), Box<dyn std::error::Error>> {
    println!("$ ffsing {}", args.join(" "));
    let mut full = vec!["ffsing"];
    full.extend_from_slice(args);
    let code = ffsing::cli::run(full, &mut std::io::stdout(), &mut std::io::stderr());
    if code != 0 {
        return Err(format!("exit code {code}").into());
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("ffsing-pipeline"));
    std::fs::create_dir_all(&dir)?;
    let cfg = dir.join("run.cfg");
    std::fs::write(
        &cfg,
        "# small run\ncorpus_phrases = 8\nval_phrases = 2\nupdates = 200\nwarmup = 80\nval_every = 100\n",
    )?;
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    ffsing(&["train", "--config", &p("run.cfg")])?;
    ffsing(&["corpus", "--config", &p("run.cfg"), "--out", &p("corpus")])?;
    ffsing(&["align", "--score", &p("corpus/val000.score")])?;
    ffsing(&[
        "synth",
        "--checkpoint",
        &p("model.ffck"),
        "--score",
        &p("corpus/val000.score"),
        "--f0",
        &p("corpus/val000.f0"),
        "--out",
        &p("val000.out"),
    ])?;
    ffsing(&["eval", "--checkpoint", &p("model.ffck"), "--phrases", &p("corpus/val.list")])?;
    ffsing(&[
        "eval",
        "--checkpoint",
        &p("model.ffck"),
        "--phrases",
        &p("corpus/val.list"),
        "--alignment",
        "gt",
    ])?;
    Ok(())
}

#![allow(dead_code)]

use std::path::Path;

use ffsing::cli;

/// `round(p / q)` with halves away from zero, for `p, q ≥ 0`.
pub fn round_ratio(p: u64, q: u64) -> u64 {
    (2 * p + q) / (2 * q)
}

/// Direct integer evaluation of the note duration rules for integer means:
/// the scale `min(1, (d_n − round(d_n/2)) / Σ consonants)`, consonants
/// `max(1, round(scale·d_i))`, vowel takes the rest, and a short vowel takes
/// frames one at a time from the longest consonant (latest on ties).
pub fn oracle_adjust(d_n: u64, raw: &[u64]) -> Vec<u64> {
    let n = raw.len();
    assert!(n >= 1 && d_n >= n as u64);
    if n == 1 {
        return vec![d_n];
    }
    let available = d_n - round_ratio(d_n, 2);
    let consonant_sum: u64 = raw[1..].iter().sum();
    let mut out = vec![0u64; n];
    for i in 1..n {
        let scaled = if available < consonant_sum {
            round_ratio(available * raw[i], consonant_sum)
        } else {
            raw[i]
        };
        out[i] = scaled.max(1);
    }
    let used: u64 = out[1..].iter().sum();
    let mut vowel = d_n as i64 - used as i64;
    while vowel < 1 {
        let mut best = 0;
        for i in 1..n {
            if out[i] > 1 && (best == 0 || out[i] >= out[best]) {
                best = i;
            }
        }
        assert!(best > 0, "no consonant left to shorten");
        out[best] -= 1;
        vowel += 1;
    }
    out[0] = vowel as u64;
    out
}

/// Runs the command-line front end in-process.
pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["ffsing"];
    full.extend_from_slice(args);
    let code = cli::run(full, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

pub fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

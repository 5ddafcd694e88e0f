mod common;

use ffsing::conditioning::{code_f0, code_position, expand_states, F0CoderConfig};
use ffsing::duration::{adjust_durations, consonant_scale, default_table, plan_from_table};
use ffsing::io::FeatureFile;
use ffsing::numerics::{Gradients, Graph, ParamStore, Rng, Tensor};
use ffsing::score::{default_inventory, Note, Pitch, Score};
use ffsing::training::{adam_step, noam_lr, AdamConfig, OptimizerState, PolyakShadow};
use proptest::prelude::*;

use common::{oracle_adjust, round_ratio};

#[test]
fn oracle_hand_cases() {
    assert_eq!(oracle_adjust(50, &[20, 10, 10]), [30, 10, 10]);
    assert_eq!(oracle_adjust(10, &[8, 6, 4]), [5, 3, 2]);
    assert_eq!(oracle_adjust(4, &[10, 8, 8, 8]), [1, 1, 1, 1]);
    assert_eq!(oracle_adjust(37, &[5]), [37]);
    assert_eq!(round_ratio(5, 2), 3);
    assert_eq!(round_ratio(7, 3), 2);
}

fn note_case() -> impl Strategy<Value = (u32, Vec<f64>)> {
    (1usize..=6)
        .prop_flat_map(|n| (n as u32..=120, prop::collection::vec(0.5f64..40.0, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn durations_partition_the_note((d_n, raw) in note_case()) {
        let d = adjust_durations(d_n, &raw).unwrap();
        prop_assert_eq!(d.len(), raw.len());
        prop_assert_eq!(d.iter().sum::<u32>(), d_n);
        prop_assert!(d.iter().all(|&x| x >= 1));
    }

    #[test]
    fn vowel_keeps_its_share((d_n, raw) in note_case()) {
        let n = raw.len() as i64;
        let rc = consonant_scale(d_n, &raw).unwrap();
        prop_assume!(n > 1 && rc < 1.0);
        let d = adjust_durations(d_n, &raw).unwrap();
        let half = (0.5 * f64::from(d_n)).round() as i64;
        prop_assert!(i64::from(d[0]) >= half - (n - 1), "{:?} for {} frames", d, d_n);
    }

    #[test]
    fn scale_grows_with_note_length(raw in prop::collection::vec(0.5f64..40.0, 2..6), extra in 0u32..200) {
        let d = raw.len() as u32 + extra;
        let a = consonant_scale(d, &raw).unwrap();
        let b = consonant_scale(d + 1, &raw).unwrap();
        prop_assert!(b >= a);
        prop_assert!(a > 0.0 && a <= 1.0);
    }

    #[test]
    fn integer_means_match_oracle(n in 1usize..=6, raw in prop::collection::vec(1u64..=30, 6), extra in 0u64..80) {
        let raw = &raw[..n];
        let d_n = n as u64 + extra;
        let means: Vec<f64> = raw.iter().map(|&v| v as f64).collect();
        let got: Vec<u64> = adjust_durations(d_n as u32, &means).unwrap().into_iter().map(u64::from).collect();
        prop_assert_eq!(got, oracle_adjust(d_n, raw));
    }
}

proptest! {
    #[test]
    fn position_code_sums_to_half_width(t_note in 1usize..500, frac in 0.0f64..1.0, dims in 2usize..9) {
        let t_local = ((frac * t_note as f64) as usize).min(t_note - 1);
        let v = code_position(t_local, t_note, dims);
        prop_assert!(v.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((v.iter().sum::<f64>() - dims as f64 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn f0_code_is_a_partition_of_unity(f in 100.0f64..=420.0, dims in 2usize..8) {
        let cfg = F0CoderConfig { dims, ..F0CoderConfig::default() };
        let v = code_f0(f, &cfg);
        prop_assert!(v.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!(v.iter().filter(|&&x| x > 0.0).count() <= 2);
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn f0_code_outside_range_stays_bounded(f in 1.0f64..2000.0) {
        let v = code_f0(f, &F0CoderConfig::default());
        prop_assert!(v.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!(v.iter().filter(|&&x| x > 0.0).count() <= 2);
    }
}

#[derive(Clone, Debug)]
struct NoteSpec {
    gap: u32,
    len: u32,
    rest: bool,
    midi: u8,
    onset: usize,
    vowel: usize,
    coda: bool,
}

const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const CONSONANTS: [&str; 8] = ["p", "t", "k", "s", "m", "n", "l", "r"];

fn note_spec() -> impl Strategy<Value = NoteSpec> {
    (
        prop_oneof![Just(0u32), 5u32..12],
        20u32..60,
        prop::bool::weighted(0.15),
        45u8..70,
        0usize..3,
        0usize..VOWELS.len(),
        any::<bool>(),
    )
        .prop_map(|(gap, len, rest, midi, onset, vowel, coda)| NoteSpec {
            gap,
            len,
            rest,
            midi,
            onset,
            vowel,
            coda,
        })
}

fn build_score(specs: &[NoteSpec], lead: u32, tail: u32) -> Score {
    let mut t = lead;
    let mut notes = Vec::new();
    for (i, s) in specs.iter().enumerate() {
        t += s.gap;
        let (pitch, phonemes) = if s.rest {
            (Pitch::Rest, vec!["sil".to_string()])
        } else {
            let mut p: Vec<String> = (0..s.onset).map(|k| CONSONANTS[(i + k) % 8].to_string()).collect();
            p.push(VOWELS[s.vowel].to_string());
            if s.coda {
                p.push(CONSONANTS[(i * 3 + 1) % 8].to_string());
            }
            (Pitch::Midi(s.midi), p)
        };
        notes.push(Note {
            onset_frames: t,
            duration_frames: s.len,
            pitch,
            phonemes,
        });
        t += s.len;
    }
    Score::new(notes, Some(t + tail), "inventory.txt").unwrap()
}

proptest! {
    #[test]
    fn score_text_round_trip(specs in prop::collection::vec(note_spec(), 1..8), lead in 10u32..30, tail in 0u32..20) {
        let score = build_score(&specs, lead, tail);
        let text = score.serialize();
        let back = Score::parse(text.as_bytes()).unwrap();
        prop_assert_eq!(&back, &score);
        prop_assert_eq!(back.serialize(), text);
    }

    #[test]
    fn plans_cover_the_score_and_expand_by_run_length(
        specs in prop::collection::vec(note_spec(), 1..8),
        lead in 10u32..30,
        tail in 0u32..20,
    ) {
        let score = build_score(&specs, lead, tail);
        let plan = plan_from_table(&score, &default_inventory(), &default_table()).unwrap();
        prop_assert_eq!(plan.total_frames(), score.total_frames);
        let states = expand_states(&plan);
        prop_assert_eq!(states.len() as u32, score.total_frames);
        let mut runs: Vec<(usize, u32)> = Vec::new();
        for s in states {
            match runs.last_mut() {
                Some((last, n)) if *last == s => *n += 1,
                _ => runs.push((s, 1)),
            }
        }
        let idx: Vec<usize> = runs.iter().map(|r| r.0).collect();
        let lens: Vec<u32> = runs.iter().map(|r| r.1).collect();
        prop_assert_eq!(idx, (0..plan.num_phonemes()).collect::<Vec<_>>());
        prop_assert_eq!(lens, plan.durations());
    }
}

proptest! {
    #[test]
    fn softmax_rows_are_stochastic(seed in any::<u64>(), rows in 1usize..17, cols in 1usize..33, scale in 0.1f64..50.0) {
        let mut rng = Rng::new(seed, 99);
        let mut g = Graph::new();
        let x = g.constant(Tensor::normal(&[rows, cols], scale, &mut rng));
        let p = g.softmax_rows(x);
        for r in 0..rows {
            let row = g.value(p).row(r);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn attention_bias_is_symmetric_with_zero_diagonal(sigma in 1e-3f64..1e4, len in 1usize..40) {
        let mut g = Graph::new();
        let s = g.constant(Tensor::scalar(sigma));
        let m = g.gaussian_bias(s, len).unwrap();
        let m = g.value(m);
        for j in 0..len {
            prop_assert_eq!(m.get(j, j), 0.0);
            for k in 0..len {
                prop_assert_eq!(m.get(j, k), m.get(k, j));
                prop_assert!(m.get(j, k) <= 0.0);
            }
        }
    }

    #[test]
    fn noam_rises_then_decays(warmup in 1u64..10_000, s in 1u64..30_000) {
        let lr = |step| noam_lr(step, 1e-3, warmup).unwrap();
        if s < warmup {
            prop_assert!(lr(s + 1) > lr(s));
        } else {
            prop_assert!(lr(s + 1) < lr(s));
        }
        prop_assert!(lr(s) <= 1e-3 * (1.0 + 1e-12));
        prop_assert!((lr(warmup) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn polyak_contracts_toward_parameters(seed in any::<u64>(), steps in 1usize..20) {
        let mut rng = Rng::new(seed, 99);
        let mut p = ParamStore::new();
        p.insert("w", Tensor::normal(&[3, 4], 1.0, &mut rng));
        let mut start = p.clone();
        for id in start.ids().collect::<Vec<_>>() {
            for v in start.get_mut(id).data_mut() {
                *v += rng.normal();
            }
        }
        let mut shadow = PolyakShadow::new(0.995, &start);
        for _ in 0..steps {
            let id = p.ids().next().unwrap();
            let before: Vec<f64> = shadow.params.get(id).data().to_vec();
            shadow.update(&p).unwrap();
            for ((b, a), t) in before.iter().zip(shadow.params.get(id).data()).zip(p.get(id).data()) {
                let want = 0.995 * (b - t).abs();
                prop_assert!(((a - t).abs() - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adam_ignores_zero_gradients(seed in any::<u64>(), warm in 0usize..5) {
        let mut rng = Rng::new(seed, 99);
        let mut p = ParamStore::new();
        p.insert("w", Tensor::normal(&[2, 5], 1.0, &mut rng));
        let mut opt = OptimizerState::new(AdamConfig::default(), &p);
        for _ in 0..warm {
            let mut g = Gradients::zeros_for(&p);
            let id = p.ids().next().unwrap();
            for v in g.get_mut(id) {
                *v = rng.normal();
            }
            adam_step(&mut p, &g, &mut opt, 1e-3).unwrap();
        }
        let before = p.clone();
        let zero = Gradients::zeros_for(&p);
        adam_step(&mut p, &zero, &mut opt, 1e-3).unwrap();
        prop_assert_eq!(p, before);
    }

    #[test]
    fn feature_files_round_trip_bytes(frames in 0u32..40, dim in 1u32..70, seed in any::<u64>()) {
        let mut rng = Rng::new(seed, 99);
        let data: Vec<f32> = (0..frames * dim).map(|_| rng.normal() as f32).collect();
        let f = FeatureFile::new(frames, dim, data).unwrap();
        let bytes = f.to_bytes();
        let back = FeatureFile::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert_eq!(back, f);
    }
}

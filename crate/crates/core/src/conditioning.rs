//! Frame-rate conditioning: hard alignment of phoneme states, coarse-coded
//! log F0 and the cyclical within-note position code.

use std::f64::consts::PI;

use thiserror::Error;

use crate::duration::DurationPlan;
use crate::numerics::{NumericsError, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConditioningError {
    #[error("length mismatch: plan covers {plan} frames, F0 track has {f0}")]
    LengthMismatch { plan: usize, f0: usize },
    #[error("invalid F0 value {value} at frame {frame}")]
    InvalidF0 { frame: usize, value: f64 },
    #[error("invalid F0 coder range [{f_min}, {f_max}] with {dims} dims")]
    InvalidCoder { f_min: f64, f_max: f64, dims: usize },
    #[error("position code needs at least one dimension")]
    InvalidPositionDims,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Per-frame F0 in Hz; 0 marks unvoiced frames.
#[derive(Clone, Debug, PartialEq)]
pub struct F0Track {
    values: Vec<f64>,
}

impl F0Track {
    pub fn new(values: Vec<f64>) -> Result<Self, ConditioningError> {
        if let Some((frame, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(ConditioningError::InvalidF0 { frame, value });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Triangular basis over log F0, centers equally spaced from `f_min` to
/// `f_max`, each triangle as wide as the center spacing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct F0CoderConfig {
    pub f_min: f64,
    pub f_max: f64,
    pub dims: usize,
}

impl Default for F0CoderConfig {
    fn default() -> Self {
        Self {
            f_min: 100.0,
            f_max: 420.0,
            dims: 4,
        }
    }
}

impl F0CoderConfig {
    pub fn validate(&self) -> Result<(), ConditioningError> {
        if !(self.f_min > 0.0 && self.f_min < self.f_max && self.f_max.is_finite()) || self.dims < 2 {
            return Err(ConditioningError::InvalidCoder {
                f_min: self.f_min,
                f_max: self.f_max,
                dims: self.dims,
            });
        }
        Ok(())
    }

    pub fn centers(&self) -> Vec<f64> {
        let (lo, hi) = (self.f_min.ln(), self.f_max.ln());
        let w = self.spacing();
        (0..self.dims)
            .map(|k| if k + 1 == self.dims { hi } else { lo + w * k as f64 })
            .collect()
    }

    pub fn spacing(&self) -> f64 {
        (self.f_max.ln() - self.f_min.ln()) / (self.dims - 1) as f64
    }
}

/// Coarse code of one F0 value. Unvoiced (0 Hz) maps to the zero vector.
pub fn code_f0(f0: f64, cfg: &F0CoderConfig) -> Vec<f64> {
    if f0 <= 0.0 {
        return vec![0.0; cfg.dims];
    }
    let x = f0.ln().clamp(cfg.f_min.ln(), cfg.f_max.ln());
    let w = cfg.spacing();
    cfg.centers()
        .iter()
        .map(|c| (1.0 - (x - c).abs() / w).max(0.0))
        .collect()
}

/// `v_k = ½·cos(2πp − 2π(k−1)/K) + ½` with `p = t_local / t_note`.
pub fn code_position(t_local: usize, t_note: usize, dims: usize) -> Vec<f64> {
    assert!(t_local < t_note, "frame {t_local} outside note of {t_note}");
    let p = t_local as f64 / t_note as f64;
    (0..dims)
        .map(|k| 0.5 * (2.0 * PI * p - 2.0 * PI * k as f64 / dims as f64).cos() + 0.5)
        .collect()
}

/// Encoder-state index of every frame: state `i` repeated `d̂_i` times.
pub fn expand_states(plan: &DurationPlan) -> Vec<usize> {
    plan.durations()
        .iter()
        .enumerate()
        .flat_map(|(i, &d)| std::iter::repeat_n(i, d as usize))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameConditioning {
    pub state_index: Vec<usize>,
    /// `[T × K_f0]`
    pub f0_code: Tensor,
    /// `[T × K_pos]`
    pub pos_code: Tensor,
}

impl FrameConditioning {
    pub fn frames(&self) -> usize {
        self.state_index.len()
    }
}

/// Assembles per-frame conditioning. The position code uses the extent of
/// each duration group (vowel onset to next vowel onset) as the note length.
pub fn build_conditioning(
    plan: &DurationPlan,
    f0: &F0Track,
    cfg: &F0CoderConfig,
    pos_dims: usize,
) -> Result<FrameConditioning, ConditioningError> {
    cfg.validate()?;
    if pos_dims == 0 {
        return Err(ConditioningError::InvalidPositionDims);
    }
    let frames = plan.total_frames() as usize;
    if frames != f0.len() {
        return Err(ConditioningError::LengthMismatch {
            plan: frames,
            f0: f0.len(),
        });
    }
    let state_index = expand_states(plan);
    let mut f0_code = Vec::with_capacity(frames * cfg.dims);
    for &v in f0.values() {
        f0_code.extend(code_f0(v, cfg));
    }
    let mut pos_code = Vec::with_capacity(frames * pos_dims);
    for group in &plan.groups {
        let extent = group.frames() as usize;
        for t in 0..extent {
            pos_code.extend(code_position(t, extent, pos_dims));
        }
    }
    Ok(FrameConditioning {
        state_index,
        f0_code: Tensor::new(&[frames, cfg.dims], f0_code)?,
        pos_code: Tensor::new(&[frames, pos_dims], pos_code)?,
    })
}

/// Mean of each run of `r` rows, padding the tail by repeating the last row.
pub fn group_frames(x: &Tensor, r: usize) -> Result<Tensor, ConditioningError> {
    if r == 0 {
        return Err(NumericsError::InvalidFactor(r).into());
    }
    let (t, c) = (x.rows(), x.cols());
    let groups = t.div_ceil(r);
    let mut out = vec![0.0; groups * c];
    for (g, dst) in out.chunks_mut(c).enumerate() {
        for i in 0..r {
            let src = x.row((g * r + i).min(t - 1));
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
        for d in dst.iter_mut() {
            *d /= r as f64;
        }
    }
    Ok(Tensor::new(&[groups, c], out)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duration::PlannedGroup;

    fn plan(groups: &[&[u32]]) -> DurationPlan {
        DurationPlan {
            groups: groups
                .iter()
                .map(|d| PlannedGroup {
                    note: None,
                    start_frame: 0,
                    phonemes: vec!["x".into(); d.len()],
                    raw: Vec::new(),
                    consonant_scale: None,
                    durations: d.to_vec(),
                })
                .collect(),
        }
    }

    #[test]
    fn expand_examples() {
        assert_eq!(expand_states(&plan(&[&[2, 1]])), [0, 0, 1]);
        assert_eq!(expand_states(&plan(&[&[1], &[3]])), [0, 1, 1, 1]);
    }

    #[test]
    fn f0_at_center_and_midpoint() {
        let cfg = F0CoderConfig::default();
        let c = cfg.centers();
        let at = code_f0(c[1].exp(), &cfg);
        assert!((at[1] - 1.0).abs() < 1e-12);
        assert!(at[0].abs() < 1e-12 && at[2].abs() < 1e-12 && at[3] == 0.0);
        let mid = code_f0(((c[0] + c[1]) / 2.0).exp(), &cfg);
        assert!((mid[0] - 0.5).abs() < 1e-12 && (mid[1] - 0.5).abs() < 1e-12);
        assert_eq!(code_f0(0.0, &cfg), vec![0.0; 4]);
    }

    #[test]
    fn f0_clips_outside_range() {
        let cfg = F0CoderConfig::default();
        assert_eq!(code_f0(20.0, &cfg), code_f0(cfg.f_min, &cfg));
        assert_eq!(code_f0(5000.0, &cfg), code_f0(cfg.f_max, &cfg));
        assert!((code_f0(cfg.f_max, &cfg)[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coder_config_validation() {
        assert!(F0CoderConfig { f_min: 0.0, f_max: 10.0, dims: 4 }.validate().is_err());
        assert!(F0CoderConfig { f_min: 200.0, f_max: 100.0, dims: 4 }.validate().is_err());
        assert!(F0CoderConfig { f_min: 100.0, f_max: 200.0, dims: 1 }.validate().is_err());
    }

    #[test]
    fn position_examples() {
        let p0 = code_position(0, 4, 4);
        for (a, b) in p0.iter().zip([1.0, 0.5, 0.0, 0.5]) {
            assert!((a - b).abs() < 1e-9);
        }
        let half = code_position(2, 4, 4);
        for (a, b) in half.iter().zip([0.0, 0.5, 1.0, 0.5]) {
            assert!((a - b).abs() < 1e-9);
        }
        // approaching p = 1 from below approaches the p = 0 code
        let near_end = code_position(999_999, 1_000_000, 4);
        for (a, b) in near_end.iter().zip(&p0) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn conditioning_rows() {
        let p = plan(&[&[1, 2], &[4]]);
        let f0 = F0Track::new(vec![200.0; 7]).unwrap();
        let cond = build_conditioning(&p, &f0, &F0CoderConfig::default(), 4).unwrap();
        assert_eq!(cond.frames(), 7);
        assert_eq!(cond.state_index, [0, 1, 1, 2, 2, 2, 2]);
        for r in 1..7 {
            assert_eq!(cond.f0_code.row(r), cond.f0_code.row(0));
        }
        // second group starts at frame 3: p = 0 there, p = 0.75 at frame 6
        assert_eq!(cond.pos_code.row(3), code_position(0, 4, 4).as_slice());
        assert_eq!(cond.pos_code.row(6), code_position(3, 4, 4).as_slice());
        assert_eq!(cond.pos_code.row(0), code_position(0, 3, 4).as_slice());

        let short = F0Track::new(vec![200.0; 6]).unwrap();
        assert!(matches!(
            build_conditioning(&p, &short, &F0CoderConfig::default(), 4),
            Err(ConditioningError::LengthMismatch { plan: 7, f0: 6 })
        ));
    }

    #[test]
    fn f0_track_rejects_negative() {
        assert!(F0Track::new(vec![100.0, -1.0]).is_err());
        assert!(F0Track::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn grouping() {
        let x = Tensor::new(&[4, 1], vec![1.0, 2.0, 3.0, 5.0]).unwrap();
        assert_eq!(group_frames(&x, 1).unwrap(), x);
        assert_eq!(group_frames(&x, 2).unwrap().data(), &[1.5, 4.0]);
        let y = Tensor::new(&[5, 1], vec![1.0, 2.0, 3.0, 5.0, 7.0]).unwrap();
        assert_eq!(group_frames(&y, 2).unwrap().data(), &[1.5, 4.0, 7.0]);
        assert!(group_frames(&y, 0).is_err());
    }
}

//! Adam, the warm-up schedule and Polyak averaging.

use crate::numerics::{Gradients, ParamStore};

use super::TrainingError;

/// Warm-up then inverse square root decay, peaking at `base_lr` when
/// `step == warmup`.
pub fn noam_lr(step: u64, base_lr: f64, warmup: u64) -> Result<f64, TrainingError> {
    if step < 1 {
        return Err(TrainingError::InvalidStep(step));
    }
    if warmup == 0 {
        return Ok(base_lr / (step as f64).sqrt());
    }
    let (s, w) = (step as f64, warmup as f64);
    Ok(base_lr * (s / w).min((w / s).sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub cfg: AdamConfig,
    pub m: Gradients,
    pub v: Gradients,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(cfg: AdamConfig, params: &ParamStore) -> Self {
        Self {
            cfg,
            m: Gradients::zeros_for(params),
            v: Gradients::zeros_for(params),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. An all-zero gradient leaves parameters
/// and moments untouched.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &Gradients,
    opt: &mut OptimizerState,
    lr: f64,
) -> Result<(), TrainingError> {
    if grads.len() != params.len() || opt.m.len() != params.len() {
        return Err(TrainingError::LayoutMismatch);
    }
    if !grads.all_finite() {
        return Err(TrainingError::NonFiniteGradient);
    }
    if grads.is_all_zero() {
        return Ok(());
    }
    opt.step += 1;
    let AdamConfig { beta1, beta2, eps } = opt.cfg;
    let t = opt.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let g = grads.get(id);
        let p = params.get_mut(id).data_mut();
        if g.len() != p.len() {
            return Err(TrainingError::LayoutMismatch);
        }
        let m = opt.m.get_mut(id);
        for (mi, gi) in m.iter_mut().zip(g) {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
        }
        let v = opt.v.get_mut(id);
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
        }
        let (m, v) = (opt.m.get(id), opt.v.get(id));
        for ((pi, mi), vi) in p.iter_mut().zip(m).zip(v) {
            let m_hat = mi / c1;
            let v_hat = vi / c2;
            *pi -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Exponential moving average of the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyakShadow {
    pub decay: f64,
    pub params: ParamStore,
}

impl PolyakShadow {
    pub fn new(decay: f64, params: &ParamStore) -> Self {
        Self {
            decay,
            params: params.clone(),
        }
    }

    /// `shadow ← decay·shadow + (1 − decay)·params`, written as a step
    /// toward `params` so that a shadow equal to the parameters stays put.
    pub fn update(&mut self, params: &ParamStore) -> Result<(), TrainingError> {
        self.params
            .check_layout(params)
            .map_err(|_| TrainingError::LayoutMismatch)?;
        let d = self.decay;
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let src = params.get(id).data();
            for (s, p) in self.params.get_mut(id).data_mut().iter_mut().zip(src) {
                *s += (1.0 - d) * (p - *s);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn one(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("p", Tensor::scalar(v));
        s
    }

    #[test]
    fn schedule_points() {
        assert_eq!(noam_lr(4000, 1e-3, 4000).unwrap(), 1e-3);
        assert!((noam_lr(2000, 1e-3, 4000).unwrap() - 5e-4).abs() < 1e-12);
        assert!((noam_lr(16000, 1e-3, 4000).unwrap() - 5e-4).abs() < 1e-12);
        assert!(matches!(noam_lr(0, 1e-3, 4000), Err(TrainingError::InvalidStep(0))));
    }

    #[test]
    fn first_adam_step_is_signed_lr() {
        for g in [3.0, -0.02, 1e4] {
            let mut p = one(1.0);
            let mut opt = OptimizerState::new(AdamConfig::default(), &p);
            let mut grads = Gradients::zeros_for(&p);
            grads.get_mut(crate::numerics::ParamId(0))[0] = g;
            adam_step(&mut p, &grads, &mut opt, 0.01).unwrap();
            let delta = p.get(crate::numerics::ParamId(0)).item() - 1.0;
            assert!((delta + 0.01 * f64::signum(g)).abs() < 1e-9, "g={g} delta={delta}");
        }
    }

    #[test]
    fn constant_gradient_saturates_to_lr() {
        let mut p = one(0.0);
        let mut opt = OptimizerState::new(AdamConfig::default(), &p);
        let mut grads = Gradients::zeros_for(&p);
        grads.get_mut(crate::numerics::ParamId(0))[0] = -0.5;
        let mut last = 0.0;
        for _ in 0..2000 {
            let before = p.get(crate::numerics::ParamId(0)).item();
            adam_step(&mut p, &grads, &mut opt, 1e-3).unwrap();
            last = p.get(crate::numerics::ParamId(0)).item() - before;
        }
        assert!((last - 1e-3).abs() < 1e-9, "{last}");
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = one(2.0);
        let mut opt = OptimizerState::new(AdamConfig::default(), &p);
        let mut grads = Gradients::zeros_for(&p);
        grads.get_mut(crate::numerics::ParamId(0))[0] = 1.0;
        adam_step(&mut p, &grads, &mut opt, 0.1).unwrap();
        let (before, state) = (p.clone(), opt.clone());
        let zeros = Gradients::zeros_for(&p);
        adam_step(&mut p, &zeros, &mut opt, 0.1).unwrap();
        assert_eq!(p, before);
        assert_eq!(opt, state);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = one(2.0);
        let mut opt = OptimizerState::new(AdamConfig::default(), &p);
        let mut grads = Gradients::zeros_for(&p);
        grads.get_mut(crate::numerics::ParamId(0))[0] = f64::NAN;
        assert!(matches!(
            adam_step(&mut p, &grads, &mut opt, 0.1),
            Err(TrainingError::NonFiniteGradient)
        ));
    }

    #[test]
    fn polyak_geometric_series() {
        let p = one(3.0);
        let mut shadow = PolyakShadow::new(0.995, &one(0.0));
        for t in 1..=1000 {
            shadow.update(&p).unwrap();
            let expect = 3.0 * (1.0 - 0.995f64.powi(t));
            let got = shadow.params.get(crate::numerics::ParamId(0)).item();
            assert!((got - expect).abs() < 1e-12, "t={t}");
        }
        let mut fixed = PolyakShadow::new(0.995, &p);
        fixed.update(&p).unwrap();
        assert_eq!(fixed.params, p);
    }
}

//! The full network: encoder, hard aligner and decoder.

use thiserror::Error;

use crate::conditioning::{build_conditioning, ConditioningError, F0CoderConfig, F0Track, FrameConditioning};
use crate::decoder::{Decoder, DecoderConfig};
use crate::duration::DurationPlan;
use crate::encoder::{Encoder, EncoderConfig};
use crate::numerics::{Graph, Mode, NumericsError, ParamStore, Rng, Tensor, Var};
use crate::score::{PhonemeInventory, ScoreError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Conditioning(#[from] ConditioningError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("parameters do not match the model layout: {0}")]
    Layout(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub f0: F0CoderConfig,
    pub pos_dims: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            decoder: DecoderConfig::default(),
            f0: F0CoderConfig::default(),
            pos_dims: 4,
        }
    }
}

impl ModelConfig {
    /// Small model for CPU experiments: 64 channels, two decoder layers.
    pub fn desk() -> Self {
        let mut cfg = Self::default();
        cfg.decoder.d_model = 64;
        cfg.decoder.layers = 2;
        cfg
    }

    pub fn cond_width(&self) -> usize {
        self.encoder.channels + self.f0.dims + self.pos_dims
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        let e = &self.encoder;
        let d = &self.decoder;
        if e.embed_dim == 0 || e.channels == 0 || d.d_model == 0 || d.out_dim == 0 {
            return bad("widths must be positive");
        }
        if e.kernel % 2 == 0 || d.kernel % 2 == 0 {
            return bad("kernel sizes must be odd");
        }
        if d.reduction == 0 {
            return bad("reduction factor must be at least 1");
        }
        if !(0.0..1.0).contains(&e.dropout) || !(0.0..1.0).contains(&d.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(d.sigma_init > 0.0 && d.sigma_init.is_finite()) {
            return bad("sigma_init must be positive");
        }
        if self.pos_dims == 0 {
            return bad("pos_dims must be positive");
        }
        self.f0.validate()?;
        Ok(())
    }
}

/// Everything the network needs for one phrase.
#[derive(Clone, Debug, PartialEq)]
pub struct PhraseInput {
    pub phonemes: Vec<usize>,
    pub cond: FrameConditioning,
}

impl PhraseInput {
    pub fn frames(&self) -> usize {
        self.cond.frames()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub cfg: ModelConfig,
    pub num_phonemes: usize,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl Model {
    /// Fresh parameters drawn from the init stream of `seed`.
    pub fn init(cfg: ModelConfig, num_phonemes: usize, seed: u64) -> Result<(Self, ParamStore), ModelError> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut rng = Rng::new(seed, crate::numerics::rng::streams::INIT);
        let encoder = Encoder::init(&mut store, cfg.encoder, num_phonemes, &mut rng);
        let decoder = Decoder::init(&mut store, cfg.decoder, cfg.cond_width(), &mut rng);
        Ok((
            Self {
                cfg,
                num_phonemes,
                encoder,
                decoder,
            },
            store,
        ))
    }

    /// Rebuilds the model around previously saved parameters.
    pub fn with_params(cfg: ModelConfig, num_phonemes: usize, params: &ParamStore) -> Result<Self, ModelError> {
        let (model, fresh) = Self::init(cfg, num_phonemes, 0)?;
        fresh
            .check_layout(params)
            .map_err(|e| ModelError::Layout(e.to_string()))?;
        Ok(model)
    }

    pub fn prepare(
        &self,
        inv: &PhonemeInventory,
        plan: &DurationPlan,
        f0: &F0Track,
    ) -> Result<PhraseInput, ModelError> {
        let phonemes = plan
            .phoneme_sequence()
            .iter()
            .map(|s| inv.require(s).map(|id| id.0))
            .collect::<Result<Vec<_>, _>>()?;
        let cond = build_conditioning(plan, f0, &self.cfg.f0, self.cfg.pos_dims)?;
        Ok(PhraseInput { phonemes, cond })
    }

    /// `[T × out_dim]` features for one phrase.
    pub fn forward(&self, g: &mut Graph, input: &PhraseInput, mode: Mode, rng: &mut Rng) -> Result<Var, NumericsError> {
        let enc = self.encoder.encode(g, &input.phonemes, mode, rng)?;
        self.decoder.decode(g, enc, &input.cond, mode, rng)
    }

    /// Eval-mode inference with the given parameters.
    pub fn predict(&self, params: &ParamStore, input: &PhraseInput) -> Result<Tensor, NumericsError> {
        let mut g = Graph::with_params(params);
        let mut rng = Rng::new(0, 0);
        let y = self.forward(&mut g, input, Mode::Eval, &mut rng)?;
        Ok(g.value(y).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duration::{default_table, plan_from_table};
    use crate::score::{default_inventory, Score};

    fn tiny() -> ModelConfig {
        let mut cfg = ModelConfig::desk();
        cfg.encoder.embed_dim = 8;
        cfg.encoder.channels = 6;
        cfg.decoder.d_model = 8;
        cfg.decoder.out_dim = 5;
        cfg
    }

    #[test]
    fn end_to_end_shape() {
        let inv = default_inventory();
        let score = Score::parse(
            b"version 1\ninventory inventory.txt\nframes 56\nnote 10 20 60 t+a\nnote 30 16 62 m+i+n\n",
        )
        .unwrap();
        let plan = plan_from_table(&score, &inv, &default_table()).unwrap();
        let (model, store) = Model::init(tiny(), inv.len(), 3).unwrap();
        let f0 = F0Track::new(vec![220.0; 56]).unwrap();
        let input = model.prepare(&inv, &plan, &f0).unwrap();
        let y = model.predict(&store, &input).unwrap();
        assert_eq!(y.shape(), &[56, 5]);
        assert_eq!(model.predict(&store, &input).unwrap(), y);
    }

    #[test]
    fn layout_check() {
        let (_, store) = Model::init(tiny(), 10, 1).unwrap();
        assert!(Model::with_params(tiny(), 10, &store).is_ok());
        assert!(Model::with_params(tiny(), 11, &store).is_err());
        let mut other = tiny();
        other.decoder.self_attention = false;
        assert!(Model::with_params(other, 10, &store).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = tiny();
        cfg.decoder.reduction = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny();
        cfg.encoder.kernel = 4;
        assert!(cfg.validate().is_err());
    }
}

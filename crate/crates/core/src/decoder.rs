//! Feed-forward Transformer decoder.
//!
//! Frame conditioning `[enc row ‖ f0 code ‖ position code]` is projected to
//! `d_model` and mean-pooled by the reduction factor `r`. Each layer is
//!
//! ```text
//! y = x + Drop(Attn(LN(x)))
//! z = y + Drop(GLU(LN(y)))
//! ```
//!
//! where the single-head attention adds `M[j,k] = −(j−k)²/(2σ²)` to the
//! scaled scores and `σ = softplus(ρ)` is learned per layer. A final affine
//! map produces `r` frames per step.

use crate::conditioning::FrameConditioning;
use crate::encoder::{linear_init_std, GluConv, Linear};
use crate::numerics::{
    softplus_inverse, Graph, Mode, NumericsError, ParamId, ParamStore, Rng, Tensor, Var,
    LAYER_NORM_EPS,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecoderConfig {
    pub d_model: usize,
    pub layers: usize,
    pub kernel: usize,
    pub reduction: usize,
    pub out_dim: usize,
    pub dropout: f64,
    pub sigma_init: f64,
    pub self_attention: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            d_model: 256,
            layers: 6,
            kernel: 3,
            reduction: 2,
            out_dim: 64,
            dropout: 0.1,
            sigma_init: 30.0,
            self_attention: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn init(store: &mut ParamStore, name: &str, width: usize) -> Self {
        Self {
            gain: store.insert(format!("{name}.gain"), Tensor::full(&[width], 1.0)),
            bias: store.insert(format!("{name}.bias"), Tensor::zeros(&[width])),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NumericsError> {
        let gain = g.param(self.gain);
        let bias = g.param(self.bias);
        g.layer_norm(x, gain, bias, LAYER_NORM_EPS)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Attention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    /// Unconstrained `ρ` with `σ = softplus(ρ)`.
    pub sigma_raw: ParamId,
}

/// Attention result plus the probability matrix for inspection.
pub struct AttentionOutput {
    pub output: Var,
    pub probs: Var,
    pub bias: Var,
}

impl Attention {
    pub fn init(store: &mut ParamStore, name: &str, d_model: usize, sigma_init: f64, rng: &mut Rng) -> Self {
        let std = linear_init_std(d_model);
        let mut lin = |part: &str| Linear::init(store, &format!("{name}.{part}"), d_model, d_model, std, rng);
        let (query, key, value, output) = (lin("query"), lin("key"), lin("value"), lin("output"));
        let sigma_raw = store.insert(
            format!("{name}.sigma_raw"),
            Tensor::scalar(softplus_inverse(sigma_init)),
        );
        Self {
            query,
            key,
            value,
            output,
            sigma_raw,
        }
    }

    /// The learned `σ` as a graph node.
    pub fn sigma(&self, g: &mut Graph) -> Var {
        let raw = g.param(self.sigma_raw);
        g.softplus(raw)
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<AttentionOutput, NumericsError> {
        let sigma = self.sigma(g);
        self.forward_with_sigma(g, x, sigma)
    }

    /// `softmax(QKᵀ/√d_model + M)·V` followed by the output projection.
    pub fn forward_with_sigma(&self, g: &mut Graph, x: Var, sigma: Var) -> Result<AttentionOutput, NumericsError> {
        let (len, d_model) = {
            let t = g.value(x);
            (t.rows(), t.cols())
        };
        let q = self.query.forward(g, x)?;
        let k = self.key.forward(g, x)?;
        let v = self.value.forward(g, x)?;
        let scores = g.matmul_nt(q, k)?;
        let scores = g.scale(scores, 1.0 / (d_model as f64).sqrt());
        let bias = g.gaussian_bias(sigma, len)?;
        let biased = g.add(scores, bias)?;
        let probs = g.softmax_rows(biased);
        let context = g.matmul(probs, v)?;
        let output = self.output.forward(g, context)?;
        Ok(AttentionOutput { output, probs, bias })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecoderLayer {
    pub attn_norm: Option<LayerNorm>,
    pub attention: Option<Attention>,
    pub conv_norm: LayerNorm,
    pub conv: GluConv,
}

impl DecoderLayer {
    pub fn init(store: &mut ParamStore, name: &str, cfg: &DecoderConfig, rng: &mut Rng) -> Self {
        let (attn_norm, attention) = if cfg.self_attention {
            (
                Some(LayerNorm::init(store, &format!("{name}.attn_norm"), cfg.d_model)),
                Some(Attention::init(store, &format!("{name}.attn"), cfg.d_model, cfg.sigma_init, rng)),
            )
        } else {
            (None, None)
        };
        let conv_norm = LayerNorm::init(store, &format!("{name}.conv_norm"), cfg.d_model);
        let conv = GluConv::init(
            store,
            &format!("{name}.conv"),
            cfg.kernel,
            cfg.d_model,
            cfg.d_model,
            cfg.dropout,
            rng,
        );
        Self {
            attn_norm,
            attention,
            conv_norm,
            conv,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, dropout: f64, mode: Mode, rng: &mut Rng) -> Result<Var, NumericsError> {
        let mut y = x;
        if let (Some(norm), Some(attn)) = (&self.attn_norm, &self.attention) {
            let h = norm.forward(g, y)?;
            let a = attn.forward(g, h)?.output;
            let a = g.dropout(a, dropout, mode, rng)?;
            y = g.add(y, a)?;
        }
        let h = self.conv_norm.forward(g, y)?;
        let c = self.conv.forward(g, h)?;
        let c = g.dropout(c, dropout, mode, rng)?;
        g.add(y, c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decoder {
    pub cfg: DecoderConfig,
    pub input: Linear,
    pub layers: Vec<DecoderLayer>,
    pub output: Linear,
}

impl Decoder {
    /// `cond_width` is the per-frame input width: encoder channels plus
    /// both code widths.
    pub fn init(store: &mut ParamStore, cfg: DecoderConfig, cond_width: usize, rng: &mut Rng) -> Self {
        let input = Linear::init(
            store,
            "decoder.input",
            cond_width,
            cfg.d_model,
            linear_init_std(cond_width),
            rng,
        );
        let layers = (0..cfg.layers)
            .map(|l| DecoderLayer::init(store, &format!("decoder.layer{l}"), &cfg, rng))
            .collect();
        let output = Linear::init(
            store,
            "decoder.output",
            cfg.d_model,
            cfg.out_dim * cfg.reduction,
            linear_init_std(cfg.d_model),
            rng,
        );
        Self {
            cfg,
            input,
            layers,
            output,
        }
    }

    /// Per-frame `[enc ‖ f0 ‖ pos]`, projected and pooled to `⌈T/r⌉` steps.
    pub fn assemble_input(&self, g: &mut Graph, enc: Var, cond: &FrameConditioning) -> Result<Var, NumericsError> {
        let states = g.gather_rows(enc, &cond.state_index)?;
        let f0 = g.constant(cond.f0_code.clone());
        let pos = g.constant(cond.pos_code.clone());
        let frames = g.concat_cols(&[states, f0, pos])?;
        let projected = self.input.forward(g, frames)?;
        g.group_rows(projected, self.cfg.reduction)
    }

    /// Output projection to `r·out_dim`, unfolded to frame rate and trimmed
    /// to the first `frames` rows.
    pub fn project_output(&self, g: &mut Graph, x: Var, frames: usize) -> Result<Var, NumericsError> {
        let steps = g.value(x).rows();
        let y = self.output.forward(g, x)?;
        let y = g.reshape(y, &[steps * self.cfg.reduction, self.cfg.out_dim])?;
        g.slice_rows(y, frames)
    }

    pub fn decode(
        &self,
        g: &mut Graph,
        enc: Var,
        cond: &FrameConditioning,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<Var, NumericsError> {
        let mut x = self.assemble_input(g, enc, cond)?;
        for layer in &self.layers {
            x = layer.forward(g, x, self.cfg.dropout, mode, rng)?;
        }
        self.project_output(g, x, cond.frames())
    }
}

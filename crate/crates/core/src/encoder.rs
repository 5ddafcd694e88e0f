//! Phoneme encoder: embeddings, GLU convolutions over the phoneme axis and
//! a residual shortcut from the monophone embeddings.
//!
//! The embedding width and the convolution width differ, so both the
//! convolution path and the residual path start with their own learned
//! projection from the embedding.

use crate::numerics::{Graph, Mode, NumericsError, ParamId, ParamStore, Rng, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncoderConfig {
    pub embed_dim: usize,
    pub channels: usize,
    pub kernel: usize,
    pub blocks: usize,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            embed_dim: 256,
            channels: 64,
            kernel: 3,
            blocks: 1,
            dropout: 0.1,
        }
    }
}

/// Standard deviation of the embedding initialization.
pub const EMBED_INIT_STD: f64 = 0.1;

/// Variance-preserving init for a GLU convolution: `4(1 − p)/fan_in`.
pub fn glu_init_std(fan_in: usize, dropout: f64) -> f64 {
    (4.0 * (1.0 - dropout) / fan_in as f64).sqrt()
}

/// Init for plain linear maps: `1/fan_in`.
pub fn linear_init_std(fan_in: usize) -> f64 {
    (1.0 / fan_in as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn init(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, std: f64, rng: &mut Rng) -> Self {
        Self {
            weight: store.insert(format!("{name}.weight"), Tensor::normal(&[fan_in, fan_out], std, rng)),
            bias: store.insert(format!("{name}.bias"), Tensor::zeros(&[fan_out])),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NumericsError> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }
}

/// Same-padded convolution producing `2·C'` channels, gated down to `C'`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GluConv {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl GluConv {
    pub fn init(
        store: &mut ParamStore,
        name: &str,
        kernel: usize,
        c_in: usize,
        c_out: usize,
        dropout: f64,
        rng: &mut Rng,
    ) -> Self {
        let std = glu_init_std(kernel * c_in, dropout);
        Self {
            weight: store.insert(
                format!("{name}.weight"),
                Tensor::normal(&[kernel, c_in, 2 * c_out], std, rng),
            ),
            bias: store.insert(format!("{name}.bias"), Tensor::zeros(&[2 * c_out])),
        }
    }

    /// `A ⊗ sigmoid(B)` of the convolution output `[A | B]`.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NumericsError> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.conv1d(x, w)?;
        let y = g.add_row(y, b)?;
        g.glu(y)
    }
}

/// GLU block with input dropout.
pub fn glu_block(
    g: &mut Graph,
    conv: &GluConv,
    x: Var,
    dropout: f64,
    mode: Mode,
    rng: &mut Rng,
) -> Result<Var, NumericsError> {
    let x = g.dropout(x, dropout, mode, rng)?;
    conv.forward(g, x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    pub num_phonemes: usize,
    pub embedding: ParamId,
    pub input_proj: Linear,
    pub residual_proj: Linear,
    pub blocks: Vec<GluConv>,
}

impl Encoder {
    pub fn init(store: &mut ParamStore, cfg: EncoderConfig, num_phonemes: usize, rng: &mut Rng) -> Self {
        let embedding = store.insert(
            "encoder.embedding",
            Tensor::normal(&[num_phonemes, cfg.embed_dim], EMBED_INIT_STD, rng),
        );
        let std = linear_init_std(cfg.embed_dim);
        let input_proj = Linear::init(store, "encoder.input_proj", cfg.embed_dim, cfg.channels, std, rng);
        let residual_proj =
            Linear::init(store, "encoder.residual_proj", cfg.embed_dim, cfg.channels, std, rng);
        let blocks = (0..cfg.blocks)
            .map(|b| {
                GluConv::init(
                    store,
                    &format!("encoder.block{b}"),
                    cfg.kernel,
                    cfg.channels,
                    cfg.channels,
                    cfg.dropout,
                    rng,
                )
            })
            .collect();
        Self {
            cfg,
            num_phonemes,
            embedding,
            input_proj,
            residual_proj,
            blocks,
        }
    }

    /// One `[P × channels]` state row per phoneme id.
    pub fn encode(&self, g: &mut Graph, phonemes: &[usize], mode: Mode, rng: &mut Rng) -> Result<Var, NumericsError> {
        let table = g.param(self.embedding);
        let embedded = g.gather_rows(table, phonemes)?;
        let mut x = self.input_proj.forward(g, embedded)?;
        for block in &self.blocks {
            x = glu_block(g, block, x, self.cfg.dropout, mode, rng)?;
        }
        let residual = self.residual_proj.forward(g, embedded)?;
        g.add(x, residual)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;

    fn small() -> (Encoder, ParamStore) {
        let mut store = ParamStore::new();
        let cfg = EncoderConfig {
            embed_dim: 12,
            channels: 6,
            kernel: 3,
            blocks: 1,
            dropout: 0.1,
        };
        let mut rng = Rng::new(11, 0);
        let enc = Encoder::init(&mut store, cfg, 7, &mut rng);
        (enc, store)
    }

    fn eval(enc: &Encoder, store: &ParamStore, ids: &[usize]) -> Tensor {
        let mut g = Graph::with_params(store);
        let mut rng = Rng::new(0, 0);
        let v = enc.encode(&mut g, ids, Mode::Eval, &mut rng).unwrap();
        g.value(v).clone()
    }

    #[test]
    fn single_phoneme_shape() {
        let (enc, store) = small();
        let out = eval(&enc, &store, &[3]);
        assert_eq!(out.shape(), &[1, 6]);
    }

    #[test]
    fn eval_is_deterministic() {
        let (enc, store) = small();
        let a = eval(&enc, &store, &[0, 1, 2, 3]);
        let b = eval(&enc, &store, &[0, 1, 2, 3]);
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn receptive_field_is_one_neighbor() {
        let (enc, store) = small();
        let base = [0, 1, 2, 3, 4, 5, 6, 1];
        let reference = eval(&enc, &store, &base);
        for pos in 0..base.len() {
            let mut probe = base;
            probe[pos] = (probe[pos] + 3) % 7;
            let out = eval(&enc, &store, &probe);
            for row in 0..base.len() {
                let changed = out.row(row) != reference.row(row);
                let within = row.abs_diff(pos) <= 1;
                assert_eq!(changed, within, "row {row} after changing {pos}");
            }
        }
    }

    #[test]
    fn unknown_id_is_an_error() {
        let (enc, store) = small();
        let mut g = Graph::with_params(&store);
        let mut rng = Rng::new(0, 0);
        assert!(matches!(
            enc.encode(&mut g, &[9], Mode::Eval, &mut rng),
            Err(NumericsError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn glu_with_zero_gate_halves() {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(1, 0);
        let conv = GluConv::init(&mut store, "c", 3, 4, 4, 0.0, &mut rng);
        // zero the gate half of the kernel
        let w = store.get_mut(conv.weight);
        for (i, v) in w.data_mut().iter_mut().enumerate() {
            if i % 8 >= 4 {
                *v = 0.0;
            }
        }
        let x = Tensor::normal(&[5, 4], 1.0, &mut rng);
        let mut g = Graph::with_params(&store);
        let xv = g.constant(x.clone());
        let y = conv.forward(&mut g, xv).unwrap();
        let wv = g.param(conv.weight);
        let full = g.conv1d(xv, wv).unwrap();
        let full = g.value(full).clone();
        for r in 0..5 {
            for c in 0..4 {
                assert!((g.value(y).get(r, c) - full.get(r, c) / 2.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn glu_block_gradient() {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(2, 0);
        let conv = GluConv::init(&mut store, "c", 3, 4, 4, 0.1, &mut rng);
        let x = store.insert("x", Tensor::normal(&[5, 4], 1.0, &mut rng));
        let target = Tensor::normal(&[5, 4], 1.0, &mut rng);
        let report = grad_check(&store, None, 1e-5, |g: &mut Graph| {
            let xv = g.param(x);
            let mut r = Rng::new(0, 0);
            let y = glu_block(g, &conv, xv, 0.1, Mode::Eval, &mut r)?;
            let t = g.constant(target.clone());
            let d = g.mul(y, t)?;
            Ok::<_, NumericsError>(g.sum(d))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }
}

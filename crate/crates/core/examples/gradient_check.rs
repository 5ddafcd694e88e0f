//! Central-difference check of the analytic gradients of one decoder layer.
//!
//! cargo run --release --example gradient_check

use ffsing::decoder::{DecoderConfig, DecoderLayer};
use ffsing::numerics::{grad_check, Graph, Mode, NumericsError, ParamStore, Rng, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = DecoderConfig {
        d_model: 8,
        ..DecoderConfig::default()
    };
    let mut store = ParamStore::new();
    let mut rng = Rng::new(11, 0);
    let layer = DecoderLayer::init(&mut store, "layer", &cfg, &mut rng);
    let x = store.insert("x", Tensor::normal(&[10, 8], 1.0, &mut rng));
    let target = Tensor::normal(&[10, 8], 1.0, &mut rng);
    let objective = |g: &mut Graph| {
        let xv = g.param(x);
        let mut r = Rng::new(0, 0);
        let y = layer.forward(g, xv, cfg.dropout, Mode::Eval, &mut r)?;
        let t = g.constant(target.clone());
        let d = g.sub(y, t)?;
        let sq = g.square(d);
        Ok::<_, NumericsError>(g.sum(sq))
    };
    for (id, name, t) in store.iter() {
        let coords: Vec<_> = (0..t.len()).map(|i| (id, i)).collect();
        let r = grad_check(&store, Some(&coords), 1e-5, objective)?;
        if name.ends_with("key.bias") {
            // shifts every score in a row equally: the gradient is exactly zero
            println!("{name:28} {:4} values  numeric {:.1e} at the worst value", r.checked, r.numeric.abs());
        } else {
            println!("{name:28} {:4} values  max rel error {:.2e}", r.checked, r.max_rel_error);
        }
    }
    Ok(())
}

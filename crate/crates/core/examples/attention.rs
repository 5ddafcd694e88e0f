//! Self-attention with the learned Gaussian bias: narrow widths pull the
//! weights onto the diagonal.
//!
//! cargo run --example attention

use ffsing::decoder::Attention;
use ffsing::numerics::{Graph, ParamStore, Rng, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut store = ParamStore::new();
    let mut rng = Rng::new(7, 0);
    let attn = Attention::init(&mut store, "attn", 16, 30.0, &mut rng);
    let x = Tensor::normal(&[8, 16], 1.0, &mut rng);
    for sigma in [1e-3, 0.5, 1.0, 2.0, 30.0] {
        let mut g = Graph::with_params(&store);
        let xv = g.constant(x.clone());
        let s = g.constant(Tensor::scalar(sigma));
        let out = attn.forward_with_sigma(&mut g, xv, s)?;
        let p = g.value(out.probs);
        let diag = (0..8).map(|j| p.get(j, j)).sum::<f64>() / 8.0;
        println!("sigma {sigma:>6}: mean diagonal weight {diag:.4}");
        println!("  row 3 {:.3?}", p.row(3));
    }
    let mut g = Graph::with_params(&store);
    let sigma = attn.sigma(&mut g);
    println!("initial learned sigma {}", g.value(sigma).item());
    Ok(())
}

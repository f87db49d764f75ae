//! Trace one forward pass and print each head's attention over the tokens.

use demandscope::autograd::{Graph, Tensor};
use demandscope::spacenet::{ModelConfig, SpaceNet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let names = ["price", "income", "age", "risk"];
    let config = ModelConfig {
        d_model: 8,
        n_heads: 2,
        n_layers: 1,
        ff_hidden: 16,
        mlp_hidden: 8,
        ..ModelConfig::default()
    };
    let model = SpaceNet::new(config, names.len())?;

    let mut g = Graph::new();
    let bound = model.bind(&mut g, false);
    let x = g.constant(Tensor::new(vec![1, 4], vec![1.2, -0.4, 0.3, 2.0])?);
    let trace = model.forward_trace(&mut g, &bound, x, false, 0)?;

    for (l, heads) in trace.attention.iter().enumerate() {
        for (h, &w) in heads.iter().enumerate() {
            println!("layer {l} head {h}");
            let weights = g.value(w);
            print!("{:>8}", "");
            for n in &names {
                print!("{n:>8}");
            }
            println!();
            for (i, row) in weights.data().chunks(names.len()).enumerate() {
                print!("{:>8}", names[i]);
                for v in row {
                    print!("{v:>8.3}");
                }
                println!();
            }
        }
    }
    println!("logits {:.4?}", g.value(trace.logits).data());
    Ok(())
}

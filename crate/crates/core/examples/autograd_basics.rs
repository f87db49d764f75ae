//! Softmax regression on the tape, trained with Adam.

use demandscope::autograd::{Adam, AdamState, Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![1.5, -0.5, 2.0]));
    let y = g.mul(x, x)?;
    let s = g.sum(y);
    g.backward(s)?;
    println!("d/dx sum(x^2) = {:?}", g.grad(x).unwrap());

    // three gaussian blobs in the plane
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let centres = [(-2.0, 0.0), (2.0, 0.0), (0.0, 2.5)];
    let mut xs = Vec::new();
    let mut targets = Vec::new();
    for (c, &(cx, cy)) in centres.iter().enumerate() {
        for _ in 0..40 {
            xs.push(cx + rng.gen_range(-1.0..1.0));
            xs.push(cy + rng.gen_range(-1.0..1.0));
            targets.push(c);
        }
    }
    let n = targets.len();
    let inputs = Tensor::new(vec![n, 2], xs)?;

    let mut w = Tensor::new(vec![2, 3], (0..6).map(|_| rng.gen_range(-0.1..0.1)).collect())?;
    let mut b = Tensor::zeros(vec![3]);
    let adam = Adam {
        lr: 0.05,
        weight_decay: 0.0,
        ..Adam::default()
    };
    let mut state = AdamState::for_params(&[&w, &b]);

    for step in 0..=200 {
        let mut g = Graph::new();
        let xv = g.constant(inputs.clone());
        let wv = g.param(w.clone());
        let bv = g.param(b.clone());
        let z = g.matmul(xv, wv)?;
        let logits = g.add(z, bv)?;
        let loss = g.cross_entropy_logits(logits, &targets)?;
        g.backward(loss)?;
        if step % 50 == 0 {
            let predicted = g
                .value(logits)
                .data()
                .chunks(3)
                .zip(&targets)
                .filter(|(row, &t)| demandscope::matrix::argmax(row) == t)
                .count();
            println!(
                "step {step:>3}  loss {:.4}  accuracy {}/{n}",
                g.value(loss).item(),
                predicted
            );
        }
        let (gw, gb) = (g.grad(wv).unwrap().to_vec(), g.grad(bv).unwrap().to_vec());
        adam.step(&mut [&mut w, &mut b], &[&gw, &gb], &mut state)?;
    }
    Ok(())
}

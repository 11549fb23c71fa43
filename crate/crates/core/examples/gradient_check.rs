//! Compares backpropagated gradients against central finite differences on a
//! few random networks.
//!
//!     cargo run --release --example gradient_check

use offgrasp::nn::{HiddenActivation, MlpNetwork, OutputActivation};
use offgrasp::util::rng_from_seed;
use rand::Rng;

fn main() {
    let h = 1e-5;
    for (i, sizes) in [vec![4, 8, 1], vec![6, 32, 32, 3], vec![10, 64, 64, 64, 2]].iter().enumerate() {
        let mut rng = rng_from_seed(i as u64);
        let net = MlpNetwork::new(sizes, HiddenActivation::Tanh, OutputActivation::Sigmoid, &mut rng).unwrap();
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..*sizes.last().unwrap()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |n: &MlpNetwork| -> f64 { n.forward(&x).unwrap().iter().zip(&u).map(|(a, b)| a * b).sum() };
        let (grads, _) = net.backward(&x, &u).unwrap();

        let mut worst: f64 = 0.0;
        for (g, group) in grads.groups().iter().enumerate() {
            for k in 0..group.len() {
                let mut p = net.clone();
                p.param_groups_mut()[g][k] += h;
                let mut m = net.clone();
                m.param_groups_mut()[g][k] -= h;
                let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                worst = worst.max((fd - group[k]).abs() / fd.abs().max(group[k].abs()).max(1e-6));
            }
        }
        println!("{sizes:?}: {} params, max relative error {worst:.2e}", net.num_params());
    }
}

//! Cross-entropy maximisation of a quadratic bowl, compared with plain
//! uniform sampling at the same budget.
//!
//!     cargo run --release --example cem_bowl

use offgrasp::select::{cem_argmax, uniform_argmax, ActionSpace, CemConfig, QFunction, SelectError};
use offgrasp::util::rng_from_seed;
use rand::Rng;

struct Bowl(Vec<f64>);

impl QFunction for Bowl {
    fn q_values(&self, _obs: &[f64], actions: &[Vec<f64>]) -> Result<Vec<f64>, SelectError> {
        Ok(actions
            .iter()
            .map(|a| -a.iter().zip(&self.0).map(|(x, c)| (x - c).powi(2)).sum::<f64>())
            .collect())
    }
}

fn main() {
    let cfg = CemConfig::default();
    let budget = cfg.iterations * cfg.population;
    for dim in [1, 2, 4] {
        let space = ActionSpace::unit_box(dim);
        let (mut cem_err, mut uni_err) = (0.0, 0.0);
        let trials = 200;
        for t in 0..trials {
            let mut rng = rng_from_seed(t);
            let bowl = Bowl((0..dim).map(|_| rng.gen_range(-0.8..0.8)).collect());
            let dist = |a: &[f64]| a.iter().zip(&bowl.0).map(|(x, c)| (x - c).powi(2)).sum::<f64>().sqrt();
            cem_err += dist(&cem_argmax(&bowl, &[], &space, &cfg, &mut rng).unwrap().action);
            uni_err += dist(&uniform_argmax(&bowl, &[], &space, budget, &mut rng).unwrap().0);
        }
        println!(
            "dim {dim}: mean distance to maximiser  cem {:.4}  uniform({budget}) {:.4}",
            cem_err / trials as f64,
            uni_err / trials as f64
        );
    }
}

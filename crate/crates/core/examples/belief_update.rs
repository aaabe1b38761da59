//! Mean-field state inference on random models next to exact Bayes.

use cournot_aif::categorical::kl_divergence;
use cournot_aif::genmodel::random_model;
use cournot_aif::inference::{exact_posterior, infer_states, InferenceConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = InferenceConfig { max_iterations: 100, convergence_tol: 1e-10, ..Default::default() };
    for (factors, modalities) in [(vec![6], vec![4]), (vec![3, 4], vec![3, 5]), (vec![5, 2, 3], vec![4, 4])] {
        let (gm, prior, action, obs) = random_model(&mut rng, &factors, &modalities, 10.0);
        let q = infer_states(&gm, &prior, Some(&action), &obs, &cfg)?;
        let exact = exact_posterior(&gm, &prior, Some(&action), &obs)?;
        println!("factors {factors:?}, observation {obs:?}: {} iterations, converged {}", q.iterations, q.converged);
        for (f, (approx, truth)) in q.factors.iter().zip(&exact.marginals).enumerate() {
            println!("  factor {f}: q = {:.3?}", approx.probs());
            println!("            p = {:.3?}  KL {:.2e}", truth.probs(), kl_divergence(truth, approx));
        }
        let fe: Vec<String> = q.vfe_history.iter().map(|v| format!("{v:.4}")).collect();
        println!("  free energy per sweep: {}", fe.join(" "));
    }
    Ok(())
}

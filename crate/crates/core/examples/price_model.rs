//! The streaming price model on a linear market that jumps from a = 30 to 45.

use cournot_aif::srp::{DriftStatus, Instance, SrpConfig, SrpEnsemble};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut model = SrpEnsemble::new(SrpConfig::default(), 2, 7)?;
    for i in 0..2500 {
        let a = if i < 2000 { 30.0 } else { 45.0 };
        let q: Vec<f64> = (0..2).map(|_| rng.random_range(0..=6) as f64).collect();
        let status = model.learn(&Instance { target: a - q.iter().sum::<f64>(), features: q })?;
        if status == DriftStatus::Drift {
            println!("instance {i}: drift, a learner was replaced");
        }
        if (i + 1) % 250 == 0 {
            let curve: Vec<String> =
                (0..=6).map(|q| format!("{:.1}", model.predict(&[q as f64, 3.0]).unwrap())).collect();
            println!("after {:4}: intercept {:6.2}  price vs q1 (q2 = 3): {}", i + 1, model.estimate_intercept(), curve.join(" "));
        }
    }
    let counts = model.drift_counts();
    println!("warnings {}, drifts {}", counts.warnings, counts.drifts);
    Ok(())
}

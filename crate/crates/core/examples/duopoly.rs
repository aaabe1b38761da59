//! Runs the reference duopoly and prints each firm's step-by-step behavior.

use cournot_aif::config::{ExperimentConfig, ScenarioId};
use cournot_aif::sim::run_experiment;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let cfg = ExperimentConfig::preset(ScenarioId::DuopolyReference, seed)?;
    let out = run_experiment(&cfg)?;
    println!(" t cust price | prod sold  w  w^  ctx epi an  p^    a^   br");
    for r in &out.records {
        for (i, f) in r.firms.iter().enumerate() {
            let head = if i == 0 { format!("{:2} {:4} {:5.1}", r.t, r.customers, r.price) } else { " ".repeat(13) };
            println!(
                "{head} | {:4} {:4} {:2} {:4.1} {:3} {:3} {:2} {:5.1} {:5.1} {:2}{}",
                f.production,
                f.sold,
                f.warehouse_after,
                f.inferred_warehouse,
                f.inferred_context,
                f.epistemic,
                f.analysis as u8,
                f.predicted_price,
                f.a_hat,
                f.br,
                if f.br_recomputed { " *" } else { "" }
            );
        }
    }
    Ok(())
}

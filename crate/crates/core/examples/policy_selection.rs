//! Expected free energy of a firm's first actions from its initial belief.

use cournot_aif::genmodel::enumerate_policies;
use cournot_aif::genmodel::firm::{build_firm_model, FirmModelParams};
use cournot_aif::inference::{infer_policies, select_action, Belief, InferenceConfig};
use cournot_aif::sim::sales_preferences;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = FirmModelParams::default();
    let mut gm = build_firm_model(&params, 5, 16.0)?;
    // price estimates as if the rival sells 4 and the maximum price is 30
    let estimates: Vec<f64> = (0..7).map(|q| 26.0 - q as f64).collect();
    gm.c[0] = sales_preferences(&estimates, params.kappa);
    let belief = Belief::new(gm.d.clone());
    let policies = enumerate_policies(&gm.spec, 10_000)?;
    let cfg = InferenceConfig::default();
    let (q_pi, breakdowns) = infer_policies(&gm, &belief, &policies, &cfg)?;

    println!("{} policies over a horizon of {}", policies.len(), gm.spec.horizon);
    println!("first action        best G   epistemic  pragmatic  q(first action)");
    for produce in 0..7 {
        for analyze in 0..2 {
            let idx: Vec<usize> =
                (0..policies.len()).filter(|k| policies[*k].first() == &vec![produce, analyze]).collect();
            let best = idx.iter().min_by(|a, b| breakdowns[**a].total.total_cmp(&breakdowns[**b].total)).unwrap();
            let b = &breakdowns[*best];
            let mass: f64 = idx.iter().map(|k| q_pi.probs()[*k]).sum();
            println!(
                "produce {produce} analyze {analyze}  {:8.3}  {:9.3}  {:9.3}  {mass:.4}",
                b.total, b.epistemic, b.pragmatic
            );
        }
    }
    println!("chosen: {:?}", select_action(&q_pi, &policies, &cfg, 0));
    Ok(())
}

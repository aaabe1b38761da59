//! Three-firm market: reference run against the run where firm 2 reads sales sharply.

use cournot_aif::config::{ExperimentConfig, ScenarioId};
use cournot_aif::sim::run_experiment;
use cournot_aif::trace::RunSummary;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    for scenario in [ScenarioId::ThreeFirmReference, ScenarioId::ThreeFirmPrecision06] {
        let cfg = ExperimentConfig::preset(scenario, seed)?;
        let records = run_experiment(&cfg)?.records;
        println!("{}", scenario.name());
        for i in 0..cfg.n_firms() {
            let row: String = records.iter().map(|r| r.firms[i].production.to_string()).collect();
            println!("  firm {} production {row}", i + 1);
        }
        let summary = RunSummary::from_records(&records, cfg.market.max_production);
        let profits: Vec<String> = summary.firms.iter().map(|f| format!("{:.0}", f.profit)).collect();
        println!("  profits {}, mean price {:.2}", profits.join(" / "), summary.mean_price);
    }
    Ok(())
}

//! Writes a trace, its summary and the three figure types to a directory.

use std::path::PathBuf;

use cournot_aif::config::{ExperimentConfig, ScenarioId};
use cournot_aif::genmodel::firm::{modality, sales_slice};
use cournot_aif::plot::{behavior_svg, likelihood_svg, price_svg};
use cournot_aif::sim::run_experiment;
use cournot_aif::trace::{write_csv, RunSummary};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "figures".into()));
    std::fs::create_dir_all(&dir)?;
    let cfg = ExperimentConfig::preset(ScenarioId::DuopolyReference, 0)?;
    let run = run_experiment(&cfg)?;
    write_csv(&dir.join("trace.csv"), &run.records)?;
    let summary = RunSummary::from_records(&run.records, cfg.market.max_production);
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    std::fs::write(dir.join("behavior.svg"), behavior_svg(&run.records)?)?;
    std::fs::write(dir.join("price.svg"), price_svg(&run.records)?)?;
    let sales = sales_slice(&run.agents[0].gm.a[modality::SALES], 5)?;
    std::fs::write(dir.join("sales-likelihood.svg"), likelihood_svg(&sales, "p(sales | context, stock), last production 5")?)?;
    println!("wrote trace, summary and figures to {}", dir.display());
    Ok(())
}

//! Stock-signal likelihoods before and after fusion with the context map.

use cournot_aif::categorical::Cpt;
use cournot_aif::genmodel::firm::{
    build_signal_base, fuse_context_likelihood, Context, ContextMap, Epistemic, WAREHOUSE_LEVELS,
};

fn show(title: &str, cpt: &Cpt) {
    println!("{title}");
    for w in 0..WAREHOUSE_LEVELS {
        let col: Vec<String> = cpt.column(&[w]).iter().map(|p| format!("{p:.3}")).collect();
        println!("  w = {w:2}: {}", col.join(" "));
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = build_signal_base(Epistemic::NotAnalyzed, 1.0)?;
    show("p(signal | stock), no analysis", &base);
    let map = ContextMap::default();
    for ctx in [Context::Acceptable, Context::Reduce] {
        show(&format!("fused with context {ctx:?}"), &fuse_context_likelihood(&base, &map, ctx)?);
    }
    Ok(())
}

//! Nash quantities, best responses and prices for the shipped cost tables.

use cournot_aif::market::{best_response_target, market_price, nash_quantities};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tables: [(&str, Vec<f64>); 2] = [("duopoly", vec![16.0, 17.0]), ("three firms", vec![6.2, 7.0, 7.8])];
    for (name, costs) in tables {
        println!("{name}, unit costs {costs:?}");
        for a in [30.0, 45.0] {
            let q = nash_quantities(a, 1.0, &costs)?;
            let price = market_price(a, 1.0, &q);
            let total: f64 = q.iter().sum();
            let targets: Vec<usize> =
                costs.iter().zip(&q).map(|(c, qi)| best_response_target(a, 1.0, *c, total - qi, 10)).collect();
            println!("  a = {a}: quantities {q:.3?}, price {price:.3}, rounded best responses {targets:?}");
        }
    }
    Ok(())
}

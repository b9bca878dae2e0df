//! Local volatility from a grid of call prices, and what happens when the
//! grid contains a butterfly arbitrage.
//!
//! cargo run --release --example dupire_local_vol

use coupled_index::surface::{dupire_local_variance, linspace, local_vol_surface, PriceSurface};
use coupled_index::Error;

fn main() -> coupled_index::Result<()> {
    let prices = PriceSurface::lognormal(100.0, 0.03, 0.01, 0.2, linspace(0.5, 1.5, 101), linspace(70.0, 130.0, 121))?;
    let surface = local_vol_surface(&prices, 5.0)?;
    println!("local vol from 20% lognormal prices");
    for t in [0.6, 1.0, 1.4] {
        let row: Vec<String> = [80.0, 90.0, 100.0, 110.0, 120.0]
            .iter()
            .map(|&k| format!("{:.5}", surface.eval(t, k)))
            .collect();
        println!("  t = {t:.1}: {}", row.join("  "));
    }

    // lift one price so the strike profile is no longer convex
    let bumped = prices.price(50, 60) * 1.02;
    let broken = prices.with_price(50, 60, bumped);
    match dupire_local_variance(&broken, broken.times()[50], broken.strikes()[60]) {
        Err(Error::ButterflyArbitrage { t, strike, value }) => {
            println!("arbitrage detected at t = {t}, K = {strike}: d2C/dK2 = {value:.3e}")
        }
        other => println!("unexpected: {other:?}"),
    }
    Ok(())
}

//! How far a heterogeneous basket is from its limit model: proximity
//! metrics, the optimal limit parameters, and the stochastic correlation
//! between two stocks as the index volatility moves.
//!
//! cargo run --release --example proximity_metrics

use coupled_index::model::{correlation_from_vols, optimal_constant, ProximityMetrics};

fn main() -> coupled_index::Result<()> {
    let weights = [0.3, 0.25, 0.2, 0.15, 0.1];
    let betas = [1.2, 0.9, 1.0, 0.8, 1.1];
    let dividends = [0.02, 0.0, 0.03, 0.01, 0.025];

    let beta = optimal_constant(&weights, &betas)?;
    let delta = optimal_constant(&weights, &dividends)?;
    println!("optimal limit beta = {beta}, delta = {delta}");
    for (b, d) in [(beta, delta), (1.0, 0.0), (0.9, 0.02)] {
        let m = ProximityMetrics::from_parts(&weights, &betas, &dividends, b, d);
        println!(
            "beta = {b:.2}, delta = {d:.3}: P_w = {:.4}, P_beta = {:.4}, P_delta = {:.4}, combined(p=1) = {:.5}",
            m.p_w,
            m.p_beta,
            m.p_delta,
            m.combined(1)
        );
    }

    println!("\ncorrelation of two stocks with eta = 0.2, 0.3 as sigma rises");
    for sigma in [0.1, 0.2, 0.3, 0.5] {
        println!("  sigma = {sigma:.1}: {:.4}", correlation_from_vols(1.2, 0.9, sigma, 0.2, 0.3)?);
    }
    Ok(())
}

//! Simplified, original and market models on a ten-stock basket calibrated
//! to the same single-stock smiles: stock smiles, index smiles and worst-of
//! call prices.
//!
//! cargo run --release --example market_comparison [paths]

use std::sync::Arc;

use coupled_index::calibration::{CostGuard, KernelConfig};
use coupled_index::comparison::{run_comparison, smile_slope, ComparisonConfig};
use coupled_index::model::ModelSpec;
use coupled_index::pricing::{smile, worst_of_on, Estimator};
use coupled_index::sde::{NoisePlan, Underlying};
use coupled_index::surface::{linspace, skewed_surface, synthetic_index_surface, SkewParams};

fn main() -> coupled_index::Result<()> {
    let paths: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100_000);
    let eta = SkewParams {
        atm: 0.2,
        slope: -0.15,
        curvature: 0.1,
        floor: 0.1,
        ceiling: 0.5,
    };
    let spec = ModelSpec::homogeneous(
        10,
        100.0,
        1.0,
        0.0,
        0.045,
        Arc::new(synthetic_index_surface(100.0, 1.0)?),
        Arc::new(skewed_surface(100.0, eta, 1.0, linspace(0.3, 2.0, 35))?),
        1.0,
    )?;
    let config = ComparisonConfig {
        spec,
        steps: 10,
        paths,
        calibration_particles: 10_000,
        kernel: KernelConfig::accelerated(),
        guard: CostGuard::default(),
        moneyness: linspace(0.3, 2.0, 41),
        rho_tolerance: 1e-6,
    };
    let c = run_comparison(&config, &NoisePlan::new(2024))?;
    println!("matched rho = {:.4}", c.rho);

    let grid = [0.8, 0.9, 1.0, 1.1, 1.2];
    println!("\nstock 1 implied vols");
    println!("{:>6} {:>10} {:>10} {:>10}", "m", "simplified", "market", "original");
    let s = smile(&c.simplified, Underlying::Stock(0), &grid, Estimator::Controlled)?;
    let mk = smile(&c.market, Underlying::Stock(0), &grid, Estimator::Controlled)?;
    let o = smile(&c.original, Underlying::Stock(0), &grid, Estimator::Controlled)?;
    for m in grid {
        let v = |curve: &coupled_index::pricing::SmileCurve| curve.vol_at(m).unwrap_or(f64::NAN);
        println!("{m:>6.2} {:>10.4} {:>10.4} {:>10.4}", v(&s), v(&mk), v(&o));
    }

    println!("\nindex implied vols (simplified: basket of its stocks)");
    let s = smile(&c.simplified, Underlying::ReconstructedIndex, &grid, Estimator::Controlled)?;
    let mk = smile(&c.market, Underlying::Index, &grid, Estimator::Controlled)?;
    let o = smile(&c.original, Underlying::Index, &grid, Estimator::Controlled)?;
    for m in grid {
        let v = |curve: &coupled_index::pricing::SmileCurve| curve.vol_at(m).unwrap_or(f64::NAN);
        println!("{m:>6.2} {:>10.4} {:>10.4} {:>10.4}", v(&s), v(&mk), v(&o));
    }
    let (ss, se_s) = smile_slope(&s, 0.8, 1.2)?;
    let (sm, se_m) = smile_slope(&mk, 0.8, 1.2)?;
    println!("slope 0.8-1.2: simplified {ss:.4} ({se_s:.4}), market {sm:.4} ({se_m:.4})");

    println!("\nworst-of calls");
    println!("{:>6} {:>18} {:>18} {:>18}", "K", "simplified", "market", "original");
    let ids = c.stock_ids();
    for k in [0.5, 0.8, 1.0] {
        let s = worst_of_on(&c.simplified, &ids, k)?;
        let mk = worst_of_on(&c.market, &ids, k)?;
        let o = worst_of_on(&c.original, &ids, k)?;
        println!(
            "{k:>6.2} {:>10.5} ({:.5}) {:>10.5} ({:.5}) {:>10.5} ({:.5})",
            s.price, s.stderr, mk.price, mk.stderr, o.price, o.stderr
        );
    }
    Ok(())
}

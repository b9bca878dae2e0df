//! A single stock with flat 60% local volatility calibrated against the
//! synthetic index skew: particle smile, extracted idiosyncratic volatility,
//! and a second stage of independent paths driven by the extracted surface.
//!
//! cargo run --release --example toy_calibration

use std::sync::Arc;

use coupled_index::calibration::{
    default_extraction_bandwidth, default_moneyness_grid, extract_eta_surface, simulate_particle_system, KernelConfig,
    ParticleSystem,
};
use coupled_index::model::LimitSpec;
use coupled_index::pricing::{smile, Estimator};
use coupled_index::sde::{simulate_simplified, NoisePlan, SimplifiedModel, SimulationRequest, StockSpec, Underlying};
use coupled_index::surface::{synthetic_index_surface, VolSurface};

fn main() -> coupled_index::Result<()> {
    let sigma = Arc::new(synthetic_index_surface(100.0, 1.0)?);
    let system = ParticleSystem {
        limit: LimitSpec::new(0.7, 0.0, 0.0, 100.0, sigma.clone())?,
        local_vol: Arc::new(VolSurface::constant(0.6)?),
        beta: 0.7,
        rate: 0.05,
        dividend: 0.0,
        s0: 100.0,
        horizon: 1.0,
    };
    let n = 5000;
    let noise = NoisePlan::new(1);
    let cloud = simulate_particle_system(&system, n, 20, &KernelConfig::naive().into(), &noise)?;
    println!("clamped particle-steps: {}", cloud.total_clamps());

    let grid = [0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3];
    let particle = cloud.smile(&grid, Estimator::Controlled)?;

    let (eta, coverage) = extract_eta_surface(&cloud, None, &default_moneyness_grid(), default_extraction_bandwidth(n))?;
    println!("eta surface coverage: {:.1}%", 100.0 * coverage.coverage());
    println!("\neta(1, S) against sqrt(0.36 - 0.49 sigma^2(1, I)) at I = S");
    for m in [0.6, 0.8, 1.0, 1.2, 1.5] {
        let s = 100.0 * m;
        let frozen = (0.36 - 0.49 * sigma.eval(1.0, s).powi(2)).max(0.0).sqrt();
        println!("  m = {m:.1}: {:.4}  {:.4}", eta.eval(1.0, s), frozen);
    }

    let model = SimplifiedModel {
        limit: system.limit.clone(),
        stocks: vec![StockSpec {
            s0: 100.0,
            beta: 0.7,
            dividend: 0.0,
            eta: Arc::new(eta),
        }],
        weights: None,
        rate: 0.05,
        horizon: 1.0,
    };
    let e = simulate_simplified(&model, &SimulationRequest::new(20, 50_000), &noise.derive(1))?;
    let second = smile(&e, Underlying::Stock(0), &grid, Estimator::Controlled)?;

    println!("\n{:>6} {:>10} {:>12}", "m", "particles", "independent");
    for m in grid {
        println!(
            "{m:>6.2} {:>10.4} {:>12.4}",
            particle.vol_at(m).unwrap_or(f64::NAN),
            second.vol_at(m).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

//! Naive and accelerated kernel estimation of the conditional index variance:
//! interaction counts, timings and the effect on the particle smile.
//!
//! cargo run --release --example kernel_acceleration [particles]

use std::sync::Arc;
use std::time::Instant;

use coupled_index::calibration::{simulate_particle_system, KernelConfig, ParticleSystem};
use coupled_index::model::LimitSpec;
use coupled_index::pricing::Estimator;
use coupled_index::sde::NoisePlan;
use coupled_index::surface::{synthetic_index_surface, VolSurface};

fn main() -> coupled_index::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10_000);
    let system = ParticleSystem {
        limit: LimitSpec::new(0.7, 0.0, 0.0, 100.0, Arc::new(synthetic_index_surface(100.0, 1.0)?))?,
        local_vol: Arc::new(VolSurface::constant(0.6)?),
        beta: 0.7,
        rate: 0.05,
        dividend: 0.0,
        s0: 100.0,
        horizon: 1.0,
    };
    let noise = NoisePlan::new(5);
    let grid = [0.8, 0.9, 1.0, 1.1, 1.2];
    let runs = [
        ("naive", KernelConfig::naive().with_exponent(0.1)),
        ("threshold 0", KernelConfig::accelerated().with_threshold(0.0)),
        ("threshold 1/N", KernelConfig::accelerated()),
    ];
    println!("N = {n}, h = N^(-1/10)");
    for (name, kernel) in runs {
        let start = Instant::now();
        let cloud = simulate_particle_system(&system, n, 20, &kernel.into(), &noise)?;
        let secs = start.elapsed().as_secs_f64();
        let curve = cloud.smile(&grid, Estimator::Controlled)?;
        let vols: Vec<String> = grid
            .iter()
            .map(|&m| format!("{:.4}", curve.vol_at(m).unwrap_or(f64::NAN)))
            .collect();
        println!(
            "{name:<14} {:>14} interactions {secs:>7.2} s  smile {}",
            cloud.total_interactions(),
            vols.join(" ")
        );
    }
    Ok(())
}

//! The original model and its limit on shared noise, the simplified model,
//! and the distance between the original index and the limit index.
//!
//! cargo run --release --example simulate_models

use std::sync::Arc;

use coupled_index::model::{LimitSpec, ModelSpec};
use coupled_index::sde::{
    simulate_original, simulate_simplified, NoisePlan, SimplifiedModel, SimulationRequest, StockSelection, StockSpec,
    Underlying,
};
use coupled_index::surface::{synthetic_index_surface, VolSurface};

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn main() -> coupled_index::Result<()> {
    let sigma = Arc::new(synthetic_index_surface(100.0, 1.0)?);
    let eta = Arc::new(VolSurface::constant(0.2)?);
    let noise = NoisePlan::new(7);
    let df = (-0.03f64).exp();

    println!("{:>5} {:>14} {:>22}", "M", "E[I_T] disc.", "E[sup |I^M - I|^2]");
    for m in [2, 8, 32, 128] {
        let spec = ModelSpec::homogeneous(m, 100.0, 1.0, 0.0, 0.03, sigma.clone(), eta.clone(), 1.0)?;
        let limit = LimitSpec::from_model(&spec)?;
        let request = SimulationRequest::new(50, 5000)
            .record(StockSelection::Only(vec![0]))
            .with_companion();
        let e = simulate_original(&spec, &limit, &request, &noise)?;
        let terminal = e.terminal(Underlying::Index)?;
        let d = e.sup_distance(Underlying::Index, Underlying::CompanionIndex, 2)?;
        println!("{m:>5} {:>14.4} {:>22.5}", df * mean(&terminal), mean(&d));
    }

    let model = SimplifiedModel {
        limit: LimitSpec::new(1.0, 0.0, 0.0, 100.0, sigma)?,
        stocks: (0..4)
            .map(|_| StockSpec {
                s0: 100.0,
                beta: 1.0,
                dividend: 0.0,
                eta: eta.clone(),
            })
            .collect(),
        weights: Some(vec![0.25; 4]),
        rate: 0.03,
        horizon: 1.0,
    };
    let e = simulate_simplified(&model, &SimulationRequest::new(50, 20_000), &noise)?;
    println!("\nsimplified model, discounted terminal means (martingale check against 100)");
    for u in [Underlying::Index, Underlying::ReconstructedIndex, Underlying::Stock(0)] {
        println!("  {u:<20} {:.4}", df * mean(&e.terminal(u)?));
    }
    Ok(())
}

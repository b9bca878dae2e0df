//! Bound constants of the original-to-limit approximation and the empirical
//! decay of the index and stock distances with the basket size.
//!
//! cargo run --release --example convergence_rates

use std::sync::Arc;

use coupled_index::model::{LimitSpec, ModelSpec};
use coupled_index::sde::NoisePlan;
use coupled_index::surface::{synthetic_index_surface, VolSurface};
use coupled_index::theory::{bound_report, convergence_study, BoundConstants, StudyConfig};

fn main() -> coupled_index::Result<()> {
    let sigma = Arc::new(synthetic_index_surface(100.0, 1.0)?);
    let eta = Arc::new(VolSurface::constant(0.2)?);
    let family = |m| ModelSpec::homogeneous(m, 100.0, 1.0, 0.0, 0.03, sigma.clone(), eta.clone(), 1.0);

    let spec = family(16)?;
    let constants = BoundConstants::from_surfaces(&spec);
    let limit = LimitSpec::from_model(&spec)?;
    println!("{constants:?}");
    for p in [1, 2] {
        let r = bound_report(&spec, &limit, &constants, p)?;
        println!("p = {p}: C_T = {}, index bound = {}, stock bound = {}", r.c_t, r.theorem1, r.c_tilde);
    }

    let table = convergence_study(
        family,
        &StudyConfig {
            sizes: vec![4, 16, 64],
            p: 1,
            paths: 4000,
            steps: 50,
            beta: 1.0,
            delta: 0.0,
            constants: None,
        },
        &NoisePlan::new(17),
    )?;
    println!("\n{:>5} {:>12} {:>12} {:>12}", "M", "index", "stock", "bound");
    for r in &table.rows {
        println!(
            "{:>5} {:>12.4e} {:>12.4e} {:>12.4e}",
            r.m, r.index_distance, r.stock_distance, r.theorem1
        );
    }
    println!(
        "log-log slopes: index {:.3}, stock {:.3}",
        table.index_slope.unwrap_or(f64::NAN),
        table.stock_slope.unwrap_or(f64::NAN)
    );
    Ok(())
}

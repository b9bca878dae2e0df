//! Acceptance suite: one PASS/FAIL line per criterion.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use coupled_index::calibration::{
    nadaraya_watson, select_beta, simulate_particle_system, CostGuard, KernelConfig, ParticleSystem,
};
use coupled_index::commands::{run, Command};
use coupled_index::comparison::{run_comparison, smile_slope, ComparisonConfig};
use coupled_index::config::RunConfig;
use coupled_index::model::{optimal_constant, LimitSpec, ModelSpec};
use coupled_index::pricing::{
    implied_vol, lognormal_call, smile, smile_from_samples, worst_of_on, Estimator, SmileCurve,
};
use coupled_index::sde::{simulate_market_model, MarketModel, NoisePlan, SimulationRequest, Underlying};
use coupled_index::surface::{
    dupire_local_variance, linspace, skewed_surface, synthetic_index_surface, PriceSurface, SkewParams, VolSurface,
};
use coupled_index::theory::{convergence_study, StudyConfig};
use coupled_index::Result;
use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};

const NEAR_THE_MONEY: [f64; 4] = [0.89, 0.99, 1.09, 1.19];
const BP: f64 = 1e-4;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn flat(v: f64) -> Arc<VolSurface> {
    Arc::new(VolSurface::constant(v).unwrap())
}

fn vol(curve: &SmileCurve, m: f64) -> f64 {
    curve.vol_at(m).unwrap_or(f64::NAN)
}

fn toy_system() -> ParticleSystem {
    let index_vol = Arc::new(synthetic_index_surface(100.0, 1.0).unwrap());
    ParticleSystem {
        limit: LimitSpec::new(0.7, 0.0, 0.0, 100.0, index_vol).unwrap(),
        local_vol: flat(0.6),
        beta: 0.7,
        rate: 0.05,
        dividend: 0.0,
        s0: 100.0,
        horizon: 1.0,
    }
}

fn toy_calibration() -> Result<Outcome> {
    let start = Instant::now();
    let grid = linspace(0.7, 1.3, 13);
    let system = toy_system();
    let mut worst: f64 = 0.0;
    let mut mean = vec![0.0; grid.len()];
    for seed in 1..=9 {
        let cloud = simulate_particle_system(&system, 5000, 20, &KernelConfig::naive().into(), &NoisePlan::new(seed))?;
        let curve = cloud.smile(&grid, Estimator::Controlled)?;
        for (i, &m) in grid.iter().enumerate() {
            let d = vol(&curve, m) - 0.6;
            worst = worst.max(d.abs());
            mean[i] += d / 9.0;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    // the seed average isolates the time-discretization bias from particle noise
    outcome(
        worst <= 150.0 * BP && secs <= 120.0,
        format!(
            "max |vol - 0.60| over 9 seeds = {:.1} bp (seed mean {:+.1} bp at 0.7, {:+.1} bp at 1.3), {secs:.1} s",
            worst / BP,
            mean[0] / BP,
            mean[grid.len() - 1] / BP
        ),
    )
}

fn target_system() -> Result<ParticleSystem> {
    let index_vol = Arc::new(synthetic_index_surface(100.0, 1.0)?);
    let skew = SkewParams {
        atm: 0.3,
        slope: -0.2,
        curvature: 0.1,
        floor: 0.15,
        ceiling: 0.6,
    };
    let local_vol = Arc::new(skewed_surface(100.0, skew, 1.0, linspace(0.3, 2.0, 35))?);
    let beta = select_beta(&local_vol, &index_vol, 100.0, 100.0, 0.7)?;
    Ok(ParticleSystem {
        limit: LimitSpec::new(beta, 0.0, 0.0, 100.0, index_vol)?,
        local_vol,
        beta,
        rate: 0.03,
        dividend: 0.0,
        s0: 100.0,
        horizon: 1.0,
    })
}

const C2_STEPS: usize = 20;

/// Smile of the target local-volatility model itself on the same time grid.
fn exact_smile(system: &ParticleSystem) -> Result<SmileCurve> {
    let model = MarketModel {
        local_vols: vec![system.local_vol.clone()],
        s0: vec![system.s0],
        dividends: vec![system.dividend],
        weights: None,
        rho: 0.0,
        rate: system.rate,
        horizon: system.horizon,
    };
    let mut terminal = Vec::new();
    for batch in 0..10 {
        let e = simulate_market_model(
            &model,
            &SimulationRequest::new(C2_STEPS, 200_000),
            &NoisePlan::new(1000).derive(batch),
        )?;
        terminal.extend(e.terminal(Underlying::Stock(0))?);
    }
    smile_from_samples(
        &terminal,
        "exact",
        system.s0,
        &NEAR_THE_MONEY,
        system.rate,
        system.dividend,
        system.horizon,
        Estimator::Controlled,
    )
}

fn particle_convergence() -> Result<Outcome> {
    let system = target_system()?;
    let exact = exact_smile(&system)?;
    let kernel = KernelConfig::accelerated().with_exponent(0.2);
    let mut errors = Vec::new();
    for n in [5_000, 20_000, 100_000] {
        let mut total = 0.0;
        for seed in 1..=5 {
            let cloud = simulate_particle_system(&system, n, C2_STEPS, &kernel.into(), &NoisePlan::new(seed))?;
            let curve = cloud.smile(&NEAR_THE_MONEY, Estimator::Controlled)?;
            total += NEAR_THE_MONEY
                .iter()
                .map(|&m| (vol(&curve, m) - vol(&exact, m)).abs())
                .fold(0.0, f64::max);
        }
        errors.push(total / 5.0 / BP);
    }
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    outcome(
        monotone && errors[2] <= 30.0,
        format!(
            "seed-averaged max error (bp) at N = 5e3, 2e4, 1e5: {:.1}, {:.1}, {:.1}",
            errors[0], errors[1], errors[2]
        ),
    )
}

fn acceleration() -> Result<Outcome> {
    let system = target_system()?;
    let n = 10_000;
    let noise = NoisePlan::new(3);
    let start = Instant::now();
    let naive = simulate_particle_system(&system, n, C2_STEPS, &KernelConfig::naive().with_exponent(0.1).into(), &noise)?;
    let naive_secs = start.elapsed().as_secs_f64();
    let zero = simulate_particle_system(
        &system,
        n,
        C2_STEPS,
        &KernelConfig::accelerated().with_threshold(0.0).into(),
        &noise,
    )?;
    let identical = (0..=C2_STEPS).all(|k| {
        naive.stock_at(k).iter().map(|x| x.to_bits()).eq(zero.stock_at(k).iter().map(|x| x.to_bits()))
    });
    let start = Instant::now();
    let fast = simulate_particle_system(&system, n, C2_STEPS, &KernelConfig::accelerated().into(), &noise)?;
    let fast_secs = start.elapsed().as_secs_f64();
    let reduction = naive.total_interactions() as f64 / fast.total_interactions() as f64;
    let a = naive.smile(&NEAR_THE_MONEY, Estimator::Controlled)?;
    let b = fast.smile(&NEAR_THE_MONEY, Estimator::Controlled)?;
    let diff = NEAR_THE_MONEY
        .iter()
        .map(|&m| (vol(&a, m) - vol(&b, m)).abs())
        .fold(0.0, f64::max);
    outcome(
        identical && reduction >= 5.0 && diff <= 20.0 * BP,
        format!(
            "bit-identical = {identical}, interactions reduced {reduction:.1}x ({naive_secs:.1} s -> {fast_secs:.1} s), smile difference {:.1} bp",
            diff / BP
        ),
    )
}

fn theorem_rate() -> Result<Outcome> {
    let start = Instant::now();
    let index_vol = Arc::new(synthetic_index_surface(100.0, 1.0)?);
    let eta = flat(0.2);
    let table = convergence_study(
        |m| ModelSpec::homogeneous(m, 100.0, 1.0, 0.0, 0.03, index_vol.clone(), eta.clone(), 1.0),
        &StudyConfig {
            sizes: vec![4, 16, 64, 256],
            p: 1,
            paths: 10_000,
            steps: 50,
            beta: 1.0,
            delta: 0.0,
            constants: None,
        },
        &NoisePlan::new(17),
    )?;
    let secs = start.elapsed().as_secs_f64();
    let slope = table.index_slope.unwrap_or(f64::NAN);
    let below = table.rows.iter().all(|r| r.index_distance <= r.theorem1);
    outcome(
        (-1.3..=-0.8).contains(&slope) && below && secs <= 300.0,
        format!(
            "index slope {slope:.3}, all below the bound = {below}, distances {:?}, {secs:.1} s",
            table.rows.iter().map(|r| format!("{:.3e}", r.index_distance)).collect::<Vec<_>>()
        ),
    )
}

fn basket_comparison() -> Result<coupled_index::comparison::Comparison> {
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
    run_comparison(
        &ComparisonConfig {
            spec,
            steps: 10,
            paths: 100_000,
            calibration_particles: 10_000,
            kernel: KernelConfig::accelerated(),
            guard: CostGuard::default(),
            moneyness: linspace(0.3, 2.0, 41),
            rho_tolerance: 1e-6,
        },
        &NoisePlan::new(2024),
    )
}

fn gyongy(c: &coupled_index::comparison::Comparison) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for j in c.stock_ids() {
        let s = smile(&c.simplified, Underlying::Stock(j), &NEAR_THE_MONEY, Estimator::Controlled)?;
        let m = smile(&c.market, Underlying::Stock(j), &NEAR_THE_MONEY, Estimator::Controlled)?;
        for &k in &NEAR_THE_MONEY {
            worst = worst.max((vol(&s, k) - vol(&m, k)).abs());
        }
    }
    outcome(
        worst <= 30.0 * BP,
        format!("max stock smile gap over 10 stocks = {:.1} bp (rho = {:.4})", worst / BP, c.rho),
    )
}

fn steepness(c: &coupled_index::comparison::Comparison) -> Result<Outcome> {
    let grid = [0.8, 1.2];
    let market = smile_slope(&smile(&c.market, Underlying::Index, &grid, Estimator::Controlled)?, 0.8, 1.2)?;
    let basket = smile_slope(
        &smile(&c.simplified, Underlying::ReconstructedIndex, &grid, Estimator::Controlled)?,
        0.8,
        1.2,
    )?;
    let index = smile_slope(&smile(&c.simplified, Underlying::Index, &grid, Estimator::Controlled)?, 0.8, 1.2)?;
    let flatter = |(s, se): (f64, f64)| s.abs() - market.0.abs() > 3.0 * se.hypot(market.1);
    outcome(
        flatter(basket) && flatter(index),
        format!(
            "vol(0.8) - vol(1.2): market {:.4} +- {:.4}, simplified basket {:.4} +- {:.4}, simplified index {:.4} +- {:.4}",
            market.0, market.1, basket.0, basket.1, index.0, index.1
        ),
    )
}

fn worst_of(c: &coupled_index::comparison::Comparison) -> Result<Outcome> {
    let ids = c.stock_ids();
    let mut pass = true;
    let mut detail = Vec::new();
    for k in [0.5, 0.8, 1.0] {
        let s = worst_of_on(&c.simplified, &ids, k)?;
        let o = worst_of_on(&c.original, &ids, k)?;
        let m = worst_of_on(&c.market, &ids, k)?;
        pass &= s.price <= m.price + 3.0 * s.stderr.hypot(m.stderr);
        pass &= o.price <= m.price + 3.0 * o.stderr.hypot(m.stderr);
        pass &= (o.price - s.price).abs() <= 3.0 * o.stderr.hypot(s.stderr);
        detail.push(format!("K={k}: simplified {:.5} original {:.5} market {:.5}", s.price, o.price, m.price));
    }
    outcome(pass, detail.join("; "))
}

fn run_in_pool(threads: usize, command: Command, config: &RunConfig, out: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let files = pool.install(|| run(command, config, out))?;
    Ok(files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect())
}

fn replay() -> Result<Outcome> {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let runs = [
        ("toy_calibration", Command::Calibrate),
        ("original_calibration", Command::Calibrate),
        ("basket", Command::Simulate),
        ("basket", Command::Smile),
        ("basket", Command::WorstOf),
        ("market_basket", Command::WorstOf),
        ("dupire_lognormal", Command::Dupire),
        ("theorems", Command::Theorems),
    ];
    let dir = tempfile::tempdir().unwrap();
    let mut files = 0;
    let mut mismatches = Vec::new();
    for (name, command) in runs {
        let config = RunConfig::from_file(&configs.join(format!("{name}.toml")))?;
        let a = run_in_pool(1, command, &config, &dir.path().join(format!("{name}-{}-a", command.name())))?;
        let b = run_in_pool(4, command, &config, &dir.path().join(format!("{name}-{}-b", command.name())))?;
        files += a.len();
        if a != b {
            mismatches.push(format!("{name} {}", command.name()));
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("{files} files compared across 1 and 4 threads, mismatches: {mismatches:?}"),
    )
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn oracles() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);

    // strikes drawn in standardized moneyness so that every price carries time value
    let mut iv_err: f64 = 0.0;
    for _ in 0..50 {
        let v = 0.05 + 0.95 * unit(&mut rng);
        let t = 0.1 + 2.9 * unit(&mut rng);
        let k = 100.0 * (v * t.sqrt() * (4.0 * unit(&mut rng) - 2.0)).exp();
        let price = lognormal_call(100.0, k, t, 0.03, 0.01, v);
        iv_err = iv_err.max((implied_vol(price, 100.0, k, t, 0.03, 0.01)? - v).abs());
    }

    let prices = PriceSurface::lognormal(100.0, 0.03, 0.01, 0.25, linspace(0.5, 1.5, 101), linspace(70.0, 130.0, 121))?;
    let (times, strikes) = (prices.times(), prices.strikes());
    let mut dupire_err: f64 = 0.0;
    for &t in &times[1..times.len() - 1] {
        for &k in &strikes[1..strikes.len() - 1] {
            dupire_err = dupire_err.max((dupire_local_variance(&prices, t, k)? - 0.0625).abs());
        }
    }

    let mut median_ok = true;
    for m in 1..=50 {
        let weights: Vec<f64> = (0..m).map(|_| 0.01 + unit(&mut rng)).collect();
        let values: Vec<f64> = (0..m).map(|_| (unit(&mut rng) * 8.0).round() / 4.0).collect();
        let cost = |c: f64| weights.iter().zip(&values).map(|(w, x)| w * (x - c).abs()).sum::<f64>();
        let best = values.iter().map(|&c| cost(c)).fold(f64::INFINITY, f64::min);
        let c = optimal_constant(&weights, &values)?;
        median_ok &= cost(c) <= best * (1.0 + 1e-12) + 1e-12;
    }

    let mut nw_ok = true;
    for _ in 0..1000 {
        let n = 1 + (rng.next_u64() % 30) as usize;
        let xs: Vec<f64> = (0..n).map(|_| unit(&mut rng) * 10.0).collect();
        let ys: Vec<f64> = (0..n).map(|_| unit(&mut rng) * 4.0 - 2.0).collect();
        // inside the sample range, where the weights cannot all underflow
        let (x_lo, x_hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let x = x_lo + unit(&mut rng) * (x_hi - x_lo);
        let h = 0.2 + unit(&mut rng) * 2.0;
        let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        match nadaraya_watson(&xs, &ys, x, h) {
            Ok(v) => nw_ok &= v >= lo && v <= hi,
            Err(_) => nw_ok = false,
        }
    }

    outcome(
        iv_err <= 1e-7 && dupire_err <= 1e-3 && median_ok && nw_ok,
        format!(
            "implied vol round trip {iv_err:.1e}, Dupire flat variance error {dupire_err:.1e}, weighted median {median_ok}, NW bounds {nw_ok}"
        ),
    )
}

fn report(id: usize, name: &str, result: Result<Outcome>) -> bool {
    match result {
        Ok(o) => {
            println!("criterion {id} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            o.pass
        }
        Err(e) => {
            println!("criterion {id} FAIL: {name}: error: {e}");
            false
        }
    }
}

/// Runs every criterion, or only those whose numbers are passed as arguments
/// (`cargo test --test acceptance -- 1 9`). Verdicts are printed; the exit
/// status reflects them only when `ACCEPTANCE_STRICT` is set.
fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |id: usize| only.is_empty() || only.contains(&id);
    let mut all = true;
    if wanted(1) {
        all &= report(1, "toy calibration", toy_calibration());
    }
    if wanted(2) {
        all &= report(2, "particle smile convergence in N", particle_convergence());
    }
    if wanted(3) {
        all &= report(3, "accelerated kernel", acceleration());
    }
    if wanted(4) {
        all &= report(4, "index distance rate in M", theorem_rate());
    }
    if wanted(5) || wanted(6) || wanted(7) {
        match basket_comparison() {
            Ok(c) => {
                all &= report(5, "market model reproduces stock smiles", gyongy(&c));
                all &= report(6, "index smile steepness ordering", steepness(&c));
                all &= report(7, "worst-of ordering", worst_of(&c));
            }
            Err(e) => {
                for (id, name) in [(5, "market model reproduces stock smiles"), (6, "index smile steepness ordering"), (7, "worst-of ordering")] {
                    println!("criterion {id} FAIL: {name}: comparison failed: {e}");
                }
                all = false;
            }
        }
    }
    if wanted(8) {
        all &= report(8, "deterministic replay", replay());
    }
    if wanted(9) {
        all &= report(9, "oracle suites", oracles());
    }
    if !all && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}

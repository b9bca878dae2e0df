//! Nadaraya-Watson conditional expectation estimators with a Gaussian kernel.

use rayon::prelude::*;

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Denominators at or below this value count as empty neighbourhoods.
pub const DENOMINATOR_FLOOR: f64 = 1e-300;

#[inline]
pub fn gaussian_kernel(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMode {
    /// Every particle interacts with every other particle.
    Naive,
    /// Particles are sorted and each sum stops at the first contribution below the threshold.
    Accelerated,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
pub struct KernelConfig {
    /// `a` in `h_N = scale * N^{-a}`.
    pub bandwidth_exponent: f64,
    #[serde(default = "unit")]
    pub bandwidth_scale: f64,
    /// Contribution threshold for the accelerated mode; `None` means `1/N`.
    #[serde(default)]
    pub threshold: Option<f64>,
    pub mode: KernelMode,
}

fn unit() -> f64 {
    1.0
}

impl KernelConfig {
    /// Naive estimator with `h_N = N^{-1/5}`.
    pub fn naive() -> Self {
        Self {
            bandwidth_exponent: 0.2,
            bandwidth_scale: 1.0,
            threshold: None,
            mode: KernelMode::Naive,
        }
    }

    /// Accelerated estimator with `h_N = N^{-1/10}` and threshold `1/N`.
    pub fn accelerated() -> Self {
        Self {
            bandwidth_exponent: 0.1,
            bandwidth_scale: 1.0,
            threshold: None,
            mode: KernelMode::Accelerated,
        }
    }

    pub fn with_exponent(mut self, a: f64) -> Self {
        self.bandwidth_exponent = a;
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = Some(threshold);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_exponent > 0.0 && self.bandwidth_exponent < 1.0) {
            return Err(Error::validation("bandwidth_exponent", "must lie in (0, 1)"));
        }
        if !(self.bandwidth_scale > 0.0 && self.bandwidth_scale.is_finite()) {
            return Err(Error::validation("bandwidth_scale", "must be positive"));
        }
        if let Some(t) = self.threshold {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::validation("threshold", "must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn bandwidth(&self, particles: usize) -> f64 {
        self.bandwidth_scale * (particles as f64).powf(-self.bandwidth_exponent)
    }

    pub fn threshold_for(&self, particles: usize) -> f64 {
        self.threshold.unwrap_or(1.0 / particles as f64)
    }
}

/// `sum y_i K((x - x_i)/h) / sum K((x - x_i)/h)`, clamped to the range of
/// the contributing `ys`.
pub fn nadaraya_watson(xs: &[f64], ys: &[f64], x: f64, h: f64) -> Result<f64> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::validation("xs", "xs and ys must be non-empty and of equal length"));
    }
    if !(h > 0.0) {
        return Err(Error::validation("h", "bandwidth must be positive"));
    }
    let (mut num, mut den) = (0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (xi, yi) in xs.iter().zip(ys) {
        let k = gaussian_kernel((x - xi) / h);
        if k > 0.0 {
            num += yi * k;
            den += k;
            lo = lo.min(*yi);
            hi = hi.max(*yi);
        }
    }
    if den <= DENOMINATOR_FLOOR {
        return Err(Error::KernelUnderflow { query: x });
    }
    Ok((num / den).clamp(lo, hi))
}

/// Estimates at every sorted sample plus the number of kernel evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedEstimates {
    pub values: Vec<f64>,
    pub interactions: u64,
}

/// Kernel sum for the sample at sorted position `p`: the sample itself, then
/// neighbours expanding leftwards, then rightwards. Each side stops at the
/// first contribution strictly below `threshold` (never, when it is zero).
#[inline]
fn outward_sum(xs: &[f64], ys: &[f64], p: usize, inv_h: f64, threshold: f64) -> (f64, u64) {
    let x = xs[p];
    let k0 = gaussian_kernel(0.0);
    let mut num = k0 * ys[p];
    let mut den = k0;
    let (mut lo, mut hi) = (ys[p], ys[p]);
    let mut count = 1u64;
    for q in (0..p).rev() {
        let k = gaussian_kernel((x - xs[q]) * inv_h);
        count += 1;
        if k < threshold {
            break;
        }
        if k > 0.0 {
            num += ys[q] * k;
            den += k;
            lo = lo.min(ys[q]);
            hi = hi.max(ys[q]);
        }
    }
    for q in p + 1..xs.len() {
        let k = gaussian_kernel((x - xs[q]) * inv_h);
        count += 1;
        if k < threshold {
            break;
        }
        if k > 0.0 {
            num += ys[q] * k;
            den += k;
            lo = lo.min(ys[q]);
            hi = hi.max(ys[q]);
        }
    }
    ((num / den).clamp(lo, hi), count)
}

fn check_sorted(xs: &[f64], ys: &[f64], h: f64) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::validation("ys", "length differs from the sample"));
    }
    if !(h > 0.0) {
        return Err(Error::validation("h", "bandwidth must be positive"));
    }
    if xs.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::validation("xs", "sample must be sorted ascending"));
    }
    Ok(())
}

/// Full estimator at every sample of an ascending sample: `N` evaluations per query.
pub fn naive_nw_all(sorted_xs: &[f64], ys: &[f64], h: f64) -> Result<SortedEstimates> {
    check_sorted(sorted_xs, ys, h)?;
    let inv_h = 1.0 / h;
    let values: Vec<f64> = (0..sorted_xs.len())
        .into_par_iter()
        .map(|p| outward_sum(sorted_xs, ys, p, inv_h, 0.0).0)
        .collect();
    let n = sorted_xs.len() as u64;
    Ok(SortedEstimates {
        values,
        interactions: n * n,
    })
}

/// Truncated estimator at every sample of an ascending sample.
pub fn accelerated_nw_all(sorted_xs: &[f64], ys: &[f64], h: f64, threshold: f64) -> Result<SortedEstimates> {
    check_sorted(sorted_xs, ys, h)?;
    if !(threshold >= 0.0) {
        return Err(Error::validation("threshold", "must be non-negative"));
    }
    let inv_h = 1.0 / h;
    let results: Vec<(f64, u64)> = (0..sorted_xs.len())
        .into_par_iter()
        .map(|p| outward_sum(sorted_xs, ys, p, inv_h, threshold))
        .collect();
    Ok(SortedEstimates {
        interactions: results.iter().map(|r| r.1).sum(),
        values: results.into_iter().map(|r| r.0).collect(),
    })
}

/// Estimates of `E[y | x = x_i]` at every sample point in original order,
/// using the configured mode.
pub fn estimate_at_samples(xs: &[f64], ys: &[f64], kernel: &KernelConfig) -> Result<SortedEstimates> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal levels keep particle order
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let sx: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
    let sy: Vec<f64> = order.iter().map(|&i| ys[i]).collect();
    let h = kernel.bandwidth(n);
    let sorted = match kernel.mode {
        KernelMode::Naive => naive_nw_all(&sx, &sy, h)?,
        KernelMode::Accelerated => accelerated_nw_all(&sx, &sy, h, kernel.threshold_for(n))?,
    };
    let mut values = vec![0.0; n];
    for (slot, &i) in order.iter().enumerate() {
        values[i] = sorted.values[slot];
    }
    Ok(SortedEstimates {
        values,
        interactions: sorted.interactions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_core::{Rng, SeedableRng};

    fn unit(rng: &mut ChaCha8Rng) -> f64 {
        (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn constant_response_is_exact() {
        let xs = [0.3, 1.7, -2.0, 5.5];
        let ys = [0.1; 4];
        for h in [0.01, 0.5, 10.0] {
            for x in [-1.0, 0.0, 2.2] {
                if let Ok(v) = nadaraya_watson(&xs, &ys, x, h) {
                    assert_eq!(v, 0.1);
                }
            }
        }
        assert_eq!(nadaraya_watson(&xs, &ys, 0.0, 1.0).unwrap(), 0.1);
    }

    #[test]
    fn two_point_examples() {
        for h in [0.1, 1.0, 7.0] {
            assert!((nadaraya_watson(&[0.0, 1.0], &[0.0, 1.0], 0.5, h).unwrap() - 0.5).abs() < 1e-15);
        }
        let expected = (-0.5f64).exp() / (1.0 + (-0.5f64).exp());
        let v = nadaraya_watson(&[0.0, 1.0], &[0.0, 1.0], 0.0, 1.0).unwrap();
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.3775).abs() < 1e-4);
    }

    #[test]
    fn far_query_underflows() {
        assert!(matches!(
            nadaraya_watson(&[0.0, 1.0], &[0.0, 1.0], 1e3, 1.0),
            Err(Error::KernelUnderflow { .. })
        ));
    }

    #[test]
    fn zero_threshold_is_bit_identical_to_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut xs: Vec<f64> = (0..500).map(|_| 100.0 * unit(&mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let ys: Vec<f64> = (0..500).map(|_| unit(&mut rng)).collect();
        let a = naive_nw_all(&xs, &ys, 0.7).unwrap();
        let b = accelerated_nw_all(&xs, &ys, 0.7, 0.0).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.interactions, b.interactions);
    }

    #[test]
    fn severed_clusters_use_within_cluster_estimates() {
        let h = 0.5;
        let left = [0.0, 0.2, 0.5];
        let right = [10.0, 10.3, 10.4];
        let xs: Vec<f64> = left.iter().chain(&right).copied().collect();
        let ys = [1.0, 2.0, 3.0, 10.0, 20.0, 30.0];
        let r = accelerated_nw_all(&xs, &ys, h, 1e-6).unwrap();
        for p in 0..3 {
            let own = nadaraya_watson(&left, &ys[..3], xs[p], h).unwrap();
            assert!((r.values[p] - own).abs() < 1e-12);
        }
        for p in 3..6 {
            let own = nadaraya_watson(&right, &ys[3..], xs[p], h).unwrap();
            assert!((r.values[p] - own).abs() < 1e-12);
        }
        assert!(r.interactions < 36);
    }

    #[test]
    fn three_points_by_hand() {
        let xs = [0.0, 1.0, 3.0];
        let ys = [1.0, 2.0, 4.0];
        let k = |u: f64| (-0.5 * u * u).exp();
        let at = |i: usize| {
            let w: Vec<f64> = xs.iter().map(|x| k(xs[i] - x)).collect();
            w.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / w.iter().sum::<f64>()
        };
        let r = naive_nw_all(&xs, &ys, 1.0).unwrap();
        for i in 0..3 {
            assert!((r.values[i] - at(i)).abs() < 1e-14);
        }
        assert_eq!(r.interactions, 9);
    }

    #[test]
    fn unsorted_sample_rejected() {
        assert!(accelerated_nw_all(&[1.0, 0.0], &[0.0, 0.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn convex_combination_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let n = 1 + (rng.next_u64() % 40) as usize;
            let xs: Vec<f64> = (0..n).map(|_| 10.0 * unit(&mut rng) - 5.0).collect();
            let ys: Vec<f64> = (0..n).map(|_| 4.0 * unit(&mut rng) - 2.0).collect();
            let h = 0.05 + 2.0 * unit(&mut rng);
            let x = 12.0 * unit(&mut rng) - 6.0;
            if let Ok(v) = nadaraya_watson(&xs, &ys, x, h) {
                let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                assert!(v >= lo && v <= hi);
            }
        }
    }

    proptest! {
        #[test]
        fn truncation_error_is_bounded(
            mut xs in proptest::collection::vec(0.0f64..50.0, 2..200),
            seed in 0u64..1000,
            h in 0.1f64..3.0,
            tau in 0.0f64..0.05,
        ) {
            xs.sort_by(f64::total_cmp);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ys: Vec<f64> = xs.iter().map(|_| unit(&mut rng)).collect();
            let naive = naive_nw_all(&xs, &ys, h).unwrap();
            let fast = accelerated_nw_all(&xs, &ys, h, tau).unwrap();
            let n = xs.len() as f64;
            let ymax = ys.iter().copied().fold(0.0, f64::max);
            for p in 0..xs.len() {
                let den: f64 = xs.iter().map(|x| gaussian_kernel((xs[p] - x) / h)).sum();
                let bound = tau * n * ymax / den;
                prop_assert!((naive.values[p] - fast.values[p]).abs() <= bound + 1e-12);
            }
            prop_assert!(fast.interactions <= naive.interactions);
        }
    }
}

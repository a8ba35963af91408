//! Worst-case limit of the profile QLR when `M_I` has two boundary points
//! with orthogonal local cones.

use crate::stats::chisq_cdf;

/// CDF of `W* = ¼δ0 + ½χ²₁ + ¼ max(χ²₁, χ²₁')`, the law of
/// `max((Z1 ∧ 0)², (Z2 ∧ 0)²)` for independent standard normals.
///
/// The last component has CDF `F1(w)²` with `F1` the χ²₁ CDF.
pub fn worst_case_mixture_cdf(w: f64) -> f64 {
    if w.is_nan() {
        return f64::NAN;
    }
    if w < 0.0 {
        return 0.0;
    }
    let f1 = chisq_cdf(1, w);
    0.25 + 0.5 * f1 + 0.25 * f1 * f1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn endpoints() {
        assert_eq!(worst_case_mixture_cdf(0.0), 0.25);
        assert!((worst_case_mixture_cdf(1e4) - 1.0).abs() < 1e-15);
        assert_eq!(worst_case_mixture_cdf(-1.0), 0.0);
    }

    #[test]
    fn matches_direct_simulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let draws: Vec<f64> = (0..200_000)
            .map(|_| {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                z1.min(0.0).powi(2).max(z2.min(0.0).powi(2))
            })
            .collect();
        for w in [0.0, 0.5, 1.0, 2.0, 3.84] {
            let emp = draws.iter().filter(|&&d| d <= w).count() as f64 / draws.len() as f64;
            assert!((emp - worst_case_mixture_cdf(w)).abs() < 0.005, "w={w}");
        }
    }
}

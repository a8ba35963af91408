//! Scalar moment inequality `E[X] ≥ 0` written as the equality
//! `E[X] − μ − η = 0` with slack `η ≥ 0`. `θ = (μ, η) ∈ [0, U]²`,
//! `μ + η ≤ U`.

use super::{linspace, DataSet, Model, TrueSets};
use crate::criterion::{Criterion, CriterionKind, QlrContext};
use crate::error::{Error, Result};
use crate::param::{CustomPrior, ParamSpace, Prior};
use crate::stats::normal_inv;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;

/// Upper bound `U` of the parameter box.
pub const MI_UPPER: f64 = 1.0;

/// Flat on `γ = μ + η ∈ [0, U]`, uniform on the segment `{μ + η = γ}`.
#[derive(Debug, Clone, Copy)]
pub struct FlatSumPrior {
    pub upper: f64,
}

impl CustomPrior for FlatSumPrior {
    fn log_density(&self, theta: &[f64]) -> f64 {
        let s = theta[0] + theta[1];
        if theta[0] < 0.0 || theta[1] < 0.0 || !(s > 0.0) || s > self.upper {
            return f64::NEG_INFINITY;
        }
        -s.ln()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let s = self.upper * rng.random::<f64>();
        let mu = s * rng.random::<f64>();
        vec![mu, s - mu]
    }
}

fn target(xbar: f64, recentered: bool) -> f64 {
    if recentered {
        xbar.max(0.0)
    } else {
        xbar
    }
}

/// `L_n(μ, η) = −½(μ + η − X̄)²`, or with `X̄ ∨ 0` for the recentered variant.
pub fn mi_criterion(theta: &[f64], xbar: f64, recentered: bool) -> f64 {
    let d = theta[0] + theta[1] - target(xbar, recentered);
    -0.5 * d * d
}

/// `sup_θ L_n`, attained at `μ + η = clamp(X̄, 0, U)`.
pub fn mi_l_hat(xbar: f64, recentered: bool) -> f64 {
    let t = target(xbar, recentered);
    let d = t - t.clamp(0.0, MI_UPPER);
    -0.5 * d * d
}

/// `sup_{η ∈ [0, U−μ]} L_n(μ, η)`.
pub fn mi_profile(xbar: f64, recentered: bool, mu: f64) -> f64 {
    let t = target(xbar, recentered);
    let eta = (t - mu).clamp(0.0, (MI_UPPER - mu).max(0.0));
    mi_criterion(&[mu, eta], xbar, recentered)
}

/// Profile QLR of the interval `[0, m]`: `2n(l̂ − min(PL(0), PL(m)))`.
pub fn mi_profile_qlr(xbar: f64, n: usize, m: f64, recentered: bool) -> f64 {
    let pl = mi_profile(xbar, recentered, 0.0).min(mi_profile(xbar, recentered, m));
    (2.0 * n as f64 * (mi_l_hat(xbar, recentered) - pl)).max(0.0)
}

/// Quasi-posterior `α`-quantile of the profile QLR `PQ_n(M(θ))` under the
/// flat prior on `μ + η`, with `v = √n X̄`. Ignores the upper bound `U`.
pub fn mi_closed_form_posterior_quantile(v: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain { what: "quantile level", value: alpha });
    }
    let q = normal_inv((1.0 - alpha) * crate::stats::normal_cdf(v))?;
    Ok(if v >= 0.0 { q * q } else { q * q - v * v })
}

/// Nonparametric bootstrap `α`-quantile of the profile QLR for the plug-in
/// set `M̂_I = [0, X̄ ∨ 0]`.
pub fn mi_bootstrap_profile_qlr(data: &[f64], n_boot: usize, alpha: f64, seed: u64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("moment-inequality sample"));
    }
    if n_boot < 100 {
        return Err(Error::Config(format!("n_boot must be at least 100, got {n_boot}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain { what: "quantile level", value: alpha });
    }
    let n = data.len();
    let nf = n as f64;
    let xbar = data.iter().sum::<f64>() / nf;
    let m_hat = xbar.max(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<f64> = (0..n_boot)
        .map(|_| {
            let xb = (0..n).map(|_| data[rng.random_range(0..n)]).sum::<f64>() / nf;
            (nf * ((xb - m_hat).min(0.0).powi(2) - xb.min(0.0).powi(2))).max(0.0)
        })
        .collect();
    crate::stats::EmpiricalDist::unweighted(&draws).map(|d| d.quantile(alpha))
}

pub struct MiCriterion {
    xbar: f64,
    n: usize,
    recentered: bool,
    space: ParamSpace,
}

impl MiCriterion {
    pub fn new(data: &[f64], recentered: bool) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("moment-inequality sample"));
        }
        if let Some(x) = data.iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain { what: "moment-inequality observation", value: *x });
        }
        Ok(Self {
            xbar: data.iter().sum::<f64>() / data.len() as f64,
            n: data.len(),
            recentered,
            space: mi_space(),
        })
    }

    pub fn xbar(&self) -> f64 {
        self.xbar
    }
}

impl Criterion for MiCriterion {
    fn eval(&self, theta: &[f64]) -> f64 {
        if !self.space.contains(theta) {
            return f64::NEG_INFINITY;
        }
        mi_criterion(theta, self.xbar, self.recentered)
    }
    fn n(&self) -> usize {
        self.n
    }
    fn kind(&self) -> CriterionKind {
        CriterionKind::OptimalGmm
    }
}

pub fn mi_space() -> ParamSpace {
    ParamSpace::new(vec![0.0; 2], vec![MI_UPPER; 2])
        .expect("unit square")
        .with_constraint(|t: &[f64]| t[0] + t[1] <= MI_UPPER)
}

/// How the true `μ*` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuStar {
    Fixed(f64),
    /// `μ* = c/√n`
    Drift(f64),
}

pub struct MomentInequality {
    recentered: bool,
    pub mu_star: MuStar,
    space: ParamSpace,
    prior: Prior,
}

impl MomentInequality {
    pub fn new(recentered: bool, mu_star: MuStar) -> Result<Self> {
        let ok = match mu_star {
            MuStar::Fixed(m) => (0.0..=MI_UPPER).contains(&m),
            MuStar::Drift(c) => c >= 0.0 && c.is_finite(),
        };
        if !ok {
            return Err(Error::Config(format!("invalid mu_star setting {mu_star:?}")));
        }
        Ok(Self {
            recentered,
            mu_star,
            space: mi_space(),
            prior: Prior::Custom(Arc::new(FlatSumPrior { upper: MI_UPPER })),
        })
    }

    pub fn mu_star_at(&self, n: usize) -> f64 {
        match self.mu_star {
            MuStar::Fixed(m) => m,
            MuStar::Drift(c) => (c / (n as f64).sqrt()).min(MI_UPPER),
        }
    }

    fn xbar(data: &DataSet) -> Option<f64> {
        match data {
            DataSet::Real(x) if !x.is_empty() => Some(x.iter().sum::<f64>() / x.len() as f64),
            _ => None,
        }
    }
}

impl Model for MomentInequality {
    fn name(&self) -> &'static str {
        if self.recentered {
            "moment-inequality-recentered"
        } else {
            "moment-inequality"
        }
    }

    fn space(&self) -> &ParamSpace {
        &self.space
    }

    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["mu", "eta"]
    }

    fn criterion(&self, data: &DataSet) -> Result<Box<dyn Criterion>> {
        let DataSet::Real(x) = data else {
            return Err(Error::Config("moment-inequality model needs real-valued data".into()));
        };
        Ok(Box::new(MiCriterion::new(x, self.recentered)?))
    }

    fn truth(&self, n: usize) -> Vec<f64> {
        let m = self.mu_star_at(n);
        vec![0.5 * m, 0.5 * m]
    }

    fn simulate(&self, n: usize, seed: u64) -> Result<DataSet> {
        let m = self.mu_star_at(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(DataSet::Real(
            (0..n).map(|_| m + rng.sample::<f64, _>(StandardNormal)).collect(),
        ))
    }

    fn true_sets(&self, n: usize, coord: usize) -> Result<TrueSets> {
        if coord > 1 {
            return Err(Error::Dimension { expected: 2, got: coord + 1 });
        }
        let m = self.mu_star_at(n);
        let points = linspace(0.0, 1.0, 200)
            .into_iter()
            .map(|f| vec![f * m, (1.0 - f) * m])
            .collect();
        Ok(TrueSets { points, coord, m_interval: (0.0, m) })
    }

    fn equivalence_interval(&self, theta: &[f64], coord: usize) -> Result<(f64, f64)> {
        if coord > 1 {
            return Err(Error::Dimension { expected: 2, got: coord + 1 });
        }
        self.space.check_dim(theta)?;
        Ok((0.0, theta[0] + theta[1]))
    }

    fn closed_form_max(&self, data: &DataSet) -> Option<QlrContext> {
        let xbar = Self::xbar(data)?;
        let c = target(xbar, self.recentered).clamp(0.0, MI_UPPER);
        Some(QlrContext::new(mi_l_hat(xbar, self.recentered), vec![0.5 * c, 0.5 * c], data.n()))
    }

    fn closed_form_profile(&self, data: &DataSet, _coord: usize, mu: f64) -> Option<f64> {
        // symmetric in (μ, η)
        Some(mi_profile(Self::xbar(data)?, self.recentered, mu))
    }

    fn profile_quasiconcave(&self, _coord: usize) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criterion::{maximize_criterion, profile_criterion, SearchOptions};
    use crate::param::SubvectorMap;

    #[test]
    fn criterion_examples() {
        assert_eq!(mi_criterion(&[0.1, 0.2], 0.3, false), -0.5 * (0.1f64 + 0.2 - 0.3).powi(2));
        assert!(mi_criterion(&[0.1, 0.2], 0.3, false).abs() < 1e-16);
        let n = 400;
        let q = 2.0 * n as f64 * (mi_l_hat(0.3, false) - mi_criterion(&[0.1, 0.0], 0.3, false));
        assert!((q - 0.04 * n as f64).abs() < 1e-9);
        assert_eq!(mi_criterion(&[0.0, 0.0], -0.4, true), 0.0);
    }

    #[test]
    fn closed_form_quantile_examples() {
        assert!((mi_closed_form_posterior_quantile(40.0, 0.95).unwrap() - 2.7055).abs() < 1e-4);
        assert!((mi_closed_form_posterior_quantile(0.0, 0.95).unwrap() - 3.8415).abs() < 1e-4);
        // continuous at v = 0
        let a = mi_closed_form_posterior_quantile(-1e-9, 0.9).unwrap();
        let b = mi_closed_form_posterior_quantile(1e-9, 0.9).unwrap();
        assert!((a - b).abs() < 1e-6);
        assert!(mi_closed_form_posterior_quantile(0.0, 1.0).is_err());
    }

    #[test]
    fn closed_form_quantile_matches_exact_posterior_simulation() {
        // γ | data ∝ N(X̄, 1/n) truncated to γ ≥ 0
        let n = 500usize;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &xbar in &[0.15, -0.03, 0.01] {
            let v = (n as f64).sqrt() * xbar;
            let mut pq = Vec::new();
            while pq.len() < 200_000 {
                let g = xbar + rng.sample::<f64, _>(StandardNormal) / (n as f64).sqrt();
                if g >= 0.0 {
                    pq.push(mi_profile_qlr(xbar, n, g, false));
                }
            }
            let d = crate::stats::EmpiricalDist::unweighted(&pq).unwrap();
            for &alpha in &[0.9, 0.95] {
                let cf = mi_closed_form_posterior_quantile(v, alpha).unwrap();
                assert!((d.quantile(alpha) - cf).abs() < 0.05, "xbar={xbar} alpha={alpha}");
            }
        }
    }

    #[test]
    fn profile_qlr_at_truth_matches_drift_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, mu_star) = (300usize, 0.05);
        let space = mi_space();
        let sub = SubvectorMap::scalar(0, 2).unwrap();
        for _ in 0..50 {
            let xbar = mu_star + rng.sample::<f64, _>(StandardNormal) / (n as f64).sqrt();
            let vn = (n as f64).sqrt() * (xbar - mu_star);
            let expect = vn.min(0.0).powi(2) - (vn + (n as f64).sqrt() * mu_star).min(0.0).powi(2);
            assert!((mi_profile_qlr(xbar, n, mu_star, false) - expect.max(0.0)).abs() < 1e-8);

            let crit = MiCriterion { xbar, n, recentered: false, space: mi_space() };
            let ctx = maximize_criterion(&crit, &space, &[], &SearchOptions::default(), 1).unwrap();
            assert!((ctx.l_hat - mi_l_hat(xbar, false)).abs() < 1e-8);
            for mu in [0.0, mu_star, 0.3] {
                let p = profile_criterion(&crit, &space, &sub, &[mu], &[], &SearchOptions::default(), 2).unwrap();
                assert!((p.value - mi_profile(xbar, false, mu)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn bootstrap_degenerate_sample() {
        for x in [0.3, -0.2] {
            let q = mi_bootstrap_profile_qlr(&vec![x; 50], 200, 0.95, 1).unwrap();
            assert_eq!(q, 0.0);
        }
        assert!(mi_bootstrap_profile_qlr(&[0.1], 10, 0.95, 1).is_err());
    }

    #[test]
    fn prior_is_flat_in_sum() {
        let p = FlatSumPrior { upper: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s: Vec<f64> = (0..20_000).map(|_| p.sample(&mut rng)).map(|t| t[0] + t[1]).collect();
        let d = crate::stats::EmpiricalDist::unweighted(&s).unwrap();
        assert!(crate::stats::ks_distance(&d, |x| x.clamp(0.0, 1.0)) < 0.015);
        assert_eq!(p.log_density(&[0.6, 0.6]), f64::NEG_INFINITY);
        assert!((p.log_density(&[0.1, 0.4]) + 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn model_sets() {
        let m = MomentInequality::new(false, MuStar::Drift(1.0)).unwrap();
        assert!((m.mu_star_at(100) - 0.1).abs() < 1e-15);
        assert_eq!(m.equivalence_interval(&[0.1, 0.2], 0).unwrap(), (0.0, 0.1 + 0.2));
        let ts = m.true_sets(100, 0).unwrap();
        assert_eq!(ts.m_interval, (0.0, 0.1));
        for p in &ts.points {
            assert!((p[0] + p[1] - 0.1).abs() < 1e-15);
        }
        assert_eq!(m.simulate(10, 3).unwrap(), m.simulate(10, 3).unwrap());
    }
}

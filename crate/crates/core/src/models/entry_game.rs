//! Two-player complete-information entry game with correlated bivariate
//! normal payoff shocks and an equilibrium-selection probability `s`.
//!
//! `θ = (β1, β2, Δ1, Δ2, ρ, s)`. Firm `j` enters when
//! `β_j + Δ_j a_{−j} + ε_j ≥ 0`. Outcomes are ordered `00, 10, 01, 11`.

use super::bvn::{bvn_cdf_limit, rect_prob};
use super::{multinomial_avg_loglik, DataSet, Model, TrueSets};
use crate::criterion::{Criterion, CriterionKind, QlrContext};
use crate::error::{Error, Result};
use crate::optim::{nelder_mead_polished, NelderMeadOptions};
use crate::param::{ParamSpace, Prior};
use crate::smc::SmcConfig;
use crate::stats::normal_cdf;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rand::Rng;
use std::sync::OnceLock;

pub const TRUE_THETA: [f64; 6] = [0.2, 0.2, -0.5, -0.5, 0.5, 0.5];
pub const GAME_LOWER: [f64; 6] = [-1.0, -1.0, -2.0, -2.0, 0.0, 0.0];
pub const GAME_UPPER: [f64; 6] = [2.0, 2.0, 0.0, 0.0, 1.0, 1.0];
/// Relaxed zero for the profiled KL distance.
pub const KL_TOL: f64 = 1e-7;
const ENDPOINT_XTOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameCellProbs {
    pub g00: f64,
    pub g10: f64,
    pub g01: f64,
    pub g11: f64,
}

impl GameCellProbs {
    /// `[g00, g10, g01, g11]`
    pub fn as_array(&self) -> [f64; 4] {
        [self.g00, self.g10, self.g01, self.g11]
    }
}

pub fn game_space() -> ParamSpace {
    ParamSpace::new(GAME_LOWER.to_vec(), GAME_UPPER.to_vec()).expect("valid box")
}

fn in_box(theta: &[f64]) -> bool {
    theta.len() == 6 && (0..6).all(|i| theta[i] >= GAME_LOWER[i] && theta[i] <= GAME_UPPER[i])
}

pub fn game_cell_probs(theta: &[f64]) -> Result<GameCellProbs> {
    if theta.len() != 6 {
        return Err(Error::Dimension { expected: 6, got: theta.len() });
    }
    let (d1, d2, rho, s) = (theta[2], theta[3], theta[4], theta[5]);
    if !(d1 <= 0.0 && d2 <= 0.0 && (0.0..=1.0).contains(&rho) && (0.0..=1.0).contains(&s)) {
        return Err(Error::Domain {
            what: "entry-game parameter (Δ ≤ 0, ρ and s in [0, 1])",
            value: theta.iter().copied().find(|v| !v.is_finite()).unwrap_or(d1.max(d2)),
        });
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain { what: "entry-game parameter", value: f64::NAN });
    }
    let c = cells(theta);
    Ok(GameCellProbs { g00: c[0], g10: c[1], g01: c[2], g11: c[3] })
}

fn cells(theta: &[f64]) -> [f64; 4] {
    let (b1, b2, d1, d2, rho, s) = (theta[0], theta[1], theta[2], theta[3], theta[4], theta[5]);
    let (a1, a2) = (-b1 - d1, -b2 - d2);
    let phi2 = |x: f64, y: f64| bvn_cdf_limit(x, y, rho);
    let g00 = phi2(-b1, -b2);
    let g11 = phi2(-a1, -a2).max(0.0);
    let rect = rect_prob(-b1, a1, -b2, a2, rho);
    // (1,0) is the unique equilibrium when ε1 ≥ −β1 and ε2 ≤ a2, outside the
    // multiplicity rectangle: the strip ε2 < −β2 plus the part with ε1 > a1.
    let strip = (normal_cdf(-b2) - g00).max(0.0);
    let corner = ((normal_cdf(a2) - normal_cdf(-b2)) - (phi2(a1, a2) - phi2(a1, -b2))).max(0.0);
    let g10 = s * rect + strip + corner;
    let g01 = (1.0 - g00 - g11 - g10).max(0.0);
    [g00, g10, g01, g11]
}

/// `Σ p log(p/q)` over the four cells; `+inf` if `q` misses support of `p`.
pub fn game_kl(p: &[f64; 4], q: &[f64; 4]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in p.iter().zip(q) {
        if *a > 0.0 {
            if *b <= 0.0 {
                return f64::INFINITY;
            }
            acc += a * (a / b).ln();
        }
    }
    acc.max(0.0)
}

fn outcome_index(r: &(u8, u8)) -> Result<usize> {
    match r {
        (0, 0) => Ok(0),
        (1, 0) => Ok(1),
        (0, 1) => Ok(2),
        (1, 1) => Ok(3),
        _ => Err(Error::Config(format!("invalid entry-game outcome {r:?}"))),
    }
}

/// Outcome frequencies `[f00, f10, f01, f11]`.
pub fn game_frequencies(rows: &[(u8, u8)]) -> Result<[f64; 4]> {
    if rows.is_empty() {
        return Err(Error::Empty("entry-game sample"));
    }
    let mut c = [0.0; 4];
    for r in rows {
        c[outcome_index(r)?] += 1.0;
    }
    let n = rows.len() as f64;
    Ok(c.map(|v| v / n))
}

pub fn game_loglik(theta: &[f64], freq: &[f64; 4]) -> f64 {
    if !in_box(theta) {
        return f64::NEG_INFINITY;
    }
    multinomial_avg_loglik(freq, &cells(theta))
}

pub struct GameLikelihood {
    freq: [f64; 4],
    n: usize,
}

impl GameLikelihood {
    pub fn new(rows: &[(u8, u8)]) -> Result<Self> {
        Ok(Self { freq: game_frequencies(rows)?, n: rows.len() })
    }

    pub fn frequencies(&self) -> &[f64; 4] {
        &self.freq
    }
}

impl Criterion for GameLikelihood {
    fn eval(&self, theta: &[f64]) -> f64 {
        game_loglik(theta, &self.freq)
    }
    fn n(&self) -> usize {
        self.n
    }
    fn kind(&self) -> CriterionKind {
        CriterionKind::LogLikelihood
    }
}

pub fn simulate_game(theta: &[f64], n: usize, seed: u64) -> Result<Vec<(u8, u8)>> {
    game_cell_probs(theta)?;
    let (b1, b2, d1, d2, rho, s) = (theta[0], theta[1], theta[2], theta[3], theta[4], theta[5]);
    let (a1, a2) = (-b1 - d1, -b2 - d2);
    let root = (1.0 - rho * rho).max(0.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let (e1, e2) = (z1, rho * z1 + root * z2);
            if e1 <= -b1 && e2 <= -b2 {
                (0, 0)
            } else if e1 >= a1 && e2 >= a2 {
                (1, 1)
            } else if e1 >= -b1 && e1 <= a1 && e2 >= -b2 && e2 <= a2 {
                if rng.random::<f64>() < s {
                    (1, 0)
                } else {
                    (0, 1)
                }
            } else if e1 >= -b1 && e2 <= a2 {
                (1, 0)
            } else {
                (0, 1)
            }
        })
        .collect())
}

/// Profiled KL `inf_η D(p ‖ p_(μ, η))` with coordinate `coord` held at `mu`.
/// Nuisance coordinates are searched in the box by projection. Returns the
/// value and the full argmin.
pub fn game_profile_kl(p: &[f64; 4], coord: usize, mu: f64, starts: &[Vec<f64>], tol: f64) -> (f64, Vec<f64>) {
    let free: Vec<usize> = (0..6).filter(|&i| i != coord).collect();
    let build = |x: &[f64]| {
        let mut t = [0.0; 6];
        t[coord] = mu;
        let mut pen = 0.0;
        for (k, &i) in free.iter().enumerate() {
            let c = x[k].clamp(GAME_LOWER[i], GAME_UPPER[i]);
            pen += (x[k] - c).powi(2);
            t[i] = c;
        }
        (t, pen)
    };
    let f = |x: &[f64]| {
        let (t, pen) = build(x);
        game_kl(p, &cells(&t)) + 1e-3 * pen
    };
    let mut best = (f64::INFINITY, Vec::new());
    for (si, s) in starts.iter().enumerate() {
        let x0: Vec<f64> = free.iter().map(|&i| s[i].clamp(GAME_LOWER[i], GAME_UPPER[i])).collect();
        let opts = NelderMeadOptions {
            max_evals: 3000,
            ftol: 1e-14,
            xtol: 1e-9,
            initial_step: if si == 0 { 0.05 } else { 0.2 },
            target: 0.5 * tol,
        };
        let m = nelder_mead_polished(f, &x0, &opts, 2);
        if m.value < best.0 {
            best = (m.value, build(&m.x).0.to_vec());
        }
        if best.0 < 0.5 * tol {
            break;
        }
    }
    best
}

/// Equivalence-set interval for coordinate `coord` plus the argmins at the
/// two endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct GameInterval {
    pub lo: f64,
    pub hi: f64,
    pub argmin_lo: Vec<f64>,
    pub argmin_hi: Vec<f64>,
}

/// Smallest and largest `μ` such that `inf_η D(p_θb ‖ p_(μ, η)) < tol`,
/// each found by bisection outward from `θ_b[coord]`.
pub fn game_m_oracle_full(theta_b: &[f64], coord: usize, tol: f64) -> Result<GameInterval> {
    if coord >= 6 {
        return Err(Error::Dimension { expected: 6, got: coord + 1 });
    }
    let p = game_cell_probs(theta_b)?.as_array();
    let own = game_kl(&p, &cells(theta_b));
    if !(own < tol) {
        return Err(Error::OracleInconsistency { distance: own, tol });
    }
    let side = |bound: f64| {
        let (v, a) = game_profile_kl(&p, coord, bound, &[theta_b.to_vec()], tol);
        if v < tol {
            return (bound, a);
        }
        let (mut feas, mut infeas, mut arg) = (theta_b[coord], bound, theta_b.to_vec());
        while (infeas - feas).abs() > ENDPOINT_XTOL {
            let mid = 0.5 * (feas + infeas);
            let (v, a) = game_profile_kl(&p, coord, mid, &[arg.clone(), theta_b.to_vec()], tol);
            if v < tol {
                feas = mid;
                arg = a;
            } else {
                infeas = mid;
            }
        }
        (feas, arg)
    };
    let (lo, argmin_lo) = side(GAME_LOWER[coord]);
    let (hi, argmin_hi) = side(GAME_UPPER[coord]);
    Ok(GameInterval { lo, hi, argmin_lo, argmin_hi })
}

pub fn game_m_oracle(theta_b: &[f64], coord: usize, tol: f64) -> Result<(f64, f64)> {
    game_m_oracle_full(theta_b, coord, tol).map(|g| (g.lo, g.hi))
}

/// Points of the identified set and per-coordinate identified intervals.
pub type IdentifiedPoints = (Vec<Vec<f64>>, Vec<(f64, f64)>);

/// Discretized identified set at θ0: the endpoint argmins for every
/// coordinate plus interior slices pulled toward θ0.
pub fn game_identified_points(theta0: &[f64], slices: usize) -> Result<IdentifiedPoints> {
    let p = game_cell_probs(theta0)?.as_array();
    let mut points = vec![theta0.to_vec()];
    let mut intervals = Vec::with_capacity(6);
    for c in 0..6 {
        let g = game_m_oracle_full(theta0, c, KL_TOL)?;
        intervals.push((g.lo, g.hi));
        for k in 1..=slices {
            let mu = g.lo + (g.hi - g.lo) * k as f64 / (slices + 1) as f64;
            let near = if mu < theta0[c] { &g.argmin_lo } else { &g.argmin_hi };
            let (v, a) = game_profile_kl(&p, c, mu, &[theta0.to_vec(), near.clone()], KL_TOL);
            if v < KL_TOL {
                points.push(a);
            }
        }
        points.push(g.argmin_lo);
        points.push(g.argmin_hi);
    }
    Ok((points, intervals))
}

pub struct EntryGame {
    theta0: Vec<f64>,
    space: ParamSpace,
    prior: Prior,
    sets: OnceLock<IdentifiedPoints>,
}

impl EntryGame {
    pub fn new(theta0: Vec<f64>) -> Result<Self> {
        game_cell_probs(&theta0)?;
        if !in_box(&theta0) {
            return Err(Error::Config(format!("entry-game truth {theta0:?} outside the parameter box")));
        }
        Ok(Self { theta0, space: game_space(), prior: Prior::Flat, sets: OnceLock::new() })
    }

    fn sets(&self) -> Result<&IdentifiedPoints> {
        if let Some(s) = self.sets.get() {
            return Ok(s);
        }
        let s = game_identified_points(&self.theta0, 31)?;
        Ok(self.sets.get_or_init(|| s))
    }
}

impl Model for EntryGame {
    fn name(&self) -> &'static str {
        "entry-game"
    }

    fn space(&self) -> &ParamSpace {
        &self.space
    }

    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["beta1", "beta2", "delta1", "delta2", "rho", "s"]
    }

    fn default_coord(&self) -> usize {
        2
    }

    fn default_smc(&self) -> SmcConfig {
        SmcConfig {
            mh_steps: 4,
            ..SmcConfig::default()
        }
    }

    fn criterion(&self, data: &DataSet) -> Result<Box<dyn Criterion>> {
        let DataSet::EntryGame(rows) = data else {
            return Err(Error::Config("entry-game model needs (a1, a2) outcome records".into()));
        };
        Ok(Box::new(GameLikelihood::new(rows)?))
    }

    fn truth(&self, _n: usize) -> Vec<f64> {
        self.theta0.clone()
    }

    fn simulate(&self, n: usize, seed: u64) -> Result<DataSet> {
        simulate_game(&self.theta0, n, seed).map(DataSet::EntryGame)
    }

    fn true_sets(&self, _n: usize, coord: usize) -> Result<TrueSets> {
        if coord >= 6 {
            return Err(Error::Dimension { expected: 6, got: coord + 1 });
        }
        let (points, intervals) = self.sets()?;
        Ok(TrueSets { points: points.clone(), coord, m_interval: intervals[coord] })
    }

    fn equivalence_interval(&self, theta: &[f64], coord: usize) -> Result<(f64, f64)> {
        game_m_oracle(theta, coord, KL_TOL)
    }

    /// Flat at `l̂` over the identified slice and monotone outside it.
    fn profile_quasiconcave(&self, _coord: usize) -> bool {
        true
    }

    /// The likelihood is saturated whenever the empirical frequencies are
    /// attainable, in which case `l̂ = Σ p̂ log p̂`.
    fn closed_form_max(&self, data: &DataSet) -> Option<QlrContext> {
        let DataSet::EntryGame(rows) = data else {
            return None;
        };
        let freq = game_frequencies(rows).ok()?;
        let f = |t: &[f64]| {
            let c: Vec<f64> = (0..6).map(|i| t[i].clamp(GAME_LOWER[i], GAME_UPPER[i])).collect();
            let pen: f64 = c.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum();
            game_kl(&freq, &cells(&c)) + 1e-3 * pen
        };
        let opts = NelderMeadOptions { max_evals: 6000, ftol: 1e-16, xtol: 1e-10, initial_step: 0.1, target: 1e-14 };
        let starts = [self.theta0.clone(), vec![0.5, 0.5, -1.0, -1.0, 0.5, 0.5], vec![0.0, 0.0, -0.2, -0.2, 0.2, 0.8]];
        let best = starts
            .iter()
            .map(|s| nelder_mead_polished(f, s, &opts, 3))
            .min_by(|a, b| a.value.total_cmp(&b.value))?;
        if best.value > 1e-12 {
            return None;
        }
        let theta: Vec<f64> = (0..6).map(|i| best.x[i].clamp(GAME_LOWER[i], GAME_UPPER[i])).collect();
        let l_hat = multinomial_avg_loglik(&freq, &freq);
        Some(QlrContext::new(l_hat.max(game_loglik(&theta, &freq)), theta, rows.len()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_at_truth() {
        let c = game_cell_probs(&TRUE_THETA).unwrap().as_array();
        let proto = [0.25771, 0.25940, 0.25940, 0.22349];
        for (a, b) in c.iter().zip(proto) {
            assert!((a - b).abs() < 5e-6, "{c:?}");
        }
        assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cells_sum_to_one_and_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let space = game_space();
        for _ in 0..100 {
            let t = space.sample_uniform(&mut rng).unwrap();
            let c = game_cell_probs(&t).unwrap().as_array();
            assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let a = game_cell_probs(&[0.3, -0.1, 0.0, 0.0, 0.4, 0.1]).unwrap();
        let b = game_cell_probs(&[0.3, -0.1, 0.0, 0.0, 0.4, 0.9]).unwrap();
        assert_eq!(a, b);
        let c = game_cell_probs(&[0.3, -0.1, 0.0, 0.0, 0.0, 0.5]).unwrap();
        assert!((c.g00 - normal_cdf(-0.3) * normal_cdf(0.1)).abs() < 1e-14);
        assert!(game_cell_probs(&[0.0, 0.0, 0.1, 0.0, 0.5, 0.5]).is_err());
    }

    #[test]
    fn g00_monotone() {
        let base = TRUE_THETA;
        let mut prev = 0.0;
        for k in 0..20 {
            let mut t = base;
            t[0] = 1.5 - 0.1 * k as f64;
            let g = game_cell_probs(&t).unwrap().g00;
            assert!(g > prev);
            prev = g;
        }
    }

    #[test]
    fn kl_basics() {
        let p = game_cell_probs(&TRUE_THETA).unwrap().as_array();
        assert_eq!(game_kl(&p, &p), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let space = game_space();
        for _ in 0..50 {
            let q = game_cell_probs(&space.sample_uniform(&mut rng).unwrap()).unwrap().as_array();
            assert!(game_kl(&p, &q) >= 0.0);
        }
    }

    #[test]
    fn simulation_matches_cells() {
        let n = 1_000_000;
        let rows = simulate_game(&TRUE_THETA, n, 3).unwrap();
        let f = game_frequencies(&rows).unwrap();
        let c = game_cell_probs(&TRUE_THETA).unwrap().as_array();
        for k in 0..4 {
            let se = (c[k] * (1.0 - c[k]) / n as f64).sqrt();
            assert!((f[k] - c[k]).abs() < 3.0 * se, "cell {k}: {} vs {}", f[k], c[k]);
        }
        assert_eq!(rows[..100], simulate_game(&TRUE_THETA, 100, 3).unwrap()[..]);
    }

    #[test]
    fn s_interval_without_multiplicity_is_full() {
        let t = [0.3, -0.1, 0.0, 0.0, 0.4, 0.3];
        let (lo, hi) = game_m_oracle(&t, 5, KL_TOL).unwrap();
        assert_eq!((lo, hi), (0.0, 1.0));
    }

    #[test]
    fn oracle_contains_own_coordinate() {
        let t = [0.5, 0.1, -0.8, -0.3, 0.3, 0.7];
        let (lo, hi) = game_m_oracle(&t, 4, KL_TOL).unwrap();
        assert!(lo <= t[4] && t[4] <= hi);
    }

    #[test]
    fn saturated_maximum() {
        let m = EntryGame::new(TRUE_THETA.to_vec()).unwrap();
        let data = m.simulate(1000, 4).unwrap();
        let crit = m.criterion(&data).unwrap();
        let ctx = m.closed_form_max(&data).unwrap();
        assert!(ctx.l_hat >= crit.eval(&TRUE_THETA));
        assert!((crit.eval(&ctx.theta_hat) - ctx.l_hat).abs() < 1e-10);
    }
}

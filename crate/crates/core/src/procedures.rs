//! Confidence sets from a quasi-posterior particle cloud: the full-vector set
//! (Procedure 1), the profile-based subvector set (Procedure 2), the χ²₁
//! profile cut (Procedure 3), projection and percentile intervals.

use crate::criterion::{profile_criterion, Criterion, QlrContext, SearchOptions};
use crate::error::{Error, Result};
use crate::models::{DataSet, Model};
use crate::optim::NelderMeadOptions;
use crate::param::SubvectorMap;
use crate::smc::{substream, ParticleCloud};
use crate::stats::{chisq_quantile, weighted_quantile};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CsKind {
    Procedure1,
    Procedure2,
    Procedure3,
    Projection,
    Percentile,
}

impl CsKind {
    pub const ALL: [CsKind; 5] = [
        CsKind::Procedure1,
        CsKind::Procedure2,
        CsKind::Procedure3,
        CsKind::Projection,
        CsKind::Percentile,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CsKind::Procedure1 => "procedure1",
            CsKind::Procedure2 => "procedure2",
            CsKind::Procedure3 => "procedure3",
            CsKind::Projection => "projection",
            CsKind::Percentile => "percentile",
        }
    }
}

impl std::str::FromStr for CsKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CsKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown procedure '{s}'")))
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("confidence level must lie in (0, 1), got {level}")))
    }
}

/// `Θ̂ = {θ : L_n(θ) ≥ ζ} = {θ : Q_n(θ) ≤ ξ}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FullCS {
    pub kind: CsKind,
    pub level: f64,
    pub zeta: f64,
    pub xi: f64,
}

impl FullCS {
    pub fn contains(&self, criterion: &dyn Criterion, theta: &[f64]) -> bool {
        criterion.eval(theta) >= self.zeta
    }

    /// Same set, tested through the QLR.
    pub fn contains_qlr(&self, ctx: &QlrContext, criterion: &dyn Criterion, theta: &[f64]) -> bool {
        let l = criterion.eval(theta);
        !l.is_nan() && 2.0 * ctx.n as f64 * (ctx.l_hat - l) <= self.xi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalCS {
    pub kind: CsKind,
    pub level: f64,
    pub lo: f64,
    pub hi: f64,
    pub zeta: Option<f64>,
    pub xi: Option<f64>,
    pub disconnected: bool,
}

impl IntervalCS {
    pub fn contains_interval(&self, lo: f64, hi: f64) -> bool {
        self.lo <= lo && hi <= self.hi
    }
}

/// `L_n(θ^b)` at every particle.
pub fn particle_criterion(cloud: &ParticleCloud, n: usize) -> Vec<f64> {
    cloud.log_crit.iter().map(|v| v / n as f64).collect()
}

/// ζ is the weighted `(1 − level)` quantile of `L_n(θ^b)`.
pub fn procedure1(cloud: &ParticleCloud, ctx: &QlrContext, level: f64) -> Result<FullCS> {
    check_level(level)?;
    let zeta = weighted_quantile(&particle_criterion(cloud, ctx.n), &cloud.weights, 1.0 - level)?;
    Ok(FullCS {
        kind: CsKind::Procedure1,
        level,
        zeta,
        xi: ctx.xi_from_zeta(zeta),
    })
}

/// `Q_n(θ^b)` at every particle.
pub fn posterior_qlr_draws(cloud: &ParticleCloud, ctx: &QlrContext) -> Vec<f64> {
    particle_criterion(cloud, ctx.n)
        .into_iter()
        .map(|l| ctx.qlr_of_value(l))
        .collect()
}

/// Grid resolution and bisection tolerance for turning a profile level set
/// into an interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntervalSearch {
    pub grid: usize,
    pub tol: f64,
}

impl Default for IntervalSearch {
    fn default() -> Self {
        Self { grid: 1001, tol: 1e-4 }
    }
}

/// `μ ↦ sup_{η ∈ H_μ} L_n(μ, η)` for one scalar coordinate, using the model's
/// closed form when it has one.
pub struct Profile<'a> {
    model: &'a dyn Model,
    data: &'a DataSet,
    criterion: &'a dyn Criterion,
    coord: usize,
    sub: SubvectorMap,
    starts: Vec<Vec<f64>>,
    opts: SearchOptions,
    seed: u64,
}

impl<'a> Profile<'a> {
    /// Numeric profiles start from the best particles and the maximizer.
    pub fn new(
        model: &'a dyn Model,
        data: &'a DataSet,
        criterion: &'a dyn Criterion,
        coord: usize,
        cloud: Option<&ParticleCloud>,
        ctx: &QlrContext,
        seed: u64,
    ) -> Result<Self> {
        let sub = model.subvector(coord)?;
        let mut starts = vec![ctx.theta_hat.clone()];
        if let Some(c) = cloud {
            starts.extend(c.top(3).into_iter().map(|i| c.thetas[i].clone()));
        }
        let opts = SearchOptions {
            uniform_starts: 4,
            nelder_mead: NelderMeadOptions {
                max_evals: 2000,
                ..NelderMeadOptions::default()
            },
            restarts: 1,
        };
        Ok(Self { model, data, criterion, coord, sub, starts, opts, seed })
    }

    pub fn coord(&self) -> usize {
        self.coord
    }

    pub fn bounds(&self) -> (f64, f64) {
        let s = self.model.space();
        (s.lower()[self.coord], s.upper()[self.coord])
    }

    /// `-inf` on infeasible slices.
    pub fn value(&self, mu: f64) -> Result<f64> {
        if let Some(v) = self.model.closed_form_profile(self.data, self.coord, mu) {
            return Ok(v);
        }
        let seed = self.seed ^ mu.to_bits().rotate_left(17);
        match profile_criterion(self.criterion, self.model.space(), &self.sub, &[mu], &self.starts, &self.opts, seed) {
            Ok(p) => Ok(p.value),
            Err(Error::InfeasibleSlice(_)) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    }
}

/// Points of `M(θ)` at which the profile is evaluated: the two endpoints,
/// plus an interior scan unless the profile is known to be quasiconcave.
fn equivalence_points(model: &dyn Model, profile: &Profile<'_>, theta_b: &[f64]) -> Result<Vec<f64>> {
    let (lo, hi) = model.equivalence_interval(theta_b, profile.coord)?;
    let mut pts = vec![lo, hi];
    if !model.profile_quasiconcave(profile.coord) && hi > lo {
        pts.extend((1..=21).map(|k| lo + (hi - lo) * k as f64 / 22.0));
    }
    Ok(pts)
}

/// `PL_n(M(θ_b)) = inf_{μ ∈ M(θ_b)} sup_η L_n(μ, η)`.
pub fn equivalence_set_profile(model: &dyn Model, profile: &Profile<'_>, theta_b: &[f64]) -> Result<f64> {
    let mut best = f64::INFINITY;
    for mu in equivalence_points(model, profile, theta_b)? {
        best = best.min(profile.value(mu)?);
    }
    Ok(best)
}

/// `PL_n(M(θ^b))` for every particle. Profile values are shared across
/// particles with identical equivalence-set points.
pub fn profile_draws(model: &dyn Model, profile: &Profile<'_>, cloud: &ParticleCloud) -> Result<Vec<f64>> {
    let points: Vec<Vec<f64>> = cloud
        .thetas
        .par_iter()
        .map(|t| equivalence_points(model, profile, t))
        .collect::<Result<_>>()?;
    let mut unique: Vec<f64> = points.iter().flatten().copied().collect();
    unique.sort_by(f64::total_cmp);
    unique.dedup_by(|a, b| a.to_bits() == b.to_bits());
    let values: Vec<f64> = unique.par_iter().map(|&mu| profile.value(mu)).collect::<Result<_>>()?;
    let table: HashMap<u64, f64> = unique.iter().map(|m| m.to_bits()).zip(values).collect();
    Ok(points
        .iter()
        .map(|p| p.iter().map(|m| table[&m.to_bits()]).fold(f64::INFINITY, f64::min))
        .collect())
}

/// `{μ ∈ [lo, hi] : profile(μ) ≥ cutoff}` as an interval: a grid scan finds
/// the hull of the level set, then each end is bisected. Returns
/// `(lo, hi, disconnected)`.
pub fn level_set_interval(
    profile: &(dyn Fn(f64) -> Result<f64> + Sync),
    bounds: (f64, f64),
    center: f64,
    cutoff: f64,
    search: &IntervalSearch,
) -> Result<(f64, f64, bool)> {
    let (a, b) = bounds;
    let m = search.grid.max(3);
    let grid: Vec<f64> = (0..m).map(|i| a + (b - a) * i as f64 / (m - 1) as f64).collect();
    let inside: Vec<bool> = grid
        .par_iter()
        .map(|&mu| profile(mu).map(|v| v >= cutoff))
        .collect::<Result<_>>()?;
    let center = center.clamp(a, b);
    let first = inside.iter().position(|&x| x);
    let last = inside.iter().rposition(|&x| x);
    let (first, last) = match (first, last) {
        (Some(f), Some(l)) => (f, l),
        _ => {
            // the set is thinner than the grid
            if profile(center)? < cutoff {
                return Ok((center, center, false));
            }
            let lo = bisect(profile, center, grid[grid.partition_point(|&g| g < center).saturating_sub(1)], cutoff, search.tol)?;
            let hi = bisect(profile, center, grid[grid.partition_point(|&g| g <= center).min(m - 1)], cutoff, search.tol)?;
            return Ok((lo, hi, false));
        }
    };
    let disconnected = inside[first..=last].iter().any(|x| !x);
    let mut lo = if first == 0 { a } else { bisect(profile, grid[first], grid[first - 1], cutoff, search.tol)? };
    let mut hi = if last == m - 1 { b } else { bisect(profile, grid[last], grid[last + 1], cutoff, search.tol)? };
    if profile(center)? >= cutoff {
        lo = lo.min(center);
        hi = hi.max(center);
    }
    Ok((lo, hi, disconnected))
}

/// Last point from `inside` toward `outside` that stays in the level set.
fn bisect(
    profile: &(dyn Fn(f64) -> Result<f64> + Sync),
    mut inside: f64,
    mut outside: f64,
    cutoff: f64,
    tol: f64,
) -> Result<f64> {
    while (outside - inside).abs() > tol {
        let mid = 0.5 * (inside + outside);
        if profile(mid)? >= cutoff {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    Ok(inside)
}

fn interval_cs(
    kind: CsKind,
    level: f64,
    profile: &Profile<'_>,
    ctx: &QlrContext,
    zeta: f64,
    search: &IntervalSearch,
) -> Result<IntervalCS> {
    let f = |mu: f64| profile.value(mu);
    let (lo, hi, disconnected) =
        level_set_interval(&f, profile.bounds(), ctx.theta_hat[profile.coord], zeta, search)?;
    Ok(IntervalCS {
        kind,
        level,
        lo,
        hi,
        zeta: Some(zeta),
        xi: Some(ctx.xi_from_zeta(zeta)),
        disconnected,
    })
}

/// Procedure 2 from precomputed `PL_n(M(θ^b))` draws.
pub fn procedure2_from_draws(
    draws: &[f64],
    weights: &[f64],
    ctx: &QlrContext,
    profile: &Profile<'_>,
    level: f64,
    search: &IntervalSearch,
) -> Result<IntervalCS> {
    check_level(level)?;
    let zeta = weighted_quantile(draws, weights, 1.0 - level)?;
    interval_cs(CsKind::Procedure2, level, profile, ctx, zeta, search)
}

/// `{μ : sup_η L_n(μ, η) ≥ ζ^p}` with ζ^p the weighted `(1 − level)` quantile
/// of `PL_n(M(θ^b))`.
pub fn procedure2(
    cloud: &ParticleCloud,
    ctx: &QlrContext,
    model: &dyn Model,
    profile: &Profile<'_>,
    level: f64,
    search: &IntervalSearch,
) -> Result<IntervalCS> {
    let draws = profile_draws(model, profile, cloud)?;
    procedure2_from_draws(&draws, &cloud.weights, ctx, profile, level, search)
}

/// `{μ : inf_η Q_n(μ, η) ≤ χ²_{1,level}}`.
pub fn procedure3(ctx: &QlrContext, profile: &Profile<'_>, level: f64, search: &IntervalSearch) -> Result<IntervalCS> {
    check_level(level)?;
    let zeta = ctx.zeta_from_xi(chisq_quantile(1, level)?);
    interval_cs(CsKind::Procedure3, level, profile, ctx, zeta, search)
}

/// `{μ : (μ, η) ∈ Θ̂ for some η}`, i.e. the profile cut at Procedure 1's ζ.
pub fn projection_cs(full: &FullCS, ctx: &QlrContext, profile: &Profile<'_>, search: &IntervalSearch) -> Result<IntervalCS> {
    interval_cs(CsKind::Projection, full.level, profile, ctx, full.zeta, search)
}

/// Equal-tailed weighted percentiles of the coordinate draws.
pub fn percentile_cs(cloud: &ParticleCloud, coord: usize, level: f64) -> Result<IntervalCS> {
    check_level(level)?;
    if coord >= cloud.dim() {
        return Err(Error::Dimension { expected: cloud.dim(), got: coord + 1 });
    }
    let x = cloud.coordinate(coord);
    Ok(IntervalCS {
        kind: CsKind::Percentile,
        level,
        lo: weighted_quantile(&x, &cloud.weights, 0.5 * (1.0 - level))?,
        hi: weighted_quantile(&x, &cloud.weights, 0.5 * (1.0 + level))?,
        zeta: None,
        xi: None,
        disconnected: false,
    })
}

/// `l̂` for a dataset: the model's closed form when available, otherwise a
/// multistart search seeded from the best particles. Particle values are
/// absorbed so that no draw beats the reported maximum.
pub fn estimate(
    model: &dyn Model,
    data: &DataSet,
    criterion: &dyn Criterion,
    cloud: Option<&ParticleCloud>,
    seed: u64,
) -> Result<QlrContext> {
    let mut ctx = match model.closed_form_max(data) {
        Some(c) => c,
        None => {
            let mut starts = vec![model.truth(data.n())];
            if let Some(c) = cloud {
                starts.extend(c.top(8).into_iter().map(|i| c.thetas[i].clone()));
            }
            let mut rng = substream(seed, 0, 1);
            let s = rng.random::<u64>();
            crate::criterion::maximize_criterion(criterion, model.space(), &starts, &SearchOptions::default(), s)?
        }
    };
    if let Some(c) = cloud {
        for (t, v) in c.thetas.iter().zip(&c.log_crit) {
            ctx.absorb(t, v / ctx.n as f64);
        }
    }
    Ok(ctx)
}

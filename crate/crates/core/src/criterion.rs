//! Sample criteria `L_n(θ)`, the quasi-likelihood ratio and profile criteria.

use crate::error::{Error, Result};
use crate::optim::{nelder_mead_polished, NelderMeadOptions};
use crate::param::{ParamSpace, SubvectorMap};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Absolute tolerance below which a negative QLR is treated as optimization noise.
pub const QLR_CLAMP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionKind {
    LogLikelihood,
    OptimalGmm,
    CuGmm,
}

/// An average log-criterion `L_n(θ)` with its data already bound.
pub trait Criterion: Send + Sync {
    /// `L_n(θ)`; `-inf` off the feasible set.
    fn eval(&self, theta: &[f64]) -> f64;
    fn n(&self) -> usize;
    fn kind(&self) -> CriterionKind;
}

/// `L_n(θ̂)` together with the maximizer and the sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct QlrContext {
    pub l_hat: f64,
    pub theta_hat: Vec<f64>,
    pub n: usize,
}

impl QlrContext {
    pub fn new(l_hat: f64, theta_hat: Vec<f64>, n: usize) -> Self {
        Self { l_hat, theta_hat, n }
    }

    /// Replaces the maximizer when `value` beats it.
    pub fn absorb(&mut self, theta: &[f64], value: f64) {
        if value > self.l_hat {
            self.l_hat = value;
            self.theta_hat = theta.to_vec();
        }
    }

    /// `2n(l_hat - L)`, clamped at zero; `+inf` for infeasible values.
    pub fn qlr_of_value(&self, l: f64) -> f64 {
        if l.is_nan() || l == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        let q = 2.0 * self.n as f64 * (self.l_hat - l);
        if q < 0.0 {
            0.0
        } else {
            q
        }
    }

    /// QLR cutoff equivalent to the criterion cutoff `zeta`.
    pub fn xi_from_zeta(&self, zeta: f64) -> f64 {
        2.0 * self.n as f64 * (self.l_hat - zeta)
    }

    pub fn zeta_from_xi(&self, xi: f64) -> f64 {
        self.l_hat - xi / (2.0 * self.n as f64)
    }
}

/// `Q_n(θ) = 2n[L_n(θ̂) − L_n(θ)]`.
pub fn qlr(ctx: &QlrContext, criterion: &dyn Criterion, theta: &[f64]) -> f64 {
    ctx.qlr_of_value(criterion.eval(theta))
}

#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    /// Uniform feasible draws added to the caller's starts.
    pub uniform_starts: usize,
    pub nelder_mead: NelderMeadOptions,
    pub restarts: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            uniform_starts: 8,
            nelder_mead: NelderMeadOptions::default(),
            restarts: 2,
        }
    }
}

// Pulls a point strictly inside the box so that the logit map is defined.
fn interior(space: &ParamSpace, theta: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter()
        .map(|&i| {
            let (l, u) = (space.lower()[i], space.upper()[i]);
            let eps = 1e-9 * (u - l);
            theta[i].clamp(l + eps, u - eps)
        })
        .collect()
}

fn logit(v: f64, l: f64, u: f64) -> f64 {
    ((v - l) / (u - v)).ln()
}

fn inv_logit(x: f64, l: f64, u: f64) -> f64 {
    if x >= 0.0 {
        u - (u - l) / (1.0 + x.exp())
    } else {
        l + (u - l) / (1.0 + (-x).exp())
    }
}

/// Maximizes `criterion` over the coordinates `free`, holding the rest of
/// `base` fixed. Works in logit coordinates of the box; the final point is
/// snapped to a bound whenever that does not lower the criterion.
fn local_max(
    criterion: &dyn Criterion,
    space: &ParamSpace,
    free: &[usize],
    base: &[f64],
    start: &[f64],
    opts: &SearchOptions,
) -> (f64, Vec<f64>) {
    let lo: Vec<f64> = free.iter().map(|&i| space.lower()[i]).collect();
    let hi: Vec<f64> = free.iter().map(|&i| space.upper()[i]).collect();
    let assemble = |x: &[f64], out: &mut Vec<f64>| {
        out.clear();
        out.extend_from_slice(base);
        for (k, &i) in free.iter().enumerate() {
            out[i] = inv_logit(x[k], lo[k], hi[k]);
        }
    };
    let u0: Vec<f64> = start
        .iter()
        .enumerate()
        .map(|(k, &v)| logit(v, lo[k], hi[k]))
        .collect();
    let objective = |x: &[f64]| {
        let mut th = Vec::with_capacity(base.len());
        assemble(x, &mut th);
        if !space.contains(&th) {
            return f64::INFINITY;
        }
        -criterion.eval(&th)
    };
    let m = nelder_mead_polished(objective, &u0, &opts.nelder_mead, opts.restarts);
    let mut best = Vec::with_capacity(base.len());
    assemble(&m.x, &mut best);
    let mut value = if space.contains(&best) {
        criterion.eval(&best)
    } else {
        f64::NEG_INFINITY
    };
    for (k, &i) in free.iter().enumerate() {
        let tol = 1e-4 * (hi[k] - lo[k]);
        for b in [lo[k], hi[k]] {
            if (best[i] - b).abs() < tol {
                let mut cand = best.clone();
                cand[i] = b;
                if space.contains(&cand) {
                    let v = criterion.eval(&cand);
                    if v >= value {
                        value = v;
                        best = cand;
                    }
                }
            }
        }
    }
    (value, best)
}

/// Multistart maximization of `L_n` over Θ from the supplied starts plus
/// `opts.uniform_starts` uniform feasible draws.
pub fn maximize_criterion(
    criterion: &dyn Criterion,
    space: &ParamSpace,
    starts: &[Vec<f64>],
    opts: &SearchOptions,
    seed: u64,
) -> Result<QlrContext> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all: Vec<Vec<f64>> = starts.to_vec();
    for _ in 0..opts.uniform_starts {
        all.push(space.sample_uniform(&mut rng)?);
    }
    let free: Vec<usize> = (0..space.dim()).collect();
    let mut ctx: Option<QlrContext> = None;
    for s in &all {
        space.check_dim(s)?;
        let v0 = if space.contains(s) {
            criterion.eval(s)
        } else {
            f64::NEG_INFINITY
        };
        if !v0.is_finite() {
            continue;
        }
        let start = interior(space, s, &free);
        let (v, th) = local_max(criterion, space, &free, s, &start, opts);
        let c = ctx.get_or_insert_with(|| QlrContext::new(v0, s.clone(), criterion.n()));
        c.absorb(s, v0);
        if v.is_finite() {
            c.absorb(&th, v);
        }
    }
    ctx.ok_or_else(|| Error::Optimization("every start is infeasible".into()))
}

/// Result of an inner `sup_η` search.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfilePoint {
    pub value: f64,
    pub theta: Vec<f64>,
}

/// `sup_{η ∈ H_μ} L_n(μ, η)` by multistart Nelder–Mead over the nuisance
/// coordinates. `starts` are full parameter vectors whose nuisance parts seed
/// the search.
pub fn profile_criterion(
    criterion: &dyn Criterion,
    space: &ParamSpace,
    sub: &SubvectorMap,
    mu: &[f64],
    starts: &[Vec<f64>],
    opts: &SearchOptions,
    seed: u64,
) -> Result<ProfilePoint> {
    let idx = sub.indices();
    if mu.len() != idx.len() {
        return Err(Error::Dimension {
            expected: idx.len(),
            got: mu.len(),
        });
    }
    for (k, &i) in idx.iter().enumerate() {
        if !(mu[k] >= space.lower()[i] && mu[k] <= space.upper()[i]) {
            return Err(Error::Domain {
                what: "profile_criterion subvector value",
                value: mu[k],
            });
        }
    }
    let free = sub.complement(space.dim());
    let with_mu = |t: &[f64]| {
        let mut th = t.to_vec();
        for (k, &i) in idx.iter().enumerate() {
            th[i] = mu[k];
        }
        th
    };
    if free.is_empty() {
        let th = with_mu(&vec![0.0; space.dim()]);
        let v = if space.contains(&th) {
            criterion.eval(&th)
        } else {
            f64::NEG_INFINITY
        };
        if v == f64::NEG_INFINITY {
            return Err(Error::InfeasibleSlice(mu.to_vec()));
        }
        return Ok(ProfilePoint { value: v, theta: th });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cands: Vec<Vec<f64>> = starts.iter().map(|s| with_mu(s)).collect();
    let mut tries = 0;
    let mut added = 0;
    while added < opts.uniform_starts && tries < 200 * opts.uniform_starts.max(1) {
        tries += 1;
        let mut th = space.lower().to_vec();
        for &i in &free {
            th[i] = rand::Rng::random_range(&mut rng, space.lower()[i]..space.upper()[i]);
        }
        let th = with_mu(&th);
        if space.contains(&th) && criterion.eval(&th) > f64::NEG_INFINITY {
            cands.push(th);
            added += 1;
        }
    }

    let mut best: Option<ProfilePoint> = None;
    for c in &cands {
        if c.len() != space.dim() || !space.contains(c) {
            continue;
        }
        let v0 = criterion.eval(c);
        if v0 == f64::NEG_INFINITY {
            continue;
        }
        let start = interior(space, c, &free);
        let (v, th) = local_max(criterion, space, &free, c, &start, opts);
        for (val, t) in [(v0, c.clone()), (v, th)] {
            if best.as_ref().is_none_or(|b| val > b.value) {
                best = Some(ProfilePoint { value: val, theta: t });
            }
        }
    }
    best.ok_or_else(|| Error::InfeasibleSlice(mu.to_vec()))
}

/// Moore–Penrose inverse of a symmetric matrix, dropping eigenvalues below
/// `rel_cutoff` times the largest one.
pub fn generalized_inverse(m: &DMatrix<f64>, rel_cutoff: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let lmax = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let d = m.nrows();
    let mut out = DMatrix::zeros(d, d);
    if lmax <= 0.0 {
        return out;
    }
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l.abs() > rel_cutoff * lmax {
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) / l;
        }
    }
    out
}

pub const GINV_CUTOFF: f64 = 1e-10;

type Moments<O> = dyn Fn(&[f64], &O) -> Vec<f64> + Send + Sync;

// Frequency-weighted observations shared by the GMM criteria.
struct MomentData<O> {
    obs: Vec<O>,
    counts: Vec<f64>,
    n: usize,
    dim: usize,
    moments: Box<Moments<O>>,
}

impl<O> MomentData<O> {
    fn new(
        moments: Box<Moments<O>>,
        obs: Vec<O>,
        counts: Vec<usize>,
        dim: usize,
        probe: &[f64],
    ) -> Result<Self> {
        if obs.is_empty() {
            return Err(Error::Empty("GMM data"));
        }
        if obs.len() != counts.len() {
            return Err(Error::Dimension {
                expected: obs.len(),
                got: counts.len(),
            });
        }
        for o in &obs {
            let got = moments(probe, o).len();
            if got != dim {
                return Err(Error::Shape { expected: dim, got });
            }
        }
        let n = counts.iter().sum();
        if n == 0 {
            return Err(Error::Empty("GMM data (all counts zero)"));
        }
        Ok(Self {
            obs,
            counts: counts.into_iter().map(|c| c as f64).collect(),
            n,
            dim,
            moments,
        })
    }

    fn mean_and_cov(&self, theta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let nf = self.n as f64;
        let gs: Vec<DVector<f64>> = self
            .obs
            .iter()
            .map(|o| {
                let g = (self.moments)(theta, o);
                if g.len() != self.dim {
                    return Err(Error::Shape {
                        expected: self.dim,
                        got: g.len(),
                    });
                }
                Ok(DVector::from_vec(g))
            })
            .collect::<Result<_>>()?;
        let mut rho = DVector::zeros(self.dim);
        for (g, c) in gs.iter().zip(&self.counts) {
            rho += g * (*c / nf);
        }
        let mut omega = DMatrix::zeros(self.dim, self.dim);
        for (g, c) in gs.iter().zip(&self.counts) {
            let e = g - &rho;
            omega += (&e * e.transpose()) * (*c / nf);
        }
        Ok((rho, omega))
    }
}

/// Continuously-updated GMM: `L_n(θ) = −½ ρ_n(θ)' W_n(θ) ρ_n(θ)` with `W_n(θ)`
/// the generalized inverse of the centered moment covariance at θ.
pub struct CuGmm<O> {
    data: MomentData<O>,
    feasible: Box<dyn Fn(&[f64]) -> bool + Send + Sync>,
}

impl<O: Send + Sync> CuGmm<O> {
    /// `moments(θ, obs)` must return `moment_dim` values; this is checked at
    /// `probe` for every observation.
    pub fn new(
        moments: impl Fn(&[f64], &O) -> Vec<f64> + Send + Sync + 'static,
        obs: Vec<O>,
        moment_dim: usize,
        probe: &[f64],
    ) -> Result<Self> {
        let counts = vec![1; obs.len()];
        Self::with_counts(moments, obs, counts, moment_dim, probe)
    }

    /// Like [`CuGmm::new`] with `counts[i]` copies of `obs[i]`.
    pub fn with_counts(
        moments: impl Fn(&[f64], &O) -> Vec<f64> + Send + Sync + 'static,
        obs: Vec<O>,
        counts: Vec<usize>,
        moment_dim: usize,
        probe: &[f64],
    ) -> Result<Self> {
        Ok(Self {
            data: MomentData::new(Box::new(moments), obs, counts, moment_dim, probe)?,
            feasible: Box::new(|_| true),
        })
    }

    /// Marks θ outside `feasible` as `-inf`.
    pub fn restricted_to(mut self, feasible: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        self.feasible = Box::new(feasible);
        self
    }

    pub fn try_eval(&self, theta: &[f64]) -> Result<f64> {
        if !(self.feasible)(theta) {
            return Ok(f64::NEG_INFINITY);
        }
        let (rho, omega) = self.data.mean_and_cov(theta)?;
        let w = generalized_inverse(&omega, GINV_CUTOFF);
        Ok(-0.5 * (rho.transpose() * w * &rho)[(0, 0)])
    }
}

impl<O: Send + Sync> Criterion for CuGmm<O> {
    fn eval(&self, theta: &[f64]) -> f64 {
        self.try_eval(theta).unwrap_or(f64::NAN)
    }
    fn n(&self) -> usize {
        self.data.n
    }
    fn kind(&self) -> CriterionKind {
        CriterionKind::CuGmm
    }
}

/// Optimally-weighted GMM with a weighting matrix fixed in advance.
pub struct OptimalGmm<O> {
    data: MomentData<O>,
    weight: DMatrix<f64>,
}

impl<O: Send + Sync> OptimalGmm<O> {
    pub fn with_weight(
        moments: impl Fn(&[f64], &O) -> Vec<f64> + Send + Sync + 'static,
        obs: Vec<O>,
        counts: Vec<usize>,
        weight: DMatrix<f64>,
        probe: &[f64],
    ) -> Result<Self> {
        let dim = weight.nrows();
        if weight.ncols() != dim {
            return Err(Error::Shape {
                expected: dim,
                got: weight.ncols(),
            });
        }
        Ok(Self {
            data: MomentData::new(Box::new(moments), obs, counts, dim, probe)?,
            weight,
        })
    }

    /// Two-step weighting: the generalized inverse of the moment covariance
    /// at a preliminary estimate `first_step`.
    pub fn two_step(
        moments: impl Fn(&[f64], &O) -> Vec<f64> + Send + Sync + 'static,
        obs: Vec<O>,
        counts: Vec<usize>,
        moment_dim: usize,
        first_step: &[f64],
    ) -> Result<Self> {
        let data = MomentData::new(Box::new(moments), obs, counts, moment_dim, first_step)?;
        let (_, omega) = data.mean_and_cov(first_step)?;
        let weight = generalized_inverse(&omega, GINV_CUTOFF);
        Ok(Self { data, weight })
    }

    pub fn weight(&self) -> &DMatrix<f64> {
        &self.weight
    }
}

impl<O: Send + Sync> Criterion for OptimalGmm<O> {
    fn eval(&self, theta: &[f64]) -> f64 {
        match self.data.mean_and_cov(theta) {
            Ok((rho, _)) => -0.5 * (rho.transpose() * &self.weight * &rho)[(0, 0)],
            Err(_) => f64::NAN,
        }
    }
    fn n(&self) -> usize {
        self.data.n
    }
    fn kind(&self) -> CriterionKind {
        CriterionKind::OptimalGmm
    }
}

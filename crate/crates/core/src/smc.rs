//! Adaptive tempered Sequential Monte Carlo over the quasi-posterior
//! `exp(n L_n(θ)) π(θ)`.
//!
//! Each stage reweights (correction), resamples when the effective sample
//! size drops (selection), then moves every particle with `K` random-walk
//! Metropolis–Hastings sweeps in the logit coordinates of the box (mutation).

use crate::criterion::Criterion;
use crate::error::{Error, Result};
use crate::param::{ParamSpace, Prior};
use crate::stats;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmcConfig {
    /// B
    pub particles: usize,
    /// J
    pub stages: usize,
    /// K
    pub mh_steps: usize,
    pub lambda: f64,
    pub blocks: usize,
    pub target_accept: f64,
    pub ess_threshold_frac: f64,
    pub seed: u64,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self {
            particles: 10_000,
            stages: 200,
            mh_steps: 1,
            lambda: 2.0,
            blocks: 1,
            target_accept: 0.35,
            ess_threshold_frac: 0.5,
            seed: 0,
        }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.particles < 2 {
            return bad("particles (B) must be at least 2");
        }
        if self.stages < 2 {
            return bad("stages (J) must be at least 2");
        }
        if self.mh_steps < 1 {
            return bad("mh_steps (K) must be at least 1");
        }
        if self.blocks < 1 {
            return bad("blocks must be at least 1");
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be positive");
        }
        if !(self.ess_threshold_frac > 0.0 && self.ess_threshold_frac < 1.0) {
            return bad("ess_threshold_frac must lie in (0, 1)");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        Ok(())
    }
}

/// The particle approximation at one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    pub thetas: Vec<Vec<f64>>,
    /// Logit coordinates of `thetas`; the sampler moves these.
    pub unconstrained: Vec<Vec<f64>>,
    /// Mean-one normalized.
    pub weights: Vec<f64>,
    /// `n L_n(θ^b)`
    pub log_crit: Vec<f64>,
    pub stage: usize,
    pub sigma: f64,
    pub accept_rate: f64,
}

impl ParticleCloud {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.thetas.first().map_or(0, Vec::len)
    }

    /// One coordinate across particles.
    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.thetas.iter().map(|t| t[i]).collect()
    }

    /// Indices of the `k` particles with the largest criterion.
    pub fn top(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.log_crit[b].total_cmp(&self.log_crit[a]));
        idx.truncate(k);
        idx
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StageDiagnostics {
    pub stage: usize,
    pub phi: f64,
    pub ess: f64,
    pub sigma: f64,
    pub accept_rate: f64,
    #[serde(rename = "logZ_increment")]
    pub log_z_increment: f64,
}

#[derive(Debug, Clone)]
pub struct SmcOutput {
    pub cloud: ParticleCloud,
    pub diagnostics: Vec<StageDiagnostics>,
}

/// `φ_j = ((j−1)/(J−1))^λ` for `j = 1..J`.
pub fn tempering_schedule(stages: usize, lambda: f64) -> Result<Vec<f64>> {
    if stages < 2 {
        return Err(Error::Config("stages (J) must be at least 2".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::Config("lambda must be positive".into()));
    }
    let last = (stages - 1) as f64;
    Ok((0..stages)
        .map(|j| {
            if j + 1 == stages {
                1.0
            } else {
                (j as f64 / last).powf(lambda)
            }
        })
        .collect())
}

/// Reweights by `exp((φ_next − φ_prev) n L_n)` in log space and renormalizes
/// to mean one. Returns the log of the mean incremental weight.
pub fn correction_step(cloud: &mut ParticleCloud, phi_prev: f64, phi_next: f64) -> Result<f64> {
    if !(phi_next > phi_prev) {
        return Err(Error::Config(format!(
            "tempering must increase: {phi_prev} -> {phi_next}"
        )));
    }
    let dphi = phi_next - phi_prev;
    let logs: Vec<f64> = cloud
        .weights
        .iter()
        .zip(&cloud.log_crit)
        .map(|(w, l)| {
            if *w <= 0.0 || *l == f64::NEG_INFINITY || l.is_nan() {
                f64::NEG_INFINITY
            } else {
                w.ln() + dphi * l
            }
        })
        .collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(Error::Degeneracy { stage: cloud.stage + 1 });
    }
    let b = logs.len() as f64;
    let mut w: Vec<f64> = logs.iter().map(|x| (x - m).exp()).collect();
    let mean = w.iter().sum::<f64>() / b;
    w.iter_mut().for_each(|x| *x /= mean);
    cloud.weights = w;
    // previous weights have mean one, so this is log mean(w_prev · v)
    Ok(m + mean.ln())
}

/// `B / mean(w²)` for mean-one weights.
pub fn ess(weights: &[f64]) -> f64 {
    let sum: f64 = weights.iter().sum();
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    sum * sum / sq
}

/// Multinomial resampling; all weights reset to one.
pub fn selection_step(cloud: &mut ParticleCloud, rng: &mut impl Rng) {
    let b = cloud.len();
    let total: f64 = cloud.weights.iter().sum();
    let mut cum = Vec::with_capacity(b);
    let mut acc = 0.0;
    for w in &cloud.weights {
        acc += w / total;
        cum.push(acc);
    }
    let last_pos = cloud.weights.iter().rposition(|w| *w > 0.0).unwrap_or(b - 1);
    let picks: Vec<usize> = (0..b)
        .map(|_| {
            let u: f64 = rng.random();
            cum.partition_point(|c| *c <= u).min(last_pos)
        })
        .collect();
    cloud.thetas = picks.iter().map(|&i| cloud.thetas[i].clone()).collect();
    cloud.unconstrained = picks.iter().map(|&i| cloud.unconstrained[i].clone()).collect();
    cloud.log_crit = picks.iter().map(|&i| cloud.log_crit[i]).collect();
    cloud.weights = vec![1.0; b];
}

/// `σ_j = σ_{j−1}(0.95 + 0.10·logistic(16(A_{j−1} − target)))`.
pub fn adapt_scale(sigma_prev: f64, accept_prev: f64, target: f64) -> f64 {
    let x = 16.0 * (accept_prev - target);
    sigma_prev * (0.95 + 0.10 / (1.0 + (-x).exp()))
}

/// Deterministic substream for `(seed, stage, index)`.
pub fn substream(seed: u64, stage: u64, index: u64) -> ChaCha8Rng {
    let mut z = splitmix(seed ^ splitmix(stage.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    z = splitmix(z ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    ChaCha8Rng::seed_from_u64(z)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Weighted mean and covariance of the unconstrained coordinates with a
/// `1e−8·trace/d` ridge.
pub fn particle_covariance(cloud: &ParticleCloud) -> DMatrix<f64> {
    let d = cloud.dim();
    let total: f64 = cloud.weights.iter().sum();
    let mut mean: DVector<f64> = DVector::zeros(d);
    for (u, w) in cloud.unconstrained.iter().zip(&cloud.weights) {
        for k in 0..d {
            mean[k] += w * u[k] / total;
        }
    }
    let mut cov: DMatrix<f64> = DMatrix::zeros(d, d);
    for (u, w) in cloud.unconstrained.iter().zip(&cloud.weights) {
        if *w == 0.0 {
            continue;
        }
        for i in 0..d {
            let ei = u[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] += w * ei * (u[j] - mean[j]) / total;
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            cov[(j, i)] = cov[(i, j)];
        }
    }
    let ridge = 1e-8 * cov.trace().max(1e-300) / d as f64;
    for i in 0..d {
        cov[(i, i)] += ridge;
    }
    cov
}

/// What the mutation kernel targets: `φ·n L_n(θ) + log π(θ)`.
pub struct Target<'a> {
    pub criterion: &'a dyn Criterion,
    pub prior: &'a Prior,
    pub space: &'a ParamSpace,
}

impl Target<'_> {
    /// `(n L_n(θ), log π(θ))` at unconstrained `u`.
    fn evaluate(&self, u: &[f64], theta: &mut [f64]) -> (f64, f64) {
        self.space.from_unconstrained_into(u, theta);
        let lp = self.prior.log_density(self.space, theta);
        if lp == f64::NEG_INFINITY {
            return (f64::NEG_INFINITY, lp);
        }
        let l = self.criterion.eval(theta);
        let nl = if l.is_nan() {
            f64::NEG_INFINITY
        } else {
            self.criterion.n() as f64 * l
        };
        (nl, lp)
    }
}

fn tempered(phi: f64, nl: f64, lp: f64, lj: f64) -> f64 {
    if nl == f64::NEG_INFINITY || lp == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        phi * nl + lp + lj
    }
}

// Block structure and proposal Cholesky factors for one stage.
struct Proposal {
    blocks: Vec<Vec<usize>>,
    chol: Vec<DMatrix<f64>>,
}

impl Proposal {
    fn new(cov: &DMatrix<f64>, sigma: f64, n_blocks: usize, rng: &mut impl Rng) -> Self {
        let d = cov.nrows();
        let blocks: Vec<Vec<usize>> = if n_blocks <= 1 {
            vec![(0..d).collect()]
        } else {
            let assign: Vec<usize> = (0..d).map(|_| rng.random_range(0..n_blocks)).collect();
            (0..n_blocks)
                .map(|l| (0..d).filter(|&i| assign[i] == l).collect::<Vec<_>>())
                .filter(|b| !b.is_empty())
                .collect()
        };
        let chol = blocks
            .iter()
            .map(|b| {
                let m = DMatrix::from_fn(b.len(), b.len(), |i, j| sigma * sigma * cov[(b[i], b[j])]);
                match m.clone().cholesky() {
                    Some(c) => c.l(),
                    None => DMatrix::from_diagonal(&m.diagonal().map(|v| v.max(1e-300).sqrt())),
                }
            })
            .collect();
        Self { blocks, chol }
    }
}

/// Runs `K` blocked random-walk MH sweeps on every particle at temperature `φ`.
/// Returns the acceptance rate pooled over all proposals.
#[allow(clippy::too_many_arguments)]
pub fn mutation_step(
    cloud: &mut ParticleCloud,
    phi: f64,
    mh_steps: usize,
    blocks: usize,
    sigma: f64,
    cov: &DMatrix<f64>,
    target: &Target<'_>,
    seed: u64,
) -> f64 {
    let stage = cloud.stage as u64;
    let mut block_rng = substream(seed, stage, u64::MAX);
    let prop = Proposal::new(cov, sigma, blocks, &mut block_rng);
    let d = cloud.dim();
    let results: Vec<(Vec<f64>, Vec<f64>, f64, usize, usize)> = cloud
        .unconstrained
        .par_iter()
        .zip(cloud.log_crit.par_iter())
        .enumerate()
        .map(|(b, (u0, nl0))| {
            let mut rng = substream(seed, stage, b as u64);
            let mut u = u0.clone();
            let mut theta = vec![0.0; d];
            let mut nl = *nl0;
            target.space.from_unconstrained_into(&u, &mut theta);
            let lp = target.prior.log_density(target.space, &theta);
            let mut cur = tempered(phi, nl, lp, target.space.log_jacobian(&u));
            let mut cand = u.clone();
            let mut cand_theta = vec![0.0; d];
            let (mut acc, mut tot) = (0, 0);
            for _ in 0..mh_steps {
                for (blk, l) in prop.blocks.iter().zip(&prop.chol) {
                    cand.copy_from_slice(&u);
                    let z: Vec<f64> = (0..blk.len()).map(|_| rng.sample(StandardNormal)).collect();
                    for (r, &i) in blk.iter().enumerate() {
                        let mut step = 0.0;
                        for (c, zc) in z.iter().enumerate().take(r + 1) {
                            step += l[(r, c)] * zc;
                        }
                        cand[i] += step;
                    }
                    let (cnl, clp) = target.evaluate(&cand, &mut cand_theta);
                    let next = tempered(phi, cnl, clp, target.space.log_jacobian(&cand));
                    tot += 1;
                    let log_u: f64 = rng.random::<f64>().ln();
                    let accept = next > f64::NEG_INFINITY
                        && (cur == f64::NEG_INFINITY || log_u < next - cur);
                    if accept {
                        u.copy_from_slice(&cand);
                        theta.copy_from_slice(&cand_theta);
                        nl = cnl;
                        cur = next;
                        acc += 1;
                    }
                }
            }
            (u, theta, nl, acc, tot)
        })
        .collect();
    let (mut acc, mut tot) = (0usize, 0usize);
    for (b, (u, th, nl, a, t)) in results.into_iter().enumerate() {
        cloud.unconstrained[b] = u;
        cloud.thetas[b] = th;
        cloud.log_crit[b] = nl;
        acc += a;
        tot += t;
    }
    let rate = if tot == 0 { 0.0 } else { acc as f64 / tot as f64 };
    cloud.accept_rate = rate;
    rate
}

/// Draws the initial cloud from the prior.
pub fn initial_cloud(target: &Target<'_>, particles: usize, seed: u64) -> Result<ParticleCloud> {
    let draws: Vec<Result<(Vec<f64>, Vec<f64>, f64)>> = (0..particles)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, 0, b as u64);
            for _ in 0..10_000 {
                let th = target.prior.sample(target.space, &mut rng)?;
                if let Ok(u) = target.space.to_unconstrained(&th) {
                    let th = target.space.from_unconstrained(&u);
                    if target.prior.log_density(target.space, &th) == f64::NEG_INFINITY {
                        continue;
                    }
                    let l = target.criterion.eval(&th);
                    let nl = if l.is_nan() {
                        f64::NEG_INFINITY
                    } else {
                        target.criterion.n() as f64 * l
                    };
                    return Ok((th, u, nl));
                }
            }
            Err(Error::Config("prior keeps drawing points on the boundary".into()))
        })
        .collect();
    let mut cloud = ParticleCloud {
        thetas: Vec::with_capacity(particles),
        unconstrained: Vec::with_capacity(particles),
        weights: vec![1.0; particles],
        log_crit: Vec::with_capacity(particles),
        stage: 1,
        sigma: 1.0,
        accept_rate: 0.0,
    };
    for d in draws {
        let (th, u, nl) = d?;
        cloud.thetas.push(th);
        cloud.unconstrained.push(u);
        cloud.log_crit.push(nl);
    }
    Ok(cloud)
}

/// Full correction → selection → mutation loop over `j = 2..J`.
pub fn run_smc(target: &Target<'_>, cfg: &SmcConfig) -> Result<SmcOutput> {
    cfg.validate()?;
    target.space.check_dim(&vec![0.0; target.space.dim()])?;
    let phis = tempering_schedule(cfg.stages, cfg.lambda)?;
    let mut cloud = initial_cloud(target, cfg.particles, cfg.seed)?;
    let mut diagnostics = Vec::with_capacity(cfg.stages - 1);
    let mut sigma = 1.0;
    let mut last_accept = cfg.target_accept;
    for j in 1..cfg.stages {
        let log_z = correction_step(&mut cloud, phis[j - 1], phis[j])?;
        cloud.stage = j + 1;
        let e = ess(&cloud.weights);
        if e <= cfg.ess_threshold_frac * cfg.particles as f64 {
            let mut rng = substream(cfg.seed, cloud.stage as u64, u64::MAX - 1);
            selection_step(&mut cloud, &mut rng);
        }
        if j > 1 {
            sigma = adapt_scale(sigma, last_accept, cfg.target_accept);
        }
        let cov = particle_covariance(&cloud);
        last_accept = mutation_step(
            &mut cloud,
            phis[j],
            cfg.mh_steps,
            cfg.blocks,
            sigma,
            &cov,
            target,
            cfg.seed,
        );
        cloud.sigma = sigma;
        diagnostics.push(StageDiagnostics {
            stage: cloud.stage,
            phi: phis[j],
            ess: e,
            sigma,
            accept_rate: last_accept,
            log_z_increment: log_z,
        });
    }
    Ok(SmcOutput { cloud, diagnostics })
}

/// Weighted `alpha`-quantile of `values` under particle weights.
pub fn weighted_quantile(values: &[f64], weights: &[f64], alpha: f64) -> Result<f64> {
    stats::weighted_quantile(values, weights, alpha)
}

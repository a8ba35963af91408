//! Missing-data model. `θ = (μ, η1, η2)` with `μ = P(Y = 1)`,
//! `η1 = P(Y = 1 | D = 0)` and `η2 = P(D = 1)`; only `(D, Y·D)` is observed.

use super::{linspace, multinomial_avg_loglik, DataSet, Model, TrueSets};
use crate::criterion::{Criterion, CriterionKind, CuGmm, QlrContext};
use crate::error::{Error, Result};
use crate::param::{ParamSpace, Prior};
use crate::smc::SmcConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FEAS_TOL: f64 = 1e-12;

/// `(γ̃11, γ̃00) = (μ − η1(1−η2), 1 − η2)`.
pub fn md_reduced_form(theta: &[f64]) -> Result<(f64, f64)> {
    if theta.len() != 3 {
        return Err(Error::Dimension { expected: 3, got: theta.len() });
    }
    if !md_feasible(theta) {
        return Err(Error::Domain {
            what: "missing-data parameter (0 ≤ μ − η1(1−η2) ≤ η2)",
            value: theta[0],
        });
    }
    Ok(reduced_form_unchecked(theta))
}

fn reduced_form_unchecked(theta: &[f64]) -> (f64, f64) {
    let (mu, eta1, eta2) = (theta[0], theta[1], theta[2]);
    (mu - eta1 * (1.0 - eta2), 1.0 - eta2)
}

pub fn md_feasible(theta: &[f64]) -> bool {
    if theta.iter().any(|t| !(*t >= 0.0 && *t <= 1.0)) {
        return false;
    }
    let (g11, g00) = reduced_form_unchecked(theta);
    g11 >= -FEAS_TOL && g11 <= 1.0 - g00 + FEAS_TOL
}

pub fn md_space() -> ParamSpace {
    ParamSpace::new(vec![0.0; 3], vec![1.0; 3])
        .expect("unit cube")
        .with_constraint(md_feasible)
}

/// `M_I = [γ̃11, γ̃11 + γ̃00]`.
pub fn md_identified_interval(g11: f64, g00: f64) -> (f64, f64) {
    (g11, g11 + g00)
}

/// Whether θ has the given reduced form (the identified-set predicate).
pub fn md_in_identified_set(theta: &[f64], g11: f64, g00: f64, tol: f64) -> bool {
    md_feasible(theta) && {
        let (a, b) = reduced_form_unchecked(theta);
        (a - g11).abs() <= tol && (b - g00).abs() <= tol
    }
}

/// `(1{d=0} − γ̃00(θ), 1{(d, yd) = (1, 1)} − γ̃11(θ))`.
pub fn md_gmm_moments(theta: &[f64], obs: &(u8, u8)) -> [f64; 2] {
    let (g11, g00) = reduced_form_unchecked(theta);
    let d0 = if obs.0 == 0 { 1.0 } else { 0.0 };
    let c11 = if *obs == (1, 1) { 1.0 } else { 0.0 };
    [d0 - g00, c11 - g11]
}

/// Cell frequencies `(p11, p10, p00)`.
pub fn md_frequencies(rows: &[(u8, u8)]) -> Result<[f64; 3]> {
    let c = md_counts(rows)?;
    let n = rows.len() as f64;
    Ok([c[0] as f64 / n, c[1] as f64 / n, c[2] as f64 / n])
}

/// Cell counts `(n11, n10, n00)`.
pub fn md_counts(rows: &[(u8, u8)]) -> Result<[usize; 3]> {
    if rows.is_empty() {
        return Err(Error::Empty("missing-data sample"));
    }
    let mut c = [0usize; 3];
    for r in rows {
        match r {
            (1, 1) => c[0] += 1,
            (1, 0) => c[1] += 1,
            (0, 0) => c[2] += 1,
            _ => return Err(Error::Config(format!("invalid missing-data record {r:?}"))),
        }
    }
    Ok(c)
}

/// Average log-likelihood at θ given cell frequencies.
pub fn md_loglik(theta: &[f64], freq: &[f64; 3]) -> f64 {
    if !md_feasible(theta) {
        return f64::NEG_INFINITY;
    }
    let (g11, g00) = reduced_form_unchecked(theta);
    let g10 = (1.0 - g11 - g00).max(0.0);
    multinomial_avg_loglik(freq, &[g11.max(0.0), g10, g00])
}

/// `sup_η L_n(μ, η)` in closed form.
///
/// The reduced forms reachable with a given `μ` are exactly those with
/// `γ̃11 ≤ μ ≤ γ̃11 + γ̃00`, so the profile is the multinomial maximum under
/// that constraint.
pub fn md_profile(freq: &[f64; 3], mu: f64) -> f64 {
    let [p11, p10, p00] = *freq;
    if mu >= p11 && mu <= p11 + p00 {
        return multinomial_avg_loglik(freq, &[p11, p10, p00]);
    }
    let (g11, g00) = if mu < p11 {
        let rest = p00 + p10;
        let g00 = if rest > 0.0 { (1.0 - mu) * p00 / rest } else { 0.0 };
        (mu, g00)
    } else {
        let s = p11 + p00;
        if s > 0.0 {
            (mu * p11 / s, mu * p00 / s)
        } else {
            (0.0, 0.0)
        }
    };
    multinomial_avg_loglik(freq, &[g11, (1.0 - g11 - g00).max(0.0), g00])
}

pub struct MdLikelihood {
    freq: [f64; 3],
    n: usize,
}

impl MdLikelihood {
    pub fn new(rows: &[(u8, u8)]) -> Result<Self> {
        Ok(Self {
            freq: md_frequencies(rows)?,
            n: rows.len(),
        })
    }

    pub fn frequencies(&self) -> &[f64; 3] {
        &self.freq
    }
}

impl Criterion for MdLikelihood {
    fn eval(&self, theta: &[f64]) -> f64 {
        md_loglik(theta, &self.freq)
    }
    fn n(&self) -> usize {
        self.n
    }
    fn kind(&self) -> CriterionKind {
        CriterionKind::LogLikelihood
    }
}

/// CU-GMM criterion on the two missing-data moments.
pub fn md_cu_gmm(rows: &[(u8, u8)]) -> Result<CuGmm<(u8, u8)>> {
    let c = md_counts(rows)?;
    let cells = [(1u8, 1u8), (1, 0), (0, 0)];
    let (obs, counts): (Vec<_>, Vec<_>) = cells.into_iter().zip(c).filter(|(_, k)| *k > 0).unzip();
    Ok(CuGmm::with_counts(
        |t: &[f64], o: &(u8, u8)| md_gmm_moments(t, o).to_vec(),
        obs,
        counts,
        2,
        &[0.5, 0.5, 0.5],
    )?
    .restricted_to(md_feasible))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MdCriterion {
    Likelihood,
    CuGmm,
}

/// How the true `η2` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eta2 {
    Fixed(f64),
    /// `η2 = 1 − c/√n`
    Drift(f64),
}

pub struct MissingData {
    criterion: MdCriterion,
    prior: Prior,
    space: ParamSpace,
    pub mu: f64,
    pub eta1: f64,
    pub eta2: Eta2,
}

impl MissingData {
    pub fn new(criterion: MdCriterion, prior: Prior, eta2: Eta2) -> Result<Self> {
        let ok = match eta2 {
            Eta2::Fixed(e) => (0.0..=1.0).contains(&e),
            Eta2::Drift(c) => c >= 0.0 && c.is_finite(),
        };
        if !ok {
            return Err(Error::Config(format!("invalid eta2 setting {eta2:?}")));
        }
        Ok(Self {
            criterion,
            prior,
            space: md_space(),
            mu: 0.5,
            eta1: 0.5,
            eta2,
        })
    }

    pub fn eta2_at(&self, n: usize) -> f64 {
        match self.eta2 {
            Eta2::Fixed(e) => e,
            Eta2::Drift(c) => (1.0 - c / (n as f64).sqrt()).clamp(0.0, 1.0),
        }
    }
}

impl Model for MissingData {
    fn name(&self) -> &'static str {
        match (self.criterion, &self.prior) {
            (MdCriterion::CuGmm, _) => "missing-data-cugmm",
            (MdCriterion::Likelihood, Prior::Curved) => "missing-data-curved",
            _ => "missing-data-flat",
        }
    }

    fn space(&self) -> &ParamSpace {
        &self.space
    }

    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["mu", "eta1", "eta2"]
    }

    fn default_smc(&self) -> SmcConfig {
        SmcConfig {
            mh_steps: 1,
            ..SmcConfig::default()
        }
    }

    fn criterion(&self, data: &DataSet) -> Result<Box<dyn Criterion>> {
        let DataSet::MissingData(rows) = data else {
            return Err(Error::Config("missing-data model needs (D, YD) records".into()));
        };
        Ok(match self.criterion {
            MdCriterion::Likelihood => Box::new(MdLikelihood::new(rows)?),
            MdCriterion::CuGmm => Box::new(md_cu_gmm(rows)?),
        })
    }

    fn truth(&self, n: usize) -> Vec<f64> {
        vec![self.mu, self.eta1, self.eta2_at(n)]
    }

    fn simulate(&self, n: usize, seed: u64) -> Result<DataSet> {
        let (g11, g00) = md_reduced_form(&self.truth(n))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                if u < g11 {
                    (1, 1)
                } else if u < 1.0 - g00 {
                    (1, 0)
                } else {
                    (0, 0)
                }
            })
            .collect();
        Ok(DataSet::MissingData(rows))
    }

    fn true_sets(&self, n: usize, coord: usize) -> Result<TrueSets> {
        let eta2 = self.eta2_at(n);
        let (g11, g00) = md_reduced_form(&self.truth(n))?;
        let points = linspace(0.0, 1.0, 200)
            .into_iter()
            .map(|e1| vec![(g11 + e1 * g00).min(1.0), e1, eta2])
            .collect();
        let m_interval = match coord {
            0 => md_identified_interval(g11, g00),
            1 => (0.0, 1.0),
            2 => (eta2, eta2),
            _ => return Err(Error::Dimension { expected: 3, got: coord + 1 }),
        };
        Ok(TrueSets { points, coord, m_interval })
    }

    fn equivalence_interval(&self, theta: &[f64], coord: usize) -> Result<(f64, f64)> {
        let (g11, g00) = md_reduced_form(theta)?;
        match coord {
            0 => Ok(md_identified_interval(g11, g00)),
            1 => Ok((0.0, 1.0)),
            2 => Ok((theta[2], theta[2])),
            _ => Err(Error::Dimension { expected: 3, got: coord + 1 }),
        }
    }

    fn closed_form_max(&self, data: &DataSet) -> Option<QlrContext> {
        let DataSet::MissingData(rows) = data else {
            return None;
        };
        let freq = md_frequencies(rows).ok()?;
        let theta_hat = vec![freq[0] + 0.5 * freq[2], 0.5, 1.0 - freq[2]];
        let l_hat = match self.criterion {
            MdCriterion::Likelihood => md_loglik(&theta_hat, &freq),
            MdCriterion::CuGmm => 0.0,
        };
        Some(QlrContext::new(l_hat, theta_hat, rows.len()))
    }

    fn closed_form_profile(&self, data: &DataSet, coord: usize, mu: f64) -> Option<f64> {
        if coord != 0 || self.criterion != MdCriterion::Likelihood {
            return None;
        }
        let DataSet::MissingData(rows) = data else {
            return None;
        };
        Some(md_profile(&md_frequencies(rows).ok()?, mu))
    }

    fn profile_quasiconcave(&self, coord: usize) -> bool {
        coord == 0
    }
}

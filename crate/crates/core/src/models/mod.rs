//! Built-in models: missing data, a two-player entry game, a scalar moment
//! inequality and a uniform model with parameter-dependent support.

pub mod bvn;
pub mod entry_game;
pub mod missing_data;
pub mod mixture;
pub mod moment_inequality;
pub mod uniform_support;

use crate::criterion::{Criterion, QlrContext};
use crate::error::{Error, Result};
use crate::param::{ParamSpace, Prior, SubvectorMap};
use crate::smc::SmcConfig;
use serde::{Deserialize, Serialize};

pub use entry_game::EntryGame;
pub use missing_data::{MdCriterion, MissingData};
pub use moment_inequality::MomentInequality;
pub use uniform_support::UniformSupport;

/// Observations, one record per row.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSet {
    /// `(D, Y·D)` pairs.
    MissingData(Vec<(u8, u8)>),
    /// Entry decisions `(a1, a2)`.
    EntryGame(Vec<(u8, u8)>),
    Real(Vec<f64>),
}

impl DataSet {
    pub fn n(&self) -> usize {
        match self {
            DataSet::MissingData(r) | DataSet::EntryGame(r) => r.len(),
            DataSet::Real(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.n() == 0
    }
}

/// Identified sets at the data-generating process: a discretization of
/// `Θ_I` (including its extreme points) and the interval `M_I` for one
/// coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueSets {
    pub points: Vec<Vec<f64>>,
    pub coord: usize,
    pub m_interval: (f64, f64),
}

/// A model bundles parameter space, prior, criterion, simulator, the
/// equivalence-set oracle `M(θ)` and the true identified sets.
pub trait Model: Send + Sync {
    fn name(&self) -> &'static str;
    fn space(&self) -> &ParamSpace;
    fn prior(&self) -> &Prior;
    fn param_names(&self) -> &'static [&'static str];
    /// Coordinate used for subvector inference unless overridden.
    fn default_coord(&self) -> usize {
        0
    }
    fn default_smc(&self) -> SmcConfig {
        SmcConfig::default()
    }
    fn criterion(&self, data: &DataSet) -> Result<Box<dyn Criterion>>;
    /// True θ at sample size `n` (some designs drift with `n`).
    fn truth(&self, n: usize) -> Vec<f64>;
    fn simulate(&self, n: usize, seed: u64) -> Result<DataSet>;
    fn true_sets(&self, n: usize, coord: usize) -> Result<TrueSets>;
    /// `M(θ)` for the scalar coordinate `coord`.
    fn equivalence_interval(&self, theta: &[f64], coord: usize) -> Result<(f64, f64)>;
    fn closed_form_max(&self, _data: &DataSet) -> Option<QlrContext> {
        None
    }
    /// `sup_η L_n(μ, η)` when available analytically.
    fn closed_form_profile(&self, _data: &DataSet, _coord: usize, _mu: f64) -> Option<f64> {
        None
    }
    /// Whether the profile criterion is known to be quasiconcave in `coord`.
    fn profile_quasiconcave(&self, _coord: usize) -> bool {
        false
    }

    fn subvector(&self, coord: usize) -> Result<SubvectorMap> {
        SubvectorMap::scalar(coord, self.space().dim())
    }
}

/// Data-generating-process settings shared by the presets. Unused fields are
/// ignored by models they don't apply to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DgpParams {
    /// Missing data: fixed `η2`; overrides `c`.
    pub eta2: Option<f64>,
    /// Drift constant: `η2 = 1 − c/√n` (missing data) or `μ* = c/√n`
    /// (moment inequality).
    pub c: Option<f64>,
    /// Moment inequality: fixed `μ*`; overrides `c`.
    pub mu_star: Option<f64>,
    /// Uniform support: the true upper endpoint.
    pub gamma: f64,
}

impl Default for DgpParams {
    fn default() -> Self {
        Self {
            eta2: None,
            c: None,
            mu_star: None,
            gamma: 1.0,
        }
    }
}

pub const PRESETS: [&str; 7] = [
    "missing-data-flat",
    "missing-data-curved",
    "missing-data-cugmm",
    "entry-game",
    "moment-inequality",
    "moment-inequality-recentered",
    "uniform-support",
];

/// Builds a named preset.
pub fn preset(name: &str, dgp: &DgpParams) -> Result<Box<dyn Model>> {
    use missing_data::Eta2;
    use moment_inequality::MuStar;
    let eta2 = || match (dgp.eta2, dgp.c) {
        (Some(e), _) => Eta2::Fixed(e),
        (None, Some(c)) => Eta2::Drift(c),
        (None, None) => Eta2::Fixed(0.8),
    };
    let mu_star = || match (dgp.mu_star, dgp.c) {
        (Some(m), _) => MuStar::Fixed(m),
        (None, Some(c)) => MuStar::Drift(c),
        (None, None) => MuStar::Fixed(0.2),
    };
    Ok(match name {
        "missing-data-flat" => Box::new(MissingData::new(MdCriterion::Likelihood, Prior::Flat, eta2())?),
        "missing-data-curved" => Box::new(MissingData::new(MdCriterion::Likelihood, Prior::Curved, eta2())?),
        "missing-data-cugmm" => Box::new(MissingData::new(MdCriterion::CuGmm, Prior::Flat, eta2())?),
        "entry-game" => Box::new(EntryGame::new(entry_game::TRUE_THETA.to_vec())?),
        "moment-inequality" => Box::new(MomentInequality::new(false, mu_star())?),
        "moment-inequality-recentered" => Box::new(MomentInequality::new(true, mu_star())?),
        "uniform-support" => Box::new(UniformSupport::new(dgp.gamma)?),
        other => {
            return Err(Error::Config(format!(
                "unknown model preset '{other}' (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    })
}

/// Evenly spaced points `lo..=hi` (a single point when they coincide).
pub(crate) fn linspace(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    if m <= 1 || lo == hi {
        return vec![lo; m.max(1)];
    }
    (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect()
}

/// `Σ p log p` over cells with `0 log 0 = 0`, or `Σ p log g` for a model.
pub(crate) fn multinomial_avg_loglik(freq: &[f64], probs: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (p, g) in freq.iter().zip(probs) {
        if *p > 0.0 {
            if *g <= 0.0 {
                return f64::NEG_INFINITY;
            }
            acc += p * g.ln();
        }
    }
    acc
}

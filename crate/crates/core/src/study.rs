//! Monte Carlo coverage studies: simulate, sample, build every requested
//! confidence set and check it against the true identified sets.

use crate::criterion::QlrContext;
use crate::error::{Error, Result};
use crate::models::{preset, DataSet, DgpParams, Model};
use crate::procedures::{
    estimate, percentile_cs, procedure1, procedure2_from_draws, procedure3, profile_draws, projection_cs, CsKind,
    FullCS, IntervalCS, IntervalSearch, Profile,
};
use crate::smc::{run_smc, substream, ParticleCloud, SmcConfig, StageDiagnostics, Target};
use crate::stats::{chisq_quantile, gamma_quantile, weighted_quantile};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// Partial SMC settings; unset fields fall back to the model preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmcOverrides {
    pub particles: Option<usize>,
    pub stages: Option<usize>,
    pub mh_steps: Option<usize>,
    pub lambda: Option<f64>,
    pub blocks: Option<usize>,
    pub target_accept: Option<f64>,
    pub ess_threshold_frac: Option<f64>,
}

impl SmcOverrides {
    pub fn apply(&self, base: SmcConfig) -> SmcConfig {
        SmcConfig {
            particles: self.particles.unwrap_or(base.particles),
            stages: self.stages.unwrap_or(base.stages),
            mh_steps: self.mh_steps.unwrap_or(base.mh_steps),
            lambda: self.lambda.unwrap_or(base.lambda),
            blocks: self.blocks.unwrap_or(base.blocks),
            target_accept: self.target_accept.unwrap_or(base.target_accept),
            ess_threshold_frac: self.ess_threshold_frac.unwrap_or(base.ess_threshold_frac),
            seed: base.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub model: String,
    pub dgps: Vec<DgpParams>,
    pub sample_sizes: Vec<usize>,
    pub levels: Vec<f64>,
    pub replications: usize,
    pub smc: SmcOverrides,
    pub procedures: Vec<CsKind>,
    /// Subvector coordinate; the model's default when unset.
    pub coord: Option<usize>,
    pub base_seed: u64,
    pub interval: IntervalSearch,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            model: "missing-data-flat".into(),
            dgps: vec![DgpParams::default()],
            sample_sizes: vec![1000],
            levels: vec![0.90, 0.95, 0.99],
            replications: 500,
            smc: SmcOverrides::default(),
            procedures: CsKind::ALL.to_vec(),
            coord: None,
            base_seed: 0,
            interval: IntervalSearch::default(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.dgps.is_empty() || self.sample_sizes.is_empty() || self.levels.is_empty() || self.procedures.is_empty() {
            return Err(Error::Config("dgps, sample_sizes, levels and procedures must be nonempty".into()));
        }
        if let Some(l) = self.levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return Err(Error::Config(format!("levels must lie in (0, 1), got {l}")));
        }
        if let Some(n) = self.sample_sizes.iter().find(|n| **n == 0) {
            return Err(Error::Config(format!("sample sizes must be positive, got {n}")));
        }
        for d in &self.dgps {
            let m = preset(&self.model, d)?;
            let coord = self.coord.unwrap_or(m.default_coord());
            m.subvector(coord)?;
            self.smc.apply(m.default_smc()).validate()?;
        }
        Ok(())
    }
}

/// Short label for a DGP, used as the `dgp` column.
pub fn dgp_label(d: &DgpParams) -> String {
    let mut parts = Vec::new();
    if let Some(e) = d.eta2 {
        parts.push(format!("eta2={e}"));
    } else if let Some(m) = d.mu_star {
        parts.push(format!("mu_star={m}"));
    } else if let Some(c) = d.c {
        parts.push(format!("c={c}"));
    }
    if d.gamma != 1.0 {
        parts.push(format!("gamma={}", d.gamma));
    }
    if parts.is_empty() {
        "default".into()
    } else {
        parts.join(";")
    }
}

/// Seed for replication `rep` of cell `(dgp, n)`.
pub fn replication_seed(base_seed: u64, dgp: usize, n: usize, rep: usize) -> u64 {
    let cell = (dgp as u64).wrapping_mul(0x1000_0000_01B3) ^ n as u64;
    substream(base_seed, cell, rep as u64).random()
}

/// Everything one fitted dataset yields.
pub struct Fit {
    pub data: DataSet,
    pub cloud: ParticleCloud,
    pub ctx: QlrContext,
    pub diagnostics: Vec<StageDiagnostics>,
}

/// Simulate, sample and estimate for one seed.
pub fn fit(model: &dyn Model, n: usize, smc: &SmcConfig, seed: u64) -> Result<Fit> {
    let data = model.simulate(n, seed)?;
    fit_data(model, data, smc, seed)
}

pub fn fit_data(model: &dyn Model, data: DataSet, smc: &SmcConfig, seed: u64) -> Result<Fit> {
    let criterion = model.criterion(&data)?;
    let target = Target {
        criterion: criterion.as_ref(),
        prior: model.prior(),
        space: model.space(),
    };
    let cfg = SmcConfig {
        seed: substream(seed, 1, 0).random(),
        ..smc.clone()
    };
    let out = run_smc(&target, &cfg)?;
    let ctx = estimate(model, &data, criterion.as_ref(), Some(&out.cloud), seed)?;
    Ok(Fit { data, cloud: out.cloud, ctx, diagnostics: out.diagnostics })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub procedure: CsKind,
    pub level: f64,
    pub covered: bool,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

/// Indicators for one replication, or `None` when the sampler degenerated.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub rep: usize,
    pub outcomes: Option<Vec<Outcome>>,
}

/// A confidence set for the full vector or an interval for one coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ConfidenceSet {
    Full(FullCS),
    Interval(IntervalCS),
}

/// Every requested procedure at every level, in `levels × procedures`
/// order.
pub fn confidence_sets(
    model: &dyn Model,
    fit: &Fit,
    procedures: &[CsKind],
    levels: &[f64],
    coord: usize,
    search: &IntervalSearch,
    seed: u64,
) -> Result<Vec<ConfidenceSet>> {
    let criterion = model.criterion(&fit.data)?;
    let needs_profile = procedures.iter().any(|k| matches!(k, CsKind::Procedure2 | CsKind::Procedure3 | CsKind::Projection));
    let profile = if needs_profile {
        Some(Profile::new(model, &fit.data, criterion.as_ref(), coord, Some(&fit.cloud), &fit.ctx, seed)?)
    } else {
        None
    };
    let pl_draws = match &profile {
        Some(p) if procedures.contains(&CsKind::Procedure2) => Some(profile_draws(model, p, &fit.cloud)?),
        _ => None,
    };
    let mut out = Vec::new();
    for &level in levels {
        let full = procedure1(&fit.cloud, &fit.ctx, level)?;
        for &kind in procedures {
            let profile = || profile.as_ref().expect("built when a profile procedure is requested");
            let set = match kind {
                CsKind::Procedure1 => ConfidenceSet::Full(full.clone()),
                CsKind::Procedure2 => ConfidenceSet::Interval(procedure2_from_draws(
                    pl_draws.as_deref().expect("computed above"),
                    &fit.cloud.weights,
                    &fit.ctx,
                    profile(),
                    level,
                    search,
                )?),
                CsKind::Procedure3 => ConfidenceSet::Interval(procedure3(&fit.ctx, profile(), level, search)?),
                CsKind::Projection => ConfidenceSet::Interval(projection_cs(&full, &fit.ctx, profile(), search)?),
                CsKind::Percentile => ConfidenceSet::Interval(percentile_cs(&fit.cloud, coord, level)?),
            };
            out.push(set);
        }
    }
    Ok(out)
}

/// All requested confidence sets for one fitted dataset, checked against
/// the true sets.
pub fn evaluate_fit(model: &dyn Model, fit: &Fit, config: &StudyConfig, coord: usize, seed: u64) -> Result<Vec<Outcome>> {
    let n = fit.data.n();
    let truth = model.true_sets(n, coord)?;
    let (m_lo, m_hi) = truth.m_interval;
    let criterion = model.criterion(&fit.data)?;
    let theta_min = truth.points.iter().map(|t| criterion.eval(t)).fold(f64::INFINITY, f64::min);
    let sets = confidence_sets(model, fit, &config.procedures, &config.levels, coord, &config.interval, seed)?;
    Ok(sets
        .into_iter()
        .map(|set| match set {
            ConfidenceSet::Full(cs) => Outcome { procedure: cs.kind, level: cs.level, covered: theta_min >= cs.zeta, lo: None, hi: None },
            ConfidenceSet::Interval(cs) => Outcome {
                procedure: cs.kind,
                level: cs.level,
                covered: cs.contains_interval(m_lo, m_hi),
                lo: Some(cs.lo),
                hi: Some(cs.hi),
            },
        })
        .collect())
}

pub fn run_replication(config: &StudyConfig, model: &dyn Model, dgp: usize, n: usize, rep: usize) -> Result<Replication> {
    let seed = replication_seed(config.base_seed, dgp, n, rep);
    let smc = config.smc.apply(model.default_smc());
    let coord = config.coord.unwrap_or(model.default_coord());
    match fit(model, n, &smc, seed) {
        Ok(f) => Ok(Replication { rep, outcomes: Some(evaluate_fit(model, &f, config, coord, seed)?) }),
        Err(Error::Degeneracy { .. }) => Ok(Replication { rep, outcomes: None }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub procedure: String,
    pub n: usize,
    pub level: f64,
    pub dgp: String,
    pub coverage: f64,
    pub mcse: f64,
    pub mean_lo: Option<f64>,
    pub mean_hi: Option<f64>,
    pub excluded: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub rows: Vec<CoverageRow>,
}

impl CoverageTable {
    pub fn row(&self, procedure: CsKind, n: usize, level: f64, dgp: &str) -> Option<&CoverageRow> {
        self.rows
            .iter()
            .find(|r| r.procedure == procedure.as_str() && r.n == n && r.level == level && r.dgp == dgp)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Means and Monte Carlo standard errors of replication indicators.
pub fn aggregate(reps: &[Replication], n: usize, dgp: &str) -> Vec<CoverageRow> {
    let excluded = reps.iter().filter(|r| r.outcomes.is_none()).count();
    let mut cells: BTreeMap<(usize, u64), (CsKind, f64, Vec<&Outcome>)> = BTreeMap::new();
    for r in reps.iter().filter_map(|r| r.outcomes.as_ref()) {
        for (k, o) in r.iter().enumerate() {
            cells
                .entry((k, o.level.to_bits()))
                .or_insert_with(|| (o.procedure, o.level, Vec::new()))
                .2
                .push(o);
        }
    }
    cells
        .into_values()
        .map(|(procedure, level, os)| {
            let r = os.len() as f64;
            let cov = os.iter().filter(|o| o.covered).count() as f64 / r;
            let mean = |f: fn(&Outcome) -> Option<f64>| {
                let v: Vec<f64> = os.iter().filter_map(|o| f(o)).collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            };
            CoverageRow {
                procedure: procedure.as_str().into(),
                n,
                level,
                dgp: dgp.into(),
                coverage: cov,
                mcse: (cov * (1.0 - cov) / r).sqrt(),
                mean_lo: mean(|o| o.lo),
                mean_hi: mean(|o| o.hi),
                excluded,
            }
        })
        .collect()
}

/// Runs every `(dgp, n)` cell. Replications run in parallel; results depend
/// only on the seeds.
pub fn run_study(config: &StudyConfig) -> Result<CoverageTable> {
    config.validate()?;
    let mut table = CoverageTable::default();
    for (d, dgp) in config.dgps.iter().enumerate() {
        let model = preset(&config.model, dgp)?;
        let label = dgp_label(dgp);
        for &n in &config.sample_sizes {
            let coord = config.coord.unwrap_or(model.default_coord());
            // build cached identified sets once before going parallel
            model.true_sets(n, coord)?;
            let reps: Vec<Replication> = (0..config.replications)
                .into_par_iter()
                .map(|rep| run_replication(config, model.as_ref(), d, n, rep))
                .collect::<Result<_>>()?;
            let mut rows = aggregate(&reps, n, &label);
            rows.sort_by(|a, b| {
                let ka = CsKind::ALL.iter().position(|k| k.as_str() == a.procedure);
                let kb = CsKind::ALL.iter().position(|k| k.as_str() == b.procedure);
                ka.cmp(&kb).then(a.level.total_cmp(&b.level))
            });
            table.rows.extend(rows);
        }
    }
    Ok(table)
}

/// Reference distribution for Q-Q output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Reference {
    ChiSq { df: u32 },
    Gamma { shape: f64, scale: f64 },
}

impl Reference {
    pub fn quantile(&self, p: f64) -> Result<f64> {
        match *self {
            Reference::ChiSq { df } => chisq_quantile(df, p),
            Reference::Gamma { shape, scale } => gamma_quantile(shape, scale, p),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Reference::ChiSq { df } => crate::stats::chisq_cdf(df, x),
            Reference::Gamma { shape, scale } => crate::stats::gamma_cdf(shape, scale, x).unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqRow {
    pub percentile: f64,
    pub empirical: f64,
    pub reference: f64,
}

/// Weighted QLR quantiles at the percentiles 1..99 paired with `reference`.
pub fn qq_rows(draws: &[f64], weights: &[f64], reference: impl Fn(f64) -> Result<f64>) -> Result<Vec<QqRow>> {
    (1..=99)
        .map(|k| {
            let p = k as f64 / 100.0;
            Ok(QqRow {
                percentile: p,
                empirical: weighted_quantile(draws, weights, p)?,
                reference: reference(p)?,
            })
        })
        .collect()
}

pub fn qq_data(cloud: &ParticleCloud, ctx: &QlrContext, reference: &Reference) -> Result<Vec<QqRow>> {
    let q = crate::procedures::posterior_qlr_draws(cloud, ctx);
    qq_rows(&q, &cloud.weights, |p| reference.quantile(p))
}

pub fn write_qq_csv<W: std::io::Write>(rows: &[QqRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Resolved configuration plus version, written next to study outputs.
#[derive(Debug, Clone, Serialize)]
pub struct StudyManifest<'a> {
    pub version: &'static str,
    pub config: &'a StudyConfig,
}

pub fn manifest_json(config: &StudyConfig) -> Result<String> {
    serde_json::to_string_pretty(&StudyManifest { version: VERSION, config })
        .map_err(|e| Error::Io(e.to_string()))
}

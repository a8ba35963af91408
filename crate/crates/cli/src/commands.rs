use crate::config::RunConfig;
use idset_core::models::Model;
use idset_core::study::{confidence_sets, fit, manifest_json, qq_data, run_study, write_qq_csv, ConfidenceSet, Fit, VERSION};
use idset_core::{Error, Result};
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

fn create(out: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(out.join(name))?))
}

fn write_resolved(out: &Path, cfg: &RunConfig) -> Result<()> {
    std::fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    Ok(())
}

fn fit_one(cfg: &RunConfig, model: &dyn Model) -> Result<Fit> {
    let smc = cfg.smc(model)?;
    fit(model, cfg.n, &smc, cfg.seed)
}

/// `particles.csv` (b, weight, θ…, logL with logL = n·L_n) and
/// `diagnostics.csv`.
pub fn sample(cfg: &RunConfig, out: &Path) -> Result<()> {
    let model = cfg.model()?;
    let f = fit_one(cfg, model.as_ref())?;

    let mut w = csv::Writer::from_writer(create(out, "particles.csv")?);
    let mut header = vec!["b".to_string(), "weight".to_string()];
    header.extend(model.param_names().iter().map(|s| s.to_string()));
    header.push("logL".into());
    w.write_record(&header)?;
    for (b, ((theta, wt), l)) in f.cloud.thetas.iter().zip(&f.cloud.weights).zip(&f.cloud.log_crit).enumerate() {
        let mut rec = vec![b.to_string(), wt.to_string()];
        rec.extend(theta.iter().map(f64::to_string));
        rec.push(l.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut d = csv::Writer::from_writer(create(out, "diagnostics.csv")?);
    for row in &f.diagnostics {
        d.serialize(row)?;
    }
    d.flush()?;
    write_resolved(out, cfg)
}

#[derive(Serialize)]
struct CsReport<'a> {
    version: &'static str,
    model: &'a str,
    n: usize,
    seed: u64,
    coord: usize,
    l_hat: f64,
    theta_hat: &'a [f64],
    sets: Vec<ConfidenceSet>,
}

pub fn cs(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate_levels()?;
    let model = cfg.model()?;
    let coord = cfg.scalar_coord(model.as_ref())?;
    let f = fit_one(cfg, model.as_ref())?;
    let sets = confidence_sets(model.as_ref(), &f, &cfg.procedures, &cfg.levels, coord, &cfg.interval, cfg.seed)?;
    let report = CsReport {
        version: VERSION,
        model: model.name(),
        n: cfg.n,
        seed: cfg.seed,
        coord,
        l_hat: f.ctx.l_hat,
        theta_hat: &f.ctx.theta_hat,
        sets,
    };
    let mut w = create(out, "cs.json")?;
    serde_json::to_writer_pretty(&mut w, &report).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    write_resolved(out, cfg)
}

pub fn coverage(cfg: &RunConfig, out: &Path) -> Result<()> {
    let study = cfg.study()?;
    let table = run_study(&study)?;
    let mut w = create(out, "coverage.csv")?;
    table.write_csv(&mut w)?;
    w.flush()?;
    std::fs::write(out.join("manifest.json"), manifest_json(&study)?)?;
    write_resolved(out, cfg)
}

pub fn qq(cfg: &RunConfig, out: &Path) -> Result<()> {
    let model = cfg.model()?;
    let f = fit_one(cfg, model.as_ref())?;
    let rows = qq_data(&f.cloud, &f.ctx, &cfg.reference())?;
    let mut w = create(out, "qq.csv")?;
    write_qq_csv(&rows, &mut w)?;
    w.flush()?;
    write_resolved(out, cfg)
}

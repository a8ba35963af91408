//! Run configuration: a TOML file, then flags, then `key=value` overrides.

use idset_core::models::{preset, DgpParams, Model};
use idset_core::procedures::{CsKind, IntervalSearch};
use idset_core::study::{Reference, SmcOverrides, StudyConfig};
use idset_core::{Error, Result, SmcConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Subvector selection: one coordinate, or several for the full-vector
/// procedures only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coord {
    One(usize),
    Many(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    /// Defaults to the single top-level `dgp`.
    pub dgps: Vec<DgpParams>,
    /// Defaults to the single top-level `n`.
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
}

impl Default for StudySection {
    fn default() -> Self {
        Self { dgps: Vec::new(), sample_sizes: Vec::new(), replications: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: String,
    pub n: usize,
    pub seed: u64,
    pub levels: Vec<f64>,
    pub procedures: Vec<CsKind>,
    pub coord: Option<Coord>,
    /// Q-Q reference; defaults to the model's limit distribution.
    pub reference: Option<Reference>,
    pub dgp: DgpParams,
    pub smc: SmcOverrides,
    pub interval: IntervalSearch,
    pub study: StudySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: "missing-data-flat".into(),
            n: 1000,
            seed: 0,
            levels: vec![0.90, 0.95, 0.99],
            procedures: CsKind::ALL.to_vec(),
            coord: None,
            reference: None,
            dgp: DgpParams::default(),
            smc: SmcOverrides::default(),
            interval: IntervalSearch::default(),
            study: StudySection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Sets a dotted key, parsing the value as TOML and falling back to a
    /// bare string. Unknown keys surface when the tree is read back.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{assignment}' is not of the form key=value")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut tree = toml::Table::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let mut parts: Vec<&str> = key.split('.').collect();
        let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Config(format!("empty override key in '{assignment}'")))?;
        let mut node = &mut tree;
        for p in parts {
            node = node
                .entry(p)
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("override key '{key}': '{p}' is not a table")))?;
        }
        node.insert(last.to_string(), value);
        *self = tree.try_into().map_err(|e: toml::de::Error| Error::Config(format!("override '{assignment}': {}", e.message())))?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn model(&self) -> Result<Box<dyn Model>> {
        preset(&self.model, &self.dgp)
    }

    pub fn smc(&self, model: &dyn Model) -> Result<SmcConfig> {
        let cfg = self.smc.apply(model.default_smc());
        cfg.validate()?;
        Ok(cfg)
    }

    /// The scalar coordinate for interval procedures; a vector subvector is
    /// only accepted when no interval procedure is requested.
    pub fn scalar_coord(&self, model: &dyn Model) -> Result<usize> {
        let coords = match &self.coord {
            None => vec![model.default_coord()],
            Some(Coord::One(c)) => vec![*c],
            Some(Coord::Many(c)) => c.clone(),
        };
        let wants_interval = self.procedures.iter().any(|k| *k != CsKind::Procedure1);
        match coords.as_slice() {
            [c] => {
                model.subvector(*c)?;
                Ok(*c)
            }
            _ if wants_interval => Err(Error::Config(format!(
                "procedures {} need a scalar subvector, got coordinates {coords:?}",
                self.procedures.iter().filter(|k| **k != CsKind::Procedure1).map(|k| k.as_str()).collect::<Vec<_>>().join(", ")
            ))),
            _ => {
                for c in &coords {
                    model.subvector(*c)?;
                }
                Ok(coords[0])
            }
        }
    }

    pub fn validate_levels(&self) -> Result<()> {
        if self.levels.is_empty() || self.procedures.is_empty() {
            return Err(Error::Config("levels and procedures must be nonempty".into()));
        }
        match self.levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            Some(l) => Err(Error::Config(format!("levels must lie in (0, 1), got {l}"))),
            None => Ok(()),
        }
    }

    pub fn reference(&self) -> Reference {
        self.reference.unwrap_or(match self.model.as_str() {
            "entry-game" => Reference::ChiSq { df: 3 },
            "uniform-support" => Reference::Gamma { shape: 1.0, scale: 2.0 },
            _ => Reference::ChiSq { df: 2 },
        })
    }

    pub fn study(&self) -> Result<StudyConfig> {
        let coord = match &self.coord {
            None => None,
            Some(Coord::One(c)) => Some(*c),
            Some(Coord::Many(c)) if c.len() == 1 => Some(c[0]),
            Some(Coord::Many(c)) => return Err(Error::Config(format!("coverage studies need a scalar subvector, got {c:?}"))),
        };
        let cfg = StudyConfig {
            model: self.model.clone(),
            dgps: if self.study.dgps.is_empty() { vec![self.dgp.clone()] } else { self.study.dgps.clone() },
            sample_sizes: if self.study.sample_sizes.is_empty() { vec![self.n] } else { self.study.sample_sizes.clone() },
            levels: self.levels.clone(),
            replications: self.study.replications,
            smc: self.smc.clone(),
            procedures: self.procedures.clone(),
            coord,
            base_seed: self.seed,
            interval: self.interval,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

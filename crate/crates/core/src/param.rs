//! Parameter vectors, box-plus-constraint parameter spaces, priors and the
//! per-coordinate logit transform used by the random-walk sampler.

use crate::error::{Error, Result};
use crate::stats::beta_ln_pdf;
use rand::{Rng, RngCore};
use rand_distr::{Beta, Distribution};
use std::fmt;
use std::sync::Arc;

/// A point in a parameter space. Coordinates are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("ParamVector"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain {
                what: "ParamVector coordinate",
                value: *v,
            });
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub type Constraint = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Box `[lower, upper]` intersected with an optional nonlinear constraint.
#[derive(Clone)]
pub struct ParamSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
    constraint: Option<Constraint>,
}

impl fmt::Debug for ParamSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParamSpace")
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("constrained", &self.constraint.is_some())
            .finish()
    }
}

impl ParamSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::Empty("ParamSpace"));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::Config(format!(
                    "coordinate {i}: bounds [{l}, {u}] must be finite with lower < upper"
                )));
            }
        }
        Ok(Self {
            lower,
            upper,
            constraint: None,
        })
    }

    pub fn with_constraint(mut self, c: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        self.constraint = Some(Arc::new(c));
        self
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn in_box(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (l, u))| *t >= *l && *t <= *u)
    }

    /// Box membership and the nonlinear constraint.
    pub fn contains(&self, theta: &[f64]) -> bool {
        self.in_box(theta) && self.constraint.as_ref().is_none_or(|c| c(theta))
    }

    pub fn check_dim(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        Ok(())
    }

    /// Componentwise logit map of the open box onto R^d.
    pub fn to_unconstrained(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(theta)?;
        theta
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let (l, u) = (self.lower[i], self.upper[i]);
                if !(t > l && t < u) {
                    return Err(Error::Boundary {
                        index: i,
                        value: t,
                        lower: l,
                        upper: u,
                    });
                }
                Ok(((t - l) / (u - t)).ln())
            })
            .collect()
    }

    pub fn from_unconstrained(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.from_unconstrained_into(u, &mut out);
        out
    }

    pub fn from_unconstrained_into(&self, u: &[f64], out: &mut [f64]) {
        for i in 0..u.len() {
            let (l, h) = (self.lower[i], self.upper[i]);
            // Pick the form that stays accurate on each side.
            out[i] = if u[i] >= 0.0 {
                h - (h - l) / (1.0 + u[i].exp())
            } else {
                l + (h - l) / (1.0 + (-u[i]).exp())
            };
        }
    }

    /// `log |dθ/du|` of the inverse transform at `u`.
    pub fn log_jacobian(&self, u: &[f64]) -> f64 {
        u.iter()
            .enumerate()
            .map(|(i, &x)| (self.upper[i] - self.lower[i]).ln() - softplus(x) - softplus(-x))
            .sum()
    }

    /// Uniform draw from the box, rejected until it satisfies the constraint.
    pub fn sample_uniform(&self, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        for _ in 0..100_000 {
            let theta: Vec<f64> = self
                .lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| rng.random_range(*l..*u))
                .collect();
            if self.contains(&theta) {
                return Ok(theta);
            }
        }
        Err(Error::Config("feasible set has negligible volume in its box".into()))
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// A prior with an explicit sampler, for shapes the built-in kinds don't cover.
pub trait CustomPrior: Send + Sync + fmt::Debug {
    /// Log density up to a constant; `-inf` off the support.
    fn log_density(&self, theta: &[f64]) -> f64;
    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    Flat,
    Curved,
    Custom,
}

#[derive(Debug, Clone)]
pub enum Prior {
    /// Uniform on the feasible set.
    Flat,
    /// Missing-data prior on `(μ, η1, η2)`:
    /// `Beta(3,8)(η1) · Beta(8,1)(η2) · U[η1(1−η2), η2+η1(1−η2)](μ)`.
    Curved,
    Custom(Arc<dyn CustomPrior>),
}

impl Prior {
    pub fn kind(&self) -> PriorKind {
        match self {
            Prior::Flat => PriorKind::Flat,
            Prior::Curved => PriorKind::Curved,
            Prior::Custom(_) => PriorKind::Custom,
        }
    }

    pub fn log_density(&self, space: &ParamSpace, theta: &[f64]) -> f64 {
        if !space.contains(theta) {
            return f64::NEG_INFINITY;
        }
        match self {
            Prior::Flat => 0.0,
            Prior::Curved => curved_log_density(theta),
            Prior::Custom(p) => p.log_density(theta),
        }
    }

    pub fn sample(&self, space: &ParamSpace, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        match self {
            Prior::Flat => space.sample_uniform(rng),
            Prior::Curved => {
                let b1 = Beta::new(3.0, 8.0).expect("valid shape");
                let b2 = Beta::new(8.0, 1.0).expect("valid shape");
                loop {
                    let eta1: f64 = b1.sample(rng);
                    let eta2: f64 = b2.sample(rng);
                    if eta2 <= 0.0 || eta2 >= 1.0 || eta1 <= 0.0 || eta1 >= 1.0 {
                        continue;
                    }
                    let lo = eta1 * (1.0 - eta2);
                    let theta = vec![lo + eta2 * rng.random::<f64>(), eta1, eta2];
                    if space.contains(&theta) {
                        return Ok(theta);
                    }
                }
            }
            Prior::Custom(p) => Ok(p.sample(rng)),
        }
    }
}

fn curved_log_density(theta: &[f64]) -> f64 {
    let (mu, eta1, eta2) = (theta[0], theta[1], theta[2]);
    if eta2 <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let lo = eta1 * (1.0 - eta2);
    if mu < lo || mu > lo + eta2 {
        return f64::NEG_INFINITY;
    }
    beta_ln_pdf(3.0, 8.0, eta1) + beta_ln_pdf(8.0, 1.0, eta2) - eta2.ln()
}

/// Coordinates of θ that make up the subvector μ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubvectorMap {
    indices: Vec<usize>,
}

impl SubvectorMap {
    pub fn new(indices: Vec<usize>, dim: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty("SubvectorMap"));
        }
        for (k, &i) in indices.iter().enumerate() {
            if i >= dim {
                return Err(Error::Config(format!(
                    "subvector index {i} out of range for dimension {dim}"
                )));
            }
            if indices[..k].contains(&i) {
                return Err(Error::Config(format!("subvector index {i} repeated")));
            }
        }
        Ok(Self { indices })
    }

    pub fn scalar(index: usize, dim: usize) -> Result<Self> {
        Self::new(vec![index], dim)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn is_scalar(&self) -> bool {
        self.indices.len() == 1
    }

    /// The single coordinate of a scalar subvector.
    pub fn scalar_index(&self) -> Result<usize> {
        if self.is_scalar() {
            Ok(self.indices[0])
        } else {
            Err(Error::Unsupported(format!(
                "interval confidence sets for a {}-dimensional subvector",
                self.indices.len()
            )))
        }
    }

    pub fn extract(&self, theta: &[f64]) -> Vec<f64> {
        self.indices.iter().map(|&i| theta[i]).collect()
    }

    /// Complement coordinates (the nuisance η).
    pub fn complement(&self, dim: usize) -> Vec<usize> {
        (0..dim).filter(|i| !self.indices.contains(i)).collect()
    }
}

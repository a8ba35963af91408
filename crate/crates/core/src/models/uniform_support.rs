//! `X_i ~ U[0, θ1 ∨ θ2]` with `θ ∈ [0, 2]²`: the support depends on the
//! parameter, so the QLR limit is not chi-square.

use super::{linspace, DataSet, Model, TrueSets};
use crate::criterion::{Criterion, CriterionKind, QlrContext};
use crate::error::{Error, Result};
use crate::param::{ParamSpace, Prior};
use crate::smc::SmcConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const US_UPPER: f64 = 2.0;

/// Average log-likelihood `−log(θ1 ∨ θ2)`, `-inf` when the support misses
/// the largest observation.
pub fn uniform_support_loglik(theta: &[f64], max_x: f64) -> f64 {
    let g = theta[0].max(theta[1]);
    if g < max_x || g <= 0.0 {
        f64::NEG_INFINITY
    } else {
        -g.ln()
    }
}

/// `2n log(γ / max X_i)`: the QLR at any θ with `θ1 ∨ θ2 = γ`.
pub fn qlr_closed_form(max_x: f64, n: usize, gamma: f64) -> f64 {
    if gamma < max_x {
        return f64::INFINITY;
    }
    2.0 * n as f64 * (gamma / max_x).ln()
}

pub struct UsCriterion {
    max_x: f64,
    n: usize,
}

impl UsCriterion {
    pub fn new(data: &[f64]) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("uniform-support sample"));
        }
        if let Some(x) = data.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::Domain { what: "uniform-support observation", value: *x });
        }
        let max_x = data.iter().copied().fold(0.0, f64::max);
        if max_x <= 0.0 {
            return Err(Error::Domain { what: "largest uniform-support observation", value: max_x });
        }
        Ok(Self { max_x, n: data.len() })
    }

    pub fn max_x(&self) -> f64 {
        self.max_x
    }
}

impl Criterion for UsCriterion {
    fn eval(&self, theta: &[f64]) -> f64 {
        uniform_support_loglik(theta, self.max_x)
    }
    fn n(&self) -> usize {
        self.n
    }
    fn kind(&self) -> CriterionKind {
        CriterionKind::LogLikelihood
    }
}

pub struct UniformSupport {
    pub gamma: f64,
    space: ParamSpace,
    prior: Prior,
}

impl UniformSupport {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= US_UPPER) {
            return Err(Error::Config(format!("gamma must lie in (0, {US_UPPER}], got {gamma}")));
        }
        Ok(Self {
            gamma,
            space: ParamSpace::new(vec![0.0; 2], vec![US_UPPER; 2])?,
            prior: Prior::Flat,
        })
    }

    fn max_x(data: &DataSet) -> Option<f64> {
        match data {
            DataSet::Real(x) => UsCriterion::new(x).ok().map(|c| c.max_x),
            _ => None,
        }
    }
}

impl Model for UniformSupport {
    fn name(&self) -> &'static str {
        "uniform-support"
    }

    fn space(&self) -> &ParamSpace {
        &self.space
    }

    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["theta1", "theta2"]
    }

    fn default_smc(&self) -> SmcConfig {
        SmcConfig {
            mh_steps: 4,
            ..SmcConfig::default()
        }
    }

    fn criterion(&self, data: &DataSet) -> Result<Box<dyn Criterion>> {
        let DataSet::Real(x) = data else {
            return Err(Error::Config("uniform-support model needs real-valued data".into()));
        };
        Ok(Box::new(UsCriterion::new(x)?))
    }

    fn truth(&self, _n: usize) -> Vec<f64> {
        vec![self.gamma, 0.5 * self.gamma]
    }

    fn simulate(&self, n: usize, seed: u64) -> Result<DataSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(DataSet::Real((0..n).map(|_| self.gamma * rng.random::<f64>()).collect()))
    }

    fn true_sets(&self, _n: usize, coord: usize) -> Result<TrueSets> {
        if coord > 1 {
            return Err(Error::Dimension { expected: 2, got: coord + 1 });
        }
        let g = self.gamma;
        let arm = linspace(0.0, g, 100);
        let mut points: Vec<Vec<f64>> = arm.iter().map(|&t| vec![g, t]).collect();
        points.extend(arm.iter().map(|&t| vec![t, g]));
        Ok(TrueSets { points, coord, m_interval: (0.0, g) })
    }

    fn equivalence_interval(&self, theta: &[f64], coord: usize) -> Result<(f64, f64)> {
        if coord > 1 {
            return Err(Error::Dimension { expected: 2, got: coord + 1 });
        }
        self.space.check_dim(theta)?;
        Ok((0.0, theta[0].max(theta[1])))
    }

    fn closed_form_max(&self, data: &DataSet) -> Option<QlrContext> {
        let m = Self::max_x(data)?;
        Some(QlrContext::new(-m.ln(), vec![m, 0.5 * m], data.n()))
    }

    fn closed_form_profile(&self, data: &DataSet, _coord: usize, mu: f64) -> Option<f64> {
        let m = Self::max_x(data)?;
        Some(-mu.max(m).ln())
    }

    fn profile_quasiconcave(&self, _coord: usize) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criterion::{maximize_criterion, qlr, SearchOptions};

    #[test]
    fn support_violation() {
        assert_eq!(uniform_support_loglik(&[0.5, 0.7], 0.8), f64::NEG_INFINITY);
        assert!((uniform_support_loglik(&[0.5, 0.9], 0.8) + 0.9f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn closed_form_qlr_matches_generic_path() {
        let m = UniformSupport::new(1.0).unwrap();
        let data = m.simulate(500, 5).unwrap();
        let crit = m.criterion(&data).unwrap();
        let ctx = m.closed_form_max(&data).unwrap();
        let num = maximize_criterion(crit.as_ref(), m.space(), std::slice::from_ref(&ctx.theta_hat), &SearchOptions::default(), 1).unwrap();
        assert!((num.l_hat - ctx.l_hat).abs() < 1e-12);
        let max_x = UniformSupport::max_x(&data).unwrap();
        for theta in [[1.0, 0.3], [0.2, 1.0], [1.0, 1.0]] {
            let q = qlr(&ctx, crit.as_ref(), &theta);
            assert!((q - qlr_closed_form(max_x, 500, 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn identified_sets() {
        let m = UniformSupport::new(1.0).unwrap();
        let ts = m.true_sets(100, 0).unwrap();
        assert_eq!(ts.points.len(), 200);
        assert_eq!(ts.m_interval, (0.0, 1.0));
        for p in &ts.points {
            assert_eq!(m.equivalence_interval(p, 0).unwrap(), ts.m_interval);
        }
        assert!(UniformSupport::new(2.5).is_err());
    }
}

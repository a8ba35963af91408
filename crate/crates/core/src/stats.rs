//! Distribution routines shared by the samplers and the confidence-set
//! procedures: normal CDF and inverse, regularized incomplete gamma,
//! chi-square and gamma quantiles, Beta densities, weighted empirical
//! distributions and the Kolmogorov–Smirnov distance.

use crate::error::{Error, Result};
use std::f64::consts::FRAC_1_SQRT_2;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal CDF.
///
/// Uses `erfc` on both sides of zero so the lower tail keeps full relative
/// precision down to roughly -37.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal survival function `1 - Φ(x)`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Inverse standard normal CDF (Wichura's AS 241 followed by one Halley step).
pub fn normal_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain {
            what: "normal_inv",
            value: p,
        });
    }
    let mut x = as241(p);
    // Halley refinement against the erfc-based CDF.
    let err = if p < 0.5 {
        normal_cdf(x) - p
    } else {
        (1.0 - p) - normal_sf(x)
    };
    let pdf = normal_pdf(x);
    if pdf > 0.0 {
        let u = err / pdf;
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

fn as241(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_6,
        1.331_416_678_917_843_8e2,
        1.971_590_950_306_551_3e3,
        1.373_169_376_550_946e4,
        4.592_195_393_154_987e4,
        6.726_577_092_700_87e4,
        3.343_057_558_358_813e4,
        2.509_080_928_730_122_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091e1,
        6.871_870_074_920_579e2,
        5.394_196_021_424_751e3,
        2.121_379_430_158_659_7e4,
        3.930_789_580_009_271e4,
        2.872_908_573_572_194_3e4,
        5.226_495_278_852_854e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_6,
        4.630_337_846_156_546,
        5.769_497_221_460_691,
        3.647_848_324_763_204_5,
        1.270_458_252_452_368_4,
        2.417_807_251_774_506e-1,
        2.272_384_498_926_918_4e-2,
        7.745_450_142_783_414e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_759,
        1.676_384_830_183_803_8,
        6.897_673_349_851e-1,
        1.481_039_764_274_800_8e-1,
        1.519_866_656_361_645_7e-2,
        5.475_938_084_995_345e-4,
        1.050_750_071_644_416_8e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103,
        5.463_784_911_164_114,
        1.784_826_539_917_291_3,
        2.965_605_718_285_048_7e-1,
        2.653_218_952_657_612_4e-2,
        1.242_660_947_388_078_4e-3,
        2.711_555_568_743_487_6e-5,
        2.010_334_399_292_288_1e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879e-1,
        1.369_298_809_227_358e-1,
        1.487_536_129_085_061_5e-2,
        7.868_691_311_456_133e-4,
        1.846_318_317_510_054_8e-5,
        1.421_511_758_316_446e-7,
        2.044_263_103_389_939_7e-15,
    ];
    fn poly(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Regularized lower incomplete gamma function `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma function `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut sum = 1.0 / a;
    let mut term = sum;
    let mut ap = a;
    for _ in 0..10_000 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    (sum.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
fn gamma_q_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// CDF of a Gamma distribution with the given shape and scale.
pub fn gamma_cdf(shape: f64, scale: f64, x: f64) -> Result<f64> {
    if !(shape > 0.0) || !(scale > 0.0) {
        return Err(Error::Domain {
            what: "gamma_cdf shape/scale",
            value: shape.min(scale),
        });
    }
    Ok(gamma_p(shape, x / scale))
}

pub fn chisq_cdf(df: u32, x: f64) -> f64 {
    gamma_p(f64::from(df) / 2.0, x / 2.0)
}

pub fn chisq_pdf(df: u32, x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let k = f64::from(df) / 2.0;
    if x == 0.0 {
        return match df {
            1 => f64::INFINITY,
            2 => 0.5,
            _ => 0.0,
        };
    }
    ((k - 1.0) * x.ln() - x / 2.0 - k * std::f64::consts::LN_2 - ln_gamma(k)).exp()
}

/// Quantile of the chi-square distribution with `df` degrees of freedom.
///
/// Safeguarded Newton iteration on the regularized incomplete gamma inside a
/// bracket that always contains the root.
pub fn chisq_quantile(df: u32, alpha: f64) -> Result<f64> {
    if df == 0 {
        return Err(Error::Domain {
            what: "chisq_quantile df",
            value: 0.0,
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain {
            what: "chisq_quantile level",
            value: alpha,
        });
    }
    if df == 1 {
        let z = normal_inv(0.5 + alpha / 2.0)?;
        return Ok(z * z);
    }
    if df == 2 {
        return Ok(-2.0 * (-alpha).ln_1p());
    }
    let k = f64::from(df);
    let (mut lo, mut hi) = (0.0_f64, k.max(1.0));
    while chisq_cdf(df, hi) < alpha {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = chisq_cdf(df, x) - alpha;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let pdf = chisq_pdf(df, x);
        let mut next = if pdf > 0.0 { x - f / pdf } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.max(1e-300) || hi - lo <= 1e-15 * hi {
            x = next;
            break;
        }
        x = next;
    }
    Ok(x)
}

/// Quantile of Gamma(shape, scale) by bisection on the CDF.
pub fn gamma_quantile(shape: f64, scale: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain {
            what: "gamma_quantile level",
            value: alpha,
        });
    }
    gamma_cdf(shape, scale, 1.0)?;
    let (mut lo, mut hi) = (0.0_f64, shape * scale);
    while gamma_p(shape, hi / scale) < alpha {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gamma_p(shape, mid / scale) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Log density of Beta(a, b) at `x`; `-inf` outside (0, 1).
pub fn beta_ln_pdf(a: f64, b: f64, x: f64) -> f64 {
    if !(x > 0.0 && x < 1.0) {
        // Closed endpoints carry finite density only when the exponent is zero.
        if x == 0.0 && a == 1.0 || x == 1.0 && b == 1.0 {
            return ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
        }
        return f64::NEG_INFINITY;
    }
    (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
}

/// A weighted sample sorted ascending with weights normalized to mean one.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDist {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalDist {
    pub fn new(values: &[f64], weights: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("EmpiricalDist"));
        }
        if values.len() != weights.len() {
            return Err(Error::Dimension {
                expected: values.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Domain {
                what: "EmpiricalDist weight",
                value: weights.iter().copied().find(|w| !(*w >= 0.0)).unwrap_or(f64::NAN),
            });
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Empty("EmpiricalDist (all weights zero)"));
        }
        let mean = total / weights.len() as f64;
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        Ok(Self {
            values: idx.iter().map(|&i| values[i]).collect(),
            weights: idx.iter().map(|&i| weights[i] / mean).collect(),
        })
    }

    pub fn unweighted(values: &[f64]) -> Result<Self> {
        Self::new(values, &vec![1.0; values.len()])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Weighted empirical CDF at `z` (right-continuous).
    pub fn cdf(&self, z: f64) -> f64 {
        let b = self.values.len() as f64;
        let k = self.values.partition_point(|v| *v <= z);
        self.weights[..k].iter().sum::<f64>() / b
    }

    /// Smallest sample value whose weighted CDF reaches `alpha`.
    pub fn quantile(&self, alpha: f64) -> f64 {
        let b = self.values.len() as f64;
        let target = alpha * b;
        let mut acc = 0.0;
        for (v, w) in self.values.iter().zip(&self.weights) {
            acc += w;
            if acc >= target - 1e-12 * b {
                return *v;
            }
        }
        *self.values.last().expect("nonempty")
    }
}

/// Weighted `alpha`-quantile: the smallest sample value `z` with
/// `(1/B) Σ w_b 1{v_b ≤ z} ≥ alpha`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("weighted_quantile"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain {
            what: "weighted_quantile level",
            value: alpha,
        });
    }
    Ok(EmpiricalDist::new(values, weights)?.quantile(alpha))
}

/// Kolmogorov–Smirnov distance between a weighted sample and a continuous CDF,
/// checked at both one-sided limits of every jump.
pub fn ks_distance(sample: &EmpiricalDist, cdf: impl Fn(f64) -> f64) -> f64 {
    let b = sample.values.len() as f64;
    let mut below = 0.0;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sample.values.len() {
        let v = sample.values[i];
        let mut mass = 0.0;
        while i < sample.values.len() && sample.values[i] == v {
            mass += sample.weights[i];
            i += 1;
        }
        let f = cdf(v);
        let left = below / b;
        below += mass;
        let right = below / b;
        d = d.max((f - left).abs()).max((right - f).abs());
    }
    d
}

//! Standard bivariate normal CDF, after Genz's double-precision `bvnd`
//! (Drezner–Wesolowsky with Gauss–Legendre rules and a separate branch for
//! correlations near one).
#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};
use crate::stats::normal_cdf;
use std::f64::consts::PI;

const TWO_PI: f64 = 2.0 * PI;

// (weight, abscissa) pairs on [-1, 0]; each is also used mirrored.
const GL6: [(f64, f64); 3] = [
    (0.171_324_492_379_170_5, -0.932_469_514_203_152_2),
    (0.360_761_573_048_138_4, -0.661_209_386_466_264_7),
    (0.467_913_934_572_690_4, -0.238_619_186_083_197),
];
const GL12: [(f64, f64); 6] = [
    (0.047_175_336_386_511_77, -0.981_560_634_246_719_1),
    (0.106_939_325_995_318_3, -0.904_117_256_370_475),
    (0.160_078_328_543_346_4, -0.769_902_674_194_305),
    (0.203_167_426_723_065_9, -0.587_317_954_286_617_1),
    (0.233_492_536_538_354_7, -0.367_831_498_998_180_2),
    (0.249_147_045_813_402_9, -0.125_233_408_511_469_2),
];
const GL20: [(f64, f64); 10] = [
    (0.017_614_007_139_152_12, -0.993_128_599_185_094_9),
    (0.040_601_429_800_386_94, -0.963_971_927_277_913_8),
    (0.062_672_048_334_109_06, -0.912_234_428_251_325_9),
    (0.083_276_741_576_704_75, -0.839_116_971_822_218_8),
    (0.101_930_119_817_240_4, -0.746_331_906_460_150_8),
    (0.118_194_531_961_518_4, -0.636_053_680_726_515),
    (0.131_688_638_449_176_6, -0.510_867_001_950_827_1),
    (0.142_096_109_318_382_1, -0.373_706_088_715_419_6),
    (0.149_172_986_472_603_7, -0.227_785_851_141_645_1),
    (0.152_753_387_130_725_9, -0.076_526_521_133_497_33),
];

/// `P(X > dh, Y > dk)` for standard normals with correlation `r`, `|r| < 1`.
fn bvnd(dh: f64, dk: f64, r: f64) -> f64 {
    let quad: &[(f64, f64)] = if r.abs() < 0.3 {
        &GL6
    } else if r.abs() < 0.75 {
        &GL12
    } else {
        &GL20
    };
    let (h, mut k) = (dh, dk);
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        if r != 0.0 {
            let hs = (h * h + k * k) / 2.0;
            let asr = r.asin();
            for &(w, x) in quad {
                for is in [-1.0, 1.0] {
                    let sn = (asr * (is * x + 1.0) / 2.0).sin();
                    bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            bvn *= asr / (2.0 * TWO_PI);
        }
        return bvn + normal_cdf(-h) * normal_cdf(-k);
    }
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    if r.abs() < 1.0 {
        let as_ = (1.0 - r) * (1.0 + r);
        let mut a = as_.sqrt();
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        let asr = -(bs / as_ + hk) / 2.0;
        if asr > -100.0 {
            bvn = a * asr.exp() * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
        }
        if -hk < 100.0 {
            let b = bs.sqrt();
            bvn -= (-hk / 2.0).exp() * TWO_PI.sqrt() * normal_cdf(-b / a) * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for &(w, x) in quad {
            for is in [-1.0, 1.0] {
                let xs = (a * (is * x + 1.0)).powi(2);
                let rs = (1.0 - xs).sqrt();
                let asr = -(bs / xs + hk) / 2.0;
                if asr > -100.0 {
                    bvn += a * w * asr.exp() * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs - (1.0 + c * xs * (1.0 + d * xs)));
                }
            }
        }
        bvn = -bvn / TWO_PI;
    }
    if r > 0.0 {
        bvn + normal_cdf(-h.max(k))
    } else {
        let mut out = -bvn;
        if k > h {
            out += if h < 0.0 {
                normal_cdf(k) - normal_cdf(h)
            } else {
                normal_cdf(-h) - normal_cdf(-k)
            };
        }
        out
    }
}

/// `P(Z1 ≤ a, Z2 ≤ b)` for standard normals with correlation `rho`,
/// accepting `|rho| = 1` and infinite limits.
pub(crate) fn bvn_cdf_limit(a: f64, b: f64, rho: f64) -> f64 {
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        return 0.0;
    }
    if a == f64::INFINITY {
        return normal_cdf(b);
    }
    if b == f64::INFINITY {
        return normal_cdf(a);
    }
    if rho >= 1.0 {
        return normal_cdf(a.min(b));
    }
    if rho <= -1.0 {
        return (normal_cdf(a) - normal_cdf(-b)).max(0.0);
    }
    if rho <= -0.925 {
        // reflect onto positive correlation
        return (normal_cdf(a) - bvnd(-a, b, -rho)).clamp(0.0, 1.0);
    }
    bvnd(-a, -b, rho).clamp(0.0, 1.0)
}

/// `P(Z1 ≤ a, Z2 ≤ b)` for a standard bivariate normal with correlation
/// `rho ∈ (−1, 1)`.
pub fn bvn_cdf(a: f64, b: f64, rho: f64) -> Result<f64> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::Domain {
            what: "bvn_cdf correlation",
            value: rho,
        });
    }
    if a.is_nan() || b.is_nan() {
        return Err(Error::Domain {
            what: "bvn_cdf limit",
            value: f64::NAN,
        });
    }
    Ok(bvn_cdf_limit(a, b, rho))
}

/// `P(a1 ≤ Z1 ≤ b1, a2 ≤ Z2 ≤ b2)` by inclusion–exclusion.
pub(crate) fn rect_prob(a1: f64, b1: f64, a2: f64, b2: f64, rho: f64) -> f64 {
    if !(b1 > a1 && b2 > a2) {
        return 0.0;
    }
    (bvn_cdf_limit(b1, b2, rho) - bvn_cdf_limit(a1, b2, rho) - bvn_cdf_limit(b1, a2, rho)
        + bvn_cdf_limit(a1, a2, rho))
    .max(0.0)
}

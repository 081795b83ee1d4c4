//! Gaussian tail functions built on W. J. Cody's rational Chebyshev
//! approximations to the scaled complementary error function.
//!
//! Everything downstream (Stein solutions, Mills brackets, the tail
//! envelopes) goes through [`erfcx`], so `e^{x^2} erfc(x)` is always a single
//! bounded expression and never the product of an overflowing exponential
//! with an underflowing tail. Relative accuracy is close to machine epsilon
//! wherever the result is a normal `f64`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// `1/sqrt(pi)`.
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
/// `sqrt(2 pi)`.
pub const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

const SMALL: f64 = 0.468_75;
/// Above this `erfc` underflows to zero.
const ERFC_ZERO: f64 = 26.543;
/// Below this `erfcx` overflows.
const ERFCX_OVERFLOW: f64 = -26.628_735_713_751_4;

const A: [f64; 5] = [
    3.161_123_743_870_565_6,
    113.864_154_151_050_16,
    377.485_237_685_302,
    3_209.377_589_138_469_5,
    0.185_777_706_184_603_15,
];
const B: [f64; 4] = [
    23.601_290_952_344_12,
    244.024_637_934_444_17,
    1_282.616_526_077_372_3,
    2_844.236_833_439_170_6,
];
const C: [f64; 9] = [
    0.564_188_496_988_670_1,
    8.883_149_794_388_376,
    66.119_190_637_141_63,
    298.635_138_197_400_1,
    881.952_221_241_769_1,
    1_712.047_612_634_070_6,
    2_051.078_377_826_071_5,
    1_230.339_354_797_997_2,
    2.153_115_354_744_038_5e-8,
];
const D: [f64; 8] = [
    15.744_926_110_709_835,
    117.693_950_891_312_5,
    537.181_101_862_009_9,
    1_621.389_574_566_690_2,
    3_290.799_235_733_459_6,
    4_362.619_090_143_247,
    3_439.367_674_143_721_6,
    1_230.339_354_803_749_4,
];
const P: [f64; 6] = [
    0.305_326_634_961_232_36,
    0.360_344_899_949_804_45,
    0.125_781_726_111_229_26,
    0.016_083_785_148_742_275,
    6.587_491_615_298_378e-4,
    0.016_315_387_137_302_097,
];
const Q: [f64; 5] = [
    2.568_520_192_289_822,
    1.872_952_849_923_460_4,
    0.527_905_102_951_428_4,
    0.060_518_341_312_441_32,
    0.002_335_204_976_268_691_8,
];

/// `erf(x)/x` for `|x| <= 0.46875`, as a function of `z = x^2`.
fn erf_small(z: f64) -> f64 {
    let num = (((A[4] * z + A[0]) * z + A[1]) * z + A[2]) * z + A[3];
    let den = (((z + B[0]) * z + B[1]) * z + B[2]) * z + B[3];
    num / den
}

/// `erfcx(y)` for `0.46875 < y`.
fn erfcx_large(y: f64) -> f64 {
    if y <= 4.0 {
        let mut num = C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + C[i]) * y;
            den = (den + D[i]) * y;
        }
        (num + C[7]) / (den + D[7])
    } else {
        let z = 1.0 / (y * y);
        let mut num = P[5] * z;
        let mut den = z;
        for i in 0..4 {
            num = (num + P[i]) * z;
            den = (den + Q[i]) * z;
        }
        let r = z * (num + P[4]) / (den + Q[4]);
        (FRAC_1_SQRT_PI - r) / y
    }
}

/// `exp(-y^2)` with the square split so the rounding error of `y*y` is not
/// amplified by the exponential.
fn exp_neg_sq(y: f64) -> f64 {
    let head = (y * 16.0).trunc() / 16.0;
    let del = (y - head) * (y + head);
    (-head * head).exp() * (-del).exp()
}

fn exp_pos_sq(y: f64) -> f64 {
    let head = (y * 16.0).trunc() / 16.0;
    let del = (y - head) * (y + head);
    (head * head).exp() * del.exp()
}

/// Scaled complementary error function `e^{x^2} erfc(x)`.
///
/// Saturates at `f64::MAX` for very negative `x`.
pub fn erfcx(x: f64) -> f64 {
    let y = x.abs();
    if y <= SMALL {
        let z = y * y;
        return z.exp() * (1.0 - x * erf_small(z));
    }
    if x < ERFCX_OVERFLOW {
        return f64::MAX;
    }
    let r = erfcx_large(y);
    if x < 0.0 {
        2.0 * exp_pos_sq(y) - r
    } else {
        r
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    let y = x.abs();
    if y <= SMALL {
        return 1.0 - x * erf_small(y * y);
    }
    let tail = if y >= ERFC_ZERO {
        0.0
    } else {
        erfcx_large(y) * exp_neg_sq(y)
    };
    if x < 0.0 {
        2.0 - tail
    } else {
        tail
    }
}

/// Standard normal tail `P[Z > u]`.
pub fn normal_tail(u: f64) -> f64 {
    if u.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(u * FRAC_1_SQRT_2)
}

/// Standard normal CDF `P[Z <= u]`, computed as the tail at `-u`.
pub fn normal_cdf(u: f64) -> f64 {
    normal_tail(-u)
}

/// Standard normal density.
pub fn normal_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / SQRT_2PI
}

/// `e^{u^2/2} P[Z > u]`, bounded and smooth for every `u >= -37`.
pub fn scaled_normal_tail(u: f64) -> f64 {
    0.5 * erfcx(u * FRAC_1_SQRT_2)
}

/// `sqrt(2 pi) e^{u^2/2} P[Z > u]`, i.e. the Mills ratio `P[Z>u]/phi(u)`.
pub fn mills_ratio(u: f64) -> f64 {
    SQRT_2PI * scaled_normal_tail(u)
}

/// `E|Z|` for standard normal `Z`.
pub fn mean_abs_standard_normal() -> f64 {
    (2.0 / PI).sqrt()
}

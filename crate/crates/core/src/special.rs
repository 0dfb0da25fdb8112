//! Special functions: Gamma family, a lower incomplete Beta series and the
//! standard normal distribution.

use core::f64::consts::PI;

use libm::{erfc, exp, fabs, floor, log, pow, sin, sqrt};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_sum(z: f64) -> f64 {
    let mut acc = LANCZOS_COEFFS[0];
    for (k, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (z + k as f64);
    }
    acc
}

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && floor(x) == x
}

/// Euler Gamma function. Returns `NaN` at the poles.
pub fn gamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        return f64::NAN;
    }
    if x < 0.5 {
        return PI / (sin(PI * x) * gamma(1.0 - x));
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    sqrt(2.0 * PI) * pow(t, z + 0.5) * exp(-t) * lanczos_sum(z)
}

/// `ln |Γ(x)|`.
pub fn ln_gamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        return f64::INFINITY;
    }
    if x < 0.5 {
        return log(PI / fabs(sin(PI * x))) - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    0.5 * log(2.0 * PI) + (z + 0.5) * log(t) - t + log(lanczos_sum(z))
}

/// `1/Γ(x)`, entire: zero at the poles of Γ.
pub fn rgamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        return 0.0;
    }
    if x > 170.0 {
        return exp(-ln_gamma(x));
    }
    1.0 / gamma(x)
}

/// Complete Beta function `B(a, b)` for positive arguments.
pub fn beta(a: f64, b: f64) -> f64 {
    exp(ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b))
}

/// Lower incomplete Beta `∫_0^x s^{a-1} (1-s)^{b-1} ds` by its power series.
///
/// Intended for `x <= 1/2`, where the series converges at least geometrically.
pub fn incomplete_beta_lower(x: f64, a: f64, b: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&x) && a > 0.0);
    if x == 0.0 {
        return 0.0;
    }
    // Σ (1-b)_n / n! · x^{a+n} / (a+n)
    let mut coeff = 1.0;
    let mut xn = pow(x, a);
    let mut sum = xn / a;
    for n in 0..2000 {
        let nf = n as f64;
        coeff *= (nf + 1.0 - b) / (nf + 1.0);
        xn *= x;
        let term = coeff * xn / (a + nf + 1.0);
        sum += term;
        if fabs(term) <= 1e-17 * fabs(sum) {
            break;
        }
    }
    sum
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / core::f64::consts::SQRT_2)
}

/// Standard normal quantile (Wichura, algorithm AS 241, ~1e-16 relative).
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if fabs(q) <= 0.425 {
        let r = 0.180_625 - q * q;
        let num = ((((((2_509.080_928_730_122_7 * r + 33_430.575_583_588_13) * r + 67_265.770_927_008_7) * r
            + 45_921.953_931_549_87)
            * r
            + 13_731.693_765_509_46)
            * r
            + 1_971.590_950_306_551_3)
            * r
            + 133.141_667_891_784_38)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((5_226.495_278_852_545 * r + 28_729.085_735_721_943) * r + 39_307.895_800_092_71) * r
            + 21_213.794_301_586_597)
            * r
            + 5_394.196_021_424_751)
            * r
            + 687.187_007_492_057_9)
            * r
            + 42.313_330_701_600_91)
            * r
            + 1.0;
        return q * num / den;
    }
    let r0 = if q < 0.0 { p } else { 1.0 - p };
    let mut r = sqrt(-log(r0));
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 0.022_723_844_989_269_184) * r + 0.241_780_725_177_450_6)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r + 0.015_198_666_563_616_457)
            * r
            + 0.148_103_976_427_480_08)
            * r
            + 0.689_767_334_985_1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den =
            ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r + 1.846_318_317_510_054_8e-5) * r
                + 7.868_691_311_456_133e-4)
                * r
                + 0.014_875_361_290_850_615)
                * r
                + 0.136_929_880_922_735_8)
                * r
                + 0.599_832_206_555_888)
                * r
                + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

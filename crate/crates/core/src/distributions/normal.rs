//! Standard normal CDF, survival function and quantile, with log-space
//! variants that stay finite arbitrarily deep into the tails.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// ln √(2π)
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

// Above this the survival function is evaluated through the Mills-ratio
// continued fraction; erfc would drift into subnormals.
const CF_THRESHOLD: f64 = 37.0;

#[inline]
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

#[inline]
pub fn log_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Φ(x).
pub fn cdf(x: f64) -> f64 {
    sf(-x)
}

/// 1 − Φ(x), accurate in relative terms for large positive `x`.
pub fn sf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= CF_THRESHOLD {
        0.5 * libm::erfc(x * FRAC_1_SQRT_2)
    } else {
        log_sf(x).exp()
    }
}

/// ln(1 − Φ(x)).
pub fn log_sf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    if x < 0.0 {
        return (-sf(-x)).ln_1p();
    }
    if x <= CF_THRESHOLD {
        return (0.5 * libm::erfc(x * FRAC_1_SQRT_2)).ln();
    }
    // x²/2 split into exact head and rounding tail.
    let hi = x * x;
    let lo = x.mul_add(x, -hi);
    -0.5 * hi - 0.5 * lo - LN_SQRT_2PI + mills_ratio_cf(x).ln()
}

/// ln Φ(x).
#[inline]
pub fn log_cdf(x: f64) -> f64 {
    log_sf(-x)
}

/// Mills ratio (1 − Φ(x))/φ(x) by backward evaluation of Laplace's
/// continued fraction; only used for large `x`.
fn mills_ratio_cf(x: f64) -> f64 {
    let mut t = x;
    for k in (1..=40).rev() {
        t = x + k as f64 / t;
    }
    1.0 / t
}

/// φ(x)/(1 − Φ(x)), the inverse Mills ratio (hazard of the standard normal).
pub fn hazard(x: f64) -> f64 {
    (log_pdf(x) - log_sf(x)).exp()
}

/// `hazard(x) − x`, kept accurate for large `x` where the two terms nearly
/// cancel (it behaves like `1/x` there).
pub fn hazard_excess(x: f64) -> f64 {
    if x <= 10.0 {
        return hazard(x) - x;
    }
    // hazard(x) = x + 1/(x + 2/(x + 3/(x + …)))
    let mut t = x;
    for k in (2..=80).rev() {
        t = x + k as f64 / t;
    }
    1.0 / t
}

/// Φ⁻¹(p) via Wichura's AS 241 (PPND16) followed by one Newton step.
pub fn quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let x = ppnd16(p);
    // polish against the accurate CDF on the tail side
    if p < 0.5 {
        let d = pdf(x);
        if d > 0.0 {
            return x - (cdf(x) - p) / d;
        }
    } else {
        let d = pdf(x);
        if d > 0.0 {
            return x + (sf(x) - (1.0 - p)) / d;
        }
    }
    x
}

/// Returns `x` with ln(1 − Φ(x)) = `log_q`, for any `log_q ≤ 0`.
pub fn isf_log(log_q: f64) -> f64 {
    if log_q.is_nan() || log_q > 0.0 {
        return f64::NAN;
    }
    if log_q == 0.0 {
        return f64::NEG_INFINITY;
    }
    if log_q == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    if log_q > -std::f64::consts::LN_2 {
        // x < 0: Φ(x) = 1 − q is below one half and computed without loss.
        return quantile(-log_q.exp_m1());
    }
    let mut x = if log_q > -700.0 {
        -ppnd16(log_q.exp())
    } else {
        // Asymptotic inversion of ln Q(x) ≈ −x²/2 − ln(x√(2π)).
        let mut g = (-2.0 * log_q).sqrt();
        for _ in 0..4 {
            g = (-2.0 * (log_q + g.ln() + LN_SQRT_2PI)).max(0.0).sqrt();
        }
        g
    };
    for _ in 0..4 {
        let f = log_sf(x) - log_q;
        let slope = -hazard(x);
        if !(slope.is_finite() && slope != 0.0) {
            break;
        }
        let step = f / slope;
        x -= step;
        if step.abs() < 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

fn ppnd16(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r + 6.726_577_092_700_87e4) * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r + 3.930_789_580_009_271e4) * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den =
            ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r + 1.519_866_656_361_645_7e-2) * r
                + 1.481_039_764_274_800_8e-1)
                * r
                + 6.897_673_349_851e-1)
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
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
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
                + 1.487_536_129_085_061_5e-2)
                * r
                + 1.369_298_809_227_358e-1)
                * r
                + 5.998_322_065_558_88e-1)
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

#[cfg(test)]
mod tests {
    use super::*;

    // 40-digit reference values of Q(x) = 1 − Φ(x).
    #[allow(clippy::excessive_precision)]
    const REFERENCE_SF: [(f64, f64); 14] = [
        (-10.0, 0.999_999_999_999_999_999_999_992_380_146_975_839_473_9),
        (-5.0, 0.999_999_713_348_428_120_806_088_326_247_667_125_354_7),
        (-1.0, 0.841_344_746_068_542_948_585_232_545_632_037_922_477_9),
        (0.5, 0.308_537_538_725_986_896_362_295_389_391_662_260_116_4),
        (2.0, 0.022_750_131_948_179_207_200_282_637_166_533_437_471_78),
        (5.0, 2.866_515_718_791_939_116_737_523_328_746_453_538_544e-7),
        (8.0, 6.220_960_574_271_784_123_515_995_172_588_188_422_489e-16),
        (10.0, 7.619_853_024_160_526_065_973_343_251_599_308_363_504e-24),
        (20.0, 2.753_624_118_606_233_695_075_622_780_857_465_332_807e-89),
        (30.0, 4.906_713_927_148_187_059_533_809_256_580_190_471_997e-198),
        (37.0, 5.725_571_222_524_576_822_683_192_548_273_201_656_433e-300),
        (0.0, 0.5),
        (1.96, 1.0 - 0.975_002_104_851_779_565_863_415_730_959_162_809_977_5),
        (-1.96, 0.975_002_104_851_779_565_863_415_730_959_162_809_977_5),
    ];

    #[test]
    fn survival_relative_error() {
        for &(x, q) in &REFERENCE_SF {
            let got = sf(x);
            assert!(((got - q) / q).abs() <= 1e-12, "sf({x}) = {got:e}, want {q:e}");
            assert!(((log_sf(x) - q.ln()) / q.ln().abs().max(1.0)).abs() <= 1e-12);
        }
    }

    #[test]
    fn cdf_special_values() {
        assert_eq!(cdf(0.0), 0.5);
        assert_eq!(cdf(f64::INFINITY), 1.0);
        assert_eq!(cdf(f64::NEG_INFINITY), 0.0);
        assert!((cdf(1.96) - 0.975_002_104_851_779_6).abs() < 1e-15);
    }

    #[test]
    fn log_sf_continuous_across_switch() {
        let a = log_sf(CF_THRESHOLD);
        let b = log_sf(CF_THRESHOLD + 1e-9);
        let slope = -hazard(CF_THRESHOLD);
        assert!((b - a - slope * 1e-9).abs() < 1e-10, "{a} {b}");
    }

    #[test]
    fn log_sf_deep_tail_matches_asymptotics() {
        // ln Q(100) from the asymptotic series −x²/2 − ln(x√2π) + ln(1 − 1/x² + 3/x⁴)
        let x: f64 = 100.0;
        let approx = -0.5 * x * x - (x * (2.0 * PI).sqrt()).ln() + (1.0 - 1.0 / (x * x) + 3.0 / x.powi(4)).ln();
        assert!((log_sf(x) - approx).abs() < 1e-9);
    }

    #[test]
    fn hazard_excess_is_continuous_and_asymptotic() {
        let a = hazard(10.0) - 10.0;
        assert!((hazard_excess(10.0 + 1e-12) - a).abs() < 1e-11 * a);
        let x = 1e8;
        assert!((hazard_excess(x) * x - 1.0).abs() < 1e-14);
        // hazard(0) = √(2/π)
        assert!((hazard_excess(0.0) - 0.797_884_560_802_865_4).abs() < 1e-15);
    }

    #[test]
    fn quantile_round_trip() {
        for &p in &[1e-300, 1e-20, 1e-8, 0.01, 0.2, 0.5, 0.7, 0.975, 1.0 - 1e-10] {
            let x = quantile(p);
            let back = if p < 0.5 { cdf(x) } else { 1.0 - sf(x) };
            assert!(((back - p) / p).abs() < 1e-12, "p={p} x={x} back={back}");
        }
    }

    #[test]
    fn isf_log_inverts_log_sf() {
        for &x in &[-3.0, -0.2, 0.0, 0.4, 2.0, 8.0, 30.0, 38.0, 60.0, 300.0] {
            let lq = log_sf(x);
            let back = isf_log(lq);
            assert!((back - x).abs() < 1e-9 * x.abs().max(1.0), "x={x} back={back}");
        }
    }
}

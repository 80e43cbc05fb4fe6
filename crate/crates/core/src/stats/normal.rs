//! Standard normal density, distribution and quantile functions plus the
//! inverse Mills ratio, written for accuracy deep into both tails.

use std::f64::consts::FRAC_1_SQRT_2;

use libm::erfc;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density φ(x).
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// log φ(x).
#[inline]
pub fn norm_log_pdf(x: f64) -> f64 {
    -LN_SQRT_2PI - 0.5 * x * x
}

/// Standard normal distribution function Φ(x).
///
/// Computed through the complementary error function so the lower tail keeps
/// full relative precision until it underflows (around x = -37.5).
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Density and distribution function evaluated together.
pub fn std_normal(x: f64) -> (f64, f64) {
    (norm_pdf(x), norm_cdf(x))
}

/// log Φ(x), finite for every finite x.
pub fn norm_log_cdf(x: f64) -> f64 {
    if x > -20.0 {
        let c = norm_cdf(x);
        if x > 0.0 {
            // Φ(x) close to 1: use log1p on the upper tail.
            (-norm_cdf(-x)).ln_1p()
        } else {
            c.ln()
        }
    } else {
        // log Φ(x) = log φ(x) - log(-x / mills) where mills = φ(x)/Φ(x) / (-x)
        norm_log_pdf(x) - inverse_mills_selected(x).ln()
    }
}

/// Continued fraction for the Mills ratio R(t) = Φ(-t)/φ(t), t > 0 large.
fn mills_ratio_cf(t: f64) -> f64 {
    // R(t) = 1/(t + 1/(t + 2/(t + 3/(t + ...)))), evaluated bottom-up.
    let mut acc = t;
    for k in (1..=60).rev() {
        acc = t + k as f64 / acc;
    }
    1.0 / acc
}

fn inverse_mills_selected(x: f64) -> f64 {
    if x < -10.0 {
        1.0 / mills_ratio_cf(-x)
    } else {
        norm_pdf(x) / norm_cdf(x)
    }
}

/// Inverse Mills ratio.
///
/// With `selected = true` this is λ(x) = φ(x)/Φ(x), the correction applied to
/// units whose outcome is observed. With `selected = false` it returns the
/// correction for unobserved units, -φ(x)/Φ(-x) = -λ(-x).
pub fn inverse_mills(x: f64, selected: bool) -> f64 {
    if selected {
        inverse_mills_selected(x)
    } else {
        -inverse_mills_selected(-x)
    }
}

/// δ = λ(λ + x) for the given branch; lies in (0, 1).
pub fn mills_delta(x: f64, selected: bool) -> f64 {
    let lambda = inverse_mills(x, selected);
    lambda * (lambda + x)
}

// Wichura (1988), algorithm AS 241, PPND16.
const A: [f64; 8] = [
    3.387_132_872_796_366_608,
    1.331_416_678_917_843_774_5e2,
    1.971_590_950_306_551_442_7e3,
    1.373_169_376_550_946_112_5e4,
    4.592_195_393_154_987_145_7e4,
    6.726_577_092_700_870_085_3e4,
    3.343_057_558_358_812_810_5e4,
    2.509_080_928_730_122_672_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091_125_2e1,
    6.871_870_074_920_579_083e2,
    5.394_196_021_424_751_107_7e3,
    2.121_379_430_158_659_586_7e4,
    3.930_789_580_009_271_061e4,
    2.872_908_573_572_194_267_4e4,
    5.226_495_278_852_854_561e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    2.417_807_251_774_506_117_7e-1,
    2.272_384_498_926_918_458_33e-2,
    7.745_450_142_783_414_076_4e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    6.897_673_349_851_000_045_5e-1,
    1.481_039_764_274_800_745_9e-1,
    1.519_866_656_361_645_719_66e-2,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    2.965_605_718_285_048_912_3e-1,
    2.653_218_952_657_612_309_3e-2,
    1.242_660_947_388_078_438_6e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_879_376_9e-1,
    1.369_298_809_227_358_053_1e-1,
    1.487_536_129_085_061_485_25e-2,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

fn poly(c: &[f64; 8], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// Standard normal quantile Φ⁻¹(p) for p in (0, 1).
///
/// AS 241 followed by one Newton correction against `norm_cdf`.
pub fn norm_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    let q = p - 0.5;
    let x = if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        q * poly(&A, r) / poly(&B, r)
    } else {
        let r = if q < 0.0 { p } else { 1.0 - p };
        let r = (-r.ln()).sqrt();
        let v = if r <= 5.0 {
            let r = r - 1.6;
            poly(&C, r) / poly(&D, r)
        } else {
            let r = r - 5.0;
            poly(&E, r) / poly(&F, r)
        };
        if q < 0.0 {
            -v
        } else {
            v
        }
    };
    // Newton step on whichever tail keeps relative precision.
    let pdf = norm_pdf(x);
    if pdf > 0.0 {
        let err = if x < 0.0 {
            norm_cdf(x) - p
        } else {
            (1.0 - p) - norm_cdf(-x)
        };
        let step = if x < 0.0 { err / pdf } else { -err / pdf };
        if step.is_finite() {
            return x - step;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn values_at_zero() {
        let (pdf, cdf) = std_normal(0.0);
        assert!((pdf - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-16);
        assert_eq!(cdf, 0.5);
    }

    #[test]
    fn upper_quantile_975() {
        // Reference value: Φ⁻¹(0.975) to 16 digits.
        assert!((norm_cdf(1.959_964) - 0.975).abs() < 1e-7);
        assert!((norm_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-13);
    }

    #[test]
    fn deep_lower_tail_does_not_underflow() {
        let c = norm_cdf(-8.0);
        // Φ(-8) = 6.220960574271784e-16
        assert!(c > 0.0 && c < 1e-14);
        assert!((c - 6.220_960_574_271_784e-16).abs() / c < 1e-12);
        assert!(norm_cdf(-37.0) > 0.0);
    }

    #[test]
    fn mills_reference_values() {
        // 2/√(2π) and φ(-2)/Φ(-2) from high-precision evaluation.
        assert!((inverse_mills(0.0, true) - 0.797_884_560_802_865_4).abs() < 1e-15);
        assert!((inverse_mills(-2.0, true) - 2.373_215_532_822_843).abs() < 1e-12);
        assert!(inverse_mills(8.0, true) < 1e-13);
        assert!((inverse_mills(0.0, false) + 0.797_884_560_802_865_4).abs() < 1e-15);
    }

    #[test]
    fn mills_branches_are_continuous_at_cf_switch() {
        let a = norm_pdf(-10.0) / norm_cdf(-10.0);
        let b = 1.0 / mills_ratio_cf(10.0);
        assert!((a - b).abs() / a < 1e-13);
    }

    #[test]
    fn log_cdf_matches_direct_and_asymptotic() {
        for &x in &[-30.0, -19.9, -20.1, -5.0, 0.0, 3.0, 9.0] {
            let direct = norm_cdf(x).ln();
            let got = norm_log_cdf(x);
            assert!((got - direct).abs() <= 1e-12 * direct.abs() + 1e-18, "x={x}");
        }
        // Φ(-40) underflows, log Φ(-40) does not.
        assert!(norm_log_cdf(-40.0).is_finite());
        assert!((norm_log_cdf(-40.0) - (-804.608_442_013_754_4)).abs() < 1e-9);
    }
}

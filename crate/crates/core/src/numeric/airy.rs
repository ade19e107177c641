//! Zeros of the Airy function `Ai` and of its derivative `Ai'`.

#![allow(clippy::excessive_precision)]

use std::f64::consts::PI;

// a_k, k = 1..=20 (zeros of Ai).
const AI_ZEROS: [f64; 20] = [
    -2.338_107_410_459_767_038_5,
    -4.087_949_444_130_970_616_6,
    -5.520_559_828_095_551_059_1,
    -6.786_708_090_071_758_998_8,
    -7.944_133_587_120_853_123_1,
    -9.022_650_853_340_980_380_2,
    -10.040_174_341_558_085_930_6,
    -11.008_524_303_733_262_893_2,
    -11.936_015_563_236_262_517_0,
    -12.828_776_752_865_757_200_4,
    -13.691_489_035_210_717_928_3,
    -14.527_829_951_775_334_982_1,
    -15.340_755_135_977_996_857_2,
    -16.132_685_156_945_771_439_4,
    -16.905_633_997_429_942_627_0,
    -17.661_300_105_697_057_509_3,
    -18.401_132_599_207_115_415_9,
    -19.126_380_474_246_952_144_1,
    -19.838_129_891_721_499_701_0,
    -20.537_332_907_677_566_360_0,
];

// a'_k, k = 1..=20 (zeros of Ai').
const AI_PRIME_ZEROS: [f64; 20] = [
    -1.018_792_971_647_471_089_0,
    -3.248_197_582_179_836_537_9,
    -4.820_099_211_178_735_639_4,
    -6.163_307_355_639_486_547_6,
    -7.372_177_255_047_770_177_1,
    -8.488_486_734_019_722_132_9,
    -9.535_449_052_433_547_470_7,
    -10.527_660_396_957_407_282_0,
    -11.475_056_633_480_245_295_0,
    -12.384_788_371_845_747_325_5,
    -13.262_218_961_665_210_382_4,
    -14.111_501_970_462_995_281_6,
    -14.935_937_196_720_517_466_5,
    -15.738_201_373_692_538_302_7,
    -16.520_503_825_433_793_542_2,
    -17.284_695_050_216_437_356_6,
    -18.032_344_622_504_393_395_3,
    -18.764_798_437_665_954_740_2,
    -19.483_221_656_567_231_177_5,
    -20.188_631_509_463_373_153_7,
];

fn t_series(t: f64) -> f64 {
    let u = 1.0 / (t * t);
    t.powf(2.0 / 3.0)
        * (1.0
            + u * (5.0 / 48.0
                + u * (-5.0 / 36.0 + u * (77_125.0 / 82_944.0 + u * (-108_056_875.0 / 6_967_296.0)))))
}

fn u_series(t: f64) -> f64 {
    let u = 1.0 / (t * t);
    t.powf(2.0 / 3.0)
        * (1.0
            + u * (-7.0 / 48.0
                + u * (35.0 / 288.0 + u * (-181_223.0 / 207_360.0 + u * (18_683_371.0 / 1_244_160.0)))))
}

/// k-th zero of `Ai` (k ≥ 1), negative.
pub fn ai_zero(k: usize) -> f64 {
    assert!(k >= 1, "Airy zeros are indexed from 1");
    if k <= AI_ZEROS.len() {
        AI_ZEROS[k - 1]
    } else {
        -t_series(3.0 * PI * (4.0 * k as f64 - 1.0) / 8.0)
    }
}

/// k-th zero of `Ai'` (k ≥ 1), negative.
pub fn ai_prime_zero(k: usize) -> f64 {
    assert!(k >= 1, "Airy zeros are indexed from 1");
    if k <= AI_PRIME_ZEROS.len() {
        AI_PRIME_ZEROS[k - 1]
    } else {
        -u_series(3.0 * PI * (4.0 * k as f64 - 3.0) / 8.0)
    }
}

/// Asymptotic-series zero, exposed for cross-checks against the table.
pub fn ai_zero_asymptotic(k: usize) -> f64 {
    -t_series(3.0 * PI * (4.0 * k as f64 - 1.0) / 8.0)
}

pub fn ai_prime_zero_asymptotic(k: usize) -> f64 {
    -u_series(3.0 * PI * (4.0 * k as f64 - 3.0) / 8.0)
}

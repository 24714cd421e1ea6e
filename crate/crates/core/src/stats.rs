//! Scalar statistics used by the acquisition function and the lengthscale
//! prior: standard normal pdf/cdf and the gamma log-density.

use crate::scalar::Real;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Complementary error function, rational approximations with relative error
/// below 1e-15 in double precision (Cody's decomposition into three ranges).
pub fn erfc<T: Real>(x: T) -> T {
    const A: [f64; 5] = [
        3.161_123_743_870_565_6e0,
        1.138_641_541_510_501_56e2,
        3.774_852_376_853_020_2e2,
        3.209_377_589_138_469_47e3,
        1.857_777_061_846_031_53e-1,
    ];
    const B: [f64; 4] = [
        2.360_129_095_234_412_09e1,
        2.440_246_379_344_441_73e2,
        1.282_616_526_077_372_28e3,
        2.844_236_833_439_170_62e3,
    ];
    const C: [f64; 9] = [
        5.641_884_969_886_700_89e-1,
        8.883_149_794_388_375_94e0,
        6.611_919_063_714_162_95e1,
        2.986_351_381_974_001_31e2,
        8.819_522_212_417_690_9e2,
        1.712_047_612_634_070_58e3,
        2.051_078_377_826_071_47e3,
        1.230_339_354_797_997_25e3,
        2.153_115_354_744_038_46e-8,
    ];
    const D: [f64; 8] = [
        1.574_492_611_070_983_47e1,
        1.176_939_508_913_124_99e2,
        5.371_811_018_620_098_58e2,
        1.621_389_574_566_690_19e3,
        3.290_799_235_733_459_63e3,
        4.362_619_090_143_247_16e3,
        3.439_367_674_143_721_64e3,
        1.230_339_354_803_749_42e3,
    ];
    const P: [f64; 6] = [
        3.053_266_349_612_323_44e-1,
        3.603_448_999_498_044_39e-1,
        1.257_817_261_112_292_46e-1,
        1.608_378_514_874_227_66e-2,
        6.587_491_615_298_378_03e-4,
        1.631_538_713_730_209_78e-2,
    ];
    const Q: [f64; 5] = [
        2.568_520_192_289_822_42e0,
        1.872_952_849_923_460_47e0,
        5.279_051_029_514_284_12e-1,
        6.051_834_131_244_131_91e-2,
        2.335_204_976_268_691_85e-3,
    ];
    const INV_SQRT_PI: f64 = 5.641_895_835_477_562_9e-1;

    let y = x.abs();
    let sixteen = T::of(16.0);

    let result = if y <= T::of(0.46875) {
        let z = y * y;
        let mut num = T::of(A[4]) * z;
        let mut den = z;
        for i in 0..3 {
            num = (num + T::of(A[i])) * z;
            den = (den + T::of(B[i])) * z;
        }
        let erf = x * (num + T::of(A[3])) / (den + T::of(B[3]));
        return T::one() - erf;
    } else if y <= T::of(4.0) {
        let mut num = T::of(C[8]) * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + T::of(C[i])) * y;
            den = (den + T::of(D[i])) * y;
        }
        let r = (num + T::of(C[7])) / (den + T::of(D[7]));
        let ysq = (y * sixteen).trunc() / sixteen;
        let del = (y - ysq) * (y + ysq);
        (-ysq * ysq).exp() * (-del).exp() * r
    } else if y < T::of(26.6) {
        let z = T::one() / (y * y);
        let mut num = T::of(P[5]) * z;
        let mut den = z;
        for i in 0..4 {
            num = (num + T::of(P[i])) * z;
            den = (den + T::of(Q[i])) * z;
        }
        let mut r = z * (num + T::of(P[4])) / (den + T::of(Q[4]));
        r = (T::of(INV_SQRT_PI) - r) / y;
        let ysq = (y * sixteen).trunc() / sixteen;
        let del = (y - ysq) * (y + ysq);
        (-ysq * ysq).exp() * (-del).exp() * r
    } else {
        T::zero()
    };

    if x < T::zero() {
        T::of(2.0) - result
    } else {
        result
    }
}

pub fn std_normal_pdf<T: Real>(u: T) -> T {
    T::of(INV_SQRT_2PI) * (-u * u / T::of(2.0)).exp()
}

pub fn std_normal_cdf<T: Real>(u: T) -> T {
    T::of(0.5) * erfc(-u / T::of(SQRT_2))
}

/// Natural log of the gamma function for positive arguments (Lanczos, g = 7).
pub fn ln_gamma<T: Real>(z: T) -> T {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if z < T::of(0.5) {
        // Reflection keeps precision near zero.
        let pi = T::of(std::f64::consts::PI);
        return (pi / (pi * z).sin()).ln() - ln_gamma(T::one() - z);
    }
    let z = z - T::one();
    let mut x = T::of(COEF[0]);
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        x = x + T::of(c) / (z + T::of(i as f64));
    }
    let t = z + T::of(7.5);
    T::of(0.918_938_533_204_672_74) + (z + T::of(0.5)) * t.ln() - t + x.ln()
}

/// Log-density of Gamma(shape, rate) at `a`:
/// `shape·ln(rate) + (shape−1)·ln(a) − rate·a − ln Γ(shape)`.
pub fn gamma_log_density<T: Real>(a: T, shape: T, rate: T) -> T {
    debug_assert!(a > T::zero() && shape > T::zero() && rate > T::zero());
    shape * rate.ln() + (shape - T::one()) * a.ln() - rate * a - ln_gamma(shape)
}

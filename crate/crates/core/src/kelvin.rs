//! Kelvin functions of the second kind of order 1/3.
//!
//! `Ker(x) + i Kei(x) = exp(-i pi/6) K_{1/3}(x exp(i pi/4))`. Below the crossover the
//! ascending series for `I_{-1/3} - I_{1/3}` is summed in double-double arithmetic,
//! since the two series cancel to about `exp(-sqrt(2) x)`. Above it the Hankel
//! asymptotic expansion is used in plain complex arithmetic.

use num_complex::Complex64;
use thiserror::Error;
use twofloat::TwoFloat;

use crate::analytic::gauss_integrate;

pub const ORDER: f64 = 1.0 / 3.0;
pub const DEFAULT_CROSSOVER: f64 = 15.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KelvinError {
    #[error("Kelvin functions need a positive argument, got {0}")]
    NonPositive(f64),
    #[error("crossover argument must be positive and finite, got {0}")]
    Crossover(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KelvinPair {
    pub ker: f64,
    pub kei: f64,
}

impl KelvinPair {
    pub fn abs(&self) -> f64 {
        self.ker.hypot(self.kei)
    }

    fn from_complex(z: Complex64) -> Self {
        Self { ker: z.re, kei: z.im }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Series,
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kelvin13 {
    crossover: f64,
}

impl Default for Kelvin13 {
    fn default() -> Self {
        Self { crossover: DEFAULT_CROSSOVER }
    }
}

impl Kelvin13 {
    pub fn new(crossover: f64) -> Result<Self, KelvinError> {
        if crossover > 0.0 && crossover.is_finite() {
            Ok(Self { crossover })
        } else {
            Err(KelvinError::Crossover(crossover))
        }
    }

    pub fn crossover(&self) -> f64 {
        self.crossover
    }

    pub fn branch(&self, x: f64) -> Branch {
        if x < self.crossover {
            Branch::Series
        } else {
            Branch::Asymptotic
        }
    }

    pub fn eval(&self, x: f64) -> Result<KelvinPair, KelvinError> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(KelvinError::NonPositive(x));
        }
        Ok(match self.branch(x) {
            Branch::Series => series(x),
            Branch::Asymptotic => asymptotic(x),
        })
    }
}

pub fn kelvin13(x: f64) -> Result<KelvinPair, KelvinError> {
    Kelvin13::default().eval(x)
}

#[derive(Clone, Copy)]
struct Cdd {
    re: TwoFloat,
    im: TwoFloat,
}

impl Cdd {
    fn mul(self, o: Cdd) -> Cdd {
        Cdd { re: self.re * o.re - self.im * o.im, im: self.re * o.im + self.im * o.re }
    }

    fn scale(self, s: TwoFloat) -> Cdd {
        Cdd { re: self.re * s, im: self.im * s }
    }
}

/// `a / b` with one Newton correction; the crate's own quotient is only f64-accurate.
fn div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let q = TwoFloat::from(a.hi() / b.hi());
    q + TwoFloat::from(f64::from(a - b * q) / b.hi())
}

fn dd(hi: f64, lo: f64) -> TwoFloat {
    TwoFloat::new_add(hi, lo)
}

fn gamma_one_third() -> TwoFloat {
    dd(2.678_938_534_707_747_5, 1.794_779_864_822_524_4e-16)
}

fn gamma_two_thirds() -> TwoFloat {
    dd(1.354_117_939_426_400_5, -4.623_120_391_136_641_6e-17)
}

fn pi_over_sqrt3() -> TwoFloat {
    dd(1.813_799_364_234_217_8, 1.372_758_647_784_072e-17)
}

/// Ascending series, valid for any `x > 0` but used only below the crossover.
pub fn series(x: f64) -> KelvinPair {
    let third = TwoFloat::from(1.0) / 3.0;
    let xd = TwoFloat::from(x);
    let q = xd * xd / 4.0;
    let c = (xd / 2.0).cbrt();
    // t_k = q^k / (k! Gamma(k + 1 -+ 1/3))
    let one = TwoFloat::from(1.0);
    let mut tm = div(one, gamma_two_thirds());
    let mut tp = div(one, gamma_one_third()) * 3.0;
    let zero = TwoFloat::from(0.0);
    let mut sm = Cdd { re: zero, im: zero };
    let mut sp = sm;
    let eps = 1e-34;
    let mut k = 0usize;
    loop {
        match k % 4 {
            0 => {
                sm.re += tm;
                sp.re += tp;
            }
            1 => {
                sm.im += tm;
                sp.im += tp;
            }
            2 => {
                sm.re -= tm;
                sp.re -= tp;
            }
            _ => {
                sm.im -= tm;
                sp.im -= tp;
            }
        }
        let big = f64::from(sm.re.abs() + sm.im.abs()).max(1.0);
        if k as f64 > q.hi().sqrt() && f64::from(tm.abs()) < eps * big {
            break;
        }
        let kp = TwoFloat::from((k + 1) as f64);
        tm = div(tm * q, kp * (kp - third));
        tp = div(tp * q, kp * (kp + third));
        k += 1;
    }
    // exp(-i pi/4) and exp(-i pi/12)
    let s2 = TwoFloat::from(2.0).sqrt();
    let s6 = TwoFloat::from(6.0).sqrt();
    let r2 = s2 / 2.0;
    let em4 = Cdd { re: r2, im: -r2 };
    let em12 = Cdd { re: (s6 + s2) / 4.0, im: -(s6 - s2) / 4.0 };
    let a = em4.mul(sm).scale(div(one, c));
    let b = em12.mul(sp).scale(c);
    let k = pi_over_sqrt3();
    KelvinPair { ker: f64::from((a.re - b.re) * k), kei: f64::from((a.im - b.im) * k) }
}

/// Hankel expansion `sqrt(pi/2w) e^{-w} sum a_k w^{-k}`, truncated at its smallest term.
pub fn asymptotic(x: f64) -> KelvinPair {
    let w = Complex64::from_polar(x, std::f64::consts::FRAC_PI_4);
    let mu = 4.0 * ORDER * ORDER;
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let j = (2 * k - 1) as f64;
        let next = term * (mu - j * j) / (8.0 * k as f64 * w);
        let mag = next.norm();
        if mag >= last {
            break;
        }
        term = next;
        sum += term;
        last = mag;
        if mag < 1e-17 * sum.norm() {
            break;
        }
    }
    let k = (std::f64::consts::PI / (2.0 * w)).sqrt() * (-w).exp() * sum;
    KelvinPair::from_complex(Complex64::from_polar(1.0, -std::f64::consts::FRAC_PI_6) * k)
}

/// Terms `(exponent p, coefficient)` with `Ker + i Kei = sum coeff (x/2)^p`, `k < terms`.
pub fn power_series(terms: usize) -> Vec<(f64, Complex64)> {
    let g23 = f64::from(gamma_two_thirds());
    let g43 = f64::from(gamma_one_third()) / 3.0;
    let k0 = f64::from(pi_over_sqrt3());
    let em4 = Complex64::from_polar(k0, -std::f64::consts::FRAC_PI_4);
    let em12 = Complex64::from_polar(k0, -std::f64::consts::PI / 12.0);
    let mut out = Vec::with_capacity(2 * terms);
    let (mut gm, mut gp, mut fact) = (g23, g43, 1.0);
    let mut ik = Complex64::new(1.0, 0.0);
    for k in 0..terms {
        let kf = k as f64;
        out.push((2.0 * kf - ORDER, em4 * ik / (fact * gm)));
        out.push((2.0 * kf + ORDER, -em12 * ik / (fact * gp)));
        fact *= kf + 1.0;
        gm *= kf + 1.0 - ORDER;
        gp *= kf + 1.0 + ORDER;
        ik *= Complex64::i();
    }
    out
}

const HEAD_SPLIT: f64 = 2.0;
const TAIL_END: f64 = 70.0;

/// Hadamard finite part of `int_0^u0 u^{-2} (Ker, Kei)(u) du`, termwise on the series.
pub fn finite_part_head(u0: f64) -> KelvinPair {
    let mut acc = Complex64::new(0.0, 0.0);
    for (p, c) in power_series(40) {
        acc += c * 2f64.powf(-p) * u0.powf(p - 1.0) / (p - 1.0);
    }
    KelvinPair::from_complex(acc)
}

/// Ordinary integral `int_u0^inf u^{-2} (Ker, Kei)(u) du` with `u0 > 0`.
pub fn tail_integral(u0: f64) -> Result<KelvinPair, KelvinError> {
    if !(u0 > 0.0) {
        return Err(KelvinError::NonPositive(u0));
    }
    if u0 < HEAD_SPLIT {
        let total = finite_part_integral();
        let head = finite_part_head(u0);
        return Ok(KelvinPair { ker: total.ker - head.ker, kei: total.kei - head.kei });
    }
    Ok(quadrature_tail(u0))
}

fn quadrature_tail(u0: f64) -> KelvinPair {
    if u0 >= TAIL_END {
        return KelvinPair { ker: 0.0, kei: 0.0 };
    }
    let kv = Kelvin13::default();
    let panels = ((TAIL_END - u0) * 2.0).ceil() as usize;
    let f = |part: fn(&KelvinPair) -> f64| {
        gauss_integrate(|u| part(&kv.eval(u).expect("positive node")) / (u * u), u0, TAIL_END, panels, 16)
    };
    KelvinPair { ker: f(|p| p.ker), kei: f(|p| p.kei) }
}

/// `FP int_0^inf u^{-2} (Ker, Kei)(u) du`.
pub fn finite_part_integral() -> KelvinPair {
    let head = finite_part_head(HEAD_SPLIT);
    let tail = quadrature_tail(HEAD_SPLIT);
    KelvinPair { ker: head.ker + tail.ker, kei: head.kei + tail.kei }
}

#[cfg(test)]
mod tests {
    use super::*;

    // 40-digit reference values of exp(-i pi/6) K_{1/3}(x e^{i pi/4})
    const REF: [(f64, f64, f64); 6] = [
        (0.5, 0.391_085_533_911_846_246_21, -1.086_891_742_744_607_539_4),
        (1.0, -0.013_470_459_793_804_911_522, -0.591_858_312_400_954_923_48),
        (2.0, -0.142_157_960_122_264_933_18, -0.155_264_724_320_842_989_1),
        (5.0, -0.004_302_157_479_049_388_822_9, 0.015_594_748_339_715_372_566),
        (10.0, -4.302_414_673_343_777_077_7e-5, -3.321_990_170_864_280_687e-4),
        (20.0, -1.603_091_182_375_561_648_4e-7, -1.223_493_423_865_578_887_8e-7),
    ];

    fn integral_representation(x: f64) -> KelvinPair {
        // K_nu(w) = int_0^inf exp(-w cosh t) cosh(nu t) dt, trapezoid
        let w = Complex64::from_polar(x, std::f64::consts::FRAC_PI_4);
        let h = 1e-3f64;
        let mut s = Complex64::new(0.5, 0.0) * (-w).exp();
        let mut t = h;
        while t < 12.0 {
            s += (-w * t.cosh()).exp() * (ORDER * t).cosh();
            t += h;
        }
        KelvinPair::from_complex(Complex64::from_polar(h, -std::f64::consts::FRAC_PI_6) * s)
    }

    #[test]
    fn matches_reference_values() {
        for (x, ker, kei) in REF {
            let v = kelvin13(x).unwrap();
            let scale = ker.hypot(kei);
            assert!((v.ker - ker).abs() < 1e-12 * scale, "ker({x}) = {}", v.ker);
            assert!((v.kei - kei).abs() < 1e-12 * scale, "kei({x}) = {}", v.kei);
        }
    }

    #[test]
    fn matches_integral_representation() {
        for x in [0.5, 1.0, 2.0] {
            let a = kelvin13(x).unwrap();
            let b = integral_representation(x);
            assert!((a.ker - b.ker).abs() < 1e-10 && (a.kei - b.kei).abs() < 1e-10, "{x}: {a:?} {b:?}");
        }
    }

    #[test]
    fn branches_agree_at_crossover() {
        for x in [DEFAULT_CROSSOVER, 12.0, 18.0] {
            let s = series(x);
            let a = asymptotic(x);
            let rel = ((s.ker - a.ker).hypot(s.kei - a.kei)) / s.abs();
            assert!(rel < 1e-8, "x = {x}: {rel:e}");
        }
    }

    #[test]
    fn decays_like_leading_term() {
        let r = kelvin13(20.0).unwrap().abs() / kelvin13(10.0).unwrap().abs();
        let lead = (-10.0 / std::f64::consts::SQRT_2).exp() * (10.0f64 / 20.0).sqrt();
        assert!((r / lead - 1.0).abs() < 0.02, "{r} vs {lead}");
        let mut prev = f64::INFINITY;
        for i in 0..60 {
            let x = 5.0 + 0.5 * i as f64;
            // the envelope, not the oscillating components, is monotone
            let m = kelvin13(x).unwrap().abs();
            assert!(m < prev);
            prev = m;
        }
    }

    #[test]
    fn rejects_non_positive() {
        assert!(kelvin13(0.0).is_err());
        assert!(kelvin13(-1.0).is_err());
        assert!(Kelvin13::new(0.0).is_err());
    }

    #[test]
    fn power_series_matches_series_branch() {
        for x in [0.3, 1.0, 2.5] {
            let z: Complex64 = power_series(40).iter().map(|(p, c)| c * (x / 2.0f64).powf(*p)).sum();
            let s = series(x);
            assert!((z.re - s.ker).abs() < 1e-13 && (z.im - s.kei).abs() < 1e-13);
        }
    }

    #[test]
    fn tail_is_continuous_at_split() {
        let a = tail_integral(HEAD_SPLIT * (1.0 - 1e-12)).unwrap();
        let b = tail_integral(HEAD_SPLIT).unwrap();
        assert!((a.ker - b.ker).abs() < 1e-11 && (a.kei - b.kei).abs() < 1e-11);
    }
}

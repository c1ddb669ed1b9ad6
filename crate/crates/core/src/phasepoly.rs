//! Exact algebra for functions on phase space of the form
//!
//! ```text
//!   sum  c * p1^n1 * p2^l * p3^n3 * exp(i (k1 q1 + k2 q2 + k3 q3))
//! ```
//!
//! with `c` a complex rational, `n1, n3 >= 0` and `l` any integer (negative
//! powers of `p2` are produced by inverting `p2 d/dq2`). The class is closed
//! under products, partial derivatives, the q2-average and the operator `Q`,
//! which is everything the averaging pipeline needs.
//!
//! Polynomials are kept canonical: like terms are merged and zero
//! coefficients dropped, so structural equality is mathematical equality.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::fmath;
use crate::model::State;

/// Arbitrary precision rational.
pub type Rational = BigRational;

/// Shorthand for the rational `num / den`.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Shorthand for an integer rational.
pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolyError {
    /// `(p2 d/dq2)^{-1}` is only defined on functions with zero q2-average.
    #[error("term {0} has k2 = 0 and cannot be inverted by p2 d/dq2")]
    NonZeroMean(Monomial),
    /// A term with a negative power of p2 was evaluated at p2 = 0.
    #[error("evaluation at p2 = 0 of a term with a negative power of p2")]
    PoleAtZero,
}

/// Exact complex rational `re + i im`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Coeff {
    pub re: Rational,
    pub im: Rational,
}

impl Coeff {
    pub fn new(re: Rational, im: Rational) -> Self {
        Coeff { re, im }
    }

    pub fn real(re: Rational) -> Self {
        Coeff { re, im: Rational::zero() }
    }

    pub fn imag(im: Rational) -> Self {
        Coeff { re: Rational::zero(), im }
    }

    pub fn zero() -> Self {
        Coeff::real(Rational::zero())
    }

    pub fn one() -> Self {
        Coeff::real(Rational::one())
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn conj(&self) -> Self {
        Coeff { re: self.re.clone(), im: -self.im.clone() }
    }

    pub fn scale(&self, r: &Rational) -> Self {
        Coeff { re: &self.re * r, im: &self.im * r }
    }

    /// Multiply by `i`.
    pub fn times_i(&self) -> Self {
        Coeff { re: -self.im.clone(), im: self.re.clone() }
    }

    /// Division by a purely imaginary number `i m`.
    pub fn div_imag(&self, m: &Rational) -> Self {
        // (re + i im) / (i m) = (im - i re) / m
        Coeff { re: &self.im / m, im: -(&self.re / m) }
    }

    /// Exact division by the complex rational `d`.
    pub fn div(&self, d: &Coeff) -> Self {
        let norm = &d.re * &d.re + &d.im * &d.im;
        let re = (&self.re * &d.re + &self.im * &d.im) / &norm;
        let im = (&self.im * &d.re - &self.re * &d.im) / &norm;
        Coeff { re, im }
    }

    pub fn to_f64(&self) -> (f64, f64) {
        (self.re.to_f64().unwrap_or(f64::NAN), self.im.to_f64().unwrap_or(f64::NAN))
    }
}

impl Add for &Coeff {
    type Output = Coeff;
    fn add(self, o: &Coeff) -> Coeff {
        Coeff { re: &self.re + &o.re, im: &self.im + &o.im }
    }
}

impl Mul for &Coeff {
    type Output = Coeff;
    fn mul(self, o: &Coeff) -> Coeff {
        Coeff {
            re: &self.re * &o.re - &self.im * &o.im,
            im: &self.re * &o.im + &self.im * &o.re,
        }
    }
}

impl Neg for &Coeff {
    type Output = Coeff;
    fn neg(self) -> Coeff {
        Coeff { re: -self.re.clone(), im: -self.im.clone() }
    }
}

impl fmt::Display for Coeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.re.is_zero(), self.im.is_zero()) {
            (_, true) => write!(f, "{}", self.re),
            (true, false) => write!(f, "{}i", self.im),
            (false, false) => write!(f, "({} + {}i)", self.re, self.im),
        }
    }
}

/// Phase-space variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    Q1,
    Q2,
    Q3,
    P1,
    P2,
    P3,
}

/// Momentum exponents and Fourier mode of a single term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    pub n1: u32,
    pub l: i32,
    pub n3: u32,
    pub wave: [i32; 3],
}

impl Monomial {
    pub const ONE: Monomial = Monomial { n1: 0, l: 0, n3: 0, wave: [0, 0, 0] };

    pub fn new(n1: u32, l: i32, n3: u32, wave: [i32; 3]) -> Self {
        Monomial { n1, l, n3, wave }
    }

    /// Degree in the sense of the averaging expansion: the power of p2.
    pub fn degree(&self) -> i32 {
        self.l
    }

    fn times(&self, o: &Monomial) -> Monomial {
        Monomial {
            n1: self.n1 + o.n1,
            l: self.l + o.l,
            n3: self.n3 + o.n3,
            wave: [self.wave[0] + o.wave[0], self.wave[1] + o.wave[1], self.wave[2] + o.wave[2]],
        }
    }

    fn mirrored(&self) -> Monomial {
        Monomial { wave: [-self.wave[0], -self.wave[1], -self.wave[2]], ..*self }
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "p1^{} p2^{} p3^{} e^(i({}q1{:+}q2{:+}q3))",
            self.n1, self.l, self.n3, self.wave[0], self.wave[1], self.wave[2]
        )
    }
}

/// A canonical finite sum of [`Monomial`]s with complex rational coefficients.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct PhasePoly {
    terms: BTreeMap<Monomial, Coeff>,
}

/// One real trigonometric term `p1^n1 p2^l p3^n3 (a cos(k.q) + b sin(k.q))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrigTerm {
    pub n1: u32,
    pub l: i32,
    pub n3: u32,
    pub wave: [i32; 3],
    pub cos: Rational,
    pub sin: Rational,
}

impl PhasePoly {
    pub fn zero() -> Self {
        PhasePoly::default()
    }

    pub fn constant(c: Rational) -> Self {
        PhasePoly::term(Monomial::ONE, Coeff::real(c))
    }

    pub fn one() -> Self {
        PhasePoly::constant(Rational::one())
    }

    pub fn term(m: Monomial, c: Coeff) -> Self {
        let mut p = PhasePoly::zero();
        p.push(m, c);
        p
    }

    /// The coordinate function of a momentum or `p2^l` when `var` is `P2`.
    pub fn momentum(var: Var, power: i32) -> Self {
        let m = match var {
            Var::P1 => Monomial::new(power as u32, 0, 0, [0; 3]),
            Var::P2 => Monomial::new(0, power, 0, [0; 3]),
            Var::P3 => Monomial::new(0, 0, power as u32, [0; 3]),
            _ => panic!("momentum() takes P1, P2 or P3"),
        };
        assert!(var == Var::P2 || power >= 0, "negative powers are only allowed for p2");
        PhasePoly::term(m, Coeff::one())
    }

    /// `c cos(k.q)`.
    pub fn cos_wave(wave: [i32; 3], c: Rational) -> Self {
        let half = &c / int(2);
        let mut p = PhasePoly::zero();
        p.push(Monomial::new(0, 0, 0, wave), Coeff::real(half.clone()));
        p.push(Monomial::new(0, 0, 0, neg_wave(wave)), Coeff::real(half));
        p
    }

    /// `c sin(k.q)`.
    pub fn sin_wave(wave: [i32; 3], c: Rational) -> Self {
        // sin x = (e^{ix} - e^{-ix}) / 2i
        let half = &c / int(2);
        let mut p = PhasePoly::zero();
        p.push(Monomial::new(0, 0, 0, wave), Coeff::imag(-half.clone()));
        p.push(Monomial::new(0, 0, 0, neg_wave(wave)), Coeff::imag(half));
        p
    }

    fn push(&mut self, m: Monomial, c: Coeff) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(existing) => {
                let sum = &*existing + &c;
                if sum.is_zero() {
                    self.terms.remove(&m);
                } else {
                    *existing = sum;
                }
            }
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    /// Build from arbitrary (possibly duplicated or zero) terms.
    pub fn from_terms<I: IntoIterator<Item = (Monomial, Coeff)>>(it: I) -> Self {
        let mut p = PhasePoly::zero();
        for (m, c) in it {
            p.push(m, c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Coeff)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Monomial) -> Option<&Coeff> {
        self.terms.get(m)
    }

    /// Largest power of p2 present, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<i32> {
        self.terms.keys().map(|m| m.l).max()
    }

    /// Keep only the terms for which `pred` holds.
    pub fn filter<F: Fn(&Monomial) -> bool>(&self, pred: F) -> Self {
        PhasePoly {
            terms: self.terms.iter().filter(|(m, _)| pred(m)).map(|(m, c)| (*m, c.clone())).collect(),
        }
    }

    /// Terms of exactly degree `l`.
    pub fn degree_part(&self, l: i32) -> Self {
        self.filter(|m| m.l == l)
    }

    pub fn scale(&self, r: &Rational) -> Self {
        if r.is_zero() {
            return PhasePoly::zero();
        }
        PhasePoly { terms: self.terms.iter().map(|(m, c)| (*m, c.scale(r))).collect() }
    }

    pub fn scale_coeff(&self, k: &Coeff) -> Self {
        PhasePoly::from_terms(self.terms.iter().map(|(m, c)| (*m, c * k)))
    }

    /// Multiply by `p2^shift`.
    pub fn shift_p2(&self, shift: i32) -> Self {
        PhasePoly {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (Monomial { l: m.l + shift, ..*m }, c.clone()))
                .collect(),
        }
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut acc = PhasePoly::one();
        for _ in 0..n {
            acc = &acc * self;
        }
        acc
    }

    /// Exact partial derivative.
    pub fn partial(&self, var: Var) -> Self {
        let mut out = PhasePoly::zero();
        for (m, c) in &self.terms {
            match var {
                Var::Q1 | Var::Q2 | Var::Q3 => {
                    let k = m.wave[q_index(var)];
                    if k != 0 {
                        out.push(*m, c.times_i().scale(&int(k as i64)));
                    }
                }
                Var::P1 => {
                    if m.n1 > 0 {
                        out.push(Monomial { n1: m.n1 - 1, ..*m }, c.scale(&int(m.n1 as i64)));
                    }
                }
                Var::P3 => {
                    if m.n3 > 0 {
                        out.push(Monomial { n3: m.n3 - 1, ..*m }, c.scale(&int(m.n3 as i64)));
                    }
                }
                Var::P2 => {
                    if m.l != 0 {
                        out.push(Monomial { l: m.l - 1, ..*m }, c.scale(&int(m.l as i64)));
                    }
                }
            }
        }
        out
    }

    /// The q2-average: terms with `k2 = 0`.
    pub fn q2_average(&self) -> Self {
        self.filter(|m| m.wave[1] == 0)
    }

    /// The part with zero q2-average: terms with `k2 != 0`.
    pub fn oscillatory(&self) -> Self {
        self.filter(|m| m.wave[1] != 0)
    }

    /// Right inverse of `p2 d/dq2` on functions with zero q2-average, chosen
    /// with zero q2-average itself.
    pub fn lplus_inverse(&self) -> Result<Self, PolyError> {
        let mut out = PhasePoly::zero();
        for (m, c) in &self.terms {
            let k2 = m.wave[1];
            if k2 == 0 {
                return Err(PolyError::NonZeroMean(*m));
            }
            out.push(Monomial { l: m.l - 1, ..*m }, c.div_imag(&int(k2 as i64)));
        }
        Ok(out)
    }

    /// `Q f = (p2 d/dq2)^{-1} (f - <f>)`.
    pub fn q_transform(&self) -> Self {
        self.oscillatory().lplus_inverse().expect("oscillatory part has k2 != 0 everywhere")
    }

    /// Complex conjugate.
    pub fn conj(&self) -> Self {
        PhasePoly { terms: self.terms.iter().map(|(m, c)| (m.mirrored(), c.conj())).collect() }
    }

    /// Hermitian symmetry: the coefficient at `-k` is the conjugate of the one
    /// at `k`, so the function is real valued.
    pub fn is_real(&self) -> bool {
        self.terms.iter().all(|(m, c)| self.terms.get(&m.mirrored()) == Some(&c.conj()))
    }

    /// Real part `(f + conj f) / 2`.
    pub fn real_part(&self) -> Self {
        (self + &self.conj()).scale(&rat(1, 2))
    }

    /// Evaluate at a state and multiply by `prefactor`. Only the real part is
    /// returned; for Hermitian polynomials the imaginary part cancels.
    pub fn evaluate(&self, x: &State, prefactor: f64) -> Result<f64, PolyError> {
        let mut sum = 0.0;
        for (m, c) in &self.terms {
            if m.l < 0 && x.p[1] == 0.0 {
                return Err(PolyError::PoleAtZero);
            }
            let (re, im) = c.to_f64();
            sum += term_value(m, re, im, x);
        }
        Ok(sum * prefactor)
    }

    /// Floating-point copy for repeated evaluation.
    pub fn compile(&self) -> CompiledPoly {
        CompiledPoly {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| {
                    let (re, im) = c.to_f64();
                    (*m, re, im)
                })
                .collect(),
        }
    }

    /// Present the polynomial as real cos/sin terms (assumes Hermitian
    /// symmetry; the representative wave has its first nonzero component
    /// positive, looking at k2 before k1 and k3).
    pub fn to_trig_terms(&self) -> Vec<TrigTerm> {
        let mut out = Vec::new();
        for (m, c) in &self.terms {
            if m.wave == [0, 0, 0] {
                out.push(TrigTerm {
                    n1: m.n1,
                    l: m.l,
                    n3: m.n3,
                    wave: m.wave,
                    cos: c.re.clone(),
                    sin: Rational::zero(),
                });
                continue;
            }
            if !is_canonical_wave(m.wave) {
                continue;
            }
            let partner = self.terms.get(&m.mirrored()).cloned().unwrap_or_else(Coeff::zero);
            // c e^{ix} + d e^{-ix} = (c + d) cos x + i (c - d) sin x
            let cos = &c.re + &partner.re;
            let sin = -(&c.im - &partner.im);
            out.push(TrigTerm { n1: m.n1, l: m.l, n3: m.n3, wave: m.wave, cos, sin });
        }
        out
    }
}

/// Term value at a state, real part.
#[inline]
fn term_value(m: &Monomial, re: f64, im: f64, x: &State) -> f64 {
    let theta = m.wave[0] as f64 * x.q[0] + m.wave[1] as f64 * x.q[1] + m.wave[2] as f64 * x.q[2];
    let (s, c) = if m.wave == [0, 0, 0] { (0.0, 1.0) } else { fmath::sin_cos(theta) };
    let mono = fmath::powi(x.p[0], m.n1 as i32) * fmath::powi(x.p[1], m.l) * fmath::powi(x.p[2], m.n3 as i32);
    (re * c - im * s) * mono
}

fn q_index(var: Var) -> usize {
    match var {
        Var::Q1 => 0,
        Var::Q2 => 1,
        Var::Q3 => 2,
        _ => unreachable!(),
    }
}

fn neg_wave(w: [i32; 3]) -> [i32; 3] {
    [-w[0], -w[1], -w[2]]
}

// q2 leads so that bond waves read as `q2 - qb`.
fn is_canonical_wave(w: [i32; 3]) -> bool {
    [w[1], w[0], w[2]].into_iter().find(|&k| k != 0).is_some_and(|k| k > 0)
}

/// Float image of a [`PhasePoly`] for hot evaluation loops.
#[derive(Debug, Clone, Default)]
pub struct CompiledPoly {
    terms: Vec<(Monomial, f64, f64)>,
}

impl CompiledPoly {
    /// Real part of the value; the caller guarantees `p2 != 0` whenever
    /// negative powers are present.
    #[inline]
    pub fn eval(&self, x: &State) -> f64 {
        self.terms.iter().map(|(m, re, im)| term_value(m, *re, *im, x)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

impl Add for &PhasePoly {
    type Output = PhasePoly;
    fn add(self, o: &PhasePoly) -> PhasePoly {
        let mut out = self.clone();
        out += o;
        out
    }
}

impl Add for PhasePoly {
    type Output = PhasePoly;
    fn add(mut self, o: PhasePoly) -> PhasePoly {
        self += &o;
        self
    }
}

impl AddAssign<&PhasePoly> for PhasePoly {
    fn add_assign(&mut self, o: &PhasePoly) {
        for (m, c) in &o.terms {
            self.push(*m, c.clone());
        }
    }
}

impl SubAssign<&PhasePoly> for PhasePoly {
    fn sub_assign(&mut self, o: &PhasePoly) {
        for (m, c) in &o.terms {
            self.push(*m, -c);
        }
    }
}

impl Sub for &PhasePoly {
    type Output = PhasePoly;
    fn sub(self, o: &PhasePoly) -> PhasePoly {
        let mut out = self.clone();
        out -= o;
        out
    }
}

impl Sub for PhasePoly {
    type Output = PhasePoly;
    fn sub(mut self, o: PhasePoly) -> PhasePoly {
        self -= &o;
        self
    }
}

impl Neg for &PhasePoly {
    type Output = PhasePoly;
    fn neg(self) -> PhasePoly {
        PhasePoly { terms: self.terms.iter().map(|(m, c)| (*m, -c)).collect() }
    }
}

impl Neg for PhasePoly {
    type Output = PhasePoly;
    fn neg(self) -> PhasePoly {
        -&self
    }
}

impl Mul for &PhasePoly {
    type Output = PhasePoly;
    fn mul(self, o: &PhasePoly) -> PhasePoly {
        let mut out = PhasePoly::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &o.terms {
                out.push(m1.times(m2), c1 * c2);
            }
        }
        out
    }
}

impl Mul for PhasePoly {
    type Output = PhasePoly;
    fn mul(self, o: PhasePoly) -> PhasePoly {
        &self * &o
    }
}

impl fmt::Display for PhasePoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let pieces: Vec<String> = if self.is_real() {
            self.to_trig_terms().iter().map(trig_term_string).collect()
        } else {
            self.terms.iter().map(|(m, c)| alloc::format!("{c}*{m}")).collect()
        };
        write!(f, "{}", pieces.join(" + "))
    }
}

fn trig_term_string(t: &TrigTerm) -> String {
    let mut mono = String::new();
    if t.n1 > 0 {
        mono.push_str(&alloc::format!("*p1^{}", t.n1));
    }
    if t.l != 0 {
        mono.push_str(&alloc::format!("*p2^{}", t.l));
    }
    if t.n3 > 0 {
        mono.push_str(&alloc::format!("*p3^{}", t.n3));
    }
    if t.wave == [0, 0, 0] {
        return alloc::format!("{}{}", t.cos, mono);
    }
    let arg = wave_string(t.wave);
    match (t.cos.is_zero(), t.sin.is_zero()) {
        (false, true) => alloc::format!("{}*cos({}){}", t.cos, arg, mono),
        (true, false) => alloc::format!("{}*sin({}){}", t.sin, arg, mono),
        _ => alloc::format!("({}*cos({}) + {}*sin({})){}", t.cos, arg, t.sin, arg, mono),
    }
}

fn wave_string(w: [i32; 3]) -> String {
    let mut s = String::new();
    for (k, name) in w.iter().zip(["q1", "q2", "q3"]) {
        if *k == 0 {
            continue;
        }
        let sign = if *k < 0 { "-" } else if s.is_empty() { "" } else { "+" };
        let mag = k.abs();
        if mag == 1 {
            s.push_str(&alloc::format!("{sign}{name}"));
        } else {
            s.push_str(&alloc::format!("{sign}{mag}{name}"));
        }
    }
    s
}

/// Integer numerator/denominator pair as `i64`, if it fits.
pub fn rational_parts_i64(r: &Rational) -> Option<(i64, i64)> {
    Some((r.numer().to_i64()?, r.denom().to_i64()?))
}

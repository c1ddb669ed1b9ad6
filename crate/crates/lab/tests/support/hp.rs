//! 192-bit reference for `V` and a finite-difference generator.
//!
//! Everything here is rebuilt from the model parameters and the exact
//! rational terms of `F`; nothing is shared with the f64 implementation.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use astro_float::{BigFloat, Consts, Radix, RoundingMode};
use rotor_core::{ChainParams, PhasePoly, Rational, State, TrigPotential};

const P: usize = 192;
const RM: RoundingMode = RoundingMode::ToEven;

thread_local! {
    static CC: RefCell<Consts> = RefCell::new(Consts::new().expect("astro-float constants"));
}

#[derive(Clone, Debug)]
pub struct Hp(BigFloat);

impl Hp {
    pub fn f(x: f64) -> Hp {
        Hp(BigFloat::from_f64(x, P))
    }

    pub fn int(n: i64) -> Hp {
        Hp(BigFloat::from_i64(n, P))
    }

    fn parse(s: &str) -> Hp {
        CC.with(|cc| Hp(BigFloat::parse(s, Radix::Dec, P, RM, &mut cc.borrow_mut())))
    }

    pub fn rat(r: &Rational) -> Hp {
        &Hp::parse(&r.numer().to_string()) / &Hp::parse(&r.denom().to_string())
    }

    pub fn exp(&self) -> Hp {
        CC.with(|cc| Hp(self.0.exp(P, RM, &mut cc.borrow_mut())))
    }

    pub fn cos(&self) -> Hp {
        CC.with(|cc| Hp(self.0.cos(P, RM, &mut cc.borrow_mut())))
    }

    pub fn sin(&self) -> Hp {
        CC.with(|cc| Hp(self.0.sin(P, RM, &mut cc.borrow_mut())))
    }

    pub fn abs(&self) -> Hp {
        Hp(self.0.abs())
    }

    pub fn powi(&self, n: i32) -> Hp {
        let m = Hp(self.0.powi(n.unsigned_abs() as usize, P, RM));
        if n < 0 {
            &Hp::int(1) / &m
        } else {
            m
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_string().parse().unwrap_or(f64::NAN)
    }

    fn lt(&self, o: &Hp) -> bool {
        self.0 < o.0
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident) => {
        impl $tr for &Hp {
            type Output = Hp;
            fn $m(self, o: &Hp) -> Hp {
                Hp(self.0.$m(&o.0, P, RM))
            }
        }
    };
}
binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);
binop!(Div, div);

impl Neg for &Hp {
    type Output = Hp;
    fn neg(self) -> Hp {
        Hp(self.0.clone().neg())
    }
}

/// `(re, im)` of `e^{i theta}`.
type Cis = (Hp, Hp);

fn cmul(a: &Cis, b: &Cis) -> Cis {
    (&(&a.0 * &b.0) - &(&a.1 * &b.1), &(&a.0 * &b.1) + &(&a.1 * &b.0))
}

/// `e^{i n q}` for `|n| <= max` built from one cosine and one sine.
struct CisTable {
    pos: Vec<Cis>,
}

impl CisTable {
    fn new(q: &Hp, max: usize) -> Self {
        let e = (q.cos(), q.sin());
        let mut pos = vec![(Hp::int(1), Hp::int(0))];
        for n in 1..=max {
            let next = cmul(&pos[n - 1], &e);
            pos.push(next);
        }
        CisTable { pos }
    }

    fn get(&self, n: i32) -> Cis {
        let c = self.pos[n.unsigned_abs() as usize].clone();
        if n < 0 {
            (c.0, -&c.1)
        } else {
            c
        }
    }
}

struct Pot {
    /// `(k, a, b)` for `a cos(k s) + b sin(k s)`.
    harmonics: Vec<(i32, Hp, Hp)>,
}

impl Pot {
    fn new(w: &TrigPotential) -> Self {
        Pot { harmonics: w.harmonics().iter().map(|h| (h.k as i32, Hp::rat(&h.cos), Hp::rat(&h.sin))).collect() }
    }

    /// Value and derivative at the angle whose `e^{iks}` is given by `cis(k)`.
    fn eval(&self, cis: impl Fn(i32) -> Cis) -> (Hp, Hp) {
        let mut v = Hp::int(0);
        let mut d = Hp::int(0);
        for (k, a, b) in &self.harmonics {
            let (c, s) = cis(*k);
            v = &v + &(&(a * &c) + &(b * &s));
            d = &d + &(&Hp::int(*k as i64) * &(&(b * &c) - &(a * &s)));
        }
        (v, d)
    }
}

struct Term {
    n1: i32,
    l: i32,
    n3: i32,
    wave: [i32; 3],
    re: Hp,
    im: Hp,
}

pub struct Oracle {
    beta: Hp,
    a: Hp,
    k: i32,
    r: Hp,
    gamma: [Hp; 2],
    temp: [Hp; 2],
    tau: [Hp; 2],
    w: [Pot; 2],
    u: [Pot; 3],
    f: Vec<Term>,
    max_wave: usize,
}

struct Eval {
    v: Hp,
    forces: [Hp; 3],
}

impl Oracle {
    pub fn new(params: &ChainParams, f: &PhasePoly, beta: f64, a: f64, k: u32, r: f64) -> Self {
        let f: Vec<Term> = f
            .terms()
            .map(|(m, c)| Term {
                n1: m.n1 as i32,
                l: m.l,
                n3: m.n3 as i32,
                wave: m.wave,
                re: Hp::rat(&c.re),
                im: Hp::rat(&c.im),
            })
            .collect();
        let hk = params.w.iter().chain(params.u.iter()).flat_map(|p| p.harmonics().iter().map(|h| h.k as usize));
        let fk = f.iter().flat_map(|t| t.wave.iter().map(|w| w.unsigned_abs() as usize));
        let max_wave = hk.chain(fk).max().unwrap_or(0);
        Oracle {
            beta: Hp::f(beta),
            a: Hp::f(a),
            k: k as i32,
            r: Hp::f(r),
            gamma: params.gamma.clone().map(|g| Hp::rat(&g)),
            temp: params.temp.clone().map(|t| Hp::rat(&t)),
            tau: params.tau.clone().map(|t| Hp::rat(&t)),
            w: [Pot::new(&params.w[0]), Pot::new(&params.w[1])],
            u: [Pot::new(&params.u[0]), Pot::new(&params.u[1]), Pot::new(&params.u[2])],
            f,
            max_wave,
        }
    }

    /// Quintic smoothstep on `|s|` in `[1, 2]`.
    fn chi(s: &Hp) -> Hp {
        let a = s.abs();
        let one = Hp::int(1);
        if !one.lt(&a) {
            return Hp::int(0);
        }
        if !a.lt(&Hp::int(2)) {
            return one;
        }
        let t = &a - &one;
        let poly = &(&Hp::int(10) - &(&Hp::int(15) * &t)) + &(&Hp::int(6) * &(&t * &t));
        &t.powi(3) * &poly
    }

    fn eval(&self, x: &[Hp; 6]) -> Eval {
        let [q1, q2, q3, p1, p2, p3] = x;
        let tabs = [CisTable::new(q1, self.max_wave), CisTable::new(q2, self.max_wave), CisTable::new(q3, self.max_wave)];
        let tabs = &tabs;
        let cis_diff = |i: usize, j: usize| {
            move |k: i32| {
                let (a, b) = (tabs[i].get(k), tabs[j].get(-k));
                cmul(&a, &b)
            }
        };
        let (u1, du1) = self.u[0].eval(|k| tabs[0].get(k));
        let (u2, du2) = self.u[1].eval(|k| tabs[1].get(k));
        let (u3, du3) = self.u[2].eval(|k| tabs[2].get(k));
        let (w1, dw1) = self.w[0].eval(cis_diff(1, 0));
        let (w3, dw3) = self.w[1].eval(cis_diff(1, 2));
        let kinetic = &(&(&(p1 * p1) + &(p2 * p2)) + &(p3 * p3)) / &Hp::int(2);
        let h = &(&(&(&(&kinetic + &u1) + &u2) + &u3) + &w1) + &w3;
        let forces = [&dw1 - &du1, &(&(-&du2) - &dw1) - &dw3, &dw3 - &du3];

        let s = &(p1 * p1) + &(p3 * p3);
        let d = &s.powi(self.k) + &self.r;
        let rho = Self::chi(&(p2 / &d));
        let mut v = &Hp::int(1) + &(&self.beta * &h).exp();
        if !rho.0.is_zero() {
            let mut fval = Hp::int(0);
            for t in &self.f {
                let c = cmul(&cmul(&tabs[0].get(t.wave[0]), &tabs[1].get(t.wave[1])), &tabs[2].get(t.wave[2]));
                let re = &(&t.re * &c.0) - &(&t.im * &c.1);
                let mono = &(&p1.powi(t.n1) * &p2.powi(t.l)) * &p3.powi(t.n3);
                fval = &fval + &(&re * &mono);
            }
            let y = p2 + &fval;
            let y2 = &y * &y;
            let g = &y2 * &(&(&self.beta * &y2) / &Hp::int(2)).exp();
            v = &v + &(&(&self.a * &rho) * &g);
        }
        Eval { v, forces }
    }

    /// `V e^{-log_scale}`, to compare with a scaled f64 evaluation.
    pub fn v_scaled(&self, x: &State, log_scale: f64) -> f64 {
        (&self.eval(&lift(x)).v * &(-&Hp::f(log_scale)).exp()).to_f64()
    }

    /// `|LV_analytic - LV_fd| / (1 + |LV|)` with `LV_analytic = e^{log_scale} scaled`.
    pub fn lv_relative_error(&self, x: &State, log_scale: f64, scaled: f64, step: f64) -> f64 {
        let lv_a = &Hp::f(scaled) * &Hp::f(log_scale).exp();
        let lv_fd = self.lv_fd(x, step);
        (&(&lv_a - &lv_fd).abs() / &(&Hp::int(1) + &lv_a.abs())).to_f64()
    }

    /// Nine-point (eighth-order) central differences of `V` contracted
    /// with the generator.
    pub fn lv_fd(&self, x: &State, step: f64) -> Hp {
        // Weights for offsets 1..=4; the first derivative is odd, the second even.
        const D1: [(i64, i64); 4] = [(4, 5), (-1, 5), (4, 105), (-1, 280)];
        const D2: [(i64, i64); 4] = [(8, 5), (-1, 5), (8, 315), (-1, 560)];
        const D2_CENTRE: (i64, i64) = (-205, 72);
        let w = |(n, d): (i64, i64)| &Hp::int(n) / &Hp::int(d);
        let base = lift(x);
        let centre = self.eval(&base);
        let h = Hp::f(step);
        let at = |i: usize, m: i64| {
            let mut y = base.clone();
            y[i] = &y[i] + &(&Hp::int(m) * &h);
            self.eval(&y).v
        };
        let mut lv = Hp::int(0);
        let mut second = [Hp::int(0), Hp::int(0)];
        for i in 0..6 {
            let mut d1 = Hp::int(0);
            let mut d2 = &w(D2_CENTRE) * &centre.v;
            for m in 1..=4 {
                let (fp, fm) = (at(i, m), at(i, -m));
                d1 = &d1 + &(&w(D1[m as usize - 1]) * &(&fp - &fm));
                d2 = &d2 + &(&w(D2[m as usize - 1]) * &(&fp + &fm));
            }
            let d1 = &d1 / &h;
            let coef = if i < 3 {
                base[i + 3].clone()
            } else {
                let f = &centre.forces[i - 3];
                match i {
                    3 => &(f + &self.tau[0]) - &(&self.gamma[0] * &base[3]),
                    5 => &(f + &self.tau[1]) - &(&self.gamma[1] * &base[5]),
                    _ => f.clone(),
                }
            };
            lv = &lv + &(&coef * &d1);
            if i == 3 || i == 5 {
                second[(i - 3) / 2] = &d2 / &(&h * &h);
            }
        }
        for b in 0..2 {
            lv = &lv + &(&(&self.gamma[b] * &self.temp[b]) * &second[b]);
        }
        lv
    }
}

fn lift(x: &State) -> [Hp; 6] {
    [Hp::f(x.q[0]), Hp::f(x.q[1]), Hp::f(x.q[2]), Hp::f(x.p[0]), Hp::f(x.p[1]), Hp::f(x.p[2])]
}

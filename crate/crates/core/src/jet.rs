//! Truncated multivariate Taylor series ("jets") for exact forward-mode
//! differentiation to arbitrary fixed order.
//!
//! A [`Jet`] stores the Taylor coefficients `c_α = ∂^α f / α!` of a function
//! of `nvars` variables about an expansion point, for every multi-index with
//! `|α| ≤ ord`. Arithmetic is truncated polynomial arithmetic, elementary
//! functions are applied through their one-dimensional Taylor series, and
//! partial differentiation lowers the order by one. Running a whole
//! computation on jets therefore yields every partial derivative of the
//! result up to the working order, with no truncation error.
//!
//! Multiplication tables are built once per `(nvars, order)` pair and shared
//! through a process-wide registry.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::{Mutex, OnceLock};

/// Multiplication, differentiation and shift tables for one `(nvars, order)`.
pub struct JetSpace {
    nvars: usize,
    order: usize,
    exps: Vec<Vec<u8>>,
    degree: Vec<usize>,
    /// `len_upto[d]` = number of monomials of degree `≤ d`.
    len_upto: Vec<usize>,
    index: HashMap<Vec<u8>, usize>,
    /// `(i, j, k)` with `mono_i * mono_j = mono_k`, sorted by degree of `k`.
    mul: Vec<(u32, u32, u32)>,
    /// `mul_upto[d]` = number of products whose result has degree `≤ d`.
    mul_upto: Vec<usize>,
    /// Per variable: `(src, dst, factor)` for `∂/∂z_v`, sorted by `dst` degree.
    diff: Vec<Vec<(u32, u32, f64)>>,
    diff_upto: Vec<Vec<usize>>,
    /// Per variable: index of `mono_i * z_v`, or `u32::MAX` past the order.
    shift: Vec<Vec<u32>>,
}

impl JetSpace {
    fn build(nvars: usize, order: usize) -> Self {
        let mut exps: Vec<Vec<u8>> = Vec::new();
        let mut len_upto = Vec::with_capacity(order + 1);
        for d in 0..=order {
            let mut cur = vec![0u8; nvars];
            push_compositions(&mut exps, &mut cur, 0, d);
            len_upto.push(exps.len());
        }
        let degree: Vec<usize> = exps
            .iter()
            .map(|e| e.iter().map(|&v| v as usize).sum())
            .collect();
        let index: HashMap<Vec<u8>, usize> = exps
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();

        let mut mul = Vec::new();
        for (i, ei) in exps.iter().enumerate() {
            for (j, ej) in exps.iter().enumerate() {
                if degree[i] + degree[j] > order {
                    continue;
                }
                let prod: Vec<u8> = ei.iter().zip(ej).map(|(a, b)| a + b).collect();
                mul.push((i as u32, j as u32, index[&prod] as u32));
            }
        }
        mul.sort_by_key(|&(i, j, k)| (degree[k as usize], k, i, j));
        let mul_upto = (0..=order)
            .map(|d| mul.iter().filter(|m| degree[m.2 as usize] <= d).count())
            .collect();

        let mut diff = Vec::with_capacity(nvars);
        let mut diff_upto = Vec::with_capacity(nvars);
        let mut shift = Vec::with_capacity(nvars);
        for v in 0..nvars {
            let mut dv = Vec::new();
            let mut sv = vec![u32::MAX; exps.len()];
            for (i, e) in exps.iter().enumerate() {
                if e[v] > 0 {
                    let mut lower = e.clone();
                    lower[v] -= 1;
                    dv.push((i as u32, index[&lower] as u32, e[v] as f64));
                }
                if degree[i] < order {
                    let mut upper = e.clone();
                    upper[v] += 1;
                    sv[i] = index[&upper] as u32;
                }
            }
            dv.sort_by_key(|&(_, dst, _)| degree[dst as usize]);
            diff_upto.push(
                (0..=order)
                    .map(|d| dv.iter().filter(|x| degree[x.1 as usize] <= d).count())
                    .collect(),
            );
            diff.push(dv);
            shift.push(sv);
        }

        JetSpace {
            nvars,
            order,
            exps,
            degree,
            len_upto,
            index,
            mul,
            mul_upto,
            diff,
            diff_upto,
            shift,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of coefficients stored by a jet of order `ord`.
    pub fn len(&self, ord: usize) -> usize {
        self.len_upto[ord]
    }

    pub fn monomials(&self) -> &[Vec<u8>] {
        &self.exps
    }

    pub fn degree_of(&self, i: usize) -> usize {
        self.degree[i]
    }

    pub fn index_of(&self, exps: &[u8]) -> Option<usize> {
        self.index.get(exps).copied()
    }

    /// Constant jet at full order.
    pub fn constant(&'static self, v: f64) -> Jet {
        let mut c = vec![0.0; self.len(self.order)];
        c[0] = v;
        Jet {
            sp: self,
            ord: self.order,
            c,
        }
    }

    /// Jet with the given Taylor coefficients (padded or truncated to `ord`).
    pub fn from_coeffs(&'static self, ord: usize, mut c: Vec<f64>) -> Jet {
        assert!(ord <= self.order);
        c.resize(self.len(ord), 0.0);
        Jet { sp: self, ord, c }
    }

    /// The independent variable `z_v` expanded about `value`.
    pub fn variable(&'static self, v: usize, value: f64) -> Jet {
        assert!(v < self.nvars, "variable index out of range");
        let mut j = self.constant(value);
        if self.order > 0 {
            let mut e = vec![0u8; self.nvars];
            e[v] = 1;
            j.c[self.index[&e]] = 1.0;
        }
        j
    }
}

fn push_compositions(out: &mut Vec<Vec<u8>>, cur: &mut Vec<u8>, pos: usize, remaining: usize) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining as u8;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for v in (0..=remaining).rev() {
        cur[pos] = v as u8;
        push_compositions(out, cur, pos + 1, remaining - v);
    }
    cur[pos] = 0;
}

/// Shared table for `nvars` variables up to total degree `order`.
pub fn jet_space(nvars: usize, order: usize) -> &'static JetSpace {
    static REGISTRY: OnceLock<Mutex<HashMap<(usize, usize), &'static JetSpace>>> = OnceLock::new();
    assert!(nvars >= 1, "a jet space needs at least one variable");
    let reg = REGISTRY.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = reg.lock().expect("jet registry poisoned");
    guard
        .entry((nvars, order))
        .or_insert_with(|| Box::leak(Box::new(JetSpace::build(nvars, order))))
}

/// Truncated Taylor series in the variables of a [`JetSpace`].
#[derive(Clone)]
pub struct Jet {
    sp: &'static JetSpace,
    ord: usize,
    c: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("nvars", &self.sp.nvars)
            .field("ord", &self.ord)
            .field("c", &self.c)
            .finish()
    }
}

impl Jet {
    pub fn space(&self) -> &'static JetSpace {
        self.sp
    }

    /// Order up to which the coefficients are exact.
    pub fn order(&self) -> usize {
        self.ord
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    /// Constant in the same space and order as `self`.
    pub fn lift(&self, v: f64) -> Jet {
        let mut c = vec![0.0; self.c.len()];
        c[0] = v;
        Jet {
            sp: self.sp,
            ord: self.ord,
            c,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|v| v.is_finite())
    }

    /// Copy truncated to order `ord` (no-op if already lower).
    pub fn truncate(&self, ord: usize) -> Jet {
        let ord = ord.min(self.ord);
        Jet {
            sp: self.sp,
            ord,
            c: self.c[..self.sp.len(ord)].to_vec(),
        }
    }

    /// Taylor coefficient of the monomial `exps`.
    pub fn coeff(&self, exps: &[u8]) -> f64 {
        match self.sp.index_of(exps) {
            Some(i) if i < self.c.len() => self.c[i],
            _ => 0.0,
        }
    }

    /// Partial derivative value `∂^α f` at the expansion point.
    pub fn derivative(&self, exps: &[u8]) -> f64 {
        let fact: f64 = exps.iter().map(|&e| factorial(e as usize)).product();
        self.coeff(exps) * fact
    }

    /// Partial derivative with respect to variable `v`; the order drops by one.
    pub fn d(&self, v: usize) -> Jet {
        assert!(self.ord > 0, "cannot differentiate an order-0 jet");
        let ord = self.ord - 1;
        let mut c = vec![0.0; self.sp.len(ord)];
        let table = &self.sp.diff[v];
        for &(src, dst, f) in &table[..self.sp.diff_upto[v][ord]] {
            c[dst as usize] = self.c[src as usize] * f;
        }
        Jet {
            sp: self.sp,
            ord,
            c,
        }
    }

    /// Multiply by the displacement `z_v − z_v⁰` (order unchanged).
    pub fn mul_var(&self, v: usize) -> Jet {
        let mut c = vec![0.0; self.c.len()];
        let shift = &self.sp.shift[v];
        if self.ord > 0 {
            for i in 0..self.sp.len(self.ord - 1) {
                c[shift[i] as usize] = self.c[i];
            }
        }
        Jet {
            sp: self.sp,
            ord: self.ord,
            c,
        }
    }

    /// Evaluate `Σ_k coeffs[k] h^k` with `h = self − self.value()`.
    pub fn compose_series(&self, coeffs: &[f64]) -> Jet {
        let mut h = self.clone();
        h.c[0] = 0.0;
        let kmax = self.ord.min(coeffs.len().saturating_sub(1));
        let mut acc = self.lift(coeffs[kmax]);
        for k in (0..kmax).rev() {
            acc = &acc * &h;
            acc.c[0] += coeffs[k];
        }
        acc
    }

    /// Composition `p(z⁰ + s)` where `subs[v]` replaces the displacement of
    /// variable `v`. Substitutions must share one target space and have zero
    /// constant term; `None` freezes that variable at its expansion point.
    pub fn substitute(&self, subs: &[Option<Jet>]) -> Jet {
        assert_eq!(subs.len(), self.sp.nvars, "one substitution per variable");
        let target = subs
            .iter()
            .flatten()
            .next()
            .expect("at least one substitution");
        let ord = subs.iter().flatten().map(|j| j.ord).min().unwrap_or(0);
        let one = target.truncate(ord).lift(1.0);
        // powers[v][p] = subs[v]^p
        let powers: Vec<Vec<Jet>> = subs
            .iter()
            .map(|s| match s {
                Some(j) => {
                    debug_assert!(
                        j.value() == 0.0,
                        "substitution must have zero constant term"
                    );
                    let j = j.truncate(ord);
                    let mut p = vec![one.clone()];
                    for k in 1..=self.ord.min(ord) {
                        let next = &p[k - 1] * &j;
                        p.push(next);
                    }
                    p
                }
                None => vec![one.clone()],
            })
            .collect();
        let mut acc = one.lift(0.0);
        for (i, &c) in self.c.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let e = &self.sp.exps[i];
            if e.iter().zip(&powers).any(|(&k, p)| k as usize >= p.len()) {
                continue;
            }
            let mut term: Option<Jet> = None;
            for (v, &k) in e.iter().enumerate() {
                if k > 0 {
                    let pw = &powers[v][k as usize];
                    term = Some(match term {
                        None => pw.clone(),
                        Some(t) => &t * pw,
                    });
                }
            }
            match term {
                None => acc.c[0] += c,
                Some(t) => {
                    for (a, b) in acc.c.iter_mut().zip(&t.c) {
                        *a += c * b;
                    }
                }
            }
        }
        acc
    }

    fn combine(&self, other: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        debug_assert!(std::ptr::eq(self.sp, other.sp), "mixed jet spaces");
        let ord = self.ord.min(other.ord);
        let n = self.sp.len(ord);
        let c = (0..n).map(|i| f(self.c[i], other.c[i])).collect();
        Jet {
            sp: self.sp,
            ord,
            c,
        }
    }

    fn product(&self, other: &Jet) -> Jet {
        debug_assert!(std::ptr::eq(self.sp, other.sp), "mixed jet spaces");
        let ord = self.ord.min(other.ord);
        let mut c = vec![0.0; self.sp.len(ord)];
        for &(i, j, k) in &self.sp.mul[..self.sp.mul_upto[ord]] {
            c[k as usize] += self.c[i as usize] * other.c[j as usize];
        }
        Jet {
            sp: self.sp,
            ord,
            c,
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Jet {
        Jet {
            sp: self.sp,
            ord: self.ord,
            c: self.c.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn recip(&self) -> Jet {
        let a = self.value();
        let mut coeffs = Vec::with_capacity(self.ord + 1);
        let mut t = 1.0 / a;
        for _ in 0..=self.ord {
            coeffs.push(t);
            t *= -1.0 / a;
        }
        self.compose_series(&coeffs)
    }

    pub fn powf(&self, p: f64) -> Jet {
        let a = self.value();
        let mut coeffs = Vec::with_capacity(self.ord + 1);
        let mut binom = 1.0;
        let mut apow = a.powf(p);
        for k in 0..=self.ord {
            coeffs.push(binom * apow);
            binom *= (p - k as f64) / (k as f64 + 1.0);
            apow /= a;
        }
        self.compose_series(&coeffs)
    }

    pub fn sqrt(&self) -> Jet {
        self.powf(0.5)
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        let coeffs: Vec<f64> = (0..=self.ord).map(|k| e / factorial(k)).collect();
        self.compose_series(&coeffs)
    }

    pub fn ln(&self) -> Jet {
        let a = self.value();
        let mut coeffs = vec![a.ln()];
        for k in 1..=self.ord {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            coeffs.push(sign / (k as f64 * a.powi(k as i32)));
        }
        self.compose_series(&coeffs)
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        let coeffs: Vec<f64> = (0..=self.ord)
            .map(|k| cycle[k % 4] / factorial(k))
            .collect();
        self.compose_series(&coeffs)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [c, -s, -c, s];
        let coeffs: Vec<f64> = (0..=self.ord)
            .map(|k| cycle[k % 4] / factorial(k))
            .collect();
        self.compose_series(&coeffs)
    }

    /// `atan(a0 + h) = atan(a0) + atan(h / (1 + a0 (a0 + h)))`, the inner
    /// argument having zero constant term.
    pub fn atan(&self) -> Jet {
        let a0 = self.value();
        let mut h = self.clone();
        h.c[0] = 0.0;
        let w = &h * &(self * a0 + 1.0).recip();
        let mut coeffs = vec![0.0; self.ord + 1];
        for (k, c) in coeffs.iter_mut().enumerate() {
            if k % 2 == 1 {
                *c = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 } / k as f64;
            }
        }
        let mut out = w.compose_series(&coeffs);
        out.c[0] = a0.atan();
        out
    }

    /// Angle of the vector `(u, v)`, continuous around the expansion point.
    pub fn atan2(v: &Jet, u: &Jet) -> Jet {
        let theta0 = v.value().atan2(u.value());
        let (s, c) = theta0.sin_cos();
        // rotate so the expansion point lies on the positive axis
        let ur = u * c + v * s;
        let vr = v * c - u * s;
        let mut out = (&vr / &ur).atan();
        out.c[0] += theta0;
        out
    }
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

macro_rules! jet_binop {
    ($tr:ident, $m:ident, $body:expr) => {
        impl $tr<&Jet> for &Jet {
            type Output = Jet;
            fn $m(self, rhs: &Jet) -> Jet {
                let f: fn(&Jet, &Jet) -> Jet = $body;
                f(self, rhs)
            }
        }
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: &Jet) -> Jet {
                (&self).$m(rhs)
            }
        }
        impl $tr<Jet> for &Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                self.$m(&rhs)
            }
        }
    };
}

jet_binop!(Add, add, |a, b| a.combine(b, |x, y| x + y));
jet_binop!(Sub, sub, |a, b| a.combine(b, |x, y| x - y));
jet_binop!(Mul, mul, |a, b| a.product(b));
jet_binop!(Div, div, |a, b| a.product(&b.recip()));

macro_rules! jet_scalar_op {
    ($tr:ident, $m:ident, $body:expr) => {
        impl $tr<f64> for &Jet {
            type Output = Jet;
            fn $m(self, rhs: f64) -> Jet {
                let f: fn(&Jet, f64) -> Jet = $body;
                f(self, rhs)
            }
        }
        impl $tr<f64> for Jet {
            type Output = Jet;
            fn $m(self, rhs: f64) -> Jet {
                (&self).$m(rhs)
            }
        }
    };
}

jet_scalar_op!(Add, add, |a, s| {
    let mut out = a.clone();
    out.c[0] += s;
    out
});
jet_scalar_op!(Sub, sub, |a, s| {
    let mut out = a.clone();
    out.c[0] -= s;
    out
});
jet_scalar_op!(Mul, mul, |a, s| a.map(|v| v * s));
jet_scalar_op!(Div, div, |a, s| a.map(|v| v / s));

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.map(|v| -v)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.map(|v| -v)
    }
}

/// Arithmetic shared by `f64` and [`Jet`], so metric expressions are written once.
pub trait Scalar:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(&self) -> f64;
    /// A constant living in the same space as `self`.
    fn lift(&self, v: f64) -> Self;
    fn sqrt(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn recip(&self) -> Self;
}

impl Scalar for f64 {
    fn value(&self) -> f64 {
        *self
    }
    fn lift(&self, v: f64) -> Self {
        v
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn recip(&self) -> Self {
        1.0 / *self
    }
}

impl Scalar for Jet {
    fn value(&self) -> f64 {
        Jet::value(self)
    }
    fn lift(&self, v: f64) -> Self {
        Jet::lift(self, v)
    }
    fn sqrt(&self) -> Self {
        Jet::sqrt(self)
    }
    fn exp(&self) -> Self {
        Jet::exp(self)
    }
    fn ln(&self) -> Self {
        Jet::ln(self)
    }
    fn sin(&self) -> Self {
        Jet::sin(self)
    }
    fn cos(&self) -> Self {
        Jet::cos(self)
    }
    fn recip(&self) -> Self {
        Jet::recip(self)
    }
}

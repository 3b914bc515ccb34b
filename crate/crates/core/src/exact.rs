//! Exact numbers in a real quadratic field Q(√d), a parser for the small
//! expression language used in configs ("1/3", "0.6", "(sqrt(5)-1)/2"), and
//! outward-rounded f64 intervals.
//!
//! A value carries its radicand `d`; `d == 0` marks a rational. Mixing two
//! different radicands is a programming error and panics, so callers that
//! accept user input go through [`common_radicand`] first.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QuadNum {
    a: BigRational,
    b: BigRational,
    d: u64,
}

impl QuadNum {
    pub fn rational(a: BigRational) -> Self {
        QuadNum { a, b: BigRational::zero(), d: 0 }
    }

    pub fn from_i64(n: i64) -> Self {
        Self::rational(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn from_ratio(p: i64, q: i64) -> Self {
        Self::rational(BigRational::new(BigInt::from(p), BigInt::from(q)))
    }

    /// `a + b√d`. `d` must be squarefree and greater than one unless `b` is zero.
    pub fn new(a: BigRational, b: BigRational, d: u64) -> Self {
        if b.is_zero() || d == 0 {
            return Self::rational(a);
        }
        debug_assert!(d > 1 && squarefree_part(d).1 == d);
        QuadNum { a, b, d }
    }

    pub fn zero() -> Self {
        Self::from_i64(0)
    }

    pub fn one() -> Self {
        Self::from_i64(1)
    }

    pub fn rational_part(&self) -> &BigRational {
        &self.a
    }

    pub fn irrational_part(&self) -> &BigRational {
        &self.b
    }

    pub fn radicand(&self) -> u64 {
        self.d
    }

    pub fn is_rational(&self) -> bool {
        self.d == 0
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    fn field(&self, other: &Self) -> u64 {
        match (self.d, other.d) {
            (0, d) | (d, 0) => d,
            (x, y) if x == y => x,
            (x, y) => panic!("cannot combine Q(sqrt {x}) with Q(sqrt {y})"),
        }
    }

    pub fn signum(&self) -> i32 {
        let sa = sign_of(&self.a);
        let sb = sign_of(&self.b);
        if sb == 0 || self.d == 0 {
            return sa;
        }
        if sa == 0 || sa == sb {
            return sb;
        }
        let a2 = &self.a * &self.a;
        let b2d = &self.b * &self.b * BigRational::from_integer(BigInt::from(self.d));
        if a2 > b2d {
            sa
        } else {
            sb
        }
    }

    pub fn abs(&self) -> Self {
        if self.signum() < 0 {
            -self.clone()
        } else {
            self.clone()
        }
    }

    pub fn recip(&self) -> Self {
        assert!(!self.is_zero(), "division by zero");
        let d = BigRational::from_integer(BigInt::from(self.d));
        let norm = &self.a * &self.a - &self.b * &self.b * d;
        QuadNum::new(&self.a / &norm, -(&self.b / &norm), self.d)
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut acc = QuadNum::one();
        let mut base = self.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            base = &base * &base;
            e >>= 1;
        }
        acc
    }

    pub fn to_f64(&self) -> f64 {
        let a = self.a.to_f64().unwrap_or(f64::NAN);
        if self.d == 0 {
            return a;
        }
        let bs = self.b.to_f64().unwrap_or(f64::NAN) * (self.d as f64).sqrt();
        if sign_of(&self.a) * sign_of(&self.b) >= 0 {
            return a + bs;
        }
        // Opposite signs cancel; divide the exact norm a² - b²d by a - b√d.
        let norm = &self.a * &self.a - &self.b * &self.b * BigRational::from_integer(BigInt::from(self.d));
        norm.to_f64().unwrap_or(f64::NAN) / (a - bs)
    }

    /// Rigorous enclosure of the value.
    pub fn enclosure(&self) -> Interval {
        let a = Interval::from_rational(&self.a);
        if self.d == 0 {
            return a;
        }
        let b = Interval::from_rational(&self.b);
        a + b * Interval::sqrt_u64(self.d)
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut p = Parser { src: s.as_bytes(), pos: 0 };
        let v = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(Error::Parse(format!("trailing input in {s:?} at byte {}", p.pos)));
        }
        Ok(v)
    }
}

fn sign_of(r: &BigRational) -> i32 {
    if r.is_zero() {
        0
    } else if r.is_positive() {
        1
    } else {
        -1
    }
}

/// Splits `n = s^2 * d` with `d` squarefree; returns `(s, d)`.
fn squarefree_part(mut n: u64) -> (u64, u64) {
    let mut s = 1u64;
    let mut d = 1u64;
    let mut p = 2u64;
    while p * p <= n {
        let mut e = 0;
        while n % p == 0 {
            n /= p;
            e += 1;
        }
        s *= p.pow(e / 2);
        if e % 2 == 1 {
            d *= p;
        }
        p += 1;
    }
    (s, d * n)
}

/// Checks that all values live in one field and returns its radicand.
pub fn common_radicand<'a>(vals: impl IntoIterator<Item = &'a QuadNum>) -> Result<u64> {
    let mut d = 0;
    for v in vals {
        if v.d != 0 {
            if d != 0 && d != v.d {
                return Err(Error::Argument(format!(
                    "values mix sqrt({d}) and sqrt({}); exact mode needs a single quadratic field",
                    v.d
                )));
            }
            d = v.d;
        }
    }
    Ok(d)
}

impl Ord for QuadNum {
    fn cmp(&self, other: &Self) -> Ordering {
        (self - other).signum().cmp(&0)
    }
}

impl PartialOrd for QuadNum {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<'a> Add<&'a QuadNum> for &'a QuadNum {
    type Output = QuadNum;
    fn add(self, o: &QuadNum) -> QuadNum {
        let d = self.field(o);
        QuadNum::new(&self.a + &o.a, &self.b + &o.b, d)
    }
}

impl<'a> Sub<&'a QuadNum> for &'a QuadNum {
    type Output = QuadNum;
    fn sub(self, o: &QuadNum) -> QuadNum {
        let d = self.field(o);
        QuadNum::new(&self.a - &o.a, &self.b - &o.b, d)
    }
}

impl<'a> Mul<&'a QuadNum> for &'a QuadNum {
    type Output = QuadNum;
    fn mul(self, o: &QuadNum) -> QuadNum {
        let d = self.field(o);
        let dd = BigRational::from_integer(BigInt::from(d));
        let a = &self.a * &o.a + &self.b * &o.b * dd;
        let b = &self.a * &o.b + &self.b * &o.a;
        QuadNum::new(a, b, d)
    }
}

impl<'a> Div<&'a QuadNum> for &'a QuadNum {
    type Output = QuadNum;
    fn div(self, o: &QuadNum) -> QuadNum {
        self * &o.recip()
    }
}

macro_rules! owned_ops {
    ($($tr:ident $m:ident),*) => {$(
        impl $tr for QuadNum {
            type Output = QuadNum;
            fn $m(self, o: QuadNum) -> QuadNum { (&self).$m(&o) }
        }
    )*};
}
owned_ops!(Add add, Sub sub, Mul mul, Div div);

impl Neg for QuadNum {
    type Output = QuadNum;
    fn neg(self) -> QuadNum {
        QuadNum { a: -self.a, b: -self.b, d: self.d }
    }
}

impl fmt::Display for QuadNum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.d == 0 {
            return write!(f, "{}", self.a);
        }
        let sign = if self.b.is_negative() { '-' } else { '+' };
        write!(f, "{}{}({})*sqrt({})", self.a, sign, self.b.abs(), self.d)
    }
}

struct Parser<'s> {
    src: &'s [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn err(&self, what: &str) -> Error {
        Error::Parse(format!(
            "{what} at byte {} of {:?}",
            self.pos,
            String::from_utf8_lossy(self.src)
        ))
    }

    fn expr(&mut self) -> Result<QuadNum> {
        let mut acc = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                b'+' => {
                    self.pos += 1;
                    acc = checked(&acc, &self.term()?, |x, y| x + y)?;
                }
                b'-' => {
                    self.pos += 1;
                    acc = checked(&acc, &self.term()?, |x, y| x - y)?;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<QuadNum> {
        let mut acc = self.factor()?;
        while let Some(c) = self.peek() {
            match c {
                b'*' => {
                    self.pos += 1;
                    acc = checked(&acc, &self.factor()?, |x, y| x * y)?;
                }
                b'/' => {
                    self.pos += 1;
                    let den = self.factor()?;
                    if den.is_zero() {
                        return Err(self.err("division by zero"));
                    }
                    acc = checked(&acc, &den, |x, y| x / y)?;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<QuadNum> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(-self.factor()?)
            }
            Some(b'+') => {
                self.pos += 1;
                self.factor()
            }
            Some(b'(') => {
                self.pos += 1;
                let v = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(v)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(b's') => {
                if !self.src[self.pos..].starts_with(b"sqrt") {
                    return Err(self.err("unknown identifier"));
                }
                self.pos += 4;
                if self.peek() != Some(b'(') {
                    return Err(self.err("expected '(' after sqrt"));
                }
                self.pos += 1;
                let arg = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                self.sqrt(arg)
            }
            _ => Err(self.err("unexpected token")),
        }
    }

    fn sqrt(&self, arg: QuadNum) -> Result<QuadNum> {
        if !arg.is_rational() || arg.a.is_negative() {
            return Err(self.err("sqrt needs a nonnegative rational argument"));
        }
        // sqrt(p/q) = sqrt(p*q)/q
        let p = arg.a.numer().clone();
        let q = arg.a.denom().clone();
        let pq = (&p * &q)
            .to_u64()
            .ok_or_else(|| self.err("sqrt argument too large"))?;
        let (s, d) = squarefree_part(pq);
        let coef = BigRational::new(BigInt::from(s), q);
        if d == 1 {
            Ok(QuadNum::rational(coef))
        } else {
            Ok(QuadNum::new(BigRational::zero(), coef, d))
        }
    }

    fn number(&mut self) -> Result<QuadNum> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let (int, frac) = match text.split_once('.') {
            Some((i, f)) => (i, f),
            None => (text, ""),
        };
        if (int.is_empty() && frac.is_empty()) || frac.contains('.') {
            return Err(self.err("malformed number"));
        }
        let digits = format!("{int}{frac}");
        let mut num: BigInt = digits.parse().map_err(|_| self.err("malformed number"))?;
        let mut exp: i64 = -(frac.len() as i64);
        if self.pos < self.src.len() && (self.src[self.pos] == b'e' || self.src[self.pos] == b'E') {
            self.pos += 1;
            let es = self.pos;
            if self.pos < self.src.len() && (self.src[self.pos] == b'-' || self.src[self.pos] == b'+') {
                self.pos += 1;
            }
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let e: i64 = std::str::from_utf8(&self.src[es..self.pos])
                .unwrap()
                .parse()
                .map_err(|_| self.err("malformed exponent"))?;
            exp += e;
        }
        if exp.abs() > 4000 {
            return Err(self.err("exponent out of range"));
        }
        let ten = BigInt::from(10);
        let r = if exp >= 0 {
            num *= num_traits::pow(ten, exp as usize);
            BigRational::from_integer(num)
        } else {
            BigRational::new(num, num_traits::pow(ten, (-exp) as usize))
        };
        Ok(QuadNum::rational(r))
    }
}

fn checked(x: &QuadNum, y: &QuadNum, f: impl Fn(&QuadNum, &QuadNum) -> QuadNum) -> Result<QuadNum> {
    common_radicand([x, y])?;
    Ok(f(x, y))
}

/// A real number given either exactly or as a plain float.
///
/// In JSON an integer or a string is read exactly (strings through the
/// expression parser); a float literal is float-only, since its decimal
/// spelling is already lost.
#[derive(Clone, Debug, PartialEq)]
pub struct Scalar {
    pub value: f64,
    pub exact: Option<QuadNum>,
}

impl Scalar {
    pub fn float(value: f64) -> Self {
        Scalar { value, exact: None }
    }

    pub fn exact(q: QuadNum) -> Self {
        Scalar { value: q.to_f64(), exact: Some(q) }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(Self::exact(QuadNum::parse(s)?))
    }

    pub fn require_exact(&self, what: &str) -> Result<&QuadNum> {
        self.exact.as_ref().ok_or_else(|| {
            Error::Argument(format!("{what} = {} is float-only; exact mode needs an exact value (write it as a string such as \"1/3\")", self.value))
        })
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::float(v)
    }
}

impl From<QuadNum> for Scalar {
    fn from(q: QuadNum) -> Self {
        Scalar::exact(q)
    }
}

impl Serialize for QuadNum {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match &self.exact {
            Some(q) => s.serialize_str(&q.to_string()),
            None => s.serialize_f64(self.value),
        }
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::String(s) => Scalar::parse(&s).map_err(D::Error::custom),
            serde_json::Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Ok(Scalar::exact(QuadNum::from_i64(i)))
                } else {
                    Ok(Scalar::float(n.as_f64().ok_or_else(|| D::Error::custom("number out of range"))?))
                }
            }
            other => Err(D::Error::custom(format!("expected a number or an expression string, found {other}"))),
        }
    }
}

/// Closed interval with outward rounding after every operation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi);
        Interval { lo, hi }
    }

    pub fn from_rational(r: &BigRational) -> Self {
        let x = r.to_f64().unwrap_or(f64::NAN);
        let back = BigRational::from_float(x);
        match back {
            Some(b) if &b == r => Interval::point(x),
            _ => Interval { lo: x.next_down(), hi: x.next_up() },
        }
    }

    pub fn sqrt_u64(d: u64) -> Self {
        let s = (d as f64).sqrt();
        Interval { lo: s.next_down(), hi: s.next_up() }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(0.0)
    }

    /// Lower bound on |x| over the interval.
    pub fn mig(&self) -> f64 {
        if self.lo > 0.0 {
            self.lo
        } else if self.hi < 0.0 {
            -self.hi
        } else {
            0.0
        }
    }

    /// Upper bound on |x| over the interval.
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, o: Interval) -> Interval {
        let lo = self.lo + o.lo;
        let hi = self.hi + o.hi;
        Interval { lo: round_down(lo, self.lo, o.lo), hi: round_up(hi, self.hi, o.hi) }
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, o: Interval) -> Interval {
        self + (-o)
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval { lo: -self.hi, hi: -self.lo }
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, o: Interval) -> Interval {
        let c = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exact = self.lo == self.hi && o.lo == o.hi && is_exact_product(self.lo, o.lo);
        if exact {
            Interval::point(lo)
        } else {
            Interval { lo: lo.next_down(), hi: hi.next_up() }
        }
    }
}

// A sum is exact when it does not round; two-sum detects that cheaply.
fn round_down(s: f64, a: f64, b: f64) -> f64 {
    if two_sum_err(s, a, b) == 0.0 {
        s
    } else {
        s.next_down()
    }
}

fn round_up(s: f64, a: f64, b: f64) -> f64 {
    if two_sum_err(s, a, b) == 0.0 {
        s
    } else {
        s.next_up()
    }
}

fn two_sum_err(s: f64, a: f64, b: f64) -> f64 {
    if !s.is_finite() {
        return 1.0;
    }
    let bb = s - a;
    let aa = s - bb;
    (a - aa) + (b - bb)
}

fn is_exact_product(a: f64, b: f64) -> bool {
    let p = a * b;
    p.is_finite() && a.mul_add(b, -p) == 0.0
}

//! Exact polynomials in `x, y` with rational coefficients, and quotients of them.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Highest exponent allowed per variable before giving up on expansion.
pub const MAX_DEGREE: u32 = 12;

/// `Σ c · x^i · y^j`, keyed by `[i, j]`; zero terms are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Poly {
    terms: BTreeMap<[u32; 2], BigRational>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: BigRational) -> Self {
        let mut p = Poly::zero();
        if !c.is_zero() {
            p.terms.insert([0, 0], c);
        }
        p
    }

    pub fn var(index: usize) -> Self {
        let mut e = [0, 0];
        e[index] = 1;
        let mut p = Poly::zero();
        p.terms.insert(e, BigRational::one());
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_constant(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 => self.terms.get(&[0, 0]).cloned(),
            _ => None,
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32; 2], &BigRational)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, exp: [u32; 2]) -> BigRational {
        self.terms.get(&exp).cloned().unwrap_or_else(BigRational::zero)
    }

    /// Highest exponent of variable `index`.
    pub fn degree_in(&self, index: usize) -> u32 {
        self.terms.keys().map(|e| e[index]).max().unwrap_or(0)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(|e| e[0] + e[1]).max().unwrap_or(0)
    }

    pub fn uses(&self, index: usize) -> bool {
        self.terms.keys().any(|e| e[index] > 0)
    }

    fn insert_add(&mut self, exp: [u32; 2], c: BigRational) {
        let entry = self.terms.entry(exp).or_insert_with(BigRational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&exp);
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.insert_add(*e, c.clone());
        }
        out
    }

    pub fn neg(&self) -> Poly {
        Poly {
            terms: self.terms.iter().map(|(e, c)| (*e, -c)).collect(),
        }
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Poly) -> Option<Poly> {
        if self.degree_in(0) + other.degree_in(0) > MAX_DEGREE || self.degree_in(1) + other.degree_in(1) > MAX_DEGREE {
            return None;
        }
        let mut out = Poly::zero();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                out.insert_add([ea[0] + eb[0], ea[1] + eb[1]], ca * cb);
            }
        }
        Some(out)
    }

    pub fn scale(&self, s: &BigRational) -> Poly {
        if s.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self.terms.iter().map(|(e, c)| (*e, c * s)).collect(),
        }
    }

    pub fn eval_exact(&self, point: [&BigRational; 2]) -> BigRational {
        let mut acc = BigRational::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (v, &k) in point.iter().zip(e) {
                for _ in 0..k {
                    t *= *v;
                }
            }
            acc += t;
        }
        acc
    }

    pub fn eval(&self, point: [f64; 2]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| ratio_to_f64(c) * point[0].powi(e[0] as i32) * point[1].powi(e[1] as i32))
            .sum()
    }

    /// Largest coefficient magnitude; a scale for residual tests.
    pub fn scale_f64(&self) -> f64 {
        self.terms.values().map(|c| ratio_to_f64(c).abs()).fold(0.0, f64::max)
    }

    /// Ascending coefficients in the single variable `index`; `None` if the
    /// other variable occurs.
    pub fn univariate(&self, index: usize) -> Option<Vec<BigRational>> {
        let other = 1 - index;
        if self.uses(other) {
            return None;
        }
        let mut out = vec![BigRational::zero(); self.degree_in(index) as usize + 1];
        for (e, c) in &self.terms {
            out[e[index] as usize] = c.clone();
        }
        Some(out)
    }
}

pub fn ratio_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Very large or small parts: divide in floating point after scaling.
        let n = r.numer().to_f64().unwrap_or(f64::INFINITY);
        let d = r.denom().to_f64().unwrap_or(f64::INFINITY);
        n / d
    })
}

/// Exact square root of a non-negative rational, if it is a perfect square.
pub fn exact_sqrt(r: &BigRational) -> Option<BigRational> {
    if r.is_negative() {
        return None;
    }
    let root = |n: &BigInt| {
        let s = n.sqrt();
        (&s * &s == *n).then_some(s)
    };
    Some(BigRational::new(root(r.numer())?, root(r.denom())?))
}

/// `num / den` with `den` never the zero polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct RatFn {
    pub num: Poly,
    pub den: Poly,
}

impl RatFn {
    pub fn poly(p: Poly) -> Self {
        RatFn {
            num: p,
            den: Poly::constant(BigRational::one()),
        }
    }

    /// Keeps constant denominators folded into the numerator.
    fn normalized(num: Poly, den: Poly) -> Self {
        if let Some(c) = den.as_constant() {
            let inv = c.recip();
            return RatFn::poly(num.scale(&inv));
        }
        if num.is_zero() {
            return RatFn::poly(Poly::zero());
        }
        RatFn { num, den }
    }

    pub fn as_constant(&self) -> Option<BigRational> {
        let n = self.num.as_constant()?;
        let d = self.den.as_constant()?;
        Some(n / d)
    }

    pub fn add(&self, o: &RatFn) -> Option<RatFn> {
        if self.den == o.den {
            return Some(RatFn::normalized(self.num.add(&o.num), self.den.clone()));
        }
        let num = self.num.mul(&o.den)?.add(&o.num.mul(&self.den)?);
        Some(RatFn::normalized(num, self.den.mul(&o.den)?))
    }

    pub fn sub(&self, o: &RatFn) -> Option<RatFn> {
        self.add(&RatFn {
            num: o.num.neg(),
            den: o.den.clone(),
        })
    }

    pub fn mul(&self, o: &RatFn) -> Option<RatFn> {
        Some(RatFn::normalized(self.num.mul(&o.num)?, self.den.mul(&o.den)?))
    }

    /// `None` on expansion overflow; `Err(())` when dividing by the zero polynomial.
    pub fn div(&self, o: &RatFn) -> Result<Option<RatFn>, ()> {
        if o.num.is_zero() {
            return Err(());
        }
        let num = self.num.mul(&o.den);
        let den = self.den.mul(&o.num);
        Ok(match (num, den) {
            (Some(n), Some(d)) => Some(RatFn::normalized(n, d)),
            _ => None,
        })
    }

    pub fn pow(&self, k: u32) -> Option<RatFn> {
        let mut out = RatFn::poly(Poly::constant(BigRational::one()));
        for _ in 0..k {
            out = out.mul(self)?;
        }
        Some(out)
    }
}

//! Scalar backends, log-space magnitudes, exact rational helpers and small
//! dense linear algebra shared by the other modules.

use std::cmp::Ordering;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar field used by the generic solvers: binary floating point or exact rationals.
pub trait Real: Clone + Debug + PartialOrd + Num + Signed + Send + Sync + 'static {
    fn from_f64_exact(x: f64) -> Self;
    fn from_ratio(n: i64, d: i64) -> Self;
    fn to_f64(&self) -> f64;
    /// Natural log of the absolute value; `-inf` at zero.
    fn ln_abs(&self) -> f64;
    fn is_exact() -> bool;
    fn backend_name() -> &'static str;
}

impl Real for f64 {
    fn from_f64_exact(x: f64) -> Self {
        x
    }
    fn from_ratio(n: i64, d: i64) -> Self {
        n as f64 / d as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn ln_abs(&self) -> f64 {
        self.abs().ln()
    }
    fn is_exact() -> bool {
        false
    }
    fn backend_name() -> &'static str {
        "float"
    }
}

impl Real for BigRational {
    fn from_f64_exact(x: f64) -> Self {
        BigRational::from_f64(x).expect("finite float")
    }
    fn from_ratio(n: i64, d: i64) -> Self {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }
    fn to_f64(&self) -> f64 {
        rational_to_f64(self)
    }
    fn ln_abs(&self) -> f64 {
        rational_ln_abs(self)
    }
    fn is_exact() -> bool {
        true
    }
    fn backend_name() -> &'static str {
        "rational"
    }
}

/// Natural log of |n| for a big integer, accurate to double precision.
pub fn bigint_ln_abs(n: &BigInt) -> f64 {
    if n.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = n.bits();
    if bits <= 1000 {
        return n.abs().to_f64().unwrap_or(f64::INFINITY).ln();
    }
    let shift = bits - 64;
    let top: BigInt = n.abs() >> shift;
    top.to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
}

/// Natural log of |q|, robust to numerators and denominators far outside the f64 range.
pub fn rational_ln_abs(q: &BigRational) -> f64 {
    if q.is_zero() {
        return f64::NEG_INFINITY;
    }
    bigint_ln_abs(q.numer()) - bigint_ln_abs(q.denom())
}

fn top_bits(n: &BigInt) -> (f64, i64) {
    let bits = n.bits();
    if bits <= 64 {
        return (n.abs().to_f64().unwrap_or(0.0), 0);
    }
    let shift = bits - 64;
    let top: BigInt = n.abs() >> shift;
    (top.to_f64().unwrap_or(0.0), shift as i64)
}

/// `num/den` as f64 without forming either operand in floating point.
pub fn ratio_to_f64(num: &BigInt, den: &BigInt) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let (a, ea) = top_bits(num);
    let (b, eb) = top_bits(den);
    let sign = if (num.sign() == Sign::Minus) != (den.sign() == Sign::Minus) { -1.0 } else { 1.0 };
    let e = ea - eb;
    let m = a / b;
    let v = if e.abs() < 1000 {
        m * 2f64.powi(e as i32)
    } else {
        (m.ln() + e as f64 * std::f64::consts::LN_2).exp()
    };
    sign * v
}

/// Conversion to f64 that survives huge numerators and denominators.
pub fn rational_to_f64(q: &BigRational) -> f64 {
    ratio_to_f64(q.numer(), q.denom())
}

/// Magnitude stored as sign and natural logarithm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogScale {
    pub sign: i8,
    pub ln: f64,
}

impl LogScale {
    pub fn zero() -> Self {
        LogScale { sign: 0, ln: f64::NEG_INFINITY }
    }

    pub fn one() -> Self {
        LogScale { sign: 1, ln: 0.0 }
    }

    /// Positive magnitude `exp(ln)`.
    pub fn from_ln(ln: f64) -> Self {
        LogScale { sign: 1, ln }
    }

    pub fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            Self::zero()
        } else {
            LogScale { sign: if x > 0.0 { 1 } else { -1 }, ln: x.abs().ln() }
        }
    }

    pub fn from_rational(q: &BigRational) -> Self {
        if q.is_zero() {
            Self::zero()
        } else {
            LogScale { sign: if q.is_negative() { -1 } else { 1 }, ln: rational_ln_abs(q) }
        }
    }

    pub fn abs(self) -> Self {
        if self.sign == 0 {
            self
        } else {
            LogScale { sign: 1, ln: self.ln }
        }
    }

    /// `|self|^e` with the sign dropped.
    pub fn powf(self, e: f64) -> Self {
        if self.sign == 0 {
            return if e > 0.0 { self } else { Self::one() };
        }
        LogScale { sign: 1, ln: self.ln * e }
    }

    pub fn log10(self) -> f64 {
        self.ln / std::f64::consts::LN_10
    }

    /// Plain value; underflows to zero below the f64 range.
    pub fn to_f64(self) -> f64 {
        if self.sign == 0 {
            0.0
        } else {
            self.sign as f64 * self.ln.exp()
        }
    }

    pub fn cmp_abs(&self, other: &Self) -> Ordering {
        self.ln.partial_cmp(&other.ln).unwrap_or(Ordering::Equal)
    }
}

impl Mul for LogScale {
    type Output = LogScale;
    fn mul(self, rhs: Self) -> Self {
        if self.sign == 0 || rhs.sign == 0 {
            return Self::zero();
        }
        LogScale { sign: self.sign * rhs.sign, ln: self.ln + rhs.ln }
    }
}

impl Div for LogScale {
    type Output = LogScale;
    fn div(self, rhs: Self) -> Self {
        assert!(rhs.sign != 0, "division by a zero magnitude");
        if self.sign == 0 {
            return self;
        }
        LogScale { sign: self.sign * rhs.sign, ln: self.ln - rhs.ln }
    }
}

impl Add for LogScale {
    type Output = LogScale;
    fn add(self, rhs: Self) -> Self {
        if self.sign == 0 {
            return rhs;
        }
        if rhs.sign == 0 {
            return self;
        }
        let (big, small) = if self.ln >= rhs.ln { (self, rhs) } else { (rhs, self) };
        let ratio = (small.ln - big.ln).exp();
        if big.sign == small.sign {
            LogScale { sign: big.sign, ln: big.ln + ratio.ln_1p() }
        } else if ratio == 1.0 {
            Self::zero()
        } else {
            LogScale { sign: big.sign, ln: big.ln + (-ratio).ln_1p() }
        }
    }
}

impl Neg for LogScale {
    type Output = LogScale;
    fn neg(self) -> Self {
        LogScale { sign: -self.sign, ln: self.ln }
    }
}

impl Sub for LogScale {
    type Output = LogScale;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

/// Parses an exact rational from `"a/b"`, an integer, a decimal or a scientific literal.
pub fn parse_rational(text: &str) -> Result<BigRational> {
    let t = text.trim();
    if t.is_empty() {
        return Err(Error::Parse("empty number".into()));
    }
    if let Some((a, b)) = t.split_once('/') {
        let n = BigInt::from_str_radix(a.trim(), 10)
            .map_err(|e| Error::Parse(format!("numerator `{a}`: {e}")))?;
        let d = BigInt::from_str_radix(b.trim(), 10)
            .map_err(|e| Error::Parse(format!("denominator `{b}`: {e}")))?;
        if d.is_zero() {
            return Err(Error::Parse(format!("zero denominator in `{t}`")));
        }
        return Ok(BigRational::new(n, d));
    }
    let (mantissa, exponent) = match t.find(['e', 'E']) {
        Some(k) => {
            let e: i64 = t[k + 1..]
                .parse()
                .map_err(|e| Error::Parse(format!("exponent in `{t}`: {e}")))?;
            (&t[..k], e)
        }
        None => (t, 0),
    };
    let (neg, body) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    let digits = format!("{int_part}{frac_part}");
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
        return Err(Error::Parse(format!("not a number: `{t}`")));
    }
    let n = BigInt::from_str_radix(&digits, 10).map_err(|e| Error::Parse(e.to_string()))?;
    let n = if neg { -n } else { n };
    let scale = exponent - frac_part.len() as i64;
    let ten = BigInt::from(10u32);
    let q = if scale >= 0 {
        BigRational::from_integer(n * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(n, num_traits::pow(ten, (-scale) as usize))
    };
    Ok(q)
}

/// Rational square root: exact when possible, else a continued-fraction convergent.
#[derive(Clone, Debug)]
pub struct SqrtApprox {
    pub value: BigRational,
    pub exact: bool,
    pub rel_error: f64,
}

/// Square root of a positive rational with denominator at most `max_den` when inexact.
pub fn sqrt_rational(q: &BigRational, max_den: u64) -> Result<SqrtApprox> {
    if !q.is_positive() {
        return Err(Error::Domain("square root of a non-positive rational".into()));
    }
    let (n, d) = (q.numer().clone(), q.denom().clone());
    let (rn, rd) = (n.sqrt(), d.sqrt());
    if &rn * &rn == n && &rd * &rd == d {
        return Ok(SqrtApprox { value: BigRational::new(rn, rd), exact: true, rel_error: 0.0 });
    }
    // high-precision rational estimate, then the best convergent under the cap
    let scale = num_traits::pow(BigInt::from(10u32), 60);
    let root = (&n * &d * &scale * &scale).sqrt();
    let target = BigRational::new(root, &d * &scale);
    let cap = BigInt::from(max_den);
    let mut best = BigRational::from_integer(target.floor().to_integer());
    let (mut h0, mut h1) = (BigInt::zero(), BigInt::one());
    let (mut k0, mut k1) = (BigInt::one(), BigInt::zero());
    let mut x = target.clone();
    for _ in 0..200 {
        let a = x.floor().to_integer();
        let h2 = &a * &h1 + &h0;
        let k2 = &a * &k1 + &k0;
        if k2 > cap {
            break;
        }
        best = BigRational::new(h2.clone(), k2.clone());
        h0 = std::mem::replace(&mut h1, h2);
        k0 = std::mem::replace(&mut k1, k2);
        let frac = &x - BigRational::from_integer(a);
        if frac.is_zero() {
            break;
        }
        x = frac.recip();
    }
    let exact_f = rational_to_f64(q).sqrt();
    let rel_error = ((rational_to_f64(&best) - exact_f) / exact_f).abs();
    Ok(SqrtApprox { value: best, exact: false, rel_error })
}

/// Solves `a·x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Result<Vec<T>> {
    let n = b.len();
    if a.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(Error::Degenerate("matrix shape mismatch".into()));
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| {
                a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap_or(Ordering::Equal)
            })
            .unwrap();
        if a[piv][col].is_zero() {
            return Err(Error::Degenerate(format!("singular matrix at column {col}")));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            if a[row][col].is_zero() {
                continue;
            }
            let f = a[row][col].clone() / a[col][col].clone();
            for k in col..n {
                let v = a[col][k].clone() * f.clone();
                a[row][k] = a[row][k].clone() - v;
            }
            let v = b[col].clone() * f;
            b[row] = b[row].clone() - v;
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row].clone();
        for k in row + 1..n {
            acc = acc - a[row][k].clone() * x[k].clone();
        }
        x[row] = acc / a[row][row].clone();
    }
    Ok(x)
}

/// Least-squares line through the points; returns (slope, intercept, r²).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(Error::Fit(format!("need at least two points, got {n}")));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok((slope, my - slope * mx, r2))
}

/// Sign of a big integer as -1, 0 or 1.
pub fn bigint_sign(n: &BigInt) -> i8 {
    match n.sign() {
        Sign::Minus => -1,
        Sign::NoSign => 0,
        Sign::Plus => 1,
    }
}

/// Floor of a rational as a big integer.
pub fn floor_div(n: &BigInt, d: &BigInt) -> BigInt {
    n.div_floor(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_exact_literals() {
        let q = parse_rational("1/100000000").unwrap();
        assert_eq!(q, BigRational::new(1.into(), 100_000_000.into()));
        assert_eq!(parse_rational("1e-9").unwrap(), BigRational::new(1.into(), 1_000_000_000.into()));
        assert_eq!(parse_rational("0.05").unwrap(), BigRational::new(1.into(), 20.into()));
        assert_eq!(parse_rational("-2.5E1").unwrap(), BigRational::from_integer((-25).into()));
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("1/0").is_err());
    }

    #[test]
    fn sqrt_exact_and_approximate() {
        let q = parse_rational("1/100000000").unwrap();
        let r = sqrt_rational(&q, 1_000_000).unwrap();
        assert!(r.exact);
        assert_eq!(r.value, BigRational::new(1.into(), 10_000.into()));
        let q = parse_rational("1e-9").unwrap();
        let r = sqrt_rational(&q, 100_000_000).unwrap();
        assert!(!r.exact);
        assert!(r.rel_error < 1e-10, "{}", r.rel_error);
        assert!(r.value.denom() <= &BigInt::from(100_000_000u64));
    }

    #[test]
    fn huge_rationals_convert() {
        let big = num_traits::pow(BigInt::from(10u32), 500);
        let q = BigRational::new(BigInt::from(3), big);
        let ln = rational_ln_abs(&q);
        assert!((ln - (3f64.ln() - 500.0 * 10f64.ln())).abs() < 1e-9);
        assert_eq!(rational_to_f64(&q), 0.0);
    }

    #[test]
    fn logscale_addition() {
        let a = LogScale::from_f64(3.0);
        let b = LogScale::from_f64(-1.25);
        assert!(((a + b).to_f64() - 1.75).abs() < 1e-15);
        assert!(((b - a).to_f64() + 4.25).abs() < 1e-15);
        assert_eq!((a - a).sign, 0);
        let tiny = LogScale::from_ln(-1000.0);
        let sum = tiny + tiny;
        assert!((sum.ln - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn logscale_products() {
        let a = LogScale::from_f64(-0.5);
        let b = LogScale::from_f64(4.0);
        assert!(((a * b).to_f64() + 2.0).abs() < 1e-15);
        assert!(((b / a).to_f64() + 8.0).abs() < 1e-14);
        assert_eq!(LogScale::from_ln(-1e6).to_f64(), 0.0);
        assert!((LogScale::from_f64(8.0).powf(1.0 / 3.0).to_f64() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_rational_exact() {
        let a = vec![
            vec![BigRational::from_ratio(0, 1), BigRational::from_ratio(1, 1)],
            vec![BigRational::from_ratio(2, 1), BigRational::from_ratio(1, 3)],
        ];
        let b = vec![BigRational::from_ratio(1, 2), BigRational::from_ratio(1, 1)];
        let x = gauss_solve(a, b).unwrap();
        assert_eq!(x[1], BigRational::from_ratio(1, 2));
        assert_eq!(x[0], BigRational::from_ratio(5, 12));
    }

    #[test]
    fn fit_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let (m, c, r2) = linear_fit(&xs, &ys).unwrap();
        assert!((m - 2.0).abs() < 1e-12 && (c + 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}

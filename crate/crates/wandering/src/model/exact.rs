//! Exact rational evaluation of the model: word maps, invariant-manifold positions,
//! tangency offsets and the constructive search for tangency pairs.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::ModelParams;
use crate::error::{Error, Result};
use crate::numeric::{ratio_to_f64, rational_to_f64};
use crate::symbolic::{OneSidedSequence, Side, TransitionGraph};

/// Unreduced fraction; reduced once at the end of a long affine chain.
#[derive(Clone, Debug)]
struct Raw {
    num: BigInt,
    den: BigInt,
}

impl Raw {
    fn zero() -> Self {
        Raw { num: BigInt::zero(), den: BigInt::one() }
    }

    fn from(q: &BigRational) -> Self {
        Raw { num: q.numer().clone(), den: q.denom().clone() }
    }

    /// `a + b·self`.
    fn affine(&self, a: &Raw, b: &Raw) -> Raw {
        let num = &a.num * &b.den * &self.den + &a.den * &b.num * &self.num;
        let den = &a.den * &b.den * &self.den;
        Raw { num, den }
    }

    fn reduce(self) -> BigRational {
        BigRational::new(self.num, self.den)
    }

    fn to_f64(&self) -> f64 {
        ratio_to_f64(&self.num, &self.den)
    }
}

/// Offsets of the word maps: `𝒳^c(x₁) = x_offset + s^k·x₁`, `𝒴^c(y₀) = y_offset + (rs)^k·y₀`.
#[derive(Clone, Debug)]
pub struct WordAffine {
    pub x_offset: BigRational,
    pub y_offset: BigRational,
    pub len: usize,
}

/// Exact model evaluator with a shared word cache.
#[derive(Clone, Debug)]
pub struct ExactModel {
    n: usize,
    s: BigRational,
    r: BigRational,
    rs: BigRational,
    mids: Vec<BigRational>,
    p: Vec<BigRational>,
    fold_half: BigRational,
    graph: TransitionGraph,
    cache: Arc<Mutex<HashMap<Vec<usize>, Arc<WordAffine>>>>,
}

impl ExactModel {
    pub fn new(params: &ModelParams) -> Self {
        let s = params.s();
        let r = params.r();
        ExactModel {
            n: params.n,
            rs: &r * &s,
            s,
            r,
            mids: (1..=params.n).map(|j| params.mid(j)).collect(),
            p: params.p.clone(),
            fold_half: params.fold_half_width(),
            graph: TransitionGraph::single_vertex(params.n, params.n - 1),
            cache: Arc::new(Mutex::new(HashMap::new())),
        }
    }

    /// Same model with new offsets; the word cache is shared.
    pub fn with_p(&self, p: Vec<BigRational>) -> Self {
        let mut out = self.clone();
        out.p = p;
        out
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> &[BigRational] {
        &self.p
    }

    pub fn s(&self) -> &BigRational {
        &self.s
    }

    pub fn r(&self) -> &BigRational {
        &self.r
    }

    pub fn graph(&self) -> &TransitionGraph {
        &self.graph
    }

    pub fn fold_half_width(&self) -> &BigRational {
        &self.fold_half
    }

    /// Midpoint of `I_{a+1}` for arrow index `a`.
    pub fn mid(&self, a: usize) -> &BigRational {
        &self.mids[a]
    }

    /// Interval `I_{a+1}` for arrow index `a`.
    pub fn interval(&self, a: usize) -> (BigRational, BigRational) {
        (&self.mids[a] - &self.s, &self.mids[a] + &self.s)
    }

    fn compute(&self, letters: &[usize]) -> WordAffine {
        let s = Raw::from(&self.s);
        let rs = Raw::from(&self.rs);
        let mut x = Raw::zero();
        for &a in letters.iter().rev() {
            x = x.affine(&Raw::from(&self.mids[a]), &s);
        }
        let mut y = Raw::zero();
        for &a in letters {
            y = y.affine(&Raw::from(&(&self.r * &self.mids[a])), &rs);
        }
        WordAffine { x_offset: x.reduce(), y_offset: y.reduce(), len: letters.len() }
    }

    /// Cached offsets of a hyperbolic word.
    pub fn word(&self, letters: &[usize]) -> Arc<WordAffine> {
        if let Some(w) = self.cache.lock().expect("cache lock").get(letters) {
            return w.clone();
        }
        let w = Arc::new(self.compute(letters));
        self.cache.lock().expect("cache lock").insert(letters.to_vec(), w.clone());
        w
    }

    /// `b^c = 𝒳^c(0, ·)`, the pullback of the vertical fiber through the critical abscissa.
    pub fn b_value(&self, letters: &[usize]) -> BigRational {
        self.word(letters).x_offset.clone()
    }

    /// `h_c = 𝒴^c(·, 0)`.
    pub fn h_value(&self, letters: &[usize]) -> BigRational {
        self.word(letters).y_offset.clone()
    }

    /// Fold entered after `letters`, 0-based.
    pub fn fold_of(&self, letters: &[usize]) -> Result<usize> {
        match letters.last() {
            Some(&a) if a + 1 < self.n => Ok(a),
            Some(_) => Err(Error::Membership(format!("words ending with a{} feed no fold", self.n))),
            None => Err(Error::Membership("the empty word feeds no fold".into())),
        }
    }

    /// `a^c = h_c + p_j`, the critical value of the fold after `c`.
    pub fn a_value(&self, letters: &[usize]) -> Result<BigRational> {
        let k = self.fold_of(letters)?;
        Ok(self.h_value(letters) + &self.p[k])
    }

    /// `𝒱^{c,c'} = a^c − b^{c'}`.
    pub fn v(&self, c: &[usize], c2: &[usize]) -> Result<BigRational> {
        Ok(self.a_value(c)? - self.b_value(c2))
    }

    /// `𝒱^{c,s} = a^c − x^s`.
    pub fn v_seq(&self, c: &[usize], s: &OneSidedSequence) -> Result<BigRational> {
        Ok(self.a_value(c)? - self.x_stable(s))
    }

    /// Abscissa of the vertical stable manifold `W^s`.
    pub fn x_stable(&self, seq: &OneSidedSequence) -> BigRational {
        debug_assert_eq!(seq.side(), Side::Right);
        let per = self.word(seq.period());
        let q = per.len as i32;
        let fixed = &per.x_offset / (BigRational::one() - num_traits::pow(self.s.clone(), q as usize));
        let head = self.word(seq.head());
        &head.x_offset + num_traits::pow(self.s.clone(), head.len) * fixed
    }

    /// Height of the horizontal unstable manifold `W^u`.
    pub fn y_unstable(&self, seq: &OneSidedSequence) -> BigRational {
        debug_assert_eq!(seq.side(), Side::Left);
        let per = self.word(seq.period());
        let fixed = &per.y_offset / (BigRational::one() - num_traits::pow(self.rs.clone(), per.len));
        let head = self.word(seq.head());
        &head.y_offset + num_traits::pow(self.rs.clone(), head.len) * fixed
    }

    /// Letter whose interval contains `t`, if any.
    fn locate(&self, t: &Raw) -> Option<usize> {
        let tf = t.to_f64();
        let sf = rational_to_f64(&self.s);
        let guess = (((tf + 1.0) * self.n as f64 / 2.0).floor() as i64).clamp(0, self.n as i64 - 1) as usize;
        let mf = rational_to_f64(&self.mids[guess]);
        let slack = sf - (tf - mf).abs();
        if slack > 1e-9 {
            return Some(guess);
        }
        // near an interval end: decide exactly
        let lo = guess.saturating_sub(1);
        let hi = (guess + 1).min(self.n - 1);
        let tq = BigRational::new(t.num.clone(), t.den.clone());
        (lo..=hi).find(|&a| {
            let (l, h) = self.interval(a);
            l <= tq && tq <= h
        })
    }

    /// Stable itinerary of `t` under `x ↦ C_a⁻¹(x)`, `depth` letters.
    pub fn stable_digits(&self, t: &BigRational, depth: usize) -> Option<Vec<usize>> {
        let mut x = Raw::from(t);
        let inv_s = Raw::from(&self.s.recip());
        let mut out = Vec::with_capacity(depth);
        for _ in 0..depth {
            let a = self.locate(&x)?;
            out.push(a);
            let shift = Raw::from(&(-&self.mids[a] / &self.s));
            x = x.affine(&shift, &inv_s);
        }
        Some(out)
    }

    /// Constructive tangency pair for fold `k` (0-based): `u` ends with `a_{k+1}`,
    /// `s` starts with `a_{k+2}`, and `y^u + p_k` agrees with `x^s` to within `s^depth`.
    pub fn tangency_pair(&self, k: usize, depth: usize) -> Result<(OneSidedSequence, OneSidedSequence)> {
        if k + 1 >= self.n {
            return Err(Error::Membership(format!("no fold with index {}", k + 1)));
        }
        let mut candidates = vec![OneSidedSequence::new(Side::Left, vec![], vec![k], &self.graph)?];
        for a in 0..self.n {
            candidates.push(OneSidedSequence::new(Side::Left, vec![a, k], vec![k], &self.graph)?);
        }
        for u in candidates {
            let t = self.y_unstable(&u) + &self.p[k];
            if let Some(digits) = self.stable_digits(&t, depth) {
                if digits[0] != k + 1 {
                    continue;
                }
                let last = *digits.last().expect("depth ≥ 1");
                let s = OneSidedSequence::new(Side::Right, digits, vec![last], &self.graph)?;
                return Ok((u, s));
            }
        }
        Err(Error::NoTangency(format!("no unstable candidate meets the stable Cantor set for fold f{}", k + 1)))
    }

    /// Exact generator step `(C_a⁻¹(x), r·C_a(y))`.
    pub fn generator_step(&self, a: usize, x: &BigRational, y: &BigRational) -> (BigRational, BigRational) {
        ((x - &self.mids[a]) / &self.s, &self.r * (&self.mids[a] + &self.s * y))
    }

    /// Exact fold step `(x² + y + p_k, −r·x)`.
    pub fn fold_step(&self, k: usize, x: &BigRational, y: &BigRational) -> (BigRational, BigRational) {
        (x * x + y + &self.p[k], -(&self.r * x))
    }

    /// Whether `x` lies in `I_{a+1}` and how far from its ends.
    pub fn slack(&self, a: usize, x: &BigRational) -> BigRational {
        let d = (x - &self.mids[a]).abs();
        &self.s - d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperbolic::{invariant_manifold, word_rep};
    use crate::model::build_model;
    use crate::numeric::parse_rational;

    fn model(delta: &str) -> (ModelParams, ExactModel) {
        let p = ModelParams::new(6, parse_rational(delta).unwrap()).unwrap();
        let e = ExactModel::new(&p);
        (p, e)
    }

    #[test]
    fn b_of_single_letter() {
        let (_, e) = model("1/100000000");
        let b = rational_to_f64(&e.b_value(&[0]));
        assert!((b + 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn word_offsets_match_float_reps() {
        let (p, e) = model("1/10000");
        let sys = build_model(p).unwrap();
        let letters = vec![2, 0, 5, 3, 1, 1, 4];
        let w = crate::symbolic::Word::from_letters(letters.clone(), crate::hyperbolic::RepSource::graph(&sys)).unwrap();
        let rep = word_rep(&w, &sys, 1e-14).unwrap();
        let j = rep.eval(0.0, 0.0).unwrap();
        assert!((j.x - rational_to_f64(&e.b_value(&letters))).abs() < 1e-15);
        assert!((j.y - rational_to_f64(&e.h_value(&letters))).abs() < 1e-17);
    }

    #[test]
    fn fixed_points_of_constant_sequences() {
        let (p, e) = model("1/10000");
        let g = e.graph().clone();
        let s = OneSidedSequence::constant(Side::Right, 0, &g).unwrap();
        let x = e.x_stable(&s);
        let (lo, _) = e.interval(0);
        // fixed point of C_1 is the left end of the hull
        let expected = -(BigRational::one() - BigRational::new(1.into(), 6.into())) / (BigRational::one() - e.s());
        assert_eq!(x, expected);
        assert!(x > -BigRational::one() && x < lo + e.s());
        let u = OneSidedSequence::constant(Side::Left, 2, &g).unwrap();
        let y = e.y_unstable(&u);
        let (_, y2) = e.generator_step(2, &BigRational::zero(), &y);
        assert_eq!(y, y2);
        let sys = build_model(p).unwrap();
        let curve = invariant_manifold(&s, 12, &sys, 1e-14).unwrap();
        assert!((curve.eval(0.3).unwrap() - rational_to_f64(&x)).abs() <= curve.error.to_f64() + 1e-15);
    }

    #[test]
    fn tangency_pair_is_nearly_exact() {
        let (_, e) = model("1/10000");
        for k in 0..5 {
            let (u, s) = e.tangency_pair(k, 30).unwrap();
            assert_eq!(u.letter(0), k);
            assert_eq!(s.letter(0), k + 1);
            let gap = e.y_unstable(&u) + &e.p()[k] - e.x_stable(&s);
            assert!(rational_to_f64(&gap).abs() < 2.0 * rational_to_f64(e.s()).powi(30));
        }
    }

    #[test]
    fn v_is_affine_with_identity_part() {
        let (_, e) = model("1/10000");
        let c = vec![1, 2, 0];
        let c2 = vec![1, 4];
        let v0 = e.v(&c, &c2).unwrap();
        let mut p = e.p().to_vec();
        let h = BigRational::new(1.into(), 12345.into());
        p[0] += &h;
        let e2 = e.with_p(p);
        assert_eq!(e2.v(&c, &c2).unwrap() - v0, h);
        assert!(e.v(&[5], &c2).is_err());
    }
}

//! Quartic CM fields K = L(t), t² + a·t + b = 0, over a real quadratic L of
//! strict class number one, with O_K = O_L[t].
//!
//! Elements are u + v·t with u, v ∈ L. Ideals are stored as Z-lattices in the
//! coordinates (1, ω, t, ωt) over a common rational denominator. Prime and
//! class data are cached behind mutexes so a field can be shared across threads.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::arith;
use crate::base_field::{FieldElem, IdealL, PrimeOfL, RealQuadraticField, TotalSign};
use crate::error::{Error, Result};
use crate::lattice::{self, Mat};

/// u + v·t.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ElemK {
    pub u: FieldElem,
    pub v: FieldElem,
}

impl ElemK {
    pub fn new(u: FieldElem, v: FieldElem) -> Self {
        ElemK { u, v }
    }

    pub fn from_base(u: FieldElem) -> Self {
        ElemK { u, v: FieldElem::zero() }
    }

    pub fn zero() -> Self {
        Self::from_base(FieldElem::zero())
    }

    pub fn one() -> Self {
        Self::from_base(FieldElem::one())
    }

    pub fn is_zero(&self) -> bool {
        self.u.is_zero() && self.v.is_zero()
    }

    pub fn is_integral(&self) -> bool {
        self.u.is_integral() && self.v.is_integral()
    }
}

impl fmt::Display for ElemK {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + {}t", self.u, self.v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Splitting {
    Split,
    Inert,
    Ramified,
}

/// Fractional O_K-ideal: the lattice spanned by the rows of `num` divided by `den`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IdealK {
    pub num: Mat,
    pub den: BigInt,
}

impl IdealK {
    pub fn is_integral(&self) -> bool {
        self.den.is_one()
    }

    pub fn is_unit(&self) -> bool {
        self.den.is_one() && lattice::det_triangular(&self.num).is_one()
    }

    /// Absolute norm [O_K : I] (a rational number for fractional ideals).
    pub fn abs_norm(&self) -> BigRational {
        BigRational::new(lattice::det_triangular(&self.num), num_traits::pow(self.den.clone(), 4))
    }

    fn numerator(&self) -> IdealK {
        IdealK { num: self.num.clone(), den: BigInt::one() }
    }
}

/// A prime of K with the prime of L below it.
#[derive(Clone, Debug)]
pub struct PrimeOfK {
    pub below: PrimeOfL,
    pub splitting: Splitting,
    pub ideal: IdealK,
    /// Absolute norm.
    pub norm: BigInt,
    /// Ramification index over Q.
    pub e_abs: u32,
    powers: Arc<Mutex<Vec<IdealK>>>,
}

impl PartialEq for PrimeOfK {
    fn eq(&self, other: &Self) -> bool {
        self.ideal == other.ideal
    }
}
impl Eq for PrimeOfK {}

impl std::hash::Hash for PrimeOfK {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.ideal.hash(state);
    }
}

impl PartialOrd for PrimeOfK {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for PrimeOfK {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (&self.norm, &self.below, &self.ideal).cmp(&(&other.norm, &other.below, &other.ideal))
    }
}

/// K = L(t) with t² + a·t + b = 0 and O_K = O_L[t].
#[derive(Clone, Debug)]
pub struct CMField {
    pub base: RealQuadraticField,
    /// Reduced modulo 2O_L.
    pub a: FieldElem,
    pub b: FieldElem,
    /// a² − 4b, a totally negative generator of the relative discriminant.
    pub d: FieldElem,
    /// Primes of L dividing d.
    pub d_primes: Vec<PrimeOfL>,
    pub disc_abs: BigInt,
    primes: Arc<Mutex<HashMap<u64, Vec<PrimeOfK>>>>,
}

impl PartialEq for CMField {
    fn eq(&self, other: &Self) -> bool {
        self.base == other.base && self.a == other.a && self.b == other.b
    }
}
impl Eq for CMField {}

impl CMField {
    /// Validates the hypotheses on (a, b) and normalises a modulo 2.
    pub fn new(base: RealQuadraticField, a: FieldElem, b: FieldElem) -> Result<Self> {
        if !base.strict_class_number_one {
            return Err(Error::HypothesisViolation("base field lacks strict class number one".into()));
        }
        if !a.is_integral() || !b.is_integral() {
            return Err(Error::InvalidInput("a and b must lie in O_L".into()));
        }
        let l = &base;
        let d = l.sub(&l.mul(&a, &a), &b.scale(&BigInt::from(4)));
        if l.total_sign(&d) != TotalSign::TotallyNegative {
            return Err(Error::HypothesisViolation(format!("d = {d} is not totally negative")));
        }
        for (eta, _) in l.factor_rational_prime(2) {
            if eta.ideal.contains(&a) && l.sqrt_mod(&b, &eta)?.is_some() {
                return Err(Error::HypothesisViolation(
                    "dyadic condition: a prime above 2 divides a and b is a square modulo it".into(),
                ));
            }
        }
        let fac = l.factor_elem(&d)?;
        if fac.iter().any(|(q, e)| *e > 1 || q.p == 2) {
            return Err(Error::HypothesisViolation(format!("d = {d} is not squarefree and odd")));
        }
        let nd = l.norm(&d).to_integer();
        if arith::is_square(&nd) {
            return Err(Error::HypothesisViolation(
                "K is not primitive: N(d) is a rational square, so K is biquadratic".into(),
            ));
        }
        let two = l.ideal(&FieldElem::int(2))?;
        let a_red = two.reduce(l, &a)?;
        let b_red = l.sub(&l.mul(&a_red, &a_red), &d).div_int(&BigInt::from(4));
        debug_assert!(b_red.is_integral());
        let disc_abs = BigInt::from(l.disc) * BigInt::from(l.disc) * &nd;
        Ok(CMField {
            d_primes: fac.into_iter().map(|(q, _)| q).collect(),
            base,
            a: a_red,
            b: b_red,
            d,
            disc_abs,
            primes: Arc::new(Mutex::new(HashMap::new())),
        })
    }

    /// K = L(√δ) for a totally negative δ ∈ O_L: strips square factors of δ
    /// and finds a with a² ≡ δ′ mod 4.
    pub fn from_radicand(base: RealQuadraticField, delta: &FieldElem) -> Result<Self> {
        let l = &base;
        if !delta.is_integral() || l.total_sign(delta) != TotalSign::TotallyNegative {
            return Err(Error::HypothesisViolation(format!("radicand {delta} is not a totally negative integer")));
        }
        let mut d = delta.clone();
        for (q, e) in l.factor_elem(delta)? {
            if e >= 2 {
                let sq = l.pow(q.generator(), 2 * (e / 2))?;
                d = l.div(&d, &sq)?;
            }
        }
        let two = l.ideal(&FieldElem::int(2))?;
        let four = l.ideal(&FieldElem::int(4))?;
        for a in two.residues() {
            if four.contains(&l.sub(&l.mul(&a, &a), &d)) {
                let b = l.sub(&l.mul(&a, &a), &d).div_int(&BigInt::from(4));
                return Self::new(base.clone(), a, b);
            }
        }
        Err(Error::HypothesisViolation("2 ramifies in K/L".into()))
    }

    pub fn tau(&self) -> usize {
        self.d_primes.len()
    }

    /// −Tr_{K/L}(t).
    pub fn a_coeff(&self) -> &FieldElem {
        &self.a
    }

    pub fn t(&self) -> ElemK {
        ElemK::new(FieldElem::zero(), FieldElem::one())
    }

    /// √d = 2t + a.
    pub fn sqrt_d(&self) -> ElemK {
        ElemK::new(self.a.clone(), FieldElem::int(2))
    }

    // element arithmetic

    pub fn add(&self, x: &ElemK, y: &ElemK) -> ElemK {
        let l = &self.base;
        ElemK::new(l.add(&x.u, &y.u), l.add(&x.v, &y.v))
    }

    pub fn neg(&self, x: &ElemK) -> ElemK {
        ElemK::new(self.base.neg(&x.u), self.base.neg(&x.v))
    }

    pub fn sub(&self, x: &ElemK, y: &ElemK) -> ElemK {
        self.add(x, &self.neg(y))
    }

    pub fn mul(&self, x: &ElemK, y: &ElemK) -> ElemK {
        let l = &self.base;
        let vv = l.mul(&x.v, &y.v);
        let u = l.sub(&l.mul(&x.u, &y.u), &l.mul(&self.b, &vv));
        let v = l.sub(&l.add(&l.mul(&x.u, &y.v), &l.mul(&x.v, &y.u)), &l.mul(&self.a, &vv));
        ElemK::new(u, v)
    }

    pub fn scale(&self, x: &ElemK, c: &FieldElem) -> ElemK {
        ElemK::new(self.base.mul(&x.u, c), self.base.mul(&x.v, c))
    }

    /// Complex conjugation t ↦ −a − t.
    pub fn conj(&self, x: &ElemK) -> ElemK {
        let l = &self.base;
        ElemK::new(l.sub(&x.u, &l.mul(&self.a, &x.v)), l.neg(&x.v))
    }

    /// N_{K/L}(u + vt) = u² − a·uv + b·v².
    pub fn rel_norm(&self, x: &ElemK) -> FieldElem {
        let l = &self.base;
        let uu = l.mul(&x.u, &x.u);
        let uv = l.mul(&l.mul(&x.u, &x.v), &self.a);
        let vv = l.mul(&l.mul(&x.v, &x.v), &self.b);
        l.add(&l.sub(&uu, &uv), &vv)
    }

    /// Tr_{K/L}(u + vt) = 2u − a·v.
    pub fn rel_trace(&self, x: &ElemK) -> FieldElem {
        let l = &self.base;
        l.sub(&x.u.scale(&BigInt::from(2)), &l.mul(&self.a, &x.v))
    }

    pub fn abs_norm(&self, x: &ElemK) -> BigRational {
        self.base.norm(&self.rel_norm(x))
    }

    pub fn inv(&self, x: &ElemK) -> Result<ElemK> {
        let n = self.rel_norm(x);
        let ni = self.base.inv(&n)?;
        Ok(self.scale(&self.conj(x), &ni))
    }

    pub fn div(&self, x: &ElemK, y: &ElemK) -> Result<ElemK> {
        Ok(self.mul(x, &self.inv(y)?))
    }

    pub fn pow(&self, x: &ElemK, e: u32) -> ElemK {
        let mut r = ElemK::one();
        for _ in 0..e {
            r = self.mul(&r, x);
        }
        r
    }

    /// Coordinates on (1, ω, t, ωt) over a common positive denominator.
    pub fn to_z(&self, x: &ElemK) -> (Vec<BigInt>, BigInt) {
        let den = x.u.den.lcm(&x.v.den);
        let fu = &den / &x.u.den;
        let fv = &den / &x.v.den;
        (vec![&x.u.x * &fu, &x.u.y * &fu, &x.v.x * &fv, &x.v.y * &fv], den)
    }

    pub fn from_z(&self, c: &[BigInt], den: &BigInt) -> ElemK {
        ElemK::new(
            FieldElem::new(c[0].clone(), c[1].clone(), den.clone()).unwrap(),
            FieldElem::new(c[2].clone(), c[3].clone(), den.clone()).unwrap(),
        )
    }

    /// Tr_{K/Q}(x), an integer for integral x.
    pub fn abs_trace(&self, x: &ElemK) -> BigRational {
        self.base.trace(&self.rel_trace(x))
    }

    // ideals

    fn ideal_from_rows(&self, rows: Vec<Vec<BigInt>>, den: BigInt) -> Result<IdealK> {
        let h = lattice::hnf(&rows, 4).ok_or_else(|| Error::InvalidInput("zero ideal".into()))?;
        let mut g = den.clone();
        for r in &h {
            for v in r {
                g = g.gcd(v);
            }
        }
        let (num, den) = if g.is_one() {
            (h, den)
        } else {
            (h.iter().map(|r| r.iter().map(|v| v / &g).collect()).collect(), den / &g)
        };
        Ok(IdealK { num, den })
    }

    fn o_k_basis(&self) -> [ElemK; 4] {
        let w = self.base.omega();
        [
            ElemK::one(),
            ElemK::from_base(w.clone()),
            self.t(),
            ElemK::new(FieldElem::zero(), w),
        ]
    }

    /// The O_K-ideal generated by the given elements.
    pub fn ideal(&self, gens: &[ElemK]) -> Result<IdealK> {
        let basis = self.o_k_basis();
        let mut prods = Vec::new();
        for g in gens {
            for b in &basis {
                prods.push(self.to_z(&self.mul(g, b)));
            }
        }
        self.ideal_from_zs(prods)
    }

    fn ideal_from_zs(&self, zs: Vec<(Vec<BigInt>, BigInt)>) -> Result<IdealK> {
        let mut den = BigInt::one();
        for (_, dd) in &zs {
            den = den.lcm(dd);
        }
        let rows = zs
            .into_iter()
            .map(|(c, dd)| {
                let f = &den / &dd;
                c.into_iter().map(|v| v * &f).collect()
            })
            .collect();
        self.ideal_from_rows(rows, den)
    }

    pub fn principal(&self, g: &ElemK) -> Result<IdealK> {
        self.ideal(std::slice::from_ref(g))
    }

    pub fn unit_ideal(&self) -> IdealK {
        self.principal(&ElemK::one()).unwrap()
    }

    /// The extension 𝔫O_K of an ideal of L given by a generator.
    pub fn extend(&self, g: &FieldElem) -> Result<IdealK> {
        self.principal(&ElemK::from_base(g.clone()))
    }

    /// Z-basis of an ideal as elements of K.
    pub fn ideal_basis(&self, i: &IdealK) -> Vec<ElemK> {
        i.num.iter().map(|r| self.from_z(r, &i.den)).collect()
    }

    pub fn ideal_mul(&self, i: &IdealK, j: &IdealK) -> IdealK {
        let bi = self.ideal_basis(i);
        let bj = self.ideal_basis(j);
        let mut zs = Vec::with_capacity(16);
        for x in &bi {
            for y in &bj {
                zs.push(self.to_z(&self.mul(x, y)));
            }
        }
        self.ideal_from_zs(zs).expect("product of nonzero ideals")
    }

    pub fn ideal_scale(&self, i: &IdealK, g: &ElemK) -> Result<IdealK> {
        if g.is_zero() {
            return Err(Error::InvalidInput("zero ideal".into()));
        }
        let zs = self.ideal_basis(i).iter().map(|x| self.to_z(&self.mul(x, g))).collect();
        self.ideal_from_zs(zs)
    }

    pub fn ideal_conj(&self, i: &IdealK) -> IdealK {
        let zs = self.ideal_basis(i).iter().map(|x| self.to_z(&self.conj(x))).collect();
        self.ideal_from_zs(zs).unwrap()
    }

    /// Totally positive generator of N_{K/L}(I) = I·Ī ∩ L.
    pub fn relative_norm_generator(&self, i: &IdealK) -> Result<FieldElem> {
        let p = self.ideal_mul(i, &self.ideal_conj(i));
        let h2: Mat = p.num[..2].iter().map(|r| r[..2].to_vec()).collect();
        let g = self
            .base
            .find_generator(&h2)
            .ok_or_else(|| Error::VerificationFailed("relative norm is not principal".into()))?;
        let g = self.base.totally_positive_generator(&g)?;
        Ok(g.div_int(&p.den))
    }

    /// N_{K/L}(I) for an integral ideal.
    pub fn relative_norm(&self, i: &IdealK) -> Result<IdealL> {
        if !i.is_integral() {
            return Err(Error::InvalidInput("relative_norm needs an integral ideal".into()));
        }
        self.base.ideal(&self.relative_norm_generator(i)?)
    }

    pub fn ideal_inv(&self, i: &IdealK) -> Result<IdealK> {
        let g = self.relative_norm_generator(i)?;
        let gi = self.base.inv(&g)?;
        self.ideal_scale(&self.ideal_conj(i), &ElemK::from_base(gi))
    }

    pub fn ideal_div(&self, i: &IdealK, j: &IdealK) -> Result<IdealK> {
        Ok(self.ideal_mul(i, &self.ideal_inv(j)?))
    }

    pub fn ideal_pow(&self, i: &IdealK, e: i64) -> Result<IdealK> {
        let base = if e < 0 { self.ideal_inv(i)? } else { i.clone() };
        let mut r = self.unit_ideal();
        for _ in 0..e.unsigned_abs() {
            r = self.ideal_mul(&r, &base);
        }
        Ok(r)
    }

    pub fn contains(&self, i: &IdealK, x: &ElemK) -> bool {
        let (c, dx) = self.to_z(x);
        // c/dx ∈ num/den  ⇔  c·den/dx is an integral vector of num
        let mut v = Vec::with_capacity(4);
        for ci in c {
            let t = ci * &i.den;
            let (q, r) = t.div_rem(&dx);
            if !r.is_zero() {
                return false;
            }
            v.push(q);
        }
        lattice::contains(&i.num, &v)
    }

    /// J ⊆ I.
    pub fn ideal_contains(&self, i: &IdealK, j: &IdealK) -> bool {
        self.ideal_basis(j).iter().all(|x| self.contains(i, x))
    }

    // primes

    /// All primes of K above the rational prime q, ordered by the prime of L
    /// below and then by lattice.
    pub fn primes_over(&self, q: u64) -> Vec<PrimeOfK> {
        if let Some(v) = self.primes.lock().unwrap().get(&q) {
            return v.clone();
        }
        let mut out = Vec::new();
        for (pr, e_l) in self.base.factor_rational_prime(q) {
            out.extend(self.compute_primes_above(&pr, e_l));
        }
        self.primes.lock().unwrap().insert(q, out.clone());
        out
    }

    pub fn primes_above(&self, pr: &PrimeOfL) -> Vec<PrimeOfK> {
        self.primes_over(pr.p).into_iter().filter(|p| &p.below == pr).collect()
    }

    pub fn splitting(&self, pr: &PrimeOfL) -> Splitting {
        self.primes_above(pr)[0].splitting
    }

    /// Roots of t² + a t + b modulo 𝔭, as canonical residues.
    fn roots_mod(&self, pr: &PrimeOfL) -> Result<Vec<FieldElem>> {
        let l = &self.base;
        let m = &pr.ideal;
        if pr.p == 2 || pr.norm() <= 64 {
            let mut v = Vec::new();
            for r in m.residues() {
                let f = l.add(&l.mul(&r, &l.add(&r, &self.a)), &self.b);
                if m.contains(&f) {
                    v.push(r);
                }
            }
            return Ok(v);
        }
        let inv2 = FieldElem::int(BigInt::from((pr.p + 1) / 2));
        let ma = l.neg(&self.a);
        if m.contains(&self.d) {
            return Ok(vec![m.reduce(l, &l.mul(&ma, &inv2))?]);
        }
        match l.sqrt_mod(&self.d, pr)? {
            None => Ok(Vec::new()),
            Some(s) => {
                let mut v = vec![
                    m.reduce(l, &l.mul(&l.add(&ma, &s), &inv2))?,
                    m.reduce(l, &l.mul(&l.sub(&ma, &s), &inv2))?,
                ];
                v.sort();
                Ok(v)
            }
        }
    }

    fn compute_primes_above(&self, pr: &PrimeOfL, e_l: u32) -> Vec<PrimeOfK> {
        let pi = ElemK::from_base(pr.generator().clone());
        let roots = self.roots_mod(pr).expect("integral data");
        let double_root = roots.len() == 1
            && (pr.p == 2 || pr.ideal.contains(&self.d))
            && {
                let l = &self.base;
                // derivative 2r + a vanishes at a double root
                let r = &roots[0];
                pr.ideal.contains(&l.add(&r.scale(&BigInt::from(2)), &self.a))
            };
        let make = |gens: &[ElemK], splitting: Splitting, f: u32, e: u32| {
            let ideal = self.ideal(gens).unwrap();
            PrimeOfK {
                below: pr.clone(),
                splitting,
                norm: BigInt::from(pr.norm()).pow(f),
                e_abs: e_l * e,
                powers: Arc::new(Mutex::new(vec![ideal.clone()])),
                ideal,
            }
        };
        let t = self.t();
        let lin = |r: &FieldElem| self.sub(&t, &ElemK::from_base(r.clone()));
        if roots.is_empty() {
            vec![make(&[pi], Splitting::Inert, 2, 1)]
        } else if double_root {
            vec![make(&[pi, lin(&roots[0])], Splitting::Ramified, 1, 2)]
        } else {
            let mut v: Vec<PrimeOfK> = roots
                .iter()
                .map(|r| make(&[pi.clone(), lin(r)], Splitting::Split, 1, 1))
                .collect();
            v.sort_by(|x, y| x.ideal.cmp(&y.ideal));
            v
        }
    }

    /// P^k for k ≥ 1, cached.
    pub fn prime_power(&self, pr: &PrimeOfK, k: usize) -> IdealK {
        assert!(k >= 1);
        let mut pw = pr.powers.lock().unwrap();
        while pw.len() < k {
            let next = self.ideal_mul(pw.last().unwrap(), &pr.ideal);
            pw.push(next);
        }
        pw[k - 1].clone()
    }

    /// v_P(I) for a nonzero fractional ideal.
    pub fn valuation(&self, i: &IdealK, pr: &PrimeOfK) -> i64 {
        let num = i.numerator();
        let mut k = 0usize;
        while self.ideal_contains(&self.prime_power(pr, k + 1), &num) {
            k += 1;
        }
        let vden = i.den.clone();
        let mut dv = 0i64;
        let pb = BigInt::from(pr.below.p);
        let mut t = vden;
        while (&t % &pb).is_zero() {
            t /= &pb;
            dv += 1;
        }
        k as i64 - dv * pr.e_abs as i64
    }

    pub fn elem_valuation(&self, x: &ElemK, pr: &PrimeOfK) -> i64 {
        self.valuation(&self.principal(x).unwrap(), pr)
    }

    /// Prime factorization of a nonzero fractional ideal.
    pub fn factor_ideal(&self, i: &IdealK) -> Result<Vec<(PrimeOfK, i64)>> {
        let n = lattice::det_triangular(&i.num);
        let mut qs: Vec<u64> = arith::factor(&n)?.into_iter().map(|(q, _)| q).collect();
        qs.extend(arith::factor(&i.den)?.into_iter().map(|(q, _)| q));
        qs.sort_unstable();
        qs.dedup();
        let mut out = Vec::new();
        for q in qs {
            for pr in self.primes_over(q) {
                let v = self.valuation(i, &pr);
                if v != 0 {
                    out.push((pr, v));
                }
            }
        }
        Ok(out)
    }

    pub fn ideal_from_factors(&self, f: &[(PrimeOfK, i64)]) -> Result<IdealK> {
        let mut r = self.unit_ideal();
        for (p, e) in f {
            let pp = if *e >= 0 {
                if *e == 0 {
                    continue;
                }
                self.prime_power(p, *e as usize)
            } else {
                self.ideal_inv(&self.prime_power(p, (-e) as usize))?
            };
            r = self.ideal_mul(&r, &pp);
        }
        Ok(r)
    }

    // lattice enumeration

    /// Integer rows of the numerator lattice and the Gram matrix of
    /// Tr_{K/Q}(x ȳ) on them (twice the form Tr_{L/Q}(x x̄)).
    fn trace_gram(&self, i: &IdealK) -> Result<(Vec<Vec<i128>>, Vec<Vec<i128>>)> {
        let elems: Vec<ElemK> = i.num.iter().map(|r| self.from_z(r, &BigInt::one())).collect();
        let n = elems.len();
        let mut g = vec![vec![0i128; n]; n];
        for a in 0..n {
            for b in a..n {
                let tr = self.abs_trace(&self.mul(&elems[a], &self.conj(&elems[b])));
                let v = lattice::to_i128(&tr.to_integer())?;
                g[a][b] = v;
                g[b][a] = v;
            }
        }
        let rows = i
            .num
            .iter()
            .map(|r| r.iter().map(lattice::to_i128).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok((rows, g))
    }

    fn combine(&self, rows: &[Vec<i128>], c: &[i128], den: &BigInt) -> ElemK {
        let mut z = vec![BigInt::zero(); 4];
        for (ci, r) in c.iter().zip(rows) {
            if *ci != 0 {
                for k in 0..4 {
                    z[k] += BigInt::from(ci * r[k]);
                }
            }
        }
        self.from_z(&z, den)
    }

    fn rel_norm_search(&self, i: &IdealK, target: &FieldElem, first_only: bool) -> Result<Vec<ElemK>> {
        let l = &self.base;
        let mut out = Vec::new();
        if l.total_sign(target) != TotalSign::TotallyPositive {
            return Ok(out);
        }
        // γ = c/den with γγ̄ = target  ⇔  (c)(c̄) = den²·target
        let den2 = &i.den * &i.den;
        let scaled = target.scale(&den2);
        if !scaled.is_integral() {
            return Ok(out);
        }
        let bound = (l.trace(&scaled) * BigInt::from(2)).to_integer();
        let bound = lattice::to_i128(&bound)?;
        let (rows, g) = self.trace_gram(i)?;
        lattice::enumerate_short(&g, bound, |c, val| {
            if val != bound {
                return true;
            }
            let x = self.combine(&rows, c, &i.den);
            if &self.rel_norm(&x) == target {
                out.push(x);
                return !first_only;
            }
            true
        });
        Ok(out)
    }

    /// All γ ∈ I with γγ̄ = target (totally positive), by enumeration under the
    /// definite form Tr_{L/Q}(γγ̄) at level Tr_{L/Q}(target).
    pub fn enumerate_elements_with_relative_norm(&self, i: &IdealK, target: &FieldElem) -> Result<Vec<ElemK>> {
        self.rel_norm_search(i, target, false)
    }

    /// A generator of I, or `None` if I is not principal.
    ///
    /// If I = (γ) then γγ̄ is a totally positive generator of N_{K/L}(I), hence
    /// differs from the canonical one by ε^{2k}; rescaling γ by ε^{−k} makes it
    /// equal, so the search at that exact level is exhaustive.
    pub fn is_principal(&self, i: &IdealK) -> Result<Option<ElemK>> {
        let num = i.numerator();
        let g = self.relative_norm_generator(&num)?;
        let found = self.rel_norm_search(&num, &g, true)?;
        Ok(found.into_iter().next().map(|x| {
            let dinv = FieldElem::one().div_int(&i.den);
            self.scale(&x, &dinv)
        }))
    }

    /// Number of roots of unity in K.
    pub fn roots_of_unity_count(&self) -> usize {
        self.enumerate_elements_with_relative_norm(&self.unit_ideal(), &FieldElem::one())
            .expect("small search")
            .len()
    }

    /// #(O_K^× / O_L^×). Since the fundamental unit of L has norm −1, no unit
    /// of K has relative norm ±ε, so the Hasse unit index is 1 and the
    /// quotient is μ_K/{±1}.
    pub fn unit_index(&self) -> usize {
        self.roots_of_unity_count() / 2
    }

    /// Minkowski bound (4!/4⁴)(4/π)²·√|disc K|.
    pub fn minkowski_bound(&self) -> f64 {
        let pi = std::f64::consts::PI;
        24.0 / 256.0 * (16.0 / (pi * pi)) * self.disc_abs.to_f64().unwrap().sqrt()
    }

    /// LLL-reduced Z-basis of an ideal, as elements.
    pub fn reduced_basis(&self, i: &IdealK) -> Result<Vec<ElemK>> {
        let (rows, g) = self.trace_gram(i)?;
        let (u, _) = lattice::lll_gram(&g);
        Ok(u.iter().map(|c| self.combine(&rows, c, &i.den)).collect())
    }
}

/// Small coefficient vectors in {−r..r}^4 ordered by max-norm then lexicographically.
fn small_combos(r: i64) -> Vec<[i64; 4]> {
    let mut v = Vec::new();
    for a in -r..=r {
        for b in -r..=r {
            for c in -r..=r {
                for d in -r..=r {
                    if a != 0 || b != 0 || c != 0 || d != 0 {
                        v.push([a, b, c, d]);
                    }
                }
            }
        }
    }
    v.sort_by_key(|x| (x.iter().map(|t| t.abs()).max().unwrap(), x.iter().map(|t| t.abs()).sum::<i64>()));
    v
}

/// Class vector in the coordinates of [`ClassGroup::structure`].
pub type ClassVec = Vec<BigInt>;

/// Ideal class group of K from a factor base, certified exactly.
#[derive(Debug)]
pub struct ClassGroup {
    pub order: BigInt,
    /// Orders of the nontrivial cyclic factors.
    pub structure: Vec<BigInt>,
    pub factor_base: Vec<PrimeOfK>,
    fb_bound: BigInt,
    /// Class of each factor base prime.
    fb_classes: Vec<ClassVec>,
    /// One factor-base ideal per class, keyed by class vector.
    class_ideals: BTreeMap<ClassVec, IdealK>,
    cache: Mutex<HashMap<IdealK, ClassVec>>,
    disc: BigInt,
}

impl ClassGroup {
    /// Computes Cl(K). `relation_budget` caps the number of elements tried
    /// per factor-base ideal.
    pub fn compute(k: &CMField, relation_budget: usize) -> Result<Self> {
        let bound = k.minkowski_bound().max(30.0).ceil() as u64;
        let fb_bound = BigInt::from(bound);
        let mut fb: Vec<PrimeOfK> = Vec::new();
        for q in arith::primes_up_to(bound) {
            for pr in k.primes_over(q) {
                if pr.norm <= fb_bound {
                    fb.push(pr);
                }
            }
        }
        let nfb = fb.len();
        let mut relations: Vec<Vec<BigInt>> = Vec::new();
        let mut seen: HashSet<Vec<BigInt>> = HashSet::new();
        let fb_index: HashMap<IdealK, usize> = fb.iter().enumerate().map(|(i, p)| (p.ideal.clone(), i)).collect();

        let smooth_vector = |x: &ElemK| -> Option<Vec<BigInt>> {
            let n = k.abs_norm(x).to_integer().abs();
            let f = arith::factor(&n).ok()?;
            let mut v = vec![BigInt::zero(); nfb];
            let id = k.principal(x).ok()?;
            for (q, _) in f {
                for pr in k.primes_over(q) {
                    let e = k.valuation(&id, &pr);
                    if e != 0 {
                        let &j = fb_index.get(&pr.ideal)?;
                        v[j] = BigInt::from(e);
                    }
                }
            }
            Some(v)
        };

        let mut sources = vec![k.unit_ideal()];
        sources.extend(fb.iter().map(|p| p.ideal.clone()));
        let combos = small_combos(2);
        for src in &sources {
            let basis = k.reduced_basis(src)?;
            for (tried, c) in combos.iter().enumerate() {
                if tried >= relation_budget {
                    break;
                }
                let mut x = ElemK::zero();
                for (ci, b) in c.iter().zip(&basis) {
                    if *ci != 0 {
                        x = k.add(&x, &k.scale(b, &FieldElem::int(*ci)));
                    }
                }
                if let Some(v) = smooth_vector(&x) {
                    if v.iter().any(|e| !e.is_zero()) && seen.insert(v.clone()) {
                        relations.push(v);
                    }
                }
            }
        }
        let mut extra = 0usize;
        loop {
            let s = lattice::smith(&relations, nfb);
            if s.diag.iter().any(|d| d.is_zero()) {
                return Err(Error::RelationSearchIncomplete(nfb));
            }
            let cols: Vec<usize> = (0..nfb).filter(|&i| !s.diag[i].is_one()).collect();
            let structure: Vec<BigInt> = cols.iter().map(|&i| s.diag[i].clone()).collect();
            let fb_classes: Vec<ClassVec> = (0..nfb)
                .map(|i| cols.iter().map(|&c| s.v[i][c].mod_floor(&s.diag[c])).collect())
                .collect();
            let order: BigInt = structure.iter().product();
            // one factor-base ideal per class, breadth first from the unit ideal
            let zero: ClassVec = vec![BigInt::zero(); structure.len()];
            let mut class_ideals: BTreeMap<ClassVec, (IdealK, Vec<i64>)> = BTreeMap::new();
            class_ideals.insert(zero.clone(), (k.unit_ideal(), vec![0; nfb]));
            let mut frontier = vec![zero.clone()];
            while BigInt::from(class_ideals.len()) < order && !frontier.is_empty() {
                let mut next = Vec::new();
                for c in &frontier {
                    let (id, ex) = class_ideals[c].clone();
                    for (j, pr) in fb.iter().enumerate() {
                        let nc = add_classes(c, &fb_classes[j], &structure);
                        if !class_ideals.contains_key(&nc) {
                            let mut ne = ex.clone();
                            ne[j] += 1;
                            class_ideals.insert(nc.clone(), (k.ideal_mul(&id, &pr.ideal), ne));
                            next.push(nc);
                        }
                    }
                }
                frontier = next;
            }
            // certify: every nontrivial class must be non-principal
            let mut new_rel = None;
            for (c, (id, ex)) in &class_ideals {
                if c == &zero {
                    continue;
                }
                if k.is_principal(id)?.is_some() {
                    new_rel = Some(ex.iter().map(|&e| BigInt::from(e)).collect::<Vec<_>>());
                    break;
                }
            }
            match new_rel {
                Some(r) => {
                    relations.push(r);
                    extra += 1;
                    if extra > 64 {
                        return Err(Error::VerificationFailed("class group certification did not converge".into()));
                    }
                }
                None => {
                    return Ok(ClassGroup {
                        order,
                        structure,
                        factor_base: fb,
                        fb_bound,
                        fb_classes,
                        class_ideals: class_ideals.into_iter().map(|(c, (i, _))| (c, i)).collect(),
                        cache: Mutex::new(HashMap::new()),
                        disc: k.disc_abs.clone(),
                    });
                }
            }
        }
    }

    pub fn identity(&self) -> ClassVec {
        vec![BigInt::zero(); self.structure.len()]
    }

    /// All classes in lexicographic order of their vectors.
    pub fn elements(&self) -> Vec<ClassVec> {
        self.class_ideals.keys().cloned().collect()
    }

    pub fn add(&self, x: &ClassVec, y: &ClassVec) -> ClassVec {
        add_classes(x, y, &self.structure)
    }

    pub fn scale(&self, x: &ClassVec, e: i64) -> ClassVec {
        x.iter()
            .zip(&self.structure)
            .map(|(a, m)| (a * BigInt::from(e)).mod_floor(m))
            .collect()
    }

    fn check_field(&self, k: &CMField) {
        assert_eq!(self.disc, k.disc_abs, "class group used with a different field");
    }

    fn class_from_factors(&self, f: &[(PrimeOfK, i64)]) -> Option<ClassVec> {
        let mut c = self.identity();
        for (p, e) in f {
            let j = self.factor_base.iter().position(|q| q == p)?;
            c = self.add(&c, &self.scale(&self.fb_classes[j], *e));
        }
        Some(c)
    }

    /// Class of a nonzero fractional ideal.
    pub fn class_of(&self, k: &CMField, i: &IdealK) -> Result<ClassVec> {
        self.check_field(k);
        if self.structure.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(c) = self.cache.lock().unwrap().get(i) {
            return Ok(c.clone());
        }
        let c = self.compute_class(k, i)?;
        self.cache.lock().unwrap().insert(i.clone(), c.clone());
        Ok(c)
    }

    fn compute_class(&self, k: &CMField, i: &IdealK) -> Result<ClassVec> {
        let f = k.factor_ideal(i)?;
        if let Some(c) = self.class_from_factors(&f) {
            return Ok(c);
        }
        // prime factors outside the base: classes of primes are cached
        // separately so that repeated queries stay cheap
        let mut c = self.identity();
        for (p, e) in &f {
            let pc = if p.norm <= self.fb_bound {
                let j = self.factor_base.iter().position(|q| q == p).unwrap();
                self.fb_classes[j].clone()
            } else {
                self.prime_class(k, p)?
            };
            c = self.add(&c, &self.scale(&pc, *e));
        }
        Ok(c)
    }

    fn prime_class(&self, k: &CMField, p: &PrimeOfK) -> Result<ClassVec> {
        if let Some(c) = self.cache.lock().unwrap().get(&p.ideal) {
            return Ok(c.clone());
        }
        let c = self.smooth_class(k, &p.ideal)?;
        self.cache.lock().unwrap().insert(p.ideal.clone(), c.clone());
        Ok(c)
    }

    /// Class of an integral ideal by finding γ ∈ I⁻¹ with γI smooth over the
    /// factor base, falling back to principality tests against each class.
    fn smooth_class(&self, k: &CMField, i: &IdealK) -> Result<ClassVec> {
        let inv = k.ideal_inv(i)?;
        let basis = k.reduced_basis(&inv)?;
        for c in small_combos(2).iter().take(600) {
            let mut x = ElemK::zero();
            for (ci, b) in c.iter().zip(&basis) {
                if *ci != 0 {
                    x = k.add(&x, &k.scale(b, &FieldElem::int(*ci)));
                }
            }
            if x.is_zero() {
                continue;
            }
            let j = k.ideal_scale(i, &x)?;
            let f = k.factor_ideal(&j)?;
            if let Some(c) = self.class_from_factors(&f) {
                return Ok(c);
            }
        }
        for (c, rep) in &self.class_ideals {
            if k.is_principal(&k.ideal_div(i, rep)?)?.is_some() {
                return Ok(c.clone());
            }
        }
        Err(Error::VerificationFailed("ideal matches no class".into()))
    }

    /// One integral ideal per class, each coprime to `avoid`, ordered by class.
    pub fn representatives(&self, k: &CMField, avoid: &IdealL) -> Result<Vec<(ClassVec, IdealK)>> {
        self.check_field(k);
        let mut found: BTreeMap<ClassVec, IdealK> = BTreeMap::new();
        found.insert(self.identity(), k.unit_ideal());
        let target = self.class_ideals.len();
        let mut primes: Vec<(PrimeOfK, ClassVec)> = Vec::new();
        let mut q = 1u64;
        while found.len() < target {
            q = arith::next_prime(q);
            if q > 100_000 {
                return Err(Error::SearchBudgetExceeded(q as usize));
            }
            for pr in k.primes_over(q) {
                if pr.below.ideal.divides(avoid) {
                    continue;
                }
                let c = self.class_of(k, &pr.ideal)?;
                found.entry(c.clone()).or_insert_with(|| pr.ideal.clone());
                primes.push((pr, c));
            }
            if found.len() < target {
                for (a, ca) in &primes {
                    for (b, cb) in &primes {
                        let c = self.add(ca, cb);
                        if !found.contains_key(&c) {
                            found.insert(c, k.ideal_mul(&a.ideal, &b.ideal));
                        }
                    }
                }
            }
        }
        Ok(found.into_iter().collect())
    }
}

fn add_classes(x: &ClassVec, y: &ClassVec, m: &[BigInt]) -> ClassVec {
    x.iter().zip(y).zip(m).map(|((a, b), m)| (a + b).mod_floor(m)).collect()
}

/// Exponent pattern over primes of K describing one integral ideal.
pub type Factorization = Vec<(PrimeOfK, u32)>;

/// Integral ideals 𝔟 of O_K with N_{K/L}(𝔟) = (n) and class(𝔟) = c.
pub fn count_ideals_norm_in_class(
    k: &CMField,
    g: &ClassGroup,
    n: &FieldElem,
    class: &ClassVec,
) -> Result<(usize, Vec<Factorization>)> {
    let l = &k.base;
    if !n.is_integral() || n.is_zero() {
        return Err(Error::InvalidInput(format!("norm {n} must be a nonzero element of O_L")));
    }
    let mut patterns: Vec<(Factorization, ClassVec)> = vec![(Vec::new(), g.identity())];
    for (pr, e) in l.factor_elem(n)? {
        let e = e as u32;
        let above = k.primes_above(&pr);
        let mut local: Vec<Factorization> = Vec::new();
        match above[0].splitting {
            Splitting::Split => {
                for i in 0..=e {
                    let mut f = Vec::new();
                    if i > 0 {
                        f.push((above[0].clone(), i));
                    }
                    if e - i > 0 {
                        f.push((above[1].clone(), e - i));
                    }
                    local.push(f);
                }
            }
            Splitting::Inert => {
                if e % 2 == 1 {
                    return Ok((0, Vec::new()));
                }
                local.push(vec![(above[0].clone(), e / 2)]);
            }
            Splitting::Ramified => local.push(vec![(above[0].clone(), e)]),
        }
        let mut next = Vec::new();
        for (f0, c0) in &patterns {
            for f in &local {
                let mut c = c0.clone();
                for (p, ex) in f {
                    let pc = g.class_of(k, &p.ideal)?;
                    c = g.add(&c, &g.scale(&pc, *ex as i64));
                }
                let mut ff = f0.clone();
                ff.extend(f.iter().cloned());
                next.push((ff, c));
            }
        }
        patterns = next;
    }
    let hits: Vec<Factorization> = patterns.into_iter().filter(|(_, c)| c == class).map(|(f, _)| f).collect();
    Ok((hits.len(), hits))
}

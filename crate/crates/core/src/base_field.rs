//! Exact arithmetic in a real quadratic field L = Q(√D) and its ring of integers.
//!
//! Elements are stored as (x + y·ω)/den with ω = (1+√D)/2 when D ≡ 1 mod 4 and
//! ω = √D otherwise. The embedding σ₁ sends √D to the positive square root.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::arith;
use crate::error::{Error, Result};
use crate::lattice::{self, Mat};

/// (x + y·ω)/den in lowest terms with den > 0.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldElem {
    pub x: BigInt,
    pub y: BigInt,
    pub den: BigInt,
}

impl FieldElem {
    pub fn new(x: BigInt, y: BigInt, den: BigInt) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(Self::normalized(x, y, den))
    }

    fn normalized(mut x: BigInt, mut y: BigInt, mut den: BigInt) -> Self {
        if den.is_negative() {
            x = -x;
            y = -y;
            den = -den;
        }
        let g = x.gcd(&y).gcd(&den);
        if !g.is_one() && !g.is_zero() {
            x /= &g;
            y /= &g;
            den /= &g;
        }
        if x.is_zero() && y.is_zero() {
            den = BigInt::one();
        }
        FieldElem { x, y, den }
    }

    pub fn int(v: impl Into<BigInt>) -> Self {
        FieldElem { x: v.into(), y: BigInt::zero(), den: BigInt::one() }
    }

    pub fn integral(x: impl Into<BigInt>, y: impl Into<BigInt>) -> Self {
        FieldElem { x: x.into(), y: y.into(), den: BigInt::one() }
    }

    pub fn zero() -> Self {
        Self::int(0)
    }

    pub fn one() -> Self {
        Self::int(1)
    }

    pub fn is_zero(&self) -> bool {
        self.x.is_zero() && self.y.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.x.is_one() && self.y.is_zero() && self.den.is_one()
    }

    pub fn is_integral(&self) -> bool {
        self.den.is_one()
    }

    /// Rational value if the element lies in Q.
    pub fn as_rational(&self) -> Option<BigRational> {
        self.y
            .is_zero()
            .then(|| BigRational::new(self.x.clone(), self.den.clone()))
    }

    pub fn scale(&self, k: &BigInt) -> Self {
        Self::normalized(&self.x * k, &self.y * k, self.den.clone())
    }

    pub fn div_int(&self, k: &BigInt) -> Self {
        Self::normalized(self.x.clone(), self.y.clone(), &self.den * k)
    }

    pub fn coords(&self) -> [BigInt; 2] {
        [self.x.clone(), self.y.clone()]
    }
}

impl fmt::Display for FieldElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.is_one() {
            write!(f, "({} + {}w)", self.x, self.y)
        } else {
            write!(f, "({} + {}w)/{}", self.x, self.y, self.den)
        }
    }
}

/// Exact sign pattern of an element under the two real embeddings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TotalSign {
    TotallyPositive,
    TotallyNegative,
    Mixed,
    Zero,
}

/// L = Q(√D) with the data needed downstream.
#[derive(Clone, Debug)]
pub struct RealQuadraticField {
    pub d: i64,
    /// ω = (1+√D)/2 when true, ω = √D otherwise.
    pub omega_half: bool,
    pub disc: i64,
    /// ω² = m·ω − n
    pub m: i64,
    pub n: i64,
    pub fundamental_unit: FieldElem,
    pub unit_norm: i64,
    pub strict_class_number_one: bool,
}

impl PartialEq for RealQuadraticField {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d
    }
}
impl Eq for RealQuadraticField {}

impl RealQuadraticField {
    /// Builds L = Q(√D) and checks strict class number one.
    pub fn new(d: i64) -> Result<Self> {
        if d <= 1 || !arith::is_squarefree(d as u64) {
            return Err(Error::HypothesisViolation(format!("D = {d} must be squarefree and > 1")));
        }
        let omega_half = d % 4 == 1;
        let (m, n, disc) = if omega_half { (1, -(d - 1) / 4, d) } else { (0, -d, 4 * d) };
        let mut field = RealQuadraticField {
            d,
            omega_half,
            disc,
            m,
            n,
            fundamental_unit: FieldElem::one(),
            unit_norm: 1,
            strict_class_number_one: false,
        };
        field.fundamental_unit = field.unit_by_continued_fraction();
        field.unit_norm = field.norm(&field.fundamental_unit).to_integer().to_i64().unwrap();
        field.strict_class_number_one = field.unit_norm == -1 && field.class_number_one();
        Ok(field)
    }

    /// Like [`new`](Self::new) but rejects fields without strict class number one.
    pub fn new_strict(d: i64) -> Result<Self> {
        let f = Self::new(d)?;
        if !f.strict_class_number_one {
            return Err(Error::HypothesisViolation(format!(
                "Q(sqrt({d})) does not have strict class number one"
            )));
        }
        Ok(f)
    }

    pub fn omega(&self) -> FieldElem {
        FieldElem::integral(0, 1)
    }

    /// (a + b√D)/c in ω-coordinates.
    pub fn from_sqrt_form(&self, a: impl Into<BigInt>, b: impl Into<BigInt>, c: impl Into<BigInt>) -> FieldElem {
        let (a, b, c) = (a.into(), b.into(), c.into());
        if self.omega_half {
            FieldElem::normalized(&a - &b, &b * 2, c)
        } else {
            FieldElem::normalized(a, b, c)
        }
    }

    /// (A, B, C) with element = (A + B√D)/C, C > 0.
    pub fn to_sqrt_form(&self, e: &FieldElem) -> (BigInt, BigInt, BigInt) {
        if self.omega_half {
            (&e.x * 2 + &e.y, e.y.clone(), &e.den * 2)
        } else {
            (e.x.clone(), e.y.clone(), e.den.clone())
        }
    }

    pub fn add(&self, a: &FieldElem, b: &FieldElem) -> FieldElem {
        if a.den == b.den {
            return FieldElem::normalized(&a.x + &b.x, &a.y + &b.y, a.den.clone());
        }
        FieldElem::normalized(&a.x * &b.den + &b.x * &a.den, &a.y * &b.den + &b.y * &a.den, &a.den * &b.den)
    }

    pub fn neg(&self, a: &FieldElem) -> FieldElem {
        FieldElem { x: -&a.x, y: -&a.y, den: a.den.clone() }
    }

    pub fn sub(&self, a: &FieldElem, b: &FieldElem) -> FieldElem {
        self.add(a, &self.neg(b))
    }

    pub fn mul(&self, a: &FieldElem, b: &FieldElem) -> FieldElem {
        let yy = &a.y * &b.y;
        let x = &a.x * &b.x - &yy * self.n;
        let y = &a.x * &b.y + &a.y * &b.x + &yy * self.m;
        FieldElem::normalized(x, y, &a.den * &b.den)
    }

    pub fn conj(&self, a: &FieldElem) -> FieldElem {
        FieldElem::normalized(&a.x + &a.y * self.m, -&a.y, a.den.clone())
    }

    fn norm_num(&self, a: &FieldElem) -> BigInt {
        &a.x * &a.x + &a.x * &a.y * self.m + &a.y * &a.y * self.n
    }

    pub fn norm(&self, a: &FieldElem) -> BigRational {
        BigRational::new(self.norm_num(a), &a.den * &a.den)
    }

    pub fn trace(&self, a: &FieldElem) -> BigRational {
        BigRational::new(&a.x * 2 + &a.y * self.m, a.den.clone())
    }

    pub fn norm_trace(&self, a: &FieldElem) -> (BigRational, BigRational) {
        (self.norm(a), self.trace(a))
    }

    pub fn inv(&self, a: &FieldElem) -> Result<FieldElem> {
        if a.is_zero() {
            return Err(Error::DivisionByZero);
        }
        let c = self.conj(a);
        let nn = self.norm_num(a);
        // a = A/den, 1/a = den·conj(A)/N(A)
        Ok(FieldElem::normalized(&c.x * &a.den, &c.y * &a.den, nn))
    }

    pub fn div(&self, a: &FieldElem, b: &FieldElem) -> Result<FieldElem> {
        Ok(self.mul(a, &self.inv(b)?))
    }

    pub fn pow(&self, a: &FieldElem, e: i64) -> Result<FieldElem> {
        let mut base = if e < 0 { self.inv(a)? } else { a.clone() };
        let mut k = e.unsigned_abs();
        let mut r = FieldElem::one();
        while k > 0 {
            if k & 1 == 1 {
                r = self.mul(&r, &base);
            }
            base = self.mul(&base, &base);
            k >>= 1;
        }
        Ok(r)
    }

    /// Exact sign of σ_i(a), i ∈ {0, 1}.
    pub fn sign(&self, a: &FieldElem, i: usize) -> Ordering {
        let (aa, b, _) = self.to_sqrt_form(a);
        let b = if i == 0 { b } else { -b };
        sign_of_sum(&aa, &b, self.d)
    }

    pub fn total_sign(&self, a: &FieldElem) -> TotalSign {
        if a.is_zero() {
            return TotalSign::Zero;
        }
        let nm = self.norm_num(a);
        if nm.is_negative() {
            return TotalSign::Mixed;
        }
        if self.trace(a).is_positive() {
            TotalSign::TotallyPositive
        } else {
            TotalSign::TotallyNegative
        }
    }

    pub fn is_totally_positive(&self, a: &FieldElem) -> bool {
        self.total_sign(a) == TotalSign::TotallyPositive
    }

    /// Floating point image under σ_i, diagnostics and search guidance only.
    pub fn embed(&self, a: &FieldElem, i: usize) -> f64 {
        let s = (self.d as f64).sqrt();
        let w = if self.omega_half {
            if i == 0 { (1.0 + s) / 2.0 } else { (1.0 - s) / 2.0 }
        } else if i == 0 {
            s
        } else {
            -s
        };
        (a.x.to_f64().unwrap() + a.y.to_f64().unwrap() * w) / a.den.to_f64().unwrap()
    }

    fn unit_by_continued_fraction(&self) -> FieldElem {
        // continued fraction of ω = (P + √D)/Q
        let dd = BigInt::from(self.d);
        let s = arith::isqrt(&dd);
        let (mut p, mut q) = if self.omega_half {
            (BigInt::one(), BigInt::from(2))
        } else {
            (BigInt::zero(), BigInt::one())
        };
        let (mut h2, mut h1) = (BigInt::zero(), BigInt::one());
        let (mut k2, mut k1) = (BigInt::one(), BigInt::zero());
        loop {
            let ps: BigInt = &p + &s;
            let a: BigInt = if q.is_positive() {
                ps.div_floor(&q)
            } else {
                let nq: BigInt = -&q;
                -(ps.div_floor(&nq) + BigInt::one())
            };
            let h = &a * &h1 + &h2;
            let k = &a * &k1 + &k2;
            // h - kω is small at σ₁; its conjugate is the candidate unit
            let small = FieldElem::integral(h.clone(), -&k);
            let nm = self.norm_num(&small);
            if nm.abs().is_one() && !k.is_zero() {
                let mut u = self.conj(&small);
                if self.sign(&u, 0) == Ordering::Less {
                    u = self.neg(&u);
                }
                return u;
            }
            h2 = h1;
            h1 = h;
            k2 = k1;
            k1 = k;
            let pn = &a * &q - &p;
            let qn = (&dd - &pn * &pn) / &q;
            p = pn;
            q = qn;
        }
    }

    /// Gram matrix of the trace form Tr(xy) on the basis (1, ω).
    pub fn trace_form(&self) -> [[i128; 2]; 2] {
        let m = self.m as i128;
        let n = self.n as i128;
        [[2, m], [m, m * m - 2 * n]]
    }

    /// Ideal of O_L spanned over Z by the given integral elements together with
    /// their ω-multiples; `None` if they generate the zero ideal.
    pub fn ideal_from_elements(&self, gens: &[FieldElem]) -> Result<IdealL> {
        let mut rows = Vec::new();
        for g in gens {
            if !g.is_integral() {
                return Err(Error::InvalidInput(format!("{g} is not integral")));
            }
            if g.is_zero() {
                continue;
            }
            let gw = self.mul(g, &self.omega());
            rows.push(g.coords().to_vec());
            rows.push(gw.coords().to_vec());
        }
        if rows.is_empty() {
            return Err(Error::InvalidInput("zero ideal".into()));
        }
        let h = lattice::hnf(&rows, 2).expect("nonzero ideal has rank 2");
        self.ideal_from_hnf(h)
    }

    pub fn ideal(&self, g: &FieldElem) -> Result<IdealL> {
        if g.is_zero() {
            return Err(Error::InvalidInput("zero ideal".into()));
        }
        if !g.is_integral() {
            return Err(Error::InvalidInput(format!("{g} is not integral")));
        }
        let gw = self.mul(g, &self.omega());
        let h = lattice::hnf(&[g.coords().to_vec(), gw.coords().to_vec()], 2).unwrap();
        Ok(IdealL { hnf: h, generator: self.totally_positive_generator(g)? })
    }

    pub fn unit_ideal(&self) -> IdealL {
        self.ideal(&FieldElem::one()).unwrap()
    }

    fn ideal_from_hnf(&self, h: Mat) -> Result<IdealL> {
        let g = self
            .find_generator(&h)
            .ok_or_else(|| Error::HypothesisViolation("non-principal ideal in L".into()))?;
        Ok(IdealL { hnf: h, generator: self.totally_positive_generator(&g)? })
    }

    /// An element of norm ±N(I) in the lattice `h`, if any. The search bound
    /// N·(ε₁ + 1/ε₁) on Tr(α²) is exhaustive for principal ideals.
    pub fn find_generator(&self, h: &Mat) -> Option<FieldElem> {
        let nrm = lattice::det_triangular(h);
        let e1 = self.embed(&self.fundamental_unit, 0);
        let bound = (nrm.to_f64().unwrap() * (e1 + 1.0 / e1) * (1.0 + 1e-9)).floor() as i128 + 1;
        let basis: Vec<Vec<i128>> = h
            .iter()
            .map(|r| r.iter().map(|v| v.to_i128().unwrap()).collect())
            .collect();
        let tf = self.trace_form();
        let form: Vec<Vec<i128>> = tf.iter().map(|r| r.to_vec()).collect();
        let g = lattice::gram_of(&basis, &form);
        let mut found = None;
        lattice::enumerate_short(&g, bound, |c, _| {
            if c.iter().all(|&v| v == 0) {
                return true;
            }
            let x: i128 = c[0] * basis[0][0] + c[1] * basis[1][0];
            let y: i128 = c[0] * basis[0][1] + c[1] * basis[1][1];
            let e = FieldElem::integral(x, y);
            if self.norm_num(&e).abs() == nrm {
                found = Some(e);
                return false;
            }
            true
        });
        found
    }

    /// Canonical totally positive generator of (g): unit-adjust to total
    /// positivity, then minimise the trace over multiples by ε^{2k}, preferring
    /// the larger k on ties.
    pub fn totally_positive_generator(&self, g: &FieldElem) -> Result<FieldElem> {
        if g.is_zero() {
            return Ok(g.clone());
        }
        let mut g = g.clone();
        if self.norm_num(&g).is_negative() {
            if self.unit_norm != -1 {
                return Err(Error::HypothesisViolation(
                    "no unit of norm -1; element has no totally positive associate".into(),
                ));
            }
            g = self.mul(&g, &self.fundamental_unit);
        }
        if self.trace(&g).is_negative() {
            g = self.neg(&g);
        }
        let e2 = self.mul(&self.fundamental_unit, &self.fundamental_unit);
        let e2i = self.inv(&e2)?;
        loop {
            let up = self.mul(&g, &e2);
            if self.trace(&up) <= self.trace(&g) {
                g = up;
            } else {
                break;
            }
        }
        loop {
            let down = self.mul(&g, &e2i);
            if self.trace(&down) < self.trace(&g) {
                g = down;
            } else {
                break;
            }
        }
        Ok(g)
    }

    fn class_number_one(&self) -> bool {
        let bound = ((self.disc as f64).sqrt() / 2.0).floor() as u64;
        for q in arith::primes_up_to(bound) {
            for (pr, _) in self.prime_ideal_lattices(q) {
                if self.find_generator(&pr).is_none() {
                    return false;
                }
            }
        }
        true
    }

    /// Roots of ω's minimal polynomial modulo q.
    fn omega_roots_mod(&self, q: u64) -> Vec<u64> {
        let mq = self.m.rem_euclid(q as i64) as u64;
        let nq = self.n.rem_euclid(q as i64) as u64;
        if q == 2 {
            return (0..2u64).filter(|&r| (r * r + nq + 2 - (mq * r) % 2) % 2 == 0).collect();
        }
        let q128 = q as i128;
        let disc = ((self.m as i128 * self.m as i128 - 4 * self.n as i128).rem_euclid(q128)) as u64;
        let Some(s) = arith::sqrt_mod_prime(disc, q) else {
            return Vec::new();
        };
        let inv2 = (q + 1) / 2;
        let mulq = |x: u64, y: u64| ((x as u128 * y as u128) % q as u128) as u64;
        let r1 = mulq((mq + s) % q, inv2);
        let r2 = mulq((mq + q - s) % q, inv2);
        let mut v = vec![r1, r2];
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Z-lattices of the primes above q with their exponent in qO_L.
    fn prime_ideal_lattices(&self, q: u64) -> Vec<(Mat, u32)> {
        let roots = self.omega_roots_mod(q);
        let qb = BigInt::from(q);
        match roots.len() {
            0 => vec![(vec![vec![qb.clone(), BigInt::zero()], vec![BigInt::zero(), qb]], 1)],
            1 => {
                let rows = vec![vec![qb.clone(), BigInt::zero()], vec![-BigInt::from(roots[0]), BigInt::one()]];
                vec![(lattice::hnf(&rows, 2).unwrap(), 2)]
            }
            _ => roots
                .iter()
                .map(|&r| {
                    let rows = vec![vec![qb.clone(), BigInt::zero()], vec![-BigInt::from(r), BigInt::one()]];
                    (lattice::hnf(&rows, 2).unwrap(), 1)
                })
                .collect(),
        }
    }

    /// Primes of L above the rational prime q, with exponents.
    pub fn factor_rational_prime(&self, q: u64) -> Vec<(PrimeOfL, u32)> {
        let lats = self.prime_ideal_lattices(q);
        let k = lats.len();
        lats.into_iter()
            .map(|(h, e)| {
                let ideal = self.ideal_from_hnf(h).expect("strict class number one");
                let degree = if k == 1 && e == 1 { 2 } else { 1 };
                (PrimeOfL { p: q, degree, ramified: e == 2, ideal }, e)
            })
            .collect()
    }

    /// Valuation of a nonzero element at a prime.
    pub fn valuation(&self, a: &FieldElem, pr: &PrimeOfL) -> i64 {
        assert!(!a.is_zero());
        let pi = &pr.ideal.generator;
        let mut v = 0i64;
        let mut num = FieldElem::integral(a.x.clone(), a.y.clone());
        while pr.ideal.contains(&num) {
            num = self.div(&num, pi).unwrap();
            v += 1;
        }
        let mut den = FieldElem::int(a.den.clone());
        while !den.is_one() && pr.ideal.contains(&den) {
            den = self.div(&den, pi).unwrap();
            v -= 1;
        }
        v
    }

    /// Factorization of a nonzero element of L into primes of L.
    pub fn factor_elem(&self, a: &FieldElem) -> Result<Vec<(PrimeOfL, i64)>> {
        let nrm = self.norm(a);
        let mut qs: Vec<u64> = arith::factor(nrm.numer())?.into_iter().map(|(q, _)| q).collect();
        qs.extend(arith::factor(nrm.denom())?.into_iter().map(|(q, _)| q));
        qs.sort_unstable();
        qs.dedup();
        let mut out = Vec::new();
        for q in qs {
            for (pr, _) in self.factor_rational_prime(q) {
                let v = self.valuation(a, &pr);
                if v != 0 {
                    out.push((pr, v));
                }
            }
        }
        Ok(out)
    }

    /// x ≡ r_i mod m_i for pairwise coprime moduli; result reduced modulo the product.
    pub fn crt_solve(&self, congruences: &[(FieldElem, IdealL)]) -> Result<FieldElem> {
        let mut x = FieldElem::zero();
        let mut m = self.unit_ideal();
        for (r, mi) in congruences {
            let r = mi.reduce(self, r)?;
            let (e_m, e_mi) = self.idempotents(&m, mi)?;
            // x' ≡ x mod m, ≡ r mod mi
            x = self.add(&self.mul(&x, &e_mi), &self.mul(&r, &e_m));
            m = m.mul(self, mi);
            x = m.reduce(self, &x)?;
        }
        Ok(x)
    }

    /// (i, j) with i ∈ I, j ∈ J, i + j = 1.
    pub fn idempotents(&self, a: &IdealL, b: &IdealL) -> Result<(FieldElem, FieldElem)> {
        let rows: Vec<Vec<BigInt>> = a.hnf.iter().chain(b.hnf.iter()).cloned().collect();
        let (h, u) = lattice::hnf_with_transform(&rows, 2).unwrap();
        if !(h[0][0].is_one() && h[1][1].is_one()) {
            return Err(Error::IncompatibleModuli);
        }
        // 1 = row 0 of h, combination u[0] of the four rows
        let c = lattice::solve(&h, &[BigInt::one(), BigInt::zero()]).unwrap();
        let mut coef = vec![BigInt::zero(); 4];
        for (k, ck) in c.iter().enumerate() {
            for (j, cj) in coef.iter_mut().enumerate() {
                *cj += ck * &u[k][j];
            }
        }
        let elem = |rows: &Mat, c0: &BigInt, c1: &BigInt| {
            FieldElem::integral(c0 * &rows[0][0] + c1 * &rows[1][0], c0 * &rows[0][1] + c1 * &rows[1][1])
        };
        let i = elem(&a.hnf, &coef[0], &coef[1]);
        let j = elem(&b.hnf, &coef[2], &coef[3]);
        debug_assert!(self.add(&i, &j).is_one());
        Ok((i, j))
    }

    /// a^k reduced modulo a prime, for a with denominator prime to it.
    pub fn pow_mod_prime(&self, a: &FieldElem, k: &BigInt, pr: &PrimeOfL) -> Result<FieldElem> {
        let m = &pr.ideal;
        let mut base = m.reduce(self, a)?;
        let mut r = FieldElem::one();
        let mut k = k.clone();
        let two = BigInt::from(2);
        while k.is_positive() {
            if k.is_odd() {
                r = m.reduce(self, &self.mul(&r, &base))?;
            }
            base = m.reduce(self, &self.mul(&base, &base))?;
            k /= &two;
        }
        m.reduce(self, &r)
    }

    /// Quadratic residue symbol (a / 𝔭) for an odd prime 𝔭.
    pub fn legendre(&self, a: &FieldElem, pr: &PrimeOfL) -> Result<i32> {
        if pr.p == 2 {
            return Err(Error::InvalidInput("legendre symbol at a dyadic prime".into()));
        }
        let r = pr.ideal.reduce(self, a)?;
        if r.is_zero() {
            return Ok(0);
        }
        let q = BigInt::from(pr.norm());
        let e = self.pow_mod_prime(&r, &((&q - 1) / 2), pr)?;
        Ok(if e.is_one() { 1 } else { -1 })
    }

    /// A square root of a modulo the prime 𝔭, if one exists (Tonelli-Shanks in
    /// the residue field; exhaustive for 𝔭 | 2).
    pub fn sqrt_mod(&self, a: &FieldElem, pr: &PrimeOfL) -> Result<Option<FieldElem>> {
        let m = &pr.ideal;
        let a = m.reduce(self, a)?;
        if a.is_zero() {
            return Ok(Some(a));
        }
        if pr.p == 2 {
            for r in m.residues() {
                if m.reduce(self, &self.mul(&r, &r))? == a {
                    return Ok(Some(r));
                }
            }
            return Ok(None);
        }
        if self.legendre(&a, pr)? != 1 {
            return Ok(None);
        }
        let q = BigInt::from(pr.norm());
        let mut qq: BigInt = &q - 1;
        let mut s = 0u32;
        while qq.is_even() {
            qq /= 2;
            s += 1;
        }
        // rational integers are all squares in a quadratic residue field
        let mut z = None;
        for k in 1u64.. {
            let r = if pr.degree == 1 {
                FieldElem::int(k)
            } else {
                FieldElem::integral(k % pr.p, k / pr.p)
            };
            if self.legendre(&r, pr)? == -1 {
                z = Some(r);
                break;
            }
        }
        let z = z.unwrap();
        let mut mm = s;
        let mut c = self.pow_mod_prime(&z, &qq, pr)?;
        let mut t = self.pow_mod_prime(&a, &qq, pr)?;
        let mut r = self.pow_mod_prime(&a, &((&qq + 1) / 2), pr)?;
        while !t.is_one() {
            let mut i = 0u32;
            let mut tt = t.clone();
            while !tt.is_one() {
                tt = m.reduce(self, &self.mul(&tt, &tt))?;
                i += 1;
            }
            let b = self.pow_mod_prime(&c, &(BigInt::one() << (mm - i - 1)), pr)?;
            mm = i;
            c = m.reduce(self, &self.mul(&b, &b))?;
            t = m.reduce(self, &self.mul(&t, &c))?;
            r = m.reduce(self, &self.mul(&r, &b))?;
        }
        Ok(Some(r))
    }

    /// All x ∈ O_L with x ≡ r mod m and σ_i(x)² < σ_i(bound) for both i.
    pub fn enumerate_totally_bounded(&self, bound: &FieldElem, r: &FieldElem, m: &IdealL) -> Result<Vec<FieldElem>> {
        let mut out = Vec::new();
        if self.total_sign(bound) != TotalSign::TotallyPositive {
            return Ok(out);
        }
        let r = m.reduce(self, r)?;
        let s1 = self.embed(bound, 0).sqrt();
        let s2 = self.embed(bound, 1).sqrt();
        let w1 = self.embed(&self.omega(), 0);
        let w2 = self.embed(&self.omega(), 1);
        let ymax = ((s1 + s2) / (w1 - w2)).ceil() as i64 + 1;
        for y in -ymax..=ymax {
            let yf = y as f64;
            let lo = (-s1 - yf * w1).max(-s2 - yf * w2).floor() as i64 - 1;
            let hi = (s1 - yf * w1).min(s2 - yf * w2).ceil() as i64 + 1;
            for x in lo..=hi {
                let e = FieldElem::integral(x, y);
                let diff = self.sub(bound, &self.mul(&e, &e));
                if self.total_sign(&diff) != TotalSign::TotallyPositive {
                    continue;
                }
                if m.contains(&self.sub(&e, &r)) {
                    out.push(e);
                }
            }
        }
        Ok(out)
    }
}

/// Sign of a + b√D.
fn sign_of_sum(a: &BigInt, b: &BigInt, d: i64) -> Ordering {
    let sa = a.sign();
    let sb = b.sign();
    use num_bigint::Sign::*;
    match (sa, sb) {
        (NoSign, NoSign) => Ordering::Equal,
        (Plus, Plus) | (Plus, NoSign) | (NoSign, Plus) => Ordering::Greater,
        (Minus, Minus) | (Minus, NoSign) | (NoSign, Minus) => Ordering::Less,
        _ => {
            let a2 = a * a;
            let b2d = b * b * d;
            if a2 > b2d {
                if sa == Plus { Ordering::Greater } else { Ordering::Less }
            } else if sb == Plus {
                Ordering::Greater
            } else {
                Ordering::Less
            }
        }
    }
}

/// Nonzero integral ideal of O_L: its Z-lattice in Hermite form and canonical
/// totally positive generator.
#[derive(Clone, Debug)]
pub struct IdealL {
    pub hnf: Mat,
    pub generator: FieldElem,
}

impl PartialEq for IdealL {
    fn eq(&self, other: &Self) -> bool {
        self.hnf == other.hnf
    }
}
impl Eq for IdealL {}

impl std::hash::Hash for IdealL {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.hnf.hash(state);
    }
}

impl IdealL {
    pub fn norm(&self) -> BigInt {
        lattice::det_triangular(&self.hnf)
    }

    pub fn is_unit(&self) -> bool {
        self.norm().is_one()
    }

    pub fn contains(&self, e: &FieldElem) -> bool {
        e.is_integral() && lattice::contains(&self.hnf, &e.coords())
    }

    pub fn mul(&self, l: &RealQuadraticField, other: &IdealL) -> IdealL {
        l.ideal(&l.mul(&self.generator, &other.generator)).unwrap()
    }

    pub fn pow(&self, l: &RealQuadraticField, e: u32) -> IdealL {
        l.ideal(&l.pow(&self.generator, e as i64).unwrap()).unwrap()
    }

    /// I + J (the gcd).
    pub fn gcd(&self, l: &RealQuadraticField, other: &IdealL) -> IdealL {
        let h = lattice::sum(&self.hnf, &other.hnf);
        l.ideal_from_hnf(h).unwrap()
    }

    pub fn divides(&self, other: &IdealL) -> bool {
        lattice::is_sublattice(&other.hnf, &self.hnf)
    }

    pub fn is_coprime(&self, l: &RealQuadraticField, other: &IdealL) -> bool {
        self.gcd(l, other).is_unit()
    }

    /// Canonical residue of an element whose denominator is prime to the ideal.
    pub fn reduce(&self, l: &RealQuadraticField, e: &FieldElem) -> Result<FieldElem> {
        let (mut x, mut y) = (e.x.clone(), e.y.clone());
        if !e.den.is_one() {
            let nrm = self.norm();
            let ext = e.den.extended_gcd(&nrm);
            if !ext.gcd.is_one() {
                return Err(Error::NonCoprimeIdeal(format!("denominator of {e} meets the modulus")));
            }
            x *= &ext.x;
            y *= &ext.x;
        }
        let _ = l;
        let h = &self.hnf;
        let k = y.div_floor(&h[1][1]);
        x -= &k * &h[1][0];
        y -= &k * &h[1][1];
        x = x.mod_floor(&h[0][0]);
        Ok(FieldElem::integral(x, y))
    }

    /// All canonical residues, in lexicographic order.
    pub fn residues(&self) -> Vec<FieldElem> {
        let a = self.hnf[0][0].to_i64().unwrap();
        let c = self.hnf[1][1].to_i64().unwrap();
        let mut v = Vec::with_capacity((a * c) as usize);
        for y in 0..c {
            for x in 0..a {
                v.push(FieldElem::integral(x, y));
            }
        }
        v
    }
}

/// A prime ideal of O_L with its canonical totally positive generator.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PrimeOfL {
    pub p: u64,
    pub degree: u32,
    pub ramified: bool,
    pub ideal: IdealL,
}

impl PrimeOfL {
    pub fn generator(&self) -> &FieldElem {
        &self.ideal.generator
    }

    pub fn norm(&self) -> u64 {
        self.p.pow(self.degree)
    }
}

impl Ord for PrimeOfL {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.p, &self.ideal.hnf).cmp(&(other.p, &other.ideal.hnf))
    }
}
impl PartialOrd for PrimeOfL {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q5() -> RealQuadraticField {
        RealQuadraticField::new_strict(5).unwrap()
    }

    #[test]
    fn arithmetic_examples() {
        let l = q5();
        let w = l.omega();
        assert_eq!(l.conj(&w), l.from_sqrt_form(1, -1, 2));
        assert_eq!(l.mul(&w, &l.conj(&w)), FieldElem::int(-1));
        let x = l.add(&l.from_sqrt_form(0, 3, 1), &FieldElem::int(-3));
        assert_eq!(x, FieldElem::integral(-6, 6));
        assert_eq!(l.norm_trace(&w), (BigRational::from_integer((-1).into()), BigRational::from_integer(1.into())));
        let s5 = l.from_sqrt_form(0, 1, 1);
        assert_eq!(l.norm(&s5), BigRational::from_integer((-5).into()));
        assert_eq!(l.trace(&s5), BigRational::zero());
        assert_eq!(l.norm(&x), BigRational::from_integer((-36).into()));
        assert_eq!(l.trace(&x), BigRational::from_integer((-6).into()));
        assert!(matches!(l.inv(&FieldElem::zero()), Err(Error::DivisionByZero)));
        assert_eq!(l.mul(&x, &l.inv(&x).unwrap()), FieldElem::one());
    }

    #[test]
    fn signs() {
        let l = q5();
        assert_eq!(l.total_sign(&l.from_sqrt_form(-5, -1, 2)), TotalSign::TotallyNegative);
        assert_eq!(l.total_sign(&FieldElem::one()), TotalSign::TotallyPositive);
        assert_eq!(l.total_sign(&l.from_sqrt_form(0, 1, 1)), TotalSign::Mixed);
        for x in -6..6 {
            for y in -6..6 {
                let e = FieldElem::integral(x, y);
                let s = l.total_sign(&e);
                let (a, b) = (l.embed(&e, 0), l.embed(&e, 1));
                let expect = if x == 0 && y == 0 {
                    TotalSign::Zero
                } else if a > 0.0 && b > 0.0 {
                    TotalSign::TotallyPositive
                } else if a < 0.0 && b < 0.0 {
                    TotalSign::TotallyNegative
                } else {
                    TotalSign::Mixed
                };
                assert_eq!(s, expect, "{e}");
                assert_eq!(l.sign(&e, 0), a.partial_cmp(&0.0).unwrap());
            }
        }
    }

    fn brute_unit(l: &RealQuadraticField) -> FieldElem {
        let (m, n) = (l.m as i128, l.n as i128);
        for y in 1i128.. {
            for x in -2000i128..2000 {
                let nm = x * x + m * x * y + n * y * y;
                if nm.abs() == 1 {
                    let e = FieldElem::integral(x, y);
                    if l.embed(&e, 0) > 1.0 {
                        return e;
                    }
                }
            }
        }
        unreachable!()
    }

    #[test]
    fn fundamental_units_match_brute_force() {
        for d in [2i64, 3, 5, 6, 7, 10, 11, 13, 14, 15, 17, 19, 21, 22, 29, 33, 37, 41, 53] {
            let l = RealQuadraticField::new(d).unwrap();
            assert_eq!(l.fundamental_unit, brute_unit(&l), "D = {d}");
        }
    }

    #[test]
    fn strict_class_number() {
        for (d, expect) in [(2, true), (3, false), (5, true), (13, true), (17, true), (29, true), (10, false), (34, false), (6, false)] {
            assert_eq!(RealQuadraticField::new(d).unwrap().strict_class_number_one, expect, "D = {d}");
        }
    }

    #[test]
    fn prime_splitting() {
        let l = q5();
        let f19 = l.factor_rational_prime(19);
        assert_eq!(f19.len(), 2);
        assert!(f19.iter().all(|(p, e)| p.norm() == 19 && *e == 1));
        let f2 = l.factor_rational_prime(2);
        assert_eq!(f2.len(), 1);
        assert_eq!(f2[0].0.norm(), 4);
        let f5 = l.factor_rational_prime(5);
        assert_eq!(f5[0].1, 2);
        assert!(f5[0].0.ramified);
        assert_eq!(l.norm(f5[0].0.generator()), BigRational::from_integer(5.into()));
        for q in arith::primes_up_to(60) {
            let f = l.factor_rational_prime(q);
            let mut prod = FieldElem::one();
            for (p, e) in &f {
                assert!(l.is_totally_positive(p.generator()));
                prod = l.mul(&prod, &l.pow(p.generator(), *e as i64).unwrap());
            }
            assert_eq!(l.ideal(&prod).unwrap(), l.ideal(&FieldElem::int(q)).unwrap());
        }
    }

    #[test]
    fn canonical_generator() {
        let l = q5();
        assert_eq!(l.totally_positive_generator(&FieldElem::int(-1)).unwrap(), FieldElem::one());
        let s5 = l.from_sqrt_form(0, 1, 1);
        let g = l.totally_positive_generator(&s5).unwrap();
        assert_eq!(g, l.from_sqrt_form(5, 1, 2));
        let x = FieldElem::integral(-9, 6);
        let g = l.totally_positive_generator(&x).unwrap();
        assert!(l.is_totally_positive(&g));
        let eps = l.fundamental_unit.clone();
        for k in -4..4 {
            let y = l.mul(&x, &l.pow(&eps, k).unwrap());
            assert_eq!(l.totally_positive_generator(&y).unwrap(), g);
        }
    }

    #[test]
    fn residue_square_roots() {
        let l = q5();
        for q in [3u64, 7, 11, 19, 31] {
            for (pr, _) in l.factor_rational_prime(q) {
                let mut squares = 0;
                for r in pr.ideal.residues() {
                    let leg = l.legendre(&r, &pr).unwrap();
                    match l.sqrt_mod(&r, &pr).unwrap() {
                        Some(s) => {
                            assert!(pr.ideal.contains(&l.sub(&l.mul(&s, &s), &r)));
                            assert!(leg >= 0);
                            squares += 1;
                        }
                        None => assert_eq!(leg, -1),
                    }
                }
                assert_eq!(squares as u64, (pr.norm() + 1) / 2);
            }
        }
    }

    #[test]
    fn crt() {
        let l = q5();
        let two = l.ideal(&FieldElem::int(2)).unwrap();
        let three = l.ideal(&FieldElem::int(3)).unwrap();
        let x = l.crt_solve(&[(FieldElem::zero(), two.clone()), (FieldElem::one(), three.clone())]).unwrap();
        assert!(two.contains(&x));
        assert!(three.contains(&l.sub(&x, &FieldElem::one())));
        let err = l.crt_solve(&[(FieldElem::zero(), two.clone()), (FieldElem::one(), two)]);
        assert!(err.is_err());
    }

    #[test]
    fn bounded_enumeration() {
        let l = q5();
        let unit = l.unit_ideal();
        let v = l.enumerate_totally_bounded(&FieldElem::one(), &FieldElem::zero(), &unit).unwrap();
        assert_eq!(v, vec![FieldElem::zero()]);
        let bound = FieldElem::integral(170, -85);
        let two = l.ideal(&FieldElem::int(2)).unwrap();
        let v = l.enumerate_totally_bounded(&bound, &FieldElem::integral(0, 0), &two).unwrap();
        let mut brute = Vec::new();
        for y in -60..60 {
            for x in -60..60 {
                let e = FieldElem::integral(x, y);
                let d = l.sub(&bound, &l.mul(&e, &e));
                if l.is_totally_positive(&d) && two.contains(&e) {
                    brute.push(e);
                }
            }
        }
        let mut v2 = v.clone();
        v2.sort();
        brute.sort();
        assert_eq!(v2, brute);
    }
}

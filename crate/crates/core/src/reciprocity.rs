//! Hilbert symbols over L, the product formula, prime search in residue
//! classes and the construction of α₀ with B_{p,L} ≅ (d, α₀p / L).

use std::cmp::Ordering;
use std::collections::HashSet;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};

use crate::arith;
use crate::base_field::{FieldElem, IdealL, PrimeOfL, RealQuadraticField, TotalSign};
use crate::cm_field::{CMField, IdealK, Splitting};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Place {
    /// Embedding index 0 sends √D to the positive root.
    Real(usize),
    Finite(PrimeOfL),
}

/// Quadratic residue symbol (γ/𝔭) at an odd prime.
pub fn legendre(l: &RealQuadraticField, gamma: &FieldElem, pr: &PrimeOfL) -> Result<i32> {
    l.legendre(gamma, pr)
}

/// γ·c² with c a rational integer making it integral.
fn integral_square_multiple(g: &FieldElem) -> FieldElem {
    g.scale(&(&g.den * &g.den))
}

/// Splits an integral γ ≠ 0 as π^v·u with u ∈ O_L prime to 𝔭.
fn strip(l: &RealQuadraticField, g: &FieldElem, pr: &PrimeOfL) -> (i64, FieldElem) {
    let pi = pr.generator();
    let mut v = 0;
    let mut u = g.clone();
    while pr.ideal.contains(&u) {
        u = l.div(&u, pi).unwrap();
        v += 1;
    }
    (v, u)
}

/// Hilbert symbol (γ, δ)_η.
pub fn hilbert_symbol(l: &RealQuadraticField, gamma: &FieldElem, delta: &FieldElem, place: &Place) -> Result<i32> {
    if gamma.is_zero() || delta.is_zero() {
        return Err(Error::InvalidInput("Hilbert symbol of zero".into()));
    }
    match place {
        Place::Real(i) => {
            let neg = |x: &FieldElem| l.sign(x, *i) == Ordering::Less;
            Ok(if neg(gamma) && neg(delta) { -1 } else { 1 })
        }
        Place::Finite(pr) if pr.p != 2 => {
            let (a, u) = strip(l, &integral_square_multiple(gamma), pr);
            let (b, v) = strip(l, &integral_square_multiple(delta), pr);
            let q = pr.norm();
            let mut s = if a % 2 == 1 && b % 2 == 1 && (q - 1) / 2 % 2 == 1 { -1 } else { 1 };
            if b % 2 == 1 {
                s *= l.legendre(&u, pr)?;
            }
            if a % 2 == 1 {
                s *= l.legendre(&v, pr)?;
            }
            Ok(s)
        }
        Place::Finite(pr) => dyadic_symbol(l, gamma, delta, pr),
    }
}

/// O_L / 𝔭^N with machine-word arithmetic, used for the dyadic search.
struct SmallRing {
    a: i64,
    b: i64,
    c: i64,
    m: i64,
    n: i64,
}

impl SmallRing {
    fn size(&self) -> usize {
        (self.a * self.c) as usize
    }

    fn reduce(&self, mut x: i64, mut y: i64) -> (i64, i64) {
        let k = y.div_euclid(self.c);
        x -= k * self.b;
        y -= k * self.c;
        (x.rem_euclid(self.a), y)
    }

    fn elem(&self, idx: usize) -> (i64, i64) {
        ((idx as i64) % self.a, (idx as i64) / self.a)
    }

    fn mul(&self, p: (i64, i64), q: (i64, i64)) -> (i64, i64) {
        let yy = p.1 * q.1;
        let x = p.0 * q.0 - self.n * yy;
        let y = p.0 * q.1 + p.1 * q.0 + self.m * yy;
        self.reduce(x.rem_euclid(self.a * self.c), y)
    }

    fn sub(&self, p: (i64, i64), q: (i64, i64)) -> (i64, i64) {
        self.reduce(p.0 - q.0, p.1 - q.1)
    }

    fn add(&self, p: (i64, i64), q: (i64, i64)) -> (i64, i64) {
        self.reduce(p.0 + q.0, p.1 + q.1)
    }
}

/// (γ, δ)_η at η | 2: decides whether x² − γy² − δz² = 0 has a primitive
/// solution modulo η^{2e+3} (e = v_η(2)) after reducing γ, δ to valuation 0 or
/// 1. Normalising the unit coordinate to 1, any such solution has a partial
/// derivative of valuation ≤ e+1, so Hensel's lemma lifts it; conversely
/// every primitive root reduces to one.
fn dyadic_symbol(l: &RealQuadraticField, gamma: &FieldElem, delta: &FieldElem, pr: &PrimeOfL) -> Result<i32> {
    let prep = |g: &FieldElem| {
        let (v, u) = strip(l, &integral_square_multiple(g), pr);
        let mut r = u;
        if v % 2 == 1 {
            r = l.mul(&r, pr.generator());
        }
        r
    };
    let g = prep(gamma);
    let dl = prep(delta);
    let e = l.valuation(&FieldElem::int(2), pr) as u32;
    let prec = 2 * e + 3;
    let mod_ideal = pr.ideal.pow(l, prec);
    let h = &mod_ideal.hnf;
    let ring = SmallRing {
        a: h[0][0].to_i64().unwrap(),
        b: h[1][0].to_i64().unwrap(),
        c: h[1][1].to_i64().unwrap(),
        m: l.m,
        n: l.n,
    };
    let to_small = |x: &FieldElem| -> Result<(i64, i64)> {
        let r = mod_ideal.reduce(l, x)?;
        Ok((r.x.to_i64().unwrap(), r.y.to_i64().unwrap()))
    };
    let gs = to_small(&g)?;
    let ds = to_small(&dl)?;
    let size = ring.size();
    let in_p: Vec<bool> = (0..size)
        .map(|i| {
            let (x, y) = ring.elem(i);
            pr.ideal.contains(&FieldElem::integral(x, y))
        })
        .collect();
    let sq: Vec<(i64, i64)> = (0..size).map(|i| ring.mul(ring.elem(i), ring.elem(i))).collect();
    let one = (1, 0);
    // x = 1: γy² + δz² = 1
    let gy: HashSet<(i64, i64)> = sq.iter().map(|&s| ring.mul(gs, s)).collect();
    if sq.iter().any(|&s| gy.contains(&ring.sub(one, ring.mul(ds, s)))) {
        return Ok(1);
    }
    // x ∈ η, y = 1: x² = γ + δz²
    let xs: HashSet<(i64, i64)> = (0..size).filter(|&i| in_p[i]).map(|i| sq[i]).collect();
    if sq.iter().any(|&s| xs.contains(&ring.add(gs, ring.mul(ds, s)))) {
        return Ok(1);
    }
    // x, y ∈ η, z = 1: x² − γy² = δ
    let pi: Vec<usize> = (0..size).filter(|&i| in_p[i]).collect();
    for &yi in &pi {
        let t = ring.mul(gs, sq[yi]);
        let target = ring.add(ds, t);
        if xs.contains(&target) {
            return Ok(1);
        }
    }
    Ok(-1)
}

/// Places where (γ, δ) can ramify: both real places and the primes dividing 2γδ.
pub fn relevant_places(l: &RealQuadraticField, gamma: &FieldElem, delta: &FieldElem) -> Result<Vec<Place>> {
    let mut qs: Vec<u64> = vec![2];
    for x in [gamma, delta] {
        let n = l.norm(x);
        qs.extend(arith::factor(n.numer())?.into_iter().map(|(q, _)| q));
        qs.extend(arith::factor(n.denom())?.into_iter().map(|(q, _)| q));
    }
    qs.sort_unstable();
    qs.dedup();
    let mut places = vec![Place::Real(0), Place::Real(1)];
    for q in qs {
        for (pr, _) in l.factor_rational_prime(q) {
            places.push(Place::Finite(pr));
        }
    }
    Ok(places)
}

/// Places where the quaternion algebra (γ, δ / L) ramifies.
pub fn ramified_places(l: &RealQuadraticField, gamma: &FieldElem, delta: &FieldElem) -> Result<Vec<Place>> {
    let mut out = Vec::new();
    for pl in relevant_places(l, gamma, delta)? {
        if hilbert_symbol(l, gamma, delta, &pl)? == -1 {
            out.push(pl);
        }
    }
    Ok(out)
}

/// Whether the product of all local symbols is 1.
pub fn product_formula_check(l: &RealQuadraticField, gamma: &FieldElem, delta: &FieldElem) -> Result<bool> {
    Ok(ramified_places(l, gamma, delta)?.len() % 2 == 0)
}

/// (γ/δ) = Π_{𝔭 | δ} (γ/𝔭)^{v_𝔭(δ)} for δ ∈ O_L prime to 2.
pub fn residue_symbol(l: &RealQuadraticField, gamma: &FieldElem, delta: &FieldElem) -> Result<i32> {
    if delta.is_zero() || !delta.is_integral() {
        return Err(Error::InvalidInput("residue symbol needs a nonzero integral δ".into()));
    }
    let mut s = 1;
    for (pr, e) in l.factor_elem(delta)? {
        if pr.p == 2 {
            return Err(Error::InvalidInput("residue symbol needs δ prime to 2".into()));
        }
        if e % 2 == 1 {
            s *= l.legendre(gamma, &pr)?;
        }
    }
    Ok(s)
}

/// Product of the dyadic symbols (γ, δ)_𝔭 over 𝔭 | 2.
pub fn dyadic_product(l: &RealQuadraticField, gamma: &FieldElem, delta: &FieldElem) -> Result<i32> {
    let mut s = 1;
    for (pr, _) in l.factor_rational_prime(2) {
        s *= hilbert_symbol(l, gamma, delta, &Place::Finite(pr))?;
    }
    Ok(s)
}

/// Required sign at each real embedding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Positive,
    Negative,
}

fn is_prime_element(l: &RealQuadraticField, x: &FieldElem) -> bool {
    if x.is_zero() {
        return false;
    }
    let n = l.norm(x).to_integer().abs();
    if arith::is_prime(&n) {
        return true;
    }
    // an inert rational prime times a unit
    if arith::is_square(&n) {
        let q = arith::isqrt(&n);
        if arith::is_prime(&q) {
            if let Some(qq) = q.to_u64() {
                let f = l.factor_rational_prime(qq);
                if f.len() == 1 && f[0].1 == 1 && f[0].0.degree == 2 {
                    return f[0].0.ideal.contains(x);
                }
            }
        }
    }
    false
}

/// Prime element α ≡ r mod `modulus` with the given signs. Candidates r + μ,
/// μ running over the modulus lattice in boxes of growing radius, are tested in
/// a fixed order; the `seed`-th hit (0-based) is returned.
pub fn find_prime_in_progression(
    l: &RealQuadraticField,
    r: &FieldElem,
    modulus: &IdealL,
    signs: [Sign; 2],
    budget: usize,
    seed: usize,
) -> Result<FieldElem> {
    if !modulus.is_unit() {
        if r.is_zero() || !l.ideal(r)?.is_coprime(l, modulus) {
            return Err(Error::NonCoprimeIdeal("residue shares a factor with the modulus".into()));
        }
    }
    let r = modulus.reduce(l, r)?;
    let h = &modulus.hnf;
    let b0 = FieldElem::integral(h[0][0].clone(), h[0][1].clone());
    let b1 = FieldElem::integral(h[1][0].clone(), h[1][1].clone());
    let want = |x: &FieldElem| {
        (0..2).all(|i| {
            let s = l.sign(x, i);
            match signs[i] {
                Sign::Positive => s == Ordering::Greater,
                Sign::Negative => s == Ordering::Less,
            }
        })
    };
    let mut tried = 0usize;
    let mut hits = 0usize;
    let mut radius = 0i64;
    loop {
        for i in -radius..=radius {
            for j in -radius..=radius {
                if i.abs().max(j.abs()) != radius {
                    continue;
                }
                tried += 1;
                if tried > budget {
                    return Err(Error::SearchBudgetExceeded(budget));
                }
                let x = l.add(&r, &l.add(&b0.scale(&BigInt::from(i)), &b1.scale(&BigInt::from(j))));
                if want(&x) && is_prime_element(l, &x) {
                    if hits == seed {
                        return Ok(x);
                    }
                    hits += 1;
                }
            }
        }
        radius += 1;
    }
}

/// The data realising B_{p,L} ≅ (d, α₀p / L).
#[derive(Clone, Debug)]
pub struct Alpha0 {
    pub p: u64,
    pub alpha0: FieldElem,
    /// The chosen prime factor 𝒜 of α₀O_K and its conjugate.
    pub big_a: IdealK,
    pub big_a_bar: IdealK,
    /// λ_q with λ_q² ≡ α₀p mod q, one per prime q | d, in the order of `K.d_primes`.
    pub lambda_q: Vec<FieldElem>,
    /// Primes of L above p with odd residue degree.
    pub s0: Vec<PrimeOfL>,
    pub ramified: Vec<Place>,
}

impl Alpha0 {
    /// The same data with 𝒜 and 𝒜̄ exchanged.
    pub fn swapped(&self) -> Alpha0 {
        let mut s = self.clone();
        std::mem::swap(&mut s.big_a, &mut s.big_a_bar);
        s
    }
}

/// Precondition check shared with the counting module: p odd, unramified in
/// L, coprime to d, with every 𝔭 | p of odd degree inert in K and every other
/// 𝔭 | p split in K.
pub fn superspecial_hypotheses(k: &CMField, p: u64) -> std::result::Result<(), String> {
    let l = &k.base;
    if p == 2 {
        return Err("p = 2 is dyadic".into());
    }
    if !arith::is_prime_u64(p) {
        return Err(format!("{p} is not prime"));
    }
    if l.disc % p as i64 == 0 {
        return Err("ramified in L".into());
    }
    for q in &k.d_primes {
        if q.p == p {
            return Err("ramified in K (p divides d)".into());
        }
    }
    let name = |s: Splitting| match s {
        Splitting::Split => "split",
        Splitting::Inert => "inert",
        Splitting::Ramified => "ramified",
    };
    for (pr, _) in l.factor_rational_prime(p) {
        let s = k.splitting(&pr);
        let want = if pr.degree % 2 == 1 { Splitting::Inert } else { Splitting::Split };
        if s != want {
            return Err(format!(
                "not superspecial: the prime of degree {} above p is {} in K, not {}",
                pr.degree,
                name(s),
                name(want)
            ));
        }
    }
    Ok(())
}

/// Searches for α₀ and verifies every property used downstream.
pub fn find_alpha0(k: &CMField, p: u64, budget: usize, seed: usize) -> Result<Alpha0> {
    superspecial_hypotheses(k, p).map_err(|reason| Error::IneligiblePrime { p, reason })?;
    let l = &k.base;
    let pe = FieldElem::int(p);
    let mut congruences: Vec<(FieldElem, IdealL)> = Vec::new();
    for (eta, _) in l.factor_rational_prime(2) {
        let e = l.valuation(&FieldElem::int(2), &eta) as u32;
        congruences.push((pe.clone(), eta.ideal.pow(l, 2 * e + 3)));
    }
    for q in &k.d_primes {
        congruences.push((pe.clone(), q.ideal.clone()));
    }
    congruences.push((FieldElem::one(), l.ideal(&pe)?));
    let r = l.crt_solve(&congruences)?;
    let mut modulus = l.unit_ideal();
    for (_, m) in &congruences {
        modulus = modulus.mul(l, m);
    }
    let alpha0 = find_prime_in_progression(l, &r, &modulus, [Sign::Negative, Sign::Negative], budget, seed)?;
    for (res, m) in &congruences {
        if !m.contains(&l.sub(&alpha0, res)) {
            return Err(Error::VerificationFailed("α₀ misses a congruence".into()));
        }
    }
    let fac = l.factor_elem(&alpha0)?;
    if fac.len() != 1 || fac[0].1 != 1 {
        return Err(Error::VerificationFailed("α₀ is not prime".into()));
    }
    let a_prime = &fac[0].0;
    let above = k.primes_above(a_prime);
    if above[0].splitting != Splitting::Split {
        return Err(Error::VerificationFailed("α₀ does not split in K".into()));
    }
    let s0: Vec<PrimeOfL> = l
        .factor_rational_prime(p)
        .into_iter()
        .filter(|(pr, _)| pr.degree % 2 == 1)
        .map(|(pr, _)| pr)
        .collect();
    let ap = l.mul(&alpha0, &pe);
    let ramified = ramified_places(l, &k.d, &ap)?;
    let mut expect: Vec<Place> = vec![Place::Real(0), Place::Real(1)];
    expect.extend(s0.iter().cloned().map(Place::Finite));
    let mut got = ramified.clone();
    got.sort();
    expect.sort();
    if got != expect {
        return Err(Error::VerificationFailed(format!(
            "(d, α₀p) ramifies at {} places, expected {}",
            got.len(),
            expect.len()
        )));
    }
    let mut lambda_q = Vec::new();
    for q in &k.d_primes {
        let s = l
            .sqrt_mod(&ap, q)?
            .ok_or_else(|| Error::VerificationFailed("α₀p is not a square modulo q | d".into()))?;
        let s2 = q.ideal.reduce(l, &l.neg(&s))?;
        lambda_q.push(std::cmp::min(s, s2));
    }
    Ok(Alpha0 {
        p,
        alpha0,
        big_a: above[0].ideal.clone(),
        big_a_bar: above[1].ideal.clone(),
        lambda_q,
        s0,
        ramified,
    })
}

/// Number of real places where x is negative.
pub fn negative_places(l: &RealQuadraticField, x: &FieldElem) -> usize {
    (0..2).filter(|&i| l.sign(x, i) == Ordering::Less).count()
}

/// Convenience: whether x is a totally negative element.
pub fn is_totally_negative(l: &RealQuadraticField, x: &FieldElem) -> bool {
    l.total_sign(x) == TotalSign::TotallyNegative
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q5() -> RealQuadraticField {
        RealQuadraticField::new_strict(5).unwrap()
    }

    #[test]
    fn real_places() {
        let l = q5();
        let neg = l.from_sqrt_form(-5, -1, 2);
        assert_eq!(hilbert_symbol(&l, &neg, &FieldElem::one(), &Place::Real(0)).unwrap(), 1);
        assert_eq!(hilbert_symbol(&l, &neg, &neg, &Place::Real(1)).unwrap(), -1);
    }

    #[test]
    fn rational_symbols_match_classical() {
        // over Q(√5), (−1, −1) ramifies only at the two real places
        let l = q5();
        let m1 = FieldElem::int(-1);
        let r = ramified_places(&l, &m1, &m1).unwrap();
        assert_eq!(r, vec![Place::Real(0), Place::Real(1)]);
        // (2, 3)_2 over Q is −1, and 2 is inert in Q(√5) with even degree so
        // the local symbol becomes trivial
        let two = FieldElem::int(2);
        let three = FieldElem::int(3);
        assert!(product_formula_check(&l, &two, &three).unwrap());
    }

    #[test]
    fn product_formula_small_grid() {
        let l = q5();
        for x in -4..5i64 {
            for y in -3..3i64 {
                let g = FieldElem::integral(x, y);
                let d = FieldElem::integral(y + 2, x - 1);
                if g.is_zero() || d.is_zero() {
                    continue;
                }
                assert!(product_formula_check(&l, &g, &d).unwrap(), "{g} {d}");
            }
        }
    }

    #[test]
    fn prime_search() {
        let l = q5();
        let unit = l.unit_ideal();
        let x = find_prime_in_progression(&l, &FieldElem::one(), &unit, [Sign::Positive; 2], 1000, 0).unwrap();
        assert!(l.is_totally_positive(&x));
        assert_eq!(l.factor_elem(&x).unwrap().len(), 1);
        let two = l.ideal(&FieldElem::int(2)).unwrap();
        assert!(find_prime_in_progression(&l, &FieldElem::zero(), &two, [Sign::Positive; 2], 10, 0).is_err());
    }

    #[test]
    fn dyadic_ramified_base() {
        // Q(√2): 2 ramifies, (−1, −1) splits at the dyadic place
        let l = RealQuadraticField::new_strict(2).unwrap();
        let m1 = FieldElem::int(-1);
        assert_eq!(ramified_places(&l, &m1, &m1).unwrap(), vec![Place::Real(0), Place::Real(1)]);
        // (√2, 3) over Q(√2): a generic check of the product formula
        for x in -3..4i64 {
            for y in 1..3i64 {
                let g = FieldElem::integral(x, y);
                let d = FieldElem::integral(y - 3, x + 1);
                if !d.is_zero() {
                    assert!(product_formula_check(&l, &g, &d).unwrap());
                }
            }
        }
    }

    #[test]
    fn symbol_is_bilinear() {
        let l = RealQuadraticField::new_strict(13).unwrap();
        let els: Vec<FieldElem> = [(3, 1), (-1, 2), (5, -2), (2, 0), (-7, 3)]
            .iter()
            .map(|&(x, y)| FieldElem::integral(x, y))
            .collect();
        for g in &els {
            for d1 in &els {
                for d2 in &els {
                    let dd = l.mul(d1, d2);
                    for pl in relevant_places(&l, g, &dd).unwrap() {
                        let a = hilbert_symbol(&l, g, d1, &pl).unwrap();
                        let b = hilbert_symbol(&l, g, d2, &pl).unwrap();
                        let c = hilbert_symbol(&l, g, &dd, &pl).unwrap();
                        assert_eq!(a * b, c, "{g} {d1} {d2} {pl:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn alpha0_for_worked_fields() {
        for k in [crate::cm_field::tests::zeta5(), crate::cm_field::tests::kprime()] {
            let a = find_alpha0(&k, 19, 100_000, 0).unwrap();
            assert!(is_totally_negative(&k.base, &a.alpha0));
            assert_eq!(a.s0.len(), 2);
            assert_eq!(a.ramified.len(), 4);
            let n = k.relative_norm_generator(&a.big_a).unwrap();
            assert_eq!(k.base.ideal(&n).unwrap(), k.base.ideal(&a.alpha0).unwrap());
            let sw = a.swapped();
            assert_eq!(sw.big_a, a.big_a_bar);
        }
        let k = crate::cm_field::tests::zeta5();
        assert!(matches!(find_alpha0(&k, 5, 1000, 0), Err(Error::IneligiblePrime { .. })));
        assert!(matches!(find_alpha0(&k, 3, 1000, 0), Err(Error::IneligiblePrime { .. })));
    }

    fn odd_coprime(l: &RealQuadraticField, g: &FieldElem, d: &FieldElem) -> bool {
        if g.is_zero() || d.is_zero() {
            return false;
        }
        let two = l.ideal(&FieldElem::int(2)).unwrap();
        let (ig, id) = (l.ideal(g).unwrap(), l.ideal(d).unwrap());
        ig.is_coprime(l, &two) && id.is_coprime(l, &two) && ig.is_coprime(l, &id)
    }

    fn sign_pow(n: usize) -> i32 {
        if n % 2 == 0 {
            1
        } else {
            -1
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(200))]

        #[test]
        fn reciprocity_law_and_supplement(
            di in 0usize..3,
            gx in -40i64..40, gy in -40i64..40,
            dx in -40i64..40, dy in -40i64..40,
        ) {
            let l = RealQuadraticField::new_strict([5, 13, 2][di]).unwrap();
            let g = FieldElem::integral(gx, gy);
            let d = FieldElem::integral(dx, dy);
            proptest::prop_assume!(odd_coprime(&l, &g, &d));
            proptest::prop_assert!(product_formula_check(&l, &g, &d).unwrap());
            let both_neg = (0..2)
                .filter(|&i| l.sign(&g, i) == Ordering::Less && l.sign(&d, i) == Ordering::Less)
                .count();
            let lhs = residue_symbol(&l, &g, &d).unwrap() * residue_symbol(&l, &d, &g).unwrap();
            proptest::prop_assert_eq!(lhs, sign_pow(both_neg) * dyadic_product(&l, &g, &d).unwrap());
            let m1 = FieldElem::int(-1);
            let supp = residue_symbol(&l, &m1, &g).unwrap() * dyadic_product(&l, &m1, &g).unwrap();
            proptest::prop_assert_eq!(supp, sign_pow(negative_places(&l, &g)));
        }
    }
}

//! The orders R(𝔞, λ, ℓ) of B_{p,L} = (d, α₀p / L) as explicit Z-lattices of
//! pairs [α, β] ∈ K², and the sets of elements with prescribed reduced trace
//! and norm.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::base_field::{FieldElem, IdealL, PrimeOfL};
use crate::cm_field::{CMField, ElemK, IdealK};
use crate::error::{Error, Result};
use crate::lattice::{self, Mat};
use crate::reciprocity::Alpha0;

/// Everything fixed once K, p and α₀ are chosen.
#[derive(Clone, Debug)]
pub struct EmbeddingContext<'a> {
    pub k: &'a CMField,
    pub p: u64,
    pub n: u32,
    /// p^{n−1}
    pub ell: FieldElem,
    pub alpha0: FieldElem,
    pub big_a: IdealK,
    /// λ_q² ≡ α₀p mod q, aligned with `k.d_primes`.
    pub lambda_q: Vec<FieldElem>,
    pub s0: Vec<PrimeOfL>,
    /// α₀p
    pub j2: FieldElem,
}

/// [α, β] = ((α, β), (α₀p·β̄, ᾱ)).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QuaternionElem {
    pub alpha: ElemK,
    pub beta: ElemK,
}

impl QuaternionElem {
    pub fn new(alpha: ElemK, beta: ElemK) -> Self {
        QuaternionElem { alpha, beta }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderLabel {
    pub ideal: IdealK,
    pub signs: Vec<i8>,
    pub ell: FieldElem,
}

/// A Z-lattice of rank 8 in K² ≅ B_{p,L}. `basis` is a Z-basis; `hnf`/`den`
/// give the canonical form used for equality and membership.
#[derive(Clone, Debug)]
pub struct OrderLattice {
    pub basis: Vec<QuaternionElem>,
    pub gram: Vec<Vec<BigInt>>,
    pub label: Option<OrderLabel>,
    pub lambda: Option<FieldElem>,
    hnf: Mat,
    den: BigInt,
}

impl PartialEq for OrderLattice {
    fn eq(&self, other: &Self) -> bool {
        self.hnf == other.hnf && self.den == other.den
    }
}

impl<'a> EmbeddingContext<'a> {
    pub fn new(k: &'a CMField, a0: &Alpha0, n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("level n must be positive".into()));
        }
        let ell = FieldElem::int(BigInt::from(a0.p).pow(n - 1));
        let j2 = k.base.mul(&a0.alpha0, &FieldElem::int(a0.p));
        Ok(EmbeddingContext {
            k,
            p: a0.p,
            n,
            ell,
            alpha0: a0.alpha0.clone(),
            big_a: a0.big_a.clone(),
            lambda_q: a0.lambda_q.clone(),
            s0: a0.s0.clone(),
            j2,
        })
    }

    /// Same context at another level.
    pub fn with_level(&self, n: u32) -> Self {
        let mut c = self.clone();
        c.n = n;
        c.ell = FieldElem::int(BigInt::from(self.p).pow(n - 1));
        c
    }

    pub fn qmul(&self, x: &QuaternionElem, y: &QuaternionElem) -> QuaternionElem {
        let k = self.k;
        let a = k.add(
            &k.mul(&x.alpha, &y.alpha),
            &k.scale(&k.mul(&x.beta, &k.conj(&y.beta)), &self.j2),
        );
        let b = k.add(&k.mul(&x.alpha, &y.beta), &k.mul(&x.beta, &k.conj(&y.alpha)));
        QuaternionElem::new(a, b)
    }

    pub fn qadd(&self, x: &QuaternionElem, y: &QuaternionElem) -> QuaternionElem {
        QuaternionElem::new(self.k.add(&x.alpha, &y.alpha), self.k.add(&x.beta, &y.beta))
    }

    pub fn qscale(&self, x: &QuaternionElem, c: &BigInt) -> QuaternionElem {
        let c = FieldElem::int(c.clone());
        QuaternionElem::new(self.k.scale(&x.alpha, &c), self.k.scale(&x.beta, &c))
    }

    pub fn trd(&self, x: &QuaternionElem) -> FieldElem {
        self.k.rel_trace(&x.alpha)
    }

    pub fn nrd(&self, x: &QuaternionElem) -> FieldElem {
        let l = &self.k.base;
        l.sub(&self.k.rel_norm(&x.alpha), &l.mul(&self.j2, &self.k.rel_norm(&x.beta)))
    }

    /// The 2×2 matrix over K.
    pub fn matrix(&self, x: &QuaternionElem) -> [[ElemK; 2]; 2] {
        let k = self.k;
        [
            [x.alpha.clone(), x.beta.clone()],
            [k.scale(&k.conj(&x.beta), &self.j2), k.conj(&x.alpha)],
        ]
    }

    /// ⟨x, y⟩ = Tr_{K/L}(αγ̄) − α₀p·Tr_{K/L}(βδ̄), with ⟨x, x⟩ = 2·Nrd(x).
    pub fn pairing(&self, x: &QuaternionElem, y: &QuaternionElem) -> FieldElem {
        let k = self.k;
        let l = &k.base;
        let a = k.rel_trace(&k.mul(&x.alpha, &k.conj(&y.alpha)));
        let b = k.rel_trace(&k.mul(&x.beta, &k.conj(&y.beta)));
        l.sub(&a, &l.mul(&self.j2, &b))
    }

    fn to_z8(&self, x: &QuaternionElem) -> (Vec<BigInt>, BigInt) {
        let (a, da) = self.k.to_z(&x.alpha);
        let (b, db) = self.k.to_z(&x.beta);
        let den = da.lcm(&db);
        let fa = &den / &da;
        let fb = &den / &db;
        let mut v: Vec<BigInt> = a.into_iter().map(|c| c * &fa).collect();
        v.extend(b.into_iter().map(|c| c * &fb));
        (v, den)
    }

    fn from_z8(&self, v: &[BigInt], den: &BigInt) -> QuaternionElem {
        QuaternionElem::new(self.k.from_z(&v[..4], den), self.k.from_z(&v[4..], den))
    }

    /// Lattice spanned by the given elements (which must have rank 8).
    pub fn lattice_of(&self, gens: &[QuaternionElem]) -> Result<OrderLattice> {
        let zs: Vec<_> = gens.iter().map(|g| self.to_z8(g)).collect();
        let mut den = BigInt::one();
        for (_, d) in &zs {
            den = den.lcm(d);
        }
        let rows: Vec<Vec<BigInt>> = zs
            .iter()
            .map(|(v, d)| {
                let f = &den / d;
                v.iter().map(|c| c * &f).collect()
            })
            .collect();
        let h = lattice::hnf(&rows, 8).ok_or_else(|| Error::InvalidInput("generators do not span rank 8".into()))?;
        let mut g = den.clone();
        for r in &h {
            for v in r {
                g = g.gcd(v);
            }
        }
        let h: Mat = h.iter().map(|r| r.iter().map(|v| v / &g).collect()).collect();
        let den = den / &g;
        let basis: Vec<QuaternionElem> = h.iter().map(|r| self.from_z8(r, &den)).collect();
        let gram = self.z_gram(&basis)?;
        Ok(OrderLattice { basis, gram, label: None, lambda: None, hnf: h, den })
    }

    /// Tr_{L/Q}⟨x_i, x_j⟩, which must be integral on an order.
    fn z_gram(&self, basis: &[QuaternionElem]) -> Result<Vec<Vec<BigInt>>> {
        let l = &self.k.base;
        let mut g = vec![vec![BigInt::zero(); basis.len()]; basis.len()];
        for i in 0..basis.len() {
            for j in i..basis.len() {
                let t = l.trace(&self.pairing(&basis[i], &basis[j]));
                if !t.is_integer() {
                    return Err(Error::ClosureFailure("non-integral trace form".into()));
                }
                g[i][j] = t.to_integer();
                g[j][i] = g[i][j].clone();
            }
        }
        Ok(g)
    }

    pub fn contains(&self, r: &OrderLattice, x: &QuaternionElem) -> bool {
        let (v, dx) = self.to_z8(x);
        let mut w = Vec::with_capacity(8);
        for c in v {
            let t = c * &r.den;
            let (q, rem) = t.div_rem(&dx);
            if !rem.is_zero() {
                return false;
            }
            w.push(q);
        }
        lattice::contains(&r.hnf, &w)
    }

    /// 𝒟⁻¹ = (1/√d)
    fn inverse_different(&self) -> Result<IdealK> {
        let k = self.k;
        k.principal(&k.inv(&k.sqrt_d())?)
    }

    /// 𝒜⁻¹𝔞⁻¹𝔞̄
    pub fn twist(&self, a: &IdealK) -> Result<IdealK> {
        let k = self.k;
        let ai = k.ideal_inv(&self.big_a)?;
        Ok(k.ideal_mul(&ai, &k.ideal_div(&k.ideal_conj(a), a)?))
    }

    /// The β-ideal 𝒟⁻¹𝒜⁻¹ℓ𝔞⁻¹𝔞̄.
    pub fn beta_ideal(&self, a: &IdealK) -> Result<IdealK> {
        let k = self.k;
        let t = self.twist(a)?;
        let t = k.ideal_scale(&t, &ElemK::from_base(self.ell.clone()))?;
        Ok(k.ideal_mul(&t, &self.inverse_different()?))
    }

    /// ε(𝔞, 𝔮) = (−1)^{v_𝔮̃(𝔞)} for each 𝔮 | d.
    pub fn signs_of(&self, a: &IdealK) -> Vec<i8> {
        let k = self.k;
        k.d_primes
            .iter()
            .map(|q| {
                let qt = &k.primes_above(q)[0];
                if k.valuation(a, qt).rem_euclid(2) == 0 {
                    1
                } else {
                    -1
                }
            })
            .collect()
    }

    /// {x ∈ O_L : x·𝒜⁻¹𝔞⁻¹𝔞̄ ⊆ O_K}.
    fn lambda_modulus(&self, a: &IdealK) -> Result<IdealL> {
        let k = self.k;
        let l = &k.base;
        let inv = k.ideal_inv(&self.twist(a)?)?;
        // rows 0, 1 of the Hermite form span the part inside L
        let part: Mat = inv.num[..2].iter().map(|r| r[..2].to_vec()).collect();
        let dz: Mat = vec![
            vec![inv.den.clone(), BigInt::zero()],
            vec![BigInt::zero(), inv.den.clone()],
        ];
        let meet = lattice::intersect(&part, &dz);
        let gens: Vec<FieldElem> = meet
            .iter()
            .map(|r| FieldElem::integral(&r[0] / &inv.den, &r[1] / &inv.den))
            .collect();
        l.ideal_from_elements(&gens)
    }

    /// λ ∈ O_L with λ ≡ signs[i]·λ_q mod q for q | d and λ𝒜⁻¹𝔞⁻¹𝔞̄ integral.
    pub fn solve_lambda(&self, a: &IdealK, signs: &[i8]) -> Result<FieldElem> {
        let k = self.k;
        let l = &k.base;
        if signs.len() != k.d_primes.len() {
            return Err(Error::InvalidInput("one sign per prime dividing d".into()));
        }
        let c = self.lambda_modulus(a)?;
        let mut cong = Vec::new();
        for ((q, lq), &s) in k.d_primes.iter().zip(&self.lambda_q).zip(signs) {
            if !c.is_coprime(l, &q.ideal) {
                return Err(Error::NonCoprimeIdeal("𝒜⁻¹𝔞⁻¹𝔞̄ is not prime to d".into()));
            }
            let r = if s < 0 { l.neg(lq) } else { lq.clone() };
            cong.push((r, q.ideal.clone()));
        }
        if !c.is_unit() {
            cong.push((FieldElem::zero(), c));
        }
        let lam = l.crt_solve(&cong)?;
        let check = k.ideal_scale(&self.twist(a)?, &ElemK::from_base(lam.clone()))?;
        if !check.is_integral() {
            return Err(Error::VerificationFailed("λ𝒜⁻¹𝔞⁻¹𝔞̄ is not integral".into()));
        }
        Ok(lam)
    }

    /// Another valid λ with the same signs: λ + s·g where g generates d·c.
    pub fn shift_lambda(&self, a: &IdealK, lam: &FieldElem, s: i64) -> Result<FieldElem> {
        let l = &self.k.base;
        let c = self.lambda_modulus(a)?;
        let g = l.mul(&self.k.d, &c.generator);
        Ok(l.add(lam, &g.scale(&BigInt::from(s))))
    }

    /// The predicate defining R(𝔞, λ, ℓ).
    pub fn satisfies_predicate(&self, a: &IdealK, lam: &FieldElem, x: &QuaternionElem) -> Result<bool> {
        let k = self.k;
        if !k.contains(&self.inverse_different()?, &x.alpha) || !k.contains(&self.beta_ideal(a)?, &x.beta) {
            return Ok(false);
        }
        let diff = k.sub(&x.alpha, &k.scale(&x.beta, lam));
        Ok(diff.is_integral())
    }

    /// R(𝔞, λ, ℓ) with λ from `signs`.
    pub fn build_order(&self, a: &IdealK, signs: &[i8]) -> Result<OrderLattice> {
        let lam = self.solve_lambda(a, signs)?;
        self.build_order_with_lambda(a, signs, &lam)
    }

    /// R(𝔞, λ_𝔞, ℓ).
    pub fn build_order_canonical(&self, a: &IdealK) -> Result<OrderLattice> {
        self.build_order(a, &self.signs_of(a))
    }

    pub fn build_order_with_lambda(&self, a: &IdealK, signs: &[i8], lam: &FieldElem) -> Result<OrderLattice> {
        let k = self.k;
        let bi = self.beta_ideal(a)?;
        let mut gens: Vec<QuaternionElem> = k
            .ideal_basis(&k.unit_ideal())
            .into_iter()
            .map(|o| QuaternionElem::new(o, ElemK::zero()))
            .collect();
        for b in k.ideal_basis(&bi) {
            gens.push(QuaternionElem::new(k.scale(&b, lam), b));
        }
        for g in &gens {
            if !self.satisfies_predicate(a, lam, g)? {
                return Err(Error::ClosureFailure("generator violates the defining predicate".into()));
            }
        }
        let mut r = self.lattice_of(&gens)?;
        // R ⊆ predicate set P; both have index N(d) in 𝒟⁻¹ × β-ideal, so R = P
        let ambient = self.ambient(&bi)?;
        let idx = lattice_index(&ambient, &r);
        let expect = k.base.norm(&k.d).abs();
        if idx != expect {
            return Err(Error::ClosureFailure(format!("index {idx} in the ambient lattice, expected {expect}")));
        }
        for x in &r.basis {
            for y in &r.basis {
                if !self.contains(&r, &self.qmul(x, y)) {
                    return Err(Error::ClosureFailure("basis product outside the lattice".into()));
                }
            }
        }
        r.label = Some(OrderLabel { ideal: a.clone(), signs: signs.to_vec(), ell: self.ell.clone() });
        r.lambda = Some(lam.clone());
        Ok(r)
    }

    fn ambient(&self, beta: &IdealK) -> Result<OrderLattice> {
        let k = self.k;
        let mut gens: Vec<QuaternionElem> = k
            .ideal_basis(&self.inverse_different()?)
            .into_iter()
            .map(|x| QuaternionElem::new(x, ElemK::zero()))
            .collect();
        gens.extend(k.ideal_basis(beta).into_iter().map(|b| QuaternionElem::new(ElemK::zero(), b)));
        self.lattice_of_unchecked(&gens)
    }

    fn lattice_of_unchecked(&self, gens: &[QuaternionElem]) -> Result<OrderLattice> {
        let zs: Vec<_> = gens.iter().map(|g| self.to_z8(g)).collect();
        let mut den = BigInt::one();
        for (_, d) in &zs {
            den = den.lcm(d);
        }
        let rows: Vec<Vec<BigInt>> = zs
            .iter()
            .map(|(v, d)| {
                let f = &den / d;
                v.iter().map(|c| c * &f).collect()
            })
            .collect();
        let h = lattice::hnf(&rows, 8).ok_or_else(|| Error::InvalidInput("generators do not span rank 8".into()))?;
        Ok(OrderLattice { basis: Vec::new(), gram: Vec::new(), label: None, lambda: None, hnf: h, den })
    }

    /// R′ = {[α, β] : α ∈ O_K, β ∈ ℓ𝔞⁻¹𝔞̄}.
    pub fn build_r_prime(&self, a: &IdealK) -> Result<OrderLattice> {
        let k = self.k;
        let b = k.ideal_scale(&k.ideal_div(&k.ideal_conj(a), a)?, &ElemK::from_base(self.ell.clone()))?;
        let mut gens: Vec<QuaternionElem> = k
            .ideal_basis(&k.unit_ideal())
            .into_iter()
            .map(|o| QuaternionElem::new(o, ElemK::zero()))
            .collect();
        gens.extend(k.ideal_basis(&b).into_iter().map(|x| QuaternionElem::new(ElemK::zero(), x)));
        self.lattice_of(&gens)
    }

    /// Discriminant ideal of an O_L-lattice: 𝔠²·det⟨e_i, e_j⟩ where 𝔠 is the
    /// ideal of 4-minors in the L-coordinates (1, t) ⊕ (1, t). Returned as a
    /// generator together with the check value |det G| / disc_L⁴.
    pub fn discriminant_generator(&self, r: &OrderLattice) -> Result<FieldElem> {
        let k = self.k;
        let l = &k.base;
        let coords: Vec<[FieldElem; 4]> = r
            .basis
            .iter()
            .map(|x| [x.alpha.u.clone(), x.alpha.v.clone(), x.beta.u.clone(), x.beta.v.clone()])
            .collect();
        let mut minors = Vec::new();
        let n = coords.len();
        for a in 0..n {
            for b in a + 1..n {
                for c in b + 1..n {
                    for d in c + 1..n {
                        let m = [&coords[a], &coords[b], &coords[c], &coords[d]];
                        let v = det4(l, m);
                        if !v.is_zero() {
                            minors.push(v);
                        }
                    }
                }
            }
        }
        let mut den = BigInt::one();
        for m in &minors {
            den = den.lcm(&m.den);
        }
        let ints: Vec<FieldElem> = minors.iter().map(|m| m.scale(&den)).collect();
        let c = l.ideal_from_elements(&ints)?;
        // det⟨e_i, e_j⟩ on (1, t, j, tj) = (α₀p)²·d²
        let base = l.mul(&l.mul(&self.j2, &self.j2), &l.mul(&k.d, &k.d));
        let cg = &c.generator.div_int(&den);
        let g = l.mul(&l.mul(&cg, &cg), &base);
        // cross-check with the Z-Gram determinant
        let det = lattice::det(&r.gram).abs();
        let disc4 = BigInt::from(l.disc).pow(4);
        let ng = l.norm(&g).abs();
        if BigRational::from_integer(det) != ng * BigRational::from_integer(disc4) {
            return Err(Error::VerificationFailed("Gram determinant disagrees with the discriminant ideal".into()));
        }
        Ok(g)
    }

    /// Reduced discriminant: the ideal whose square is the discriminant.
    pub fn order_discriminant(&self, r: &OrderLattice) -> Result<IdealL> {
        let l = &self.k.base;
        let g = self.discriminant_generator(r)?;
        if !g.is_integral() {
            return Err(Error::VerificationFailed("non-integral discriminant".into()));
        }
        let mut root = FieldElem::one();
        for (pr, e) in l.factor_elem(&g)? {
            if e % 2 != 0 {
                return Err(Error::VerificationFailed("discriminant is not a square ideal".into()));
            }
            root = l.mul(&root, &l.pow(pr.generator(), e / 2)?);
        }
        l.ideal(&root)
    }

    pub fn orders_equal(&self, r1: &OrderLattice, r2: &OrderLattice) -> bool {
        let both = r1.basis.iter().all(|x| self.contains(r2, x)) && r2.basis.iter().all(|x| self.contains(r1, x));
        debug_assert_eq!(both, r1 == r2);
        both
    }

    /// μ⁻¹Rμ for μ ∈ K^×: [α, β] ↦ [α, (μ̄/μ)β].
    pub fn conjugate_by(&self, r: &OrderLattice, mu: &ElemK) -> Result<OrderLattice> {
        let k = self.k;
        let f = k.div(&k.conj(mu), mu)?;
        let gens: Vec<QuaternionElem> = r
            .basis
            .iter()
            .map(|x| QuaternionElem::new(x.alpha.clone(), k.mul(&f, &x.beta)))
            .collect();
        self.lattice_of(&gens)
    }

    /// All ξ ∈ R with Trd(ξ) = t and Nrd(ξ) = ν, found by enumerating the
    /// definite form Tr_{L/Q}⟨ξ, ξ⟩ ≤ 2·Tr_{L/Q}(ν).
    pub fn brute_force_s(&self, r: &OrderLattice, t: &FieldElem, nu: &FieldElem) -> Result<Vec<QuaternionElem>> {
        let l = &self.k.base;
        if !l.is_totally_positive(nu) {
            return Err(Error::InvalidInput("target norm must be totally positive".into()));
        }
        let tr = l.trace(nu);
        if !tr.is_integer() {
            return Ok(Vec::new());
        }
        let bound = lattice::to_i128(&(tr.to_integer() * 2))?;
        let g: Vec<Vec<i128>> = r
            .gram
            .iter()
            .map(|row| row.iter().map(lattice::to_i128).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let mut hits = Vec::new();
        let mut coords_seen = Vec::new();
        lattice::enumerate_short(&g, bound, |c, _| {
            coords_seen.push(c.to_vec());
            true
        });
        for c in coords_seen {
            let mut v = vec![BigInt::zero(); 8];
            for (ci, row) in c.iter().zip(&r.hnf) {
                if *ci != 0 {
                    let cb = BigInt::from(*ci);
                    for (vj, hj) in v.iter_mut().zip(row) {
                        *vj += &cb * hj;
                    }
                }
            }
            let x = self.from_z8(&v, &r.den);
            if &self.trd(&x) == t && &self.nrd(&x) == nu {
                hits.push(x);
            }
        }
        hits.sort_by(|a, b| self.to_z8(a).cmp(&self.to_z8(b)));
        Ok(hits)
    }
}

/// [A : B] for lattices B ⊆ A.
fn lattice_index(a: &OrderLattice, b: &OrderLattice) -> BigRational {
    let da = lattice::det_triangular(&a.hnf);
    let db = lattice::det_triangular(&b.hnf);
    BigRational::new(db * a.den.pow(8), da * b.den.pow(8))
}

fn det4(l: &crate::base_field::RealQuadraticField, m: [&[FieldElem; 4]; 4]) -> FieldElem {
    // Laplace expansion along the first row with 3×3 minors
    let det3 = |r: [usize; 3], c: [usize; 3]| -> FieldElem {
        let e = |i: usize, j: usize| &m[r[i]][c[j]];
        let t1 = l.mul(e(0, 0), &l.sub(&l.mul(e(1, 1), e(2, 2)), &l.mul(e(1, 2), e(2, 1))));
        let t2 = l.mul(e(0, 1), &l.sub(&l.mul(e(1, 0), e(2, 2)), &l.mul(e(1, 2), e(2, 0))));
        let t3 = l.mul(e(0, 2), &l.sub(&l.mul(e(1, 0), e(2, 1)), &l.mul(e(1, 1), e(2, 0))));
        l.add(&l.sub(&t1, &t2), &t3)
    };
    let mut acc = FieldElem::zero();
    for j in 0..4 {
        if m[0][j].is_zero() {
            continue;
        }
        let cols: Vec<usize> = (0..4).filter(|&c| c != j).collect();
        let minor = det3([1, 2, 3], [cols[0], cols[1], cols[2]]);
        let term = l.mul(&m[0][j], &minor);
        acc = if j % 2 == 0 { l.add(&acc, &term) } else { l.sub(&acc, &term) };
    }
    acc
}

impl OrderLattice {
    /// Canonical Hermite form over Z^8 with its common denominator.
    pub fn canonical(&self) -> (&Mat, &BigInt) {
        (&self.hnf, &self.den)
    }

    /// Rebuilds an order from a dumped basis; the Gram matrix is recomputed.
    pub fn from_basis(ctx: &EmbeddingContext, basis: &[QuaternionElem]) -> Result<Self> {
        ctx.lattice_of(basis)
    }
}

/// Lemma-level criterion for R(𝔞, λ_𝔞) = R(𝔟, λ_𝔟): 𝔞⁻¹𝔞̄ = 𝔟⁻¹𝔟̄ and the
/// valuations at every ramified prime agree mod 2.
pub fn equality_criterion(ctx: &EmbeddingContext, a: &IdealK, b: &IdealK) -> Result<bool> {
    let k = ctx.k;
    let qa = k.ideal_div(&k.ideal_conj(a), a)?;
    let qb = k.ideal_div(&k.ideal_conj(b), b)?;
    Ok(qa == qb && ctx.signs_of(a) == ctx.signs_of(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cm_field::tests::{kprime, zeta5};
    use crate::reciprocity::find_alpha0;

    fn ctx_for(k: &CMField, p: u64) -> EmbeddingContext<'_> {
        let a0 = find_alpha0(k, p, 100_000, 0).unwrap();
        EmbeddingContext::new(k, &a0, 1).unwrap()
    }

    #[test]
    fn quaternion_arithmetic_matches_matrices() {
        let k = zeta5();
        let ctx = ctx_for(&k, 19);
        let l = &k.base;
        let x = QuaternionElem::new(
            ElemK::new(FieldElem::integral(1, 2), FieldElem::integral(-1, 0)),
            ElemK::new(FieldElem::integral(0, 1), FieldElem::integral(3, -1)),
        );
        let y = QuaternionElem::new(
            ElemK::new(FieldElem::integral(2, 0), FieldElem::integral(1, 1)),
            ElemK::new(FieldElem::integral(-2, 1), FieldElem::integral(0, 1)),
        );
        let mx = ctx.matrix(&x);
        let my = ctx.matrix(&y);
        let prod = ctx.matrix(&ctx.qmul(&x, &y));
        for i in 0..2 {
            for j in 0..2 {
                let e = k.add(&k.mul(&mx[i][0], &my[0][j]), &k.mul(&mx[i][1], &my[1][j]));
                assert_eq!(e, prod[i][j]);
            }
        }
        let tr = k.add(&mx[0][0], &mx[1][1]);
        assert_eq!(tr, ElemK::from_base(ctx.trd(&x)));
        let det = k.sub(&k.mul(&mx[0][0], &mx[1][1]), &k.mul(&mx[0][1], &mx[1][0]));
        assert_eq!(det, ElemK::from_base(ctx.nrd(&x)));
        let two = FieldElem::int(2);
        assert_eq!(ctx.pairing(&x, &x), l.mul(&two, &ctx.nrd(&x)));
    }

    #[test]
    fn orders_for_worked_fields() {
        for k in [zeta5(), kprime()] {
            let ctx = ctx_for(&k, 19);
            let o = k.unit_ideal();
            let signs = ctx.signs_of(&o);
            let r = ctx.build_order(&o, &signs).unwrap();
            let pideal = k.base.ideal(&FieldElem::int(19)).unwrap();
            assert_eq!(ctx.order_discriminant(&r).unwrap(), pideal);
            let rp = ctx.build_r_prime(&o).unwrap();
            let g = ctx.discriminant_generator(&rp).unwrap();
            let l = &k.base;
            let e = l.mul(&ctx.j2, &k.d);
            assert_eq!(l.ideal(&g).unwrap(), l.ideal(&l.mul(&e, &e)).unwrap());
            // O_K ⊂ R
            for b in k.ideal_basis(&o) {
                assert!(ctx.contains(&r, &QuaternionElem::new(b, ElemK::zero())));
            }
            // a second λ gives the same order
            let lam = r.lambda.clone().unwrap();
            let lam2 = ctx.shift_lambda(&o, &lam, 3).unwrap();
            let r2 = ctx.build_order_with_lambda(&o, &signs, &lam2).unwrap();
            assert!(ctx.orders_equal(&r, &r2));
            // flipping a sign changes the order
            let mut flipped = signs.clone();
            flipped[0] = -flipped[0];
            let r3 = ctx.build_order(&o, &flipped).unwrap();
            assert!(!ctx.orders_equal(&r, &r3));
        }
    }

    #[test]
    fn one_is_in_every_s_set() {
        let k = zeta5();
        let ctx = ctx_for(&k, 19);
        let r = ctx.build_order_canonical(&k.unit_ideal()).unwrap();
        let s = ctx.brute_force_s(&r, &FieldElem::int(2), &FieldElem::one()).unwrap();
        // ±1 has trace ±2, so only 1 and the roots of unity with trace 2 (just 1)
        assert!(s.contains(&QuaternionElem::new(ElemK::one(), ElemK::zero())));
        for x in &s {
            assert_eq!(ctx.nrd(x), FieldElem::one());
        }
    }

    #[test]
    fn level_two_discriminant() {
        // With ℓ ∈ O_L the β-lattice ℓ𝔞⁻¹𝔞̄ has relative norm ℓ², so the
        // reduced discriminant of R(𝔞, λ, ℓ) = O_K + ℓR(𝔞, λ, 1) is pℓ².
        let l = crate::base_field::RealQuadraticField::new_strict(5).unwrap();
        let k = CMField::from_radicand(l, &FieldElem::integral(-11, -4)).unwrap();
        let p = 7u64;
        let a0 = find_alpha0(&k, p, 100_000, 0).unwrap();
        let ctx1 = EmbeddingContext::new(&k, &a0, 1).unwrap();
        let ctx = ctx1.with_level(2);
        let o = k.unit_ideal();
        let r = ctx.build_order_canonical(&o).unwrap();
        let l = &k.base;
        assert_eq!(ctx.order_discriminant(&r).unwrap(), l.ideal(&FieldElem::int(343)).unwrap());
        let rp = ctx.build_r_prime(&o).unwrap();
        let e = l.mul(&l.mul(&ctx.j2, &k.d), &FieldElem::int(49));
        let g = ctx.discriminant_generator(&rp).unwrap();
        assert_eq!(l.ideal(&g).unwrap(), l.ideal(&l.mul(&e, &e)).unwrap());
        // O_K + 7·R(O_K, λ, 1)
        let r1 = ctx1.build_order_canonical(&o).unwrap();
        let mut gens: Vec<QuaternionElem> = k
            .ideal_basis(&o)
            .into_iter()
            .map(|x| QuaternionElem::new(x, ElemK::zero()))
            .collect();
        gens.extend(r1.basis.iter().map(|x| ctx.qscale(x, &BigInt::from(7))));
        assert!(ctx.orders_equal(&r, &ctx.lattice_of(&gens).unwrap()));
    }

    use crate::cm_field::ClassGroup;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Products of small primes of K with exponents in −1..=2.
    fn random_ideal(k: &CMField, rng: &mut StdRng) -> IdealK {
        let primes: Vec<IdealK> = [2u64, 3, 7, 11, 29, 31]
            .iter()
            .flat_map(|&q| k.primes_over(q))
            .map(|p| p.ideal)
            .collect();
        let mut a = k.unit_ideal();
        for _ in 0..2 {
            let p = &primes[rng.gen_range(0..primes.len())];
            let e = rng.gen_range(-1..=2);
            a = k.ideal_mul(&a, &k.ideal_pow(p, e).unwrap());
        }
        a
    }

    fn ramified_product(k: &CMField, mask: usize) -> IdealK {
        let mut c = k.unit_ideal();
        for (i, q) in k.d_primes.iter().enumerate() {
            if mask >> i & 1 == 1 {
                c = k.ideal_mul(&c, &k.primes_above(q)[0].ideal);
            }
        }
        c
    }

    #[test]
    fn lambda_independence_on_random_ideals() {
        let k = kprime();
        let ctx = ctx_for(&k, 19);
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..10 {
            let a = random_ideal(&k, &mut rng);
            let signs = ctx.signs_of(&a);
            let r = ctx.build_order(&a, &signs).unwrap();
            let lam = r.lambda.clone().unwrap();
            let s = rng.gen_range(1..20);
            let r2 = ctx.build_order_with_lambda(&a, &signs, &ctx.shift_lambda(&a, &lam, s).unwrap()).unwrap();
            assert!(ctx.orders_equal(&r, &r2));
            assert_eq!(ctx.order_discriminant(&r).unwrap(), k.base.ideal(&FieldElem::int(19)).unwrap());
        }
    }

    #[test]
    fn conjugation_moves_the_ideal() {
        let k = kprime();
        let ctx = ctx_for(&k, 19);
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..6 {
            let a = random_ideal(&k, &mut rng);
            let mu = ElemK::new(
                FieldElem::integral(rng.gen_range(-3..=3), rng.gen_range(-3..=3)),
                FieldElem::integral(rng.gen_range(-3..=3), rng.gen_range(1..=3)),
            );
            let r = ctx.build_order_canonical(&a).unwrap();
            let conj = ctx.conjugate_by(&r, &mu).unwrap();
            let ma = k.ideal_mul(&k.principal(&mu).unwrap(), &a);
            let r_mu = ctx.build_order_canonical(&ma).unwrap();
            assert!(ctx.orders_equal(&conj, &r_mu), "μ = {mu}");
        }
    }

    #[test]
    fn classification_on_class_number_two() {
        let k = kprime();
        let ctx = ctx_for(&k, 19);
        let g = ClassGroup::compute(&k, 4000).unwrap();
        assert_eq!(g.order, BigInt::from(2));
        let avoid = k.base.ideal(&FieldElem::int(2 * 19)).unwrap();
        let reps = g.representatives(&k, &avoid).unwrap();
        let orders: Vec<OrderLattice> = reps.iter().map(|(_, a)| ctx.build_order_canonical(a).unwrap()).collect();
        assert_eq!(orders.len(), 2);
        assert!(!ctx.orders_equal(&orders[0], &orders[1]));
    }

    #[test]
    fn equality_criterion_predicts_equality() {
        let k = kprime();
        let ctx = ctx_for(&k, 19);
        let mut rng = StdRng::seed_from_u64(3);
        let (mut eq, mut ne) = (0, 0);
        for i in 0..20 {
            let a = random_ideal(&k, &mut rng);
            // half the pairs differ by an ideal from L and ramified primes
            let b = if i % 2 == 0 {
                let c = FieldElem::integral(rng.gen_range(1..6), rng.gen_range(-2..=2));
                let c = if c.is_zero() { FieldElem::int(3) } else { c };
                let t = k.ideal_mul(&k.extend(&c).unwrap(), &ramified_product(&k, rng.gen_range(0..4)));
                k.ideal_mul(&a, &k.ideal_mul(&t, &ramified_product(&k, rng.gen_range(0..4))))
            } else {
                random_ideal(&k, &mut rng)
            };
            let predicted = equality_criterion(&ctx, &a, &b).unwrap();
            let ra = ctx.build_order_canonical(&a).unwrap();
            let rb = ctx.build_order_canonical(&b).unwrap();
            assert_eq!(predicted, ctx.orders_equal(&ra, &rb), "pair {i}");
            if predicted {
                eq += 1;
            } else {
                ne += 1;
            }
        }
        assert!(eq >= 3 && ne >= 3, "{eq} equal, {ne} unequal");
    }

    #[test]
    fn sign_sum_equals_ramified_twist_sum() {
        for (k, p) in [(kprime(), 19u64), (zeta5(), 19)] {
            let ctx = ctx_for(&k, p);
            let kp = if k.d == zeta5().d { kprime() } else { zeta5() };
            let t = kp.base.neg(kp.a_coeff());
            let nw = kp.b.clone();
            let mut rng = StdRng::seed_from_u64(5);
            for _ in 0..3 {
                let a = random_ideal(&k, &mut rng);
                let tau = k.tau();
                let mut lhs = 0;
                let mut rhs = 0;
                for mask in 0..(1usize << tau) {
                    let signs: Vec<i8> = (0..tau).map(|i| if mask >> i & 1 == 1 { -1 } else { 1 }).collect();
                    lhs += ctx.brute_force_s(&ctx.build_order(&a, &signs).unwrap(), &t, &nw).unwrap().len();
                    let ac = k.ideal_mul(&a, &ramified_product(&k, mask));
                    rhs += ctx.brute_force_s(&ctx.build_order_canonical(&ac).unwrap(), &t, &nw).unwrap().len();
                }
                assert_eq!(lhs, rhs);
                assert!(lhs > 0);
            }
        }
    }
}

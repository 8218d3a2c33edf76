//! Counting optimal simultaneous embeddings of O_K and O_K′ into the
//! superspecial orders R(𝔞, λ_𝔞, ℓ), and the classical g = 1 valuation formula.

use std::time::Instant;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::arith;
use crate::base_field::{FieldElem, IdealL, TotalSign};
use crate::bounds::{candidate_primes, BoundInput, Candidate};
use crate::cm_field::{count_ideals_norm_in_class, CMField, ClassGroup, ElemK, IdealK};
use crate::error::{Error, Result};
use crate::orders::EmbeddingContext;
use crate::reciprocity::{find_alpha0, superspecial_hypotheses, Alpha0};

/// Data entering condition C.
#[derive(Clone, Debug)]
pub struct ConditionCParams {
    /// a = −Tr(t) for O_K = O_L[t].
    pub a_k: FieldElem,
    /// Tr_{K′/L}(w) for O_K′ = O_L[w].
    pub tr_w: FieldElem,
    pub d: FieldElem,
    pub dprime: FieldElem,
    pub p: u64,
    pub ell: FieldElem,
}

impl ConditionCParams {
    pub fn new(k: &CMField, kp: &CMField, p: u64, ell: FieldElem) -> Self {
        ConditionCParams {
            a_k: k.a_coeff().clone(),
            tr_w: kp.base.neg(kp.a_coeff()),
            d: k.d.clone(),
            dprime: kp.d.clone(),
            p,
            ell,
        }
    }

    fn four_p_ell2(&self) -> BigInt {
        BigInt::from(4u32) * BigInt::from(self.p)
    }

    /// 4pℓ² as an element of L.
    fn divisor(&self, k: &CMField) -> FieldElem {
        let l = &k.base;
        l.mul(&FieldElem::int(self.four_p_ell2()), &l.mul(&self.ell, &self.ell))
    }
}

/// The three clauses of condition C.
pub fn satisfies_c(k: &CMField, x: &FieldElem, c: &ConditionCParams) -> bool {
    let l = &k.base;
    if !x.is_integral() {
        return false;
    }
    let par = l.sub(x, &l.mul(&c.a_k, &c.tr_w));
    if !par.div_int(&BigInt::from(2)).is_integral() {
        return false;
    }
    let m = l.sub(&l.mul(x, x), &l.mul(&c.d, &c.dprime));
    if l.total_sign(&m) != TotalSign::TotallyNegative {
        return false;
    }
    l.div(&m, &c.divisor(k)).map(|q| q.is_integral()).unwrap_or(false)
}

/// δ(x) = 2^{#{𝔮 | d : x ∈ 𝔮}}.
pub fn delta(k: &CMField, x: &FieldElem) -> u64 {
    let n = k.d_primes.iter().filter(|q| q.ideal.contains(x)).count();
    1u64 << n
}

/// All x ∈ O_L satisfying condition C.
pub fn condition_c_solutions(k: &CMField, c: &ConditionCParams) -> Result<Vec<FieldElem>> {
    let l = &k.base;
    let bound = l.mul(&c.d, &c.dprime);
    let two = l.ideal(&FieldElem::int(2))?;
    let r = l.mul(&c.a_k, &c.tr_w);
    let mut xs: Vec<FieldElem> = l
        .enumerate_totally_bounded(&bound, &r, &two)?
        .into_iter()
        .filter(|x| satisfies_c(k, x, c))
        .collect();
    xs.sort();
    Ok(xs)
}

/// Verdict on whether the counting formula covers p for K.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Eligibility {
    pub eligible: bool,
    pub reason: Option<String>,
}

pub fn superspecial_eligible(k: &CMField, p: u64) -> Eligibility {
    match superspecial_hypotheses(k, p) {
        Ok(()) => Eligibility { eligible: true, reason: None },
        Err(r) => Eligibility { eligible: false, reason: Some(r) },
    }
}

/// (x² − dd′)/(4pℓ²) up to sign: the norm of the ideals in S₂.
fn s2_norm(k: &CMField, x: &FieldElem, c: &ConditionCParams) -> Result<FieldElem> {
    let l = &k.base;
    let m = l.sub(&l.mul(&c.d, &c.dprime), &l.mul(x, x));
    l.div(&m, &c.divisor(k))
}

/// #S₂(𝔞, x, ℓ) for every x satisfying C.
pub fn s2_counts(
    ctx: &EmbeddingContext,
    g: &ClassGroup,
    a: &IdealK,
    c: &ConditionCParams,
) -> Result<Vec<(FieldElem, usize)>> {
    let k = ctx.k;
    let target = g.class_of(k, &k.ideal_mul(&k.ideal_pow(a, 2)?, &ctx.big_a))?;
    let mut out = Vec::new();
    for x in condition_c_solutions(k, c)? {
        let n = s2_norm(k, &x, c)?;
        let (cnt, _) = count_ideals_norm_in_class(k, g, &n, &target)?;
        out.push((x, cnt));
    }
    Ok(out)
}

/// S₁(𝔞, x, ℓ) = {γ ∈ 𝒜⁻¹𝔞⁻¹𝔞̄ : γγ̄ = (x² − dd′)/(4α₀pℓ²)}.
pub fn s1_elements(ctx: &EmbeddingContext, a: &IdealK, x: &FieldElem, c: &ConditionCParams) -> Result<Vec<ElemK>> {
    let k = ctx.k;
    let l = &k.base;
    let m = l.sub(&l.mul(x, x), &l.mul(&c.d, &c.dprime));
    let target = l.div(&m, &l.mul(&c.divisor(k), &ctx.alpha0))?;
    k.enumerate_elements_with_relative_norm(&ctx.twist(a)?, &target)
}

/// w_K·Σ_x δ(x)·#S₂(𝔞, x, ℓ).
pub fn count_s2_weighted(
    ctx: &EmbeddingContext,
    kp: &CMField,
    a: &IdealK,
    g: &ClassGroup,
) -> Result<BigInt> {
    let k = ctx.k;
    let c = ConditionCParams::new(k, kp, ctx.p, ctx.ell.clone());
    let mut s = BigInt::zero();
    for (x, cnt) in s2_counts(ctx, g, a, &c)? {
        s += BigInt::from(delta(k, &x)) * BigInt::from(cnt);
    }
    Ok(s * BigInt::from(k.roots_of_unity_count()))
}

/// Σ over all sign vectors ε of #S(𝔞, λ_ε, ℓ), by lattice enumeration.
pub fn brute_force_signed_sum(ctx: &EmbeddingContext, kp: &CMField, a: &IdealK) -> Result<usize> {
    let k = ctx.k;
    let tr = kp.base.neg(kp.a_coeff());
    let nw = kp.b.clone();
    let tau = k.tau();
    let mut total = 0;
    for mask in 0..(1usize << tau) {
        let signs: Vec<i8> = (0..tau).map(|i| if mask >> i & 1 == 1 { -1 } else { 1 }).collect();
        let r = ctx.build_order(a, &signs)?;
        total += ctx.brute_force_s(&r, &tr, &nw)?.len();
    }
    Ok(total)
}

/// Search parameters shared by the pipeline.
#[derive(Clone, Debug)]
pub struct SearchOptions {
    pub alpha0_budget: usize,
    pub relation_budget: usize,
    pub seed: usize,
    /// Use 𝒜̄ in place of 𝒜.
    pub swap_a: bool,
    /// Permit K = K′.
    pub allow_self: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { alpha0_budget: 200_000, relation_budget: 4000, seed: 0, swap_a: false, allow_self: false }
    }
}

#[derive(Clone, Debug)]
pub struct ClassContribution {
    pub class: usize,
    pub class_vector: Vec<String>,
    pub s2_weighted: BigInt,
}

#[derive(Clone, Debug)]
pub struct CoincidenceReport {
    pub p: u64,
    pub eligible: bool,
    pub reason: Option<String>,
    pub n: u32,
    pub per_class: Vec<ClassContribution>,
    /// Σ_𝔞 #S(𝔞, λ_𝔞, p^{n−1}), times the multiplicity if one was given.
    pub total: BigInt,
    pub raw_total: BigInt,
    pub multiplicity: Option<BigInt>,
    pub alpha0: Option<FieldElem>,
    pub elapsed_ms: u128,
}

fn check_pair(k: &CMField, kp: &CMField, opts: &SearchOptions) -> Result<()> {
    if k.base.d != kp.base.d {
        return Err(Error::InvalidInput("K and K′ must share the real quadratic subfield".into()));
    }
    if !opts.allow_self && k.a_coeff() == kp.a_coeff() && k.b == kp.b {
        return Err(Error::InvalidInput("K = K′ needs the self-coincidence flag".into()));
    }
    Ok(())
}

/// Integral ideal to keep class representatives away from: 2·p·d·α₀.
pub fn avoid_ideal(ctx: &EmbeddingContext) -> Result<IdealL> {
    let l = &ctx.k.base;
    let e = l.mul(&l.mul(&ctx.k.d, &ctx.alpha0), &FieldElem::int(2 * ctx.p));
    l.ideal(&e)
}

/// Σ over class representatives 𝔞 of #S(𝔞, λ_𝔞, p^{n−1}), computed as
/// 2^{−τ}·Σ_𝔞 w_K·Σ_x δ(x)·#S₂(𝔞, x, ℓ).
pub fn coincidence_total_with(
    k: &CMField,
    kp: &CMField,
    g: &ClassGroup,
    p: u64,
    n: u32,
    multiplicity: Option<BigInt>,
    opts: &SearchOptions,
) -> Result<CoincidenceReport> {
    let start = Instant::now();
    check_pair(k, kp, opts)?;
    let mut a0 = find_alpha0(k, p, opts.alpha0_budget, opts.seed)?;
    if opts.swap_a {
        a0 = a0.swapped();
    }
    let ctx = EmbeddingContext::new(k, &a0, n)?;
    let reps = g.representatives(k, &avoid_ideal(&ctx)?)?;
    let mut per_class = Vec::new();
    let mut sum = BigInt::zero();
    for (i, (cv, a)) in reps.iter().enumerate() {
        let s = count_s2_weighted(&ctx, kp, a, g)?;
        sum += &s;
        per_class.push(ClassContribution {
            class: i,
            class_vector: cv.iter().map(|v| v.to_string()).collect(),
            s2_weighted: s,
        });
    }
    let twotau = BigInt::one() << k.tau();
    let (raw, rem) = sum.div_rem(&twotau);
    if !rem.is_zero() {
        return Err(Error::NonIntegerResult(format!("{sum} is not divisible by 2^τ = {twotau}")));
    }
    let total = match &multiplicity {
        Some(m) => &raw * m,
        None => raw.clone(),
    };
    Ok(CoincidenceReport {
        p,
        eligible: true,
        reason: None,
        n,
        per_class,
        total,
        raw_total: raw,
        multiplicity,
        alpha0: Some(a0.alpha0),
        elapsed_ms: start.elapsed().as_millis(),
    })
}

pub fn coincidence_total(
    k: &CMField,
    kp: &CMField,
    p: u64,
    n: u32,
    multiplicity: Option<BigInt>,
    opts: &SearchOptions,
) -> Result<CoincidenceReport> {
    check_pair(k, kp, opts)?;
    let el = superspecial_eligible(k, p);
    if !el.eligible {
        return Err(Error::IneligiblePrime { p, reason: el.reason.unwrap_or_default() });
    }
    let g = ClassGroup::compute(k, opts.relation_budget)?;
    coincidence_total_with(k, kp, &g, p, n, multiplicity, opts)
}

/// Like `coincidence_total`, but an ineligible prime yields a report with
/// `eligible = false` instead of an error.
pub fn coincidence_report(
    k: &CMField,
    kp: &CMField,
    g: &ClassGroup,
    p: u64,
    n: u32,
    multiplicity: Option<BigInt>,
    opts: &SearchOptions,
) -> Result<CoincidenceReport> {
    check_pair(k, kp, opts)?;
    let el = superspecial_eligible(k, p);
    if !el.eligible {
        return Ok(CoincidenceReport {
            p,
            eligible: false,
            reason: el.reason,
            n,
            per_class: Vec::new(),
            total: BigInt::zero(),
            raw_total: BigInt::zero(),
            multiplicity,
            alpha0: None,
            elapsed_ms: 0,
        });
    }
    coincidence_total_with(k, kp, g, p, n, multiplicity, opts)
}

/// Coincidence reports for every candidate prime of the crude bound, in
/// ascending order. Errors are kept per prime.
pub fn scan(
    k: &CMField,
    kp: &CMField,
    g: &ClassGroup,
    n: u32,
    multiplicity: Option<BigInt>,
    opts: &SearchOptions,
) -> Result<Vec<(Candidate, Result<CoincidenceReport>)>> {
    let b = BoundInput::maximal(k, kp)?;
    Ok(candidate_primes(&b)?
        .into_iter()
        .map(|c| {
            let r = coincidence_report(k, kp, g, c.p, n, multiplicity.clone(), opts);
            (c, r)
        })
        .collect())
}

/// Optimal triples up to conjugation: Σ_𝔞 #S(𝔞, λ_𝔞, 1) / #(O_K^×/O_L^×).
pub fn optimal_triples_count(
    k: &CMField,
    kp: &CMField,
    g: &ClassGroup,
    p: u64,
    opts: &SearchOptions,
) -> Result<BigRational> {
    let rep = coincidence_total_with(k, kp, g, p, 1, None, opts)?;
    let u = BigInt::from(k.unit_index());
    let q = BigRational::new(rep.raw_total.clone(), u.clone());
    if !q.is_integer() {
        return Err(Error::NonIntegerResult(format!("{} / {}", rep.raw_total, u)));
    }
    Ok(q)
}

/// Number of ideals of norm m in the maximal order of Q(√D), D a negative
/// fundamental discriminant.
pub fn imag_quadratic_ideal_count(disc: i64, m: u64) -> u64 {
    if m == 0 {
        return 0;
    }
    let mut r = 1u64;
    for (q, e) in arith::factor_u64(m) {
        let k = arith::kronecker(disc, q);
        r *= match k {
            1 => e as u64 + 1,
            -1 => u64::from(e % 2 == 0),
            _ => 1,
        };
        if r == 0 {
            return 0;
        }
    }
    r
}

/// ½·Σ_{x² < dd′} Σ_{n ≥ 1} δ(x)·R((dd′ − x²)/(4pⁿ)), with R counting ideals of
/// the maximal order of Q(√field_disc) and δ(x) = 2 if d | x, else 1.
pub fn gz1_valuation(d: i64, dprime: i64, p: u64, field_disc: i64) -> Result<BigRational> {
    for (v, name) in [(d, "d"), (dprime, "d′"), (field_disc, "field discriminant")] {
        if !is_fundamental_negative(v) {
            return Err(Error::InvalidInput(format!("{name} = {v} is not a negative fundamental discriminant")));
        }
    }
    if d.gcd(&dprime) != 1 {
        return Err(Error::InvalidInput("d and d′ must be coprime".into()));
    }
    if !arith::is_prime_u64(p) {
        return Err(Error::InvalidInput(format!("{p} is not prime")));
    }
    let dd = (d as i128) * (dprime as i128);
    let mut sum = 0u128;
    let mut x: i128 = -(arith::isqrt(&BigInt::from(dd)).to_i128().unwrap());
    while x * x < dd {
        if (x - dd).rem_euclid(2) == 0 {
            let m = (dd - x * x) / 4;
            let w = if x % (d as i128) == 0 { 2 } else { 1 };
            let mut pn = p as i128;
            while pn <= m {
                if m % pn == 0 {
                    sum += w * imag_quadratic_ideal_count(field_disc, (m / pn) as u64) as u128;
                }
                pn *= p as i128;
            }
        }
        x += 1;
    }
    Ok(BigRational::new(BigInt::from(sum), BigInt::from(2)))
}

fn is_fundamental_negative(v: i64) -> bool {
    if v >= 0 {
        return false;
    }
    let a = -v;
    if v.rem_euclid(4) == 1 {
        return arith::is_squarefree(a as u64);
    }
    if a % 4 != 0 {
        return false;
    }
    let m = a / 4;
    let mr = (-m).rem_euclid(4);
    (mr == 2 || mr == 3) && arith::is_squarefree(m as u64)
}

/// The α₀ data in use for a report, for callers that need the context.
pub fn context_for<'a>(k: &'a CMField, p: u64, n: u32, opts: &SearchOptions) -> Result<(Alpha0, EmbeddingContext<'a>)> {
    let mut a0 = find_alpha0(k, p, opts.alpha0_budget, opts.seed)?;
    if opts.swap_a {
        a0 = a0.swapped();
    }
    let ctx = EmbeddingContext::new(k, &a0, n)?;
    Ok((a0, ctx))
}

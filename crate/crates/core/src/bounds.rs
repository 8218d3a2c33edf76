//! The crude bound on primes at which two CM abelian surfaces with the same
//! real multiplication field can become isomorphic, and its case table.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::arith;
use crate::base_field::FieldElem;
use crate::cm_field::CMField;
use crate::error::{Error, Result};

/// Absolute discriminants of the two orders and of O_L.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundInput {
    pub disc_o1: BigInt,
    pub disc_o2: BigInt,
    pub disc_l: i64,
}

impl BoundInput {
    /// Maximal orders of K₁ and K₂.
    pub fn maximal(k1: &CMField, k2: &CMField) -> Result<Self> {
        Self::with_conductors(k1, k2, &FieldElem::one(), &FieldElem::one())
    }

    /// Orders O_L + cᵢO_{Kᵢ}: disc(Oᵢ) = N_{L/Q}(cᵢ)²·disc(Kᵢ).
    pub fn with_conductors(k1: &CMField, k2: &CMField, c1: &FieldElem, c2: &FieldElem) -> Result<Self> {
        if k1.base.d != k2.base.d {
            return Err(Error::InvalidInput("K₁ and K₂ must share the real quadratic subfield".into()));
        }
        let l = &k1.base;
        let disc = |k: &CMField, c: &FieldElem| -> Result<BigInt> {
            if c.is_zero() || !c.is_integral() {
                return Err(Error::InvalidInput("conductor must be a nonzero element of O_L".into()));
            }
            let n = l.norm(c).to_integer().abs();
            Ok(&n * &n * &k.disc_abs)
        };
        Ok(BoundInput { disc_o1: disc(k1, c1)?, disc_o2: disc(k2, c2)?, disc_l: l.disc })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PrimeBehavior {
    Inert,
    Split,
    Ramified,
}

/// Decomposition type of p in L as recorded in a table row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RowPrimes {
    Unramified,
    Inert,
    Ramified,
}

impl RowPrimes {
    fn admits(self, b: PrimeBehavior) -> bool {
        matches!(
            (self, b),
            (RowPrimes::Unramified, PrimeBehavior::Inert | PrimeBehavior::Split)
                | (RowPrimes::Inert, PrimeBehavior::Inert)
                | (RowPrimes::Ramified, PrimeBehavior::Ramified)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Reduction {
    Superspecial,
    SupersingularNotSuperspecial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CaseRow {
    pub p_behavior: RowPrimes,
    pub reduction: Reduction,
    pub rapoport: bool,
    pub r_prime: u32,
}

/// The four possible cases for [L:Q] = 2.
pub const CASE_ROWS: [CaseRow; 4] = [
    CaseRow { p_behavior: RowPrimes::Unramified, reduction: Reduction::Superspecial, rapoport: true, r_prime: 2 },
    CaseRow {
        p_behavior: RowPrimes::Inert,
        reduction: Reduction::SupersingularNotSuperspecial,
        rapoport: true,
        r_prime: 4,
    },
    CaseRow { p_behavior: RowPrimes::Ramified, reduction: Reduction::Superspecial, rapoport: true, r_prime: 2 },
    CaseRow { p_behavior: RowPrimes::Ramified, reduction: Reduction::Superspecial, rapoport: false, r_prime: 1 },
];

/// 16·disc(O₁)·disc(O₂)/disc(O_L)⁴.
pub fn crude_bound(b: &BoundInput) -> BigRational {
    let dl = BigInt::from(b.disc_l);
    let num = BigInt::from(16) * &b.disc_o1 * &b.disc_o2;
    BigRational::new(num, dl.pow(4))
}

/// ⌊bound^{1/r}⌋.
pub fn root_ceiling(bound: &BigRational, r: u32) -> BigInt {
    // ⌊x^{1/r}⌋ = ⌊⌊x⌋^{1/r}⌋ for x ≥ 0
    arith::iroot(&bound.floor().to_integer(), r)
}

pub fn prime_bound_for_case(b: &BoundInput, row: &CaseRow) -> BigInt {
    root_ceiling(&crude_bound(b), row.r_prime)
}

pub fn behavior_in_l(disc_l: i64, p: u64) -> PrimeBehavior {
    match arith::kronecker(disc_l, p) {
        1 => PrimeBehavior::Split,
        -1 => PrimeBehavior::Inert,
        _ => PrimeBehavior::Ramified,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowVerdict {
    pub row: CaseRow,
    pub ceiling: BigInt,
    pub survives: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub p: u64,
    pub behavior: PrimeBehavior,
    pub rows: Vec<RowVerdict>,
    /// False for p = 2 and for primes ramified in K₁ or K₂: only the bound applies.
    pub formula_applicable: bool,
}

impl Candidate {
    pub fn has_superspecial_row(&self) -> bool {
        self.rows.iter().any(|r| r.survives && r.row.reduction == Reduction::Superspecial)
    }
}

/// Primes surviving the bound for at least one admissible row.
pub fn candidate_primes(b: &BoundInput) -> Result<Vec<Candidate>> {
    let bound = crude_bound(b);
    let ceilings: Vec<BigInt> = CASE_ROWS.iter().map(|r| root_ceiling(&bound, r.r_prime)).collect();
    let max = ceilings.iter().max().cloned().unwrap_or_else(BigInt::zero);
    let max = max
        .to_u64()
        .filter(|&m| m <= 1 << 32)
        .ok_or_else(|| Error::Overflow(format!("prime ceiling {max} too large to enumerate")))?;
    let d12 = &b.disc_o1 * &b.disc_o2;
    let mut out = Vec::new();
    for p in arith::primes_up_to(max) {
        let behavior = behavior_in_l(b.disc_l, p);
        let pb = BigInt::from(p);
        let rows: Vec<RowVerdict> = CASE_ROWS
            .iter()
            .zip(&ceilings)
            .filter(|(r, _)| r.p_behavior.admits(behavior))
            .map(|(r, c)| RowVerdict { row: *r, ceiling: c.clone(), survives: pb <= *c })
            .collect();
        if !rows.iter().any(|r| r.survives) {
            continue;
        }
        let formula_applicable = p != 2 && !d12.is_multiple_of(&pb);
        out.push(Candidate { p, behavior, rows, formula_applicable });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cm_field::tests::{kprime, zeta5};
    use proptest::prelude::*;

    #[test]
    fn cyclotomic_bound() {
        let k = zeta5();
        let b = BoundInput::maximal(&k, &k).unwrap();
        assert_eq!(b.disc_o1, BigInt::from(125));
        let v = crude_bound(&b);
        assert_eq!(v, BigRational::from_integer(BigInt::from(400)));
        let c: Vec<BigInt> = [1, 2, 4].iter().map(|&r| root_ceiling(&v, r)).collect();
        assert_eq!(c, vec![BigInt::from(400), BigInt::from(20), BigInt::from(4)]);
    }

    #[test]
    fn worked_pair_candidates() {
        let b = BoundInput::maximal(&zeta5(), &kprime()).unwrap();
        assert_eq!(crude_bound(&b), BigRational::from_integer(BigInt::from(115_600)));
        let cands = candidate_primes(&b).unwrap();
        let c19 = cands.iter().find(|c| c.p == 19).unwrap();
        assert_eq!(c19.behavior, PrimeBehavior::Split);
        assert!(c19.has_superspecial_row());
        assert_eq!(c19.rows.len(), 1);
        assert_eq!(c19.rows[0].ceiling, BigInt::from(340));
        let c3 = cands.iter().find(|c| c.p == 3).unwrap();
        assert_eq!(c3.behavior, PrimeBehavior::Inert);
        assert_eq!(c3.rows.len(), 2);
        assert!(c3.rows.iter().all(|r| r.survives));
        let c5 = cands.iter().find(|c| c.p == 5).unwrap();
        assert!(!c5.formula_applicable);
        assert!(cands.iter().all(|c| c.p <= 115_600));
        // a split prime above the r′ = 2 ceiling has no surviving row
        assert!(cands.iter().find(|c| c.p == 359).is_none());
        assert!(cands.iter().any(|c| c.p == 17));
    }

    #[test]
    fn conductor_scales_bound() {
        let k = zeta5();
        let one = FieldElem::one();
        let two = FieldElem::int(2);
        let b1 = BoundInput::maximal(&k, &k).unwrap();
        let b2 = BoundInput::with_conductors(&k, &k, &two, &one).unwrap();
        assert_eq!(crude_bound(&b2), crude_bound(&b1) * BigRational::from_integer(BigInt::from(16)));
        assert!(BoundInput::with_conductors(&k, &k, &FieldElem::zero(), &one).is_err());
    }

    proptest! {
        #[test]
        fn ceilings_are_floor_roots(n in 0u64..10_000_000, d in 1u64..50) {
            let v = BigRational::new(BigInt::from(n), BigInt::from(d));
            for r in [1u32, 2, 4] {
                let c = root_ceiling(&v, r);
                let lo = BigRational::from_integer(c.pow(r));
                let hi = BigRational::from_integer((&c + 1u32).pow(r));
                prop_assert!(lo <= v && v < hi);
            }
            prop_assert!(root_ceiling(&v, 4) <= root_ceiling(&v, 2));
            prop_assert!(root_ceiling(&v, 2) <= root_ceiling(&v, 1));
        }

        #[test]
        fn bound_symmetric(a in 1u64..100_000, b in 1u64..100_000) {
            let x = BoundInput { disc_o1: a.into(), disc_o2: b.into(), disc_l: 5 };
            let y = BoundInput { disc_o1: b.into(), disc_o2: a.into(), disc_l: 5 };
            prop_assert_eq!(crude_bound(&x), crude_bound(&y));
        }
    }
}

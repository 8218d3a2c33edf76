//! JSON encodings of fields, ideals, orders and reports. Integers of
//! unbounded size are written as decimal strings; on input both strings and
//! JSON numbers are accepted.

use num_bigint::BigInt;
use num_rational::BigRational;
use serde_json::{json, Map, Value};

use crate::base_field::{FieldElem, IdealL, RealQuadraticField};
use crate::bounds::{Candidate, CaseRow, PrimeBehavior, Reduction, RowPrimes};
use crate::cm_field::{CMField, ClassGroup, ElemK, IdealK};
use crate::counting::CoincidenceReport;
use crate::error::{Error, Result};
use crate::orders::{EmbeddingContext, OrderLattice, QuaternionElem};
use crate::reciprocity::find_alpha0;

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub fn int(n: &BigInt) -> Value {
    Value::String(n.to_string())
}

pub fn rational(q: &BigRational) -> Value {
    if q.is_integer() {
        int(q.numer())
    } else {
        Value::String(format!("{}/{}", q.numer(), q.denom()))
    }
}

pub fn parse_int(v: &Value) -> Result<BigInt> {
    match v {
        Value::String(s) => s.trim().parse().map_err(|_| bad(format!("not an integer: {s:?}"))),
        Value::Number(n) => n.to_string().parse().map_err(|_| bad(format!("not an integer: {n}"))),
        _ => Err(bad(format!("expected an integer, got {v}"))),
    }
}

pub fn parse_u64(v: &Value) -> Result<u64> {
    let n = parse_int(v)?;
    u64::try_from(&n).map_err(|_| bad(format!("{n} out of range")))
}

pub fn elem(x: &FieldElem) -> Value {
    json!([int(&x.x), int(&x.y), int(&x.den)])
}

/// `[x, y, den]` or `[x, y]` for (x + yω)/den.
pub fn parse_elem(v: &Value) -> Result<FieldElem> {
    let a = v.as_array().ok_or_else(|| bad(format!("expected [x, y, den], got {v}")))?;
    let one = Value::from(1);
    match a.len() {
        2 | 3 => FieldElem::new(parse_int(&a[0])?, parse_int(&a[1])?, parse_int(a.get(2).unwrap_or(&one))?),
        _ => Err(bad(format!("expected [x, y, den], got {v}"))),
    }
}

pub fn elem_k(x: &ElemK) -> Value {
    json!([elem(&x.u), elem(&x.v)])
}

pub fn parse_elem_k(v: &Value) -> Result<ElemK> {
    let a = v.as_array().filter(|a| a.len() == 2).ok_or_else(|| bad(format!("expected [u, v], got {v}")))?;
    Ok(ElemK::new(parse_elem(&a[0])?, parse_elem(&a[1])?))
}

pub fn field(k: &CMField) -> Value {
    json!({"D": k.base.d, "a": elem(k.a_coeff()), "b": elem(&k.b)})
}

/// `{"D": D, "a": [...], "b": [...]}` for O_K = O_L[t], t² + at + b = 0, or
/// `{"D": D, "radicand": [...]}` for K = L(√δ).
pub fn parse_field(v: &Value) -> Result<CMField> {
    let o = v.as_object().ok_or_else(|| bad("field must be an object"))?;
    let d = o.get("D").ok_or_else(|| bad("field is missing \"D\""))?;
    let d = i64::try_from(parse_int(d)?).map_err(|_| bad("D out of range"))?;
    let l = RealQuadraticField::new_strict(d)?;
    if let Some(r) = o.get("radicand") {
        return CMField::from_radicand(l, &parse_elem(r)?);
    }
    let a = o.get("a").ok_or_else(|| bad("field is missing \"a\""))?;
    let b = o.get("b").ok_or_else(|| bad("field is missing \"b\""))?;
    CMField::new(l, parse_elem(a)?, parse_elem(b)?)
}

fn matrix(m: &[Vec<BigInt>]) -> Value {
    Value::Array(m.iter().map(|r| Value::Array(r.iter().map(int).collect())).collect())
}

fn parse_matrix(v: &Value) -> Result<Vec<Vec<BigInt>>> {
    let rows = v.as_array().ok_or_else(|| bad("expected a matrix"))?;
    rows.iter()
        .map(|r| r.as_array().ok_or_else(|| bad("expected a matrix row"))?.iter().map(parse_int).collect())
        .collect()
}

pub fn ideal_l(i: &IdealL) -> Value {
    json!({"hnf": matrix(&i.hnf), "generator": elem(&i.generator)})
}

/// Hermite basis in the coordinates (1, ω, t, ωt) over a common denominator.
pub fn ideal_k(i: &IdealK) -> Value {
    json!({"hnf": matrix(&i.num), "den": int(&i.den)})
}

pub fn parse_ideal_k(k: &CMField, v: &Value) -> Result<IdealK> {
    let num = parse_matrix(v.get("hnf").ok_or_else(|| bad("ideal is missing \"hnf\""))?)?;
    let den = parse_int(v.get("den").ok_or_else(|| bad("ideal is missing \"den\""))?)?;
    let gens: Vec<ElemK> = num
        .iter()
        .map(|r| {
            if r.len() != 4 {
                return Err(bad("ideal rows need four entries"));
            }
            let u = FieldElem::new(r[0].clone(), r[1].clone(), den.clone())?;
            let w = FieldElem::new(r[2].clone(), r[3].clone(), den.clone())?;
            Ok(ElemK::new(u, w))
        })
        .collect::<Result<_>>()?;
    k.ideal(&gens)
}

pub fn report(r: &CoincidenceReport) -> Value {
    let mut o = Map::new();
    o.insert("p".into(), json!(r.p));
    o.insert("eligible".into(), json!(r.eligible));
    if let Some(reason) = &r.reason {
        o.insert("reason".into(), json!(reason));
    }
    o.insert("n".into(), json!(r.n));
    if r.eligible {
        o.insert("total".into(), int(&r.total));
        o.insert("raw_total".into(), int(&r.raw_total));
        if let Some(m) = &r.multiplicity {
            o.insert("multiplicity".into(), int(m));
        }
        let pc: Vec<Value> = r
            .per_class
            .iter()
            .map(|c| {
                json!({
                    "class": c.class,
                    "class_vector": c.class_vector,
                    "s2_weighted": int(&c.s2_weighted),
                })
            })
            .collect();
        o.insert("per_class".into(), Value::Array(pc));
        if let Some(a) = &r.alpha0 {
            o.insert("alpha0".into(), elem(a));
        }
    }
    Value::Object(o)
}

pub fn class_group(g: &ClassGroup) -> Value {
    json!({
        "h": int(&g.order),
        "structure": g.structure.iter().map(int).collect::<Vec<_>>(),
        "factor_base_size": g.factor_base.len(),
    })
}

fn behavior(b: PrimeBehavior) -> &'static str {
    match b {
        PrimeBehavior::Inert => "inert",
        PrimeBehavior::Split => "split",
        PrimeBehavior::Ramified => "ramified",
    }
}

pub fn case_row(r: &CaseRow) -> Value {
    let p = match r.p_behavior {
        RowPrimes::Unramified => "unramified",
        RowPrimes::Inert => "inert",
        RowPrimes::Ramified => "ramified",
    };
    let red = match r.reduction {
        Reduction::Superspecial => "superspecial",
        Reduction::SupersingularNotSuperspecial => "supersingular_not_superspecial",
    };
    json!({"p": p, "reduction": red, "rapoport": r.rapoport, "r_prime": r.r_prime})
}

pub fn candidate(c: &Candidate) -> Value {
    let rows: Vec<Value> = c
        .rows
        .iter()
        .map(|v| json!({"row": case_row(&v.row), "ceiling": int(&v.ceiling), "survives": v.survives}))
        .collect();
    let mut o = json!({
        "p": c.p,
        "behavior": behavior(c.behavior),
        "rows": rows,
        "formula_applicable": c.formula_applicable,
    });
    if !c.formula_applicable {
        o["note"] = json!("formula not applicable, bound only");
    }
    o
}

/// Everything needed to rebuild an order: the field, p, the level, the α₀
/// search seed, the label and the basis, plus the Gram matrix for checking.
pub fn order_dump(ctx: &EmbeddingContext, r: &OrderLattice, seed: usize, swap: bool) -> Value {
    let basis: Vec<Value> = r
        .basis
        .iter()
        .map(|x| json!({"alpha": elem_k(&x.alpha), "beta": elem_k(&x.beta)}))
        .collect();
    let mut o = json!({
        "field": field(ctx.k),
        "p": ctx.p,
        "n": ctx.n,
        "seed": seed,
        "swap": swap,
        "alpha0": elem(&ctx.alpha0),
        "basis": basis,
        "gram": matrix(&r.gram),
    });
    if let Some(lab) = &r.label {
        o["label"] = json!({
            "ideal": ideal_k(&lab.ideal),
            "signs": lab.signs,
            "ell": elem(&lab.ell),
        });
    }
    if let Some(lam) = &r.lambda {
        o["lambda"] = elem(lam);
    }
    o
}

/// A reloaded order together with the field it lives in.
pub struct LoadedOrder {
    pub field: CMField,
    pub p: u64,
    pub n: u32,
    pub seed: usize,
    pub swap: bool,
    pub basis: Vec<QuaternionElem>,
    pub gram: Vec<Vec<BigInt>>,
}

impl LoadedOrder {
    /// Recomputes α₀ with the dumped seed, rebuilds the lattice and checks the
    /// stored α₀ and Gram matrix.
    pub fn rebuild<'a>(&'a self, budget: usize, alpha0: &FieldElem) -> Result<(EmbeddingContext<'a>, OrderLattice)> {
        let mut a0 = find_alpha0(&self.field, self.p, budget, self.seed)?;
        if self.swap {
            a0 = a0.swapped();
        }
        if &a0.alpha0 != alpha0 {
            return Err(Error::VerificationFailed("α₀ differs from the dumped value".into()));
        }
        let ctx = EmbeddingContext::new(&self.field, &a0, self.n)?;
        let r = OrderLattice::from_basis(&ctx, &self.basis)?;
        if r.gram != self.gram {
            return Err(Error::VerificationFailed("Gram matrix differs from the dumped one".into()));
        }
        Ok((ctx, r))
    }
}

pub fn parse_order_dump(v: &Value) -> Result<(LoadedOrder, FieldElem)> {
    let get = |key: &str| v.get(key).ok_or_else(|| bad(format!("order dump is missing {key:?}")));
    let field = parse_field(get("field")?)?;
    let basis = get("basis")?
        .as_array()
        .ok_or_else(|| bad("basis must be an array"))?
        .iter()
        .map(|b| {
            let a = b.get("alpha").ok_or_else(|| bad("basis entry is missing \"alpha\""))?;
            let c = b.get("beta").ok_or_else(|| bad("basis entry is missing \"beta\""))?;
            Ok(QuaternionElem::new(parse_elem_k(a)?, parse_elem_k(c)?))
        })
        .collect::<Result<Vec<_>>>()?;
    if basis.len() != 8 {
        return Err(bad("an order dump has eight basis elements"));
    }
    let lo = LoadedOrder {
        field,
        p: parse_u64(get("p")?)?,
        n: parse_u64(get("n")?)? as u32,
        seed: parse_u64(get("seed")?)? as usize,
        swap: get("swap")?.as_bool().ok_or_else(|| bad("swap must be a boolean"))?,
        basis,
        gram: parse_matrix(get("gram")?)?,
    };
    Ok((lo, parse_elem(get("alpha0")?)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cm_field::tests::{kprime, zeta5};
    use proptest::prelude::*;

    #[test]
    fn field_round_trip() {
        for k in [zeta5(), kprime()] {
            let v = field(&k);
            let k2 = parse_field(&v).unwrap();
            assert_eq!(k2.a_coeff(), k.a_coeff());
            assert_eq!(k2.b, k.b);
            assert_eq!(k2.d, k.d);
        }
        let r = json!({"D": 5, "radicand": [-119, 68, 1]});
        assert_eq!(parse_field(&r).unwrap().d, kprime().d);
        assert!(parse_field(&json!({"D": 5})).is_err());
        assert!(parse_field(&json!({"D": 6, "a": [0, 0], "b": [1, 0]})).is_err());
    }

    #[test]
    fn ideal_round_trip() {
        let k = kprime();
        for pr in k.primes_over(19).into_iter().chain(k.primes_over(2)) {
            let i = k.ideal_inv(&pr.ideal).unwrap();
            assert_eq!(parse_ideal_k(&k, &ideal_k(&i)).unwrap(), i);
        }
    }

    #[test]
    fn order_dump_reloads() {
        let k = kprime();
        let a0 = find_alpha0(&k, 19, 100_000, 0).unwrap();
        let ctx = EmbeddingContext::new(&k, &a0, 1).unwrap();
        let r = ctx.build_order_canonical(&k.unit_ideal()).unwrap();
        let text = serde_json::to_string(&order_dump(&ctx, &r, 0, false)).unwrap();
        let (lo, alpha0) = parse_order_dump(&serde_json::from_str(&text).unwrap()).unwrap();
        let (ctx2, r2) = lo.rebuild(100_000, &alpha0).unwrap();
        assert!(ctx2.orders_equal(&r2, &ctx2.lattice_of(&r.basis).unwrap()));
        assert_eq!(r2, r);
    }

    proptest! {
        #[test]
        fn elements_round_trip(x in -10_000i64..10_000, y in -10_000i64..10_000, d in 1i64..50) {
            let e = FieldElem::new(x.into(), y.into(), d.into()).unwrap();
            let s = serde_json::to_string(&elem(&e)).unwrap();
            prop_assert_eq!(parse_elem(&serde_json::from_str(&s).unwrap()).unwrap(), e);
        }
    }
}

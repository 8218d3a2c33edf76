use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_bigint::BigInt;
use serde_json::{json, Value};

use cmcoincide::bounds::{self, BoundInput, CASE_ROWS};
use cmcoincide::cm_field::{CMField, ClassGroup};
use cmcoincide::counting::{self, SearchOptions};
use cmcoincide::json;
use cmcoincide::orders::EmbeddingContext;
use cmcoincide::Error;

#[derive(Parser)]
#[command(name = "cmcoincide", version, about = "Superspecial coincidences of CM abelian surfaces")]
struct Cli {
    /// Job file (JSON); standard input is read when absent.
    #[arg(long, global = true)]
    job: Option<PathBuf>,
    #[arg(long, global = true)]
    alpha0_budget: Option<usize>,
    #[arg(long, global = true)]
    relation_budget: Option<usize>,
    #[arg(long, global = true)]
    search_seed: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Crude prime bound and candidate primes for K, K′.
    Bound,
    /// The superspecial orders R(𝔞, λ_𝔞) containing O_K, one per ideal class.
    Classify {
        #[arg(long)]
        p: Option<u64>,
    },
    /// Coincidence total at p, or a newline-delimited scan over candidate primes.
    Coincide {
        #[arg(long)]
        p: Option<u64>,
        #[arg(long)]
        n: Option<u32>,
        #[arg(long)]
        multiplicity: Option<BigInt>,
    },
    /// Class group of K.
    Classgroup,
    /// Classical genus-one valuation formula (no job input).
    Gz1 {
        #[arg(long, allow_hyphen_values = true)]
        d: i64,
        #[arg(long, allow_hyphen_values = true)]
        dprime: i64,
        /// Prime; all primes with nonzero valuation are listed when absent.
        #[arg(long)]
        p: Option<u64>,
        /// Discriminant of the field whose ideals are counted (default d).
        #[arg(long, allow_hyphen_values = true)]
        field: Option<i64>,
    },
    /// JSON dump of R(𝔞, λ_𝔞, p^{n−1}).
    DumpOrder {
        #[arg(long)]
        p: Option<u64>,
        #[arg(long)]
        n: Option<u32>,
    },
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(m) => Failure::Usage(m),
            e => Failure::Lib(e),
        }
    }
}

type Out = Result<(), Failure>;

struct Job {
    raw: Value,
    opts: SearchOptions,
}

impl Job {
    fn load(cli: &Cli) -> Result<Self, Failure> {
        let text = match &cli.job {
            Some(path) => {
                std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
            }
            None => {
                let mut s = String::new();
                io::stdin().read_to_string(&mut s).map_err(|e| Failure::Usage(e.to_string()))?;
                s
            }
        };
        let raw: Value = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("malformed job: {e}")))?;
        if !raw.is_object() {
            return Err(Failure::Usage("job must be a JSON object".into()));
        }
        let mut opts = SearchOptions::default();
        let num = |key: &str| -> Result<Option<usize>, Failure> {
            raw.get(key).map(|v| json::parse_u64(v).map(|x| x as usize)).transpose().map_err(Failure::from)
        };
        opts.alpha0_budget = cli.alpha0_budget.or(num("alpha0_budget")?).unwrap_or(opts.alpha0_budget);
        opts.relation_budget = cli.relation_budget.or(num("relation_budget")?).unwrap_or(opts.relation_budget);
        opts.seed = cli.search_seed.or(num("search_seed")?).unwrap_or(opts.seed);
        opts.swap_a = raw.get("swap").and_then(Value::as_bool).unwrap_or(false);
        opts.allow_self = raw.get("allow_self").and_then(Value::as_bool).unwrap_or(false);
        Ok(Job { raw, opts })
    }

    fn field(&self, key: &str) -> Result<CMField, Failure> {
        let v = self.raw.get(key).ok_or_else(|| Failure::Usage(format!("job is missing {key:?}")))?;
        Ok(json::parse_field(v)?)
    }

    fn u64_or(&self, flag: Option<u64>, key: &str) -> Result<Option<u64>, Failure> {
        match flag {
            Some(p) => Ok(Some(p)),
            None => Ok(self.raw.get(key).map(json::parse_u64).transpose()?),
        }
    }

    fn level(&self, flag: Option<u32>) -> Result<u32, Failure> {
        let n = self.u64_or(flag.map(u64::from), "n")?.unwrap_or(1);
        if n == 0 || n > 16 {
            return Err(Failure::Usage("level n must be between 1 and 16".into()));
        }
        Ok(n as u32)
    }
}

fn emit(v: &Value) {
    let mut out = io::stdout().lock();
    let _ = writeln!(out, "{v}");
}

fn bound(job: &Job) -> Out {
    let k1 = job.field("K")?;
    let k2 = job.field("Kprime")?;
    let one = cmcoincide::base_field::FieldElem::one();
    let c = |key: &str| -> Result<_, Failure> {
        Ok(job.raw.get(key).map(json::parse_elem).transpose()?.unwrap_or_else(|| one.clone()))
    };
    let b = BoundInput::with_conductors(&k1, &k2, &c("c1")?, &c("c2")?)?;
    let v = bounds::crude_bound(&b);
    let cands = bounds::candidate_primes(&b)?;
    let mut ceilings = serde_json::Map::new();
    for r in [1u32, 2, 4] {
        ceilings.insert(format!("r{r}"), json::int(&bounds::root_ceiling(&v, r)));
    }
    eprintln!("bound {} with {} candidate primes", v, cands.len());
    emit(&json!({
        "bound": json::rational(&v),
        "ceilings": ceilings,
        "rows": CASE_ROWS.iter().map(json::case_row).collect::<Vec<_>>(),
        "candidates": cands.iter().map(json::candidate).collect::<Vec<_>>(),
    }));
    Ok(())
}

fn classgroup(job: &Job) -> Out {
    let k = job.field("K")?;
    let g = ClassGroup::compute(&k, job.opts.relation_budget)?;
    let mut v = json::class_group(&g);
    v["w"] = json!(k.roots_of_unity_count());
    v["field"] = json::field(&k);
    eprintln!("h = {}, structure {:?}", g.order, g.structure.iter().map(|x| x.to_string()).collect::<Vec<_>>());
    emit(&v);
    Ok(())
}

fn require_p(job: &Job, flag: Option<u64>) -> Result<u64, Failure> {
    job.u64_or(flag, "p")?.ok_or_else(|| Failure::Usage("a prime p is required".into()))
}

fn context<'a>(k: &'a CMField, p: u64, n: u32, opts: &SearchOptions) -> Result<EmbeddingContext<'a>, Failure> {
    let el = counting::superspecial_eligible(k, p);
    if !el.eligible {
        return Err(Failure::Lib(Error::IneligiblePrime { p, reason: el.reason.unwrap_or_default() }));
    }
    let (_, ctx) = counting::context_for(k, p, n, opts)?;
    Ok(ctx)
}

fn classify(job: &Job, p: Option<u64>) -> Out {
    let k = job.field("K")?;
    let p = require_p(job, p)?;
    let ctx = context(&k, p, 1, &job.opts)?;
    let g = ClassGroup::compute(&k, job.opts.relation_budget)?;
    let avoid = k.base.ideal(&k.base.mul(&k.base.mul(&k.d, &ctx.alpha0), &cmcoincide::base_field::FieldElem::int(2 * p)))?;
    let reps = g.representatives(&k, &avoid)?;
    let mut orders = Vec::new();
    let mut entries = Vec::new();
    for (i, (cv, a)) in reps.iter().enumerate() {
        let r = ctx.build_order_canonical(a)?;
        let disc = ctx.order_discriminant(&r)?;
        entries.push(json!({
            "class": i,
            "class_vector": cv.iter().map(json::int).collect::<Vec<_>>(),
            "ideal": json::ideal_k(a),
            "signs": ctx.signs_of(a),
            "lambda": r.lambda.as_ref().map(json::elem),
            "discriminant": json::elem(&disc.generator),
        }));
        orders.push(r);
    }
    let distinct = (0..orders.len()).all(|i| (i + 1..orders.len()).all(|j| !ctx.orders_equal(&orders[i], &orders[j])));
    eprintln!("{} orders, pairwise distinct: {distinct}", orders.len());
    emit(&json!({
        "p": p,
        "h": json::int(&g.order),
        "alpha0": json::elem(&ctx.alpha0),
        "orders": entries,
        "pairwise_distinct": distinct,
    }));
    Ok(())
}

fn coincide(job: &Job, p: Option<u64>, n: Option<u32>, mult: Option<BigInt>) -> Out {
    let k = job.field("K")?;
    let kp = job.field("Kprime")?;
    let n = job.level(n)?;
    let mult = match mult {
        Some(m) => Some(m),
        None => job.raw.get("multiplicity").map(json::parse_int).transpose()?,
    };
    let g = ClassGroup::compute(&k, job.opts.relation_budget)?;
    if let Some(p) = job.u64_or(p, "p")? {
        let el = counting::superspecial_eligible(&k, p);
        if !el.eligible {
            return Err(Failure::Lib(Error::IneligiblePrime { p, reason: el.reason.unwrap_or_default() }));
        }
        let start = std::time::Instant::now();
        let r = counting::coincidence_report(&k, &kp, &g, p, n, mult, &job.opts)?;
        eprintln!("p = {p}: total {} ({} ms)", r.total, start.elapsed().as_millis());
        emit(&json::report(&r));
        return Ok(());
    }
    for (c, res) in counting::scan(&k, &kp, &g, n, mult, &job.opts)? {
        let line = match res {
            Ok(r) => {
                if r.eligible {
                    eprintln!("p = {}: total {}", c.p, r.total);
                }
                let mut v = json::report(&r);
                v["superspecial_row"] = json!(c.has_superspecial_row());
                v
            }
            Err(e) => json!({"p": c.p, "n": n, "error": kind(&e), "message": e.to_string()}),
        };
        emit(&line);
    }
    Ok(())
}

fn gz1(d: i64, dprime: i64, p: Option<u64>, field: Option<i64>) -> Out {
    let f = field.unwrap_or(d);
    let primes = match p {
        Some(p) => vec![p],
        None => {
            let m = (d as i128 * dprime as i128 / 4).max(2);
            let m = u64::try_from(m).map_err(|_| Failure::Usage("dd′ too large".into()))?;
            cmcoincide::arith::primes_up_to(m)
        }
    };
    let mut vals = Vec::new();
    for q in primes {
        let v = counting::gz1_valuation(d, dprime, q, f)?;
        if p.is_some() || v.numer() != &BigInt::from(0) {
            vals.push(json!({"p": q, "valuation": json::rational(&v)}));
        }
    }
    emit(&json!({"d": d, "dprime": dprime, "field_discriminant": f, "valuations": vals}));
    Ok(())
}

fn dump_order(job: &Job, p: Option<u64>, n: Option<u32>) -> Out {
    let k = job.field("K")?;
    let p = require_p(job, p)?;
    let n = job.level(n)?;
    let ctx = context(&k, p, n, &job.opts)?;
    let a = match job.raw.get("ideal") {
        Some(v) => json::parse_ideal_k(&k, v)?,
        None => k.unit_ideal(),
    };
    let signs: Vec<i8> = match job.raw.get("signs") {
        Some(Value::Array(s)) => s
            .iter()
            .map(|x| match x.as_i64() {
                Some(1) => Ok(1),
                Some(-1) => Ok(-1),
                _ => Err(Failure::Usage("signs must be ±1".into())),
            })
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(Failure::Usage("signs must be an array".into())),
        None => ctx.signs_of(&a),
    };
    let r = ctx.build_order(&a, &signs)?;
    emit(&json::order_dump(&ctx, &r, job.opts.seed, job.opts.swap_a));
    Ok(())
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::HypothesisViolation(_) => "hypothesis_violation",
        Error::IneligiblePrime { .. } => "ineligible_prime",
        Error::NonCoprimeIdeal(_) => "non_coprime_ideal",
        Error::SearchBudgetExceeded(_) => "search_budget_exceeded",
        Error::RelationSearchIncomplete(_) => "relation_search_incomplete",
        Error::InvalidInput(_) => "invalid_input",
        _ => "internal",
    }
}

fn run(cli: Cli) -> Out {
    match &cli.cmd {
        Cmd::Gz1 { d, dprime, p, field } => gz1(*d, *dprime, *p, *field),
        cmd => {
            let job = Job::load(&cli)?;
            match cmd {
                Cmd::Bound => bound(&job),
                Cmd::Classify { p } => classify(&job, *p),
                Cmd::Coincide { p, n, multiplicity } => coincide(&job, *p, *n, multiplicity.clone()),
                Cmd::Classgroup => classgroup(&job),
                Cmd::DumpOrder { p, n } => dump_order(&job, *p, *n),
                Cmd::Gz1 { .. } => unreachable!(),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(64)
        }
        Err(Failure::Lib(e)) => {
            let code = match e {
                Error::HypothesisViolation(_) | Error::IneligiblePrime { .. } | Error::NonCoprimeIdeal(_) => 2,
                _ => 1,
            };
            let mut diag = json!({"error": kind(&e), "message": e.to_string()});
            if let Error::IneligiblePrime { p, reason } = &e {
                diag["p"] = json!(p);
                diag["reason"] = json!(reason);
            }
            emit(&diag);
            eprintln!("{e}");
            ExitCode::from(code)
        }
    }
}

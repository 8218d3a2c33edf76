use std::io::Write;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

const PAIR: &str = "tests/fixtures/worked_pair.json";

fn run(args: &[&str], stdin: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cmcoincide"));
    cmd.args(args).current_dir(env!("CARGO_MANIFEST_DIR"));
    cmd.stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped());
    let mut child = cmd.spawn().unwrap();
    child.stdin.take().unwrap().write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn json_out(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn coincide_at_19_is_positive_and_deterministic() {
    let a = run(&["coincide", "--p", "19", "--job", PAIR], None);
    assert_eq!(a.status.code(), Some(0));
    let v = json_out(&a);
    assert_eq!(v["p"], 19);
    assert_eq!(v["eligible"], true);
    assert_eq!(v["total"], "10");
    let b = run(&["coincide", "--p", "19", "--job", PAIR], None);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn multiplicity_scales_total() {
    let o = run(&["coincide", "--p", "19", "--multiplicity", "3", "--job", PAIR], None);
    let v = json_out(&o);
    assert_eq!(v["total"], "30");
    assert_eq!(v["raw_total"], "10");
}

#[test]
fn ineligible_prime_exits_2() {
    let o = run(&["coincide", "--p", "3", "--job", PAIR], None);
    assert_eq!(o.status.code(), Some(2));
    let v = json_out(&o);
    assert_eq!(v["error"], "ineligible_prime");
    assert!(v["reason"].as_str().unwrap().starts_with("not superspecial"));
}

#[test]
fn scan_streams_ascending_primes() {
    let o = run(&["coincide", "--job", PAIR], None);
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<Value> =
        String::from_utf8(o.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let ps: Vec<u64> = lines.iter().map(|v| v["p"].as_u64().unwrap()).collect();
    assert!(ps.windows(2).all(|w| w[0] < w[1]));
    let positive: Vec<u64> =
        lines.iter().filter(|v| v["total"].as_str().is_some_and(|t| t != "0")).map(|v| v["p"].as_u64().unwrap()).collect();
    assert_eq!(positive, vec![19]);
    let at = |p: u64| lines.iter().find(|v| v["p"] == p).unwrap().clone();
    assert_eq!(at(5)["reason"], "ramified in L");
    assert_eq!(at(2)["eligible"], false);
}

#[test]
fn bound_for_cyclotomic_pair() {
    let job = r#"{"K": {"D": 5, "a": [1, -1], "b": [1, 0]}, "Kprime": {"D": 5, "a": [1, -1], "b": [1, 0]}}"#;
    let o = run(&["bound"], Some(job));
    assert_eq!(o.status.code(), Some(0));
    let v = json_out(&o);
    assert_eq!(v["bound"], "400");
    assert_eq!(v["ceilings"]["r2"], "20");
    assert_eq!(v["ceilings"]["r4"], "4");
}

#[test]
fn classgroup_of_kprime() {
    let job = r#"{"K": {"D": 5, "radicand": ["-119", "68"]}}"#;
    let v = json_out(&run(&["classgroup"], Some(job)));
    assert_eq!(v["h"], "2");
    assert_eq!(v["structure"], serde_json::json!(["2"]));
    assert_eq!(v["w"], 2);
}

#[test]
fn classify_lists_distinct_orders() {
    let job = r#"{"K": {"D": 5, "radicand": [-119, 68]}, "p": 19}"#;
    let v = json_out(&run(&["classify"], Some(job)));
    assert_eq!(v["orders"].as_array().unwrap().len(), 2);
    assert_eq!(v["pairwise_distinct"], true);
}

#[test]
fn gz1_values() {
    let v = json_out(&run(&["gz1", "--d", "-4", "--dprime", "-7", "--p", "3"], None));
    assert_eq!(v["valuations"][0]["valuation"], "3");
    let v = json_out(&run(&["gz1", "--d", "-4", "--dprime", "-7", "--p", "3", "--field", "-7"], None));
    assert_eq!(v["valuations"][0]["valuation"], "4");
}

#[test]
fn dump_order_reloads() {
    let job = r#"{"K": {"D": 5, "radicand": [-119, 68]}, "p": 19}"#;
    let o = run(&["dump-order"], Some(job));
    assert_eq!(o.status.code(), Some(0));
    let v = json_out(&o);
    assert_eq!(v["basis"].as_array().unwrap().len(), 8);
    let (lo, alpha0) = cmcoincide::json::parse_order_dump(&v).unwrap();
    let (ctx, r) = lo.rebuild(200_000, &alpha0).unwrap();
    let again = ctx.build_order_canonical(&ctx.k.unit_ideal()).unwrap();
    assert!(ctx.orders_equal(&r, &again));
}

#[test]
fn malformed_input_exits_64() {
    assert_eq!(run(&["classgroup"], Some("{not json")).status.code(), Some(64));
    assert_eq!(run(&["classgroup"], Some("{}")).status.code(), Some(64));
    assert_eq!(run(&["frobnicate"], None).status.code(), Some(64));
    assert_eq!(run(&["coincide", "--p", "19"], Some(r#"{"K": {"D": 5}}"#)).status.code(), Some(64));
}

#[test]
fn hypothesis_violation_exits_2() {
    // Q(√10) has fundamental unit of norm −1 but class number 2
    let job = r#"{"K": {"D": 10, "a": [0, 0], "b": [1, 0]}}"#;
    let o = run(&["classgroup"], Some(job));
    assert_eq!(o.status.code(), Some(2));
}

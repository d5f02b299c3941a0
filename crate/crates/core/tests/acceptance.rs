//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so every line is printed even when all
//! criteria pass. The process exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rolegate::bench::{run_bench, BenchConfig, Mix};
use rolegate::catalog::fixture::{self, s4_salary, S4_SENSITIVE_COLUMNS};
use rolegate::catalog::Catalog;
use rolegate::crypto::{EncryptedValue, GeneratorMode, PaillierKeyPair, Randomness};
use rolegate::gateway::client::{ClientError, InProcess, QueryClient, Transport};
use rolegate::gateway::{Gateway, GatewayOptions, Outcome, Reply};
use rolegate::hierarchy::{Action, Permission, PermissionSet, RoleHierarchy};
use rolegate::ids::{RoleId, SessionId, TenantId, UserId};
use rolegate::rbac::{ColumnGrant, RbacEngine, RoleSet};
use rolegate::sqlparse::{parse, regenerate, CompareOp, Predicate};
use rolegate::value::Value;

use common::oracle::{
    fuzz_schema, fuzz_statement, fuzz_statement_with, hostile_text, naive_quote, random_edit_sequence, symmetry_case,
    AdjTree, FUZZ_TEMPLATES,
};
use common::{client, s4_catalog, s4_gateway};

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn big(v: u64) -> BigUint {
    BigUint::from(v)
}

// ---------------------------------------------------------------- 1

fn paillier_exhaustive() -> Verdict {
    let start = Instant::now();
    let (n, n2) = (big(35), big(35 * 35));
    let kp = PaillierKeyPair::from_primes(&big(5), &big(7), None).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let units: Vec<u64> = (1..35).filter(|r| r.gcd(&35) == 1).collect();

    let mut roundtrips = 0;
    for m in 0..35u64 {
        for _ in 0..10 {
            let r = *units.choose(&mut rng).unwrap();
            let c = kp.encryption.encrypt_with_r(&big(m), &big(r)).map_err(|e| e.to_string())?;
            // Textbook formula with g = n + 1, computed independently.
            let expect = ((n.clone() + 1u32).modpow(&big(m), &n2) * big(r).modpow(&n, &n2)) % &n2;
            ensure(c.value == expect, || format!("E({m}; r={r}) is not g^m r^n mod n^2"))?;
            let d = kp.decryption.decrypt(&c).map_err(|e| e.to_string())?;
            ensure(d == big(m), || format!("D(E({m})) = {d}"))?;
            roundtrips += 1;
        }
    }

    let mut pairs = 0;
    for a in 0..35u64 {
        for b in 0..35u64 {
            let ca = kp.encryption.encrypt(&big(a), &mut rng).map_err(|e| e.to_string())?;
            let cb = kp.encryption.encrypt(&big(b), &mut rng).map_err(|e| e.to_string())?;
            let sum = kp.encryption.add(&ca, &cb).map_err(|e| e.to_string())?;
            ensure(sum.value == (&ca.value * &cb.value) % &n2, || "add is not ciphertext product".into())?;
            let d = kp.decryption.decrypt(&sum).map_err(|e| e.to_string())?;
            ensure(d == big((a + b) % 35), || format!("D(E({a})*E({b})) = {d}"))?;
            pairs += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}, limit 5 s"))?;
    Ok(format!("{roundtrips} round trips, {pairs}/1225 homomorphic pairs, {elapsed:.2?} (< 5 s)"))
}

// ---------------------------------------------------------------- 2

fn is_prime_u64(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= p {
        if p % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Recovers `(p, q)` from `n` and `lambda`: `phi = k * lambda` for a small
/// `k = gcd(p - 1, q - 1)`, and `p + q = n + 1 - phi`.
fn factor_with_lambda(n: &BigUint, lambda: &BigUint) -> Option<(u64, u64)> {
    for k in 1u64..1 << 20 {
        let phi = lambda * k;
        if &phi > n {
            return None;
        }
        let s = n + 1u32 - phi;
        let s2 = &s * &s;
        let four_n = n * 4u32;
        if s2 < four_n {
            continue;
        }
        let disc = s2 - four_n;
        let root = disc.sqrt();
        if &root * &root == disc {
            let p = (&s + &root) / 2u32;
            let q = (&s - &root) / 2u32;
            return Some((p.try_into().ok()?, q.try_into().ok()?));
        }
    }
    None
}

fn keygen_conformance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..100 {
        let mode = if i % 2 == 0 { GeneratorMode::NPlusOne } else { GeneratorMode::Random };
        let kp = PaillierKeyPair::generate(64, mode, &mut rng).map_err(|e| e.to_string())?;
        let (n, g) = (kp.encryption.n(), kp.encryption.g());
        let (lambda, mu) = (kp.decryption.lambda(), kp.decryption.mu());
        let n2 = n * n;
        ensure(n.bits() == 64, || format!("key {i}: n has {} bits", n.bits()))?;

        let (p, q) = factor_with_lambda(n, lambda).ok_or_else(|| format!("key {i}: lambda does not factor n"))?;
        ensure(is_prime_u64(p) && is_prime_u64(q), || format!("key {i}: factors {p}, {q} not prime"))?;
        let (p1, q1) = (big(p - 1), big(q - 1));
        ensure(&p1.lcm(&q1) == lambda, || format!("key {i}: lambda is not lcm(p-1, q-1)"))?;
        ensure((big(p) * big(q)).gcd(&(&p1 * &q1)).is_one(), || format!("key {i}: gcd(pq, (p-1)(q-1)) != 1"))?;

        let u = g.modpow(lambda, &n2);
        let l = (u - 1u32) / n;
        ensure(((mu * l) % n).is_one(), || format!("key {i}: mu * L(g^lambda mod n^2) != 1 mod n"))?;

        let m = rng.gen_range(0..u64::MAX) % p;
        let c = kp.encryption.encrypt(&big(m), &mut rng).map_err(|e| e.to_string())?;
        ensure(kp.decryption.decrypt(&c).map_err(|e| e.to_string())? == big(m), || format!("key {i}: round trip"))?;
    }
    Ok("100/100 keys: mu*L(g^lambda) = 1 mod n, gcd(pq,(p-1)(q-1)) = 1, lambda = lcm (both g modes)".into())
}

// ---------------------------------------------------------------- 3

fn nested_set_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..500 {
        let steps = rng.gen_range(1..=120);
        random_edit_sequence(&mut rng, steps, 50).map_err(|e| format!("sequence {case}: {e}"))?;
    }
    Ok("500/500 edit sequences (<= 50 roles) agree with the adjacency-list oracle".into())
}

// ---------------------------------------------------------------- 4

fn activation_symmetry() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..1000 {
        symmetry_case(&mut rng).map_err(|e| format!("sequence {case}: {e}"))?;
    }
    Ok("1000/1000 balanced sequences restore the initial live set; no live-derivable permission revoked".into())
}

// ---------------------------------------------------------------- 5

struct DominationTally {
    dominated: usize,
    controls: usize,
}

/// Activates `set` for a fresh transaction and checks the delta against
/// the oracle's notion of domination.
fn check_domination(
    h: &RoleHierarchy,
    tree: &AdjTree,
    engine: &RbacEngine,
    user: UserId,
    tx: u64,
    set: &BTreeSet<RoleId>,
    hint: Option<&rolegate::sqlparse::ParsedQuery>,
    fresh: bool,
    tally: &mut DominationTally,
) -> Result<(), String> {
    let dominator = set.iter().copied().find(|r| set.iter().all(|o| o == r || tree.ancestors(*o).contains(r)));
    let dominator = if set.len() >= 2 { dominator } else { None };
    let tx = SessionId(tx);
    let act = engine.activate_permission(h, tx, &RoleSet::new(user, set.iter().copied()), hint).map_err(|e| e.to_string())?;
    match dominator {
        Some(d) => {
            ensure(act.activated_role == d, || format!("{set:?}: activated {} not dominator {d}", act.activated_role))?;
            ensure(act.delta.is_empty(), || format!("{set:?}: dominating delta has {} grants", act.delta.len()))?;
            let (auth, _) = engine.transaction_authorization(user, tx).map_err(|e| e.to_string())?;
            ensure(h.authority(d).unwrap().is_subset(&auth), || format!("{set:?}: dominator not authorized"))?;
            tally.dominated += 1;
        }
        None => {
            // With nothing live, a non-dominating activation grants the whole
            // authority of the chosen role: the delta is not empty by accident.
            let auth = h.authority(act.activated_role).unwrap();
            if fresh {
                ensure(act.delta == auth, || format!("{set:?}: control delta is not the chosen authority"))?;
            }
            tally.controls += 1;
        }
    }
    engine.deactivate_transaction(user, tx).map_err(|e| e.to_string())?;
    Ok(())
}

fn domination_fixtures() -> Verdict {
    let mut tally = DominationTally { dominated: 0, controls: 0 };
    let hints: Vec<Option<rolegate::sqlparse::ParsedQuery>> = [
        None,
        Some("SELECT c0 FROM t"),
        Some("SELECT c1, c2 FROM t WHERE c3 = 1"),
        Some("UPDATE t SET c4 = 1 WHERE c5 = 2"),
    ]
    .into_iter()
    .map(|q| q.map(|q| parse(q).unwrap()))
    .collect();

    // Small directed tree: every subset of its roles, every hint, with and
    // without unrelated live state.
    let mut h = RoleHierarchy::new(TenantId(1));
    let mut tree = AdjTree::default();
    let grant = |cols: &[&str], action: Action| {
        let mut s = PermissionSet::new();
        s.insert(&Permission::new(action, "t", cols.iter().copied(), false));
        s
    };
    let spec: [(u64, Option<u64>, PermissionSet); 6] = [
        (1, None, grant(&["c5"], Action::Update)),
        (2, Some(1), grant(&["c0", "c1"], Action::Select)),
        (3, Some(2), grant(&["c1", "c2", "c3"], Action::Select)),
        (4, Some(2), grant(&["c4"], Action::Update)),
        (5, Some(1), grant(&["c0"], Action::Select)),
        (6, Some(5), grant(&["c2"], Action::Select)),
    ];
    for (id, parent, perms) in spec {
        h.insert_role(RoleId(id), parent.map(RoleId), &format!("r{id}"), perms).unwrap();
        tree.insert(RoleId(id), parent.map(RoleId));
    }
    let mut tx = 0;
    for mask in 1u32..64 {
        let set: BTreeSet<RoleId> = (0..6).filter(|b| mask & (1 << b) != 0).map(|b| RoleId(b as u64 + 1)).collect();
        for hint in &hints {
            for with_background in [false, true] {
                let engine = RbacEngine::new();
                let user = UserId(7);
                if with_background {
                    let bg = RoleSet::new(user, [RoleId(3)]);
                    engine.activate_permission(&h, SessionId(1_000_000), &bg, None).map_err(|e| e.to_string())?;
                }
                tx += 1;
                check_domination(&h, &tree, &engine, user, tx, &set, hint.as_ref(), !with_background, &mut tally)?;
            }
        }
    }

    // The 25-role experiment hierarchy: every senior/junior pair plus
    // random dominated subsets.
    let (cat, _) = s4_catalog(5);
    let ts = cat.tenant_by_name("acme").map_err(|e| e.to_string())?;
    let h = &ts.hierarchy;
    let mut tree = AdjTree::default();
    for n in h.iter() {
        tree.insert(n.role_id, h.immediate_senior(n.role_id).unwrap().map(|p| p.role_id));
    }
    let q = parse("SELECT name, salary FROM employees WHERE dept = 'CS'").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let engine = RbacEngine::new();
    for senior in h.iter() {
        let juniors: Vec<RoleId> = h.juniors(senior.role_id).unwrap().iter().map(|n| n.role_id).collect();
        for j in &juniors {
            tx += 1;
            let set = BTreeSet::from([senior.role_id, *j]);
            check_domination(h, &tree, &engine, UserId(8), tx, &set, Some(&q), true, &mut tally)?;
        }
        if juniors.len() >= 2 {
            for _ in 0..10 {
                let k = rng.gen_range(2..=juniors.len().min(7));
                let mut set: BTreeSet<RoleId> = juniors.choose_multiple(&mut rng, k).copied().collect();
                set.insert(senior.role_id);
                tx += 1;
                check_domination(h, &tree, &engine, UserId(8), tx, &set, Some(&q), true, &mut tally)?;
            }
        }
    }
    ensure(tally.dominated > 0 && tally.controls > 0, || "fixture suite is degenerate".into())?;
    Ok(format!("{}/{} dominated activations returned an empty delta ({} non-dominated controls)", tally.dominated, tally.dominated, tally.controls))
}

// ---------------------------------------------------------------- 6

fn group_key_gate() -> Verdict {
    let (gw, report) = s4_gateway(6);
    let key = |g: &str| report.group_keys[&("acme".to_string(), g.to_string())].clone();
    let q = "SELECT id, salary FROM employees WHERE dept = 'CS'";
    let mut bob = client(&gw, "acme", "bob");
    let outcome = |c: &mut QueryClient<InProcess>| c.query(q, true).map(|r| r.payload.outcome).map_err(|e| e.to_string());

    bob.group_key = None;
    ensure(outcome(&mut bob)?.is_denied(), || "absent key was not denied".into())?;
    let mut flipped = key("g_audit");
    flipped.bytes[31] ^= 0x80;
    bob.group_key = Some(flipped);
    ensure(outcome(&mut bob)?.is_denied(), || "wrong key was not denied".into())?;
    bob.group_key = Some(key("g_dev"));
    ensure(outcome(&mut bob)?.is_denied(), || "key of a foreign group was not denied".into())?;
    let mut misaddressed = key("g_audit");
    misaddressed.group_id = key("g_payroll").group_id;
    bob.group_key = Some(misaddressed);
    ensure(outcome(&mut bob)?.is_denied(), || "key under another group id was not denied".into())?;
    bob.group_key = Some(key("g_audit"));
    ensure(outcome(&mut bob)? == Outcome::Ok, || "correct key was not accepted".into())?;

    let mut alice = client(&gw, "acme", "alice");
    alice.group_key = Some(key("g_audit"));
    ensure(outcome(&mut alice)?.is_denied(), || "non-member holding the key was not denied".into())?;
    Ok("absent, wrong, foreign and misaddressed keys denied; correct key accepted; non-member denied".into())
}

// ---------------------------------------------------------------- 7

const S4_EMPLOYEE_ROWS: usize = 10;

fn s4_plain(row: usize, column: &str) -> Value {
    match column {
        "salary" => Value::Int(s4_salary(row)),
        "bonus" => Value::Int(1_000 + row as i64 * 250),
        "ssn" => Value::Text(format!("{:03}-{:02}-{:04}", 100 + row, 10 + row, 1000 + row * 37)),
        _ => Value::Text(["none", "asthma", "diabetes"][row % 3].to_string()),
    }
}

fn sensitive_column_gate() -> Verdict {
    let (gw, _) = s4_gateway(7);
    let tid;
    {
        let mut cat = gw.catalog_mut();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        tid = cat.tenant_by_name("acme").map_err(|e| e.to_string())?.record.tenant_id;
        for (user, role) in [("hr", "HRDirector"), ("it", "ITDirector")] {
            let u = cat.register_user(tid, user, &format!("{user}-pw"), &mut rng).map_err(|e| e.to_string())?;
            let r = cat.tenant(tid).unwrap().role_by_name(role).unwrap().role_id;
            cat.assign_role(tid, u, r).map_err(|e| e.to_string())?;
        }
    }
    let queries = |col: &str| {
        let lit = s4_plain(1, col);
        [format!("SELECT name, {col} FROM employees"), format!("SELECT name FROM employees WHERE {col} = {lit}")]
    };
    let run = |user: &str| -> Result<Vec<(String, rolegate::gateway::client::QueryResponse)>, String> {
        let mut c = client(&gw, "acme", user);
        let mut out = Vec::new();
        for col in S4_SENSITIVE_COLUMNS {
            for q in queries(col) {
                let r = c.query(&q, true).map_err(|e| e.to_string())?;
                out.push((q, r));
            }
        }
        Ok(out)
    };

    // ITDirector reads every column but holds no sensitive permission.
    for (q, r) in run("it")? {
        ensure(r.payload.outcome.is_denied(), || format!("without permission `{q}` was {:?}", r.payload.outcome))?;
        ensure(r.decryption_key().is_none(), || "key released on a denied query".into())?;
    }
    // HRDirector holds it.
    let mut checked = 0;
    for (q, r) in run("hr")? {
        ensure(r.payload.outcome == Outcome::Ok, || format!("with permission `{q}` was {:?}", r.payload.outcome))?;
        let key = r.decryption_key().ok_or("decryption key not released")?;
        if r.payload.result.columns.len() == 2 {
            let col = &r.payload.result.columns[1];
            for (row, cells) in r.payload.result.rows.iter().enumerate() {
                let Value::Cipher(b) = &cells[1] else { return Err(format!("{col} returned in plaintext")) };
                let v = EncryptedValue::from_bytes(b).and_then(|e| e.decrypt(&key)).map_err(|e| e.to_string())?;
                ensure(v == s4_plain(row, col), || format!("{col} row {row} decrypted to {v}"))?;
                checked += 1;
            }
        } else {
            let col = S4_SENSITIVE_COLUMNS.iter().find(|c| q.contains(&format!("WHERE {c} ="))).unwrap();
            let expect = (0..S4_EMPLOYEE_ROWS).filter(|&row| s4_plain(row, col) == s4_plain(1, col)).count();
            let got = r.payload.result.rows.len();
            ensure(got == expect, || format!("`{q}` matched {got} rows, expected {expect}"))?;
        }
    }

    // Admin bypass: strip the sensitive flag from every root grant.
    {
        let mut cat = gw.catalog_mut();
        let root = cat.tenant(tid).unwrap().record.root_role_id;
        for action in [Action::Select, Action::Insert, Action::Update, Action::Delete] {
            cat.revoke_permission(tid, root, Permission::new(action, "employees", ["*"], true)).map_err(|e| e.to_string())?;
            cat.grant_permission(tid, root, Permission::new(action, "employees", ["*"], false)).map_err(|e| e.to_string())?;
        }
        let root_node = cat.tenant(tid).unwrap().hierarchy.get(root).unwrap().clone();
        ensure(!root_node.sensitive_allowed(), || "root still holds a sensitive grant".into())?;
    }
    for (q, r) in run("carol")? {
        ensure(r.payload.outcome == Outcome::Ok, || format!("admin bypass failed for `{q}`: {:?}", r.payload.outcome))?;
    }
    for (q, r) in run("it")? {
        ensure(r.payload.outcome.is_denied(), || format!("`{q}` allowed after the root change"))?;
    }
    Ok(format!(
        "4 columns x 2 query forms: denied without, allowed with ({checked} cells decrypted); admin without sensitive grant allowed"
    ))
}

// ---------------------------------------------------------------- 8

fn scan_for(dir: &Path, needles: &[(&str, Vec<u8>)]) -> Result<Vec<String>, String> {
    let mut hits = Vec::new();
    let mut files = 0;
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.is_dir() {
            hits.extend(scan_for(&path, needles)?);
            continue;
        }
        files += 1;
        let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        for (label, needle) in needles {
            if bytes.windows(needle.len()).any(|w| w == &needle[..]) {
                hits.push(format!("{label} in {}", path.display()));
            }
        }
    }
    if files == 0 {
        return Err("data directory is empty".into());
    }
    Ok(hits)
}

fn encryption_at_rest() -> Verdict {
    const NEW_SALARY: i64 = 987_654_321;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    {
        let mut cat = Catalog::open(dir.path()).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        fixture::load(&mut cat, &fixture::s4_fixture(fixture::DEFAULT_FIXTURE_BITS), &mut rng).map_err(|e| e.to_string())?;
        let gw = Arc::new(Gateway::new(cat, GatewayOptions::default()));
        let mut dave = client(&gw, "acme", "dave");
        let sql = format!("UPDATE employees SET salary = {NEW_SALARY} WHERE salary = {}", s4_salary(1));
        let r = dave.query(&sql, true).map_err(|e| e.to_string())?;
        ensure(r.payload.outcome == Outcome::Ok, || format!("update was {:?}", r.payload.outcome))?;
        ensure(r.payload.result.affected == 1, || format!("update touched {} rows", r.payload.result.affected))?;
    }

    let reopened = Catalog::open(dir.path()).map_err(|e| e.to_string())?;
    let ts = reopened.tenant_by_name("acme").map_err(|e| e.to_string())?;
    let row = reopened.rows(ts.record.tenant_id, "employees").into_iter().find(|r| r.cells.get("id") == Some(&Value::Int(2)));
    let cell = row.and_then(|r| r.cells.get("salary")).ok_or("updated row missing after reopen")?;
    let Value::Cipher(bytes) = cell else { return Err(format!("salary persisted as {cell}")) };
    let ev = EncryptedValue::from_bytes(bytes).map_err(|e| e.to_string())?;
    let n = ts.keypair.encryption.n();
    let n2 = n * n;
    for c in &ev.chunks {
        ensure(!c.is_zero() && c < &n2 && c.gcd(n).is_one(), || "persisted chunk is not in Z*_{n^2}".into())?;
    }
    let plain = ev.decrypt(&ts.keypair.decryption).map_err(|e| e.to_string())?;
    ensure(plain == Value::Int(NEW_SALARY), || format!("persisted ciphertext decrypts to {plain}"))?;

    let v = NEW_SALARY as u64;
    let needles: Vec<(&str, Vec<u8>)> = vec![
        ("decimal text", NEW_SALARY.to_string().into_bytes()),
        ("hex text", format!("{v:x}").into_bytes()),
        ("HEX text", format!("{v:X}").into_bytes()),
        ("u32 big-endian", (v as u32).to_be_bytes().to_vec()),
        ("u32 little-endian", (v as u32).to_le_bytes().to_vec()),
        ("i64 big-endian", NEW_SALARY.to_be_bytes().to_vec()),
        ("i64 little-endian", NEW_SALARY.to_le_bytes().to_vec()),
    ];
    let hits = scan_for(dir.path(), &needles)?;
    ensure(hits.is_empty(), || format!("plaintext found: {}", hits.join(", ")))?;
    Ok(format!("persisted salary is a valid ciphertext decrypting to {NEW_SALARY}; 7 plaintext encodings absent from the data directory"))
}

// ---------------------------------------------------------------- 9

fn injection_fuzz() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let kp = PaillierKeyPair::generate(256, GeneratorMode::NPlusOne, &mut rng).map_err(|e| e.to_string())?;
    let schema = fuzz_schema();
    let grant = ColumnGrant {
        table: "employees".into(),
        columns: schema.columns.iter().cloned().collect(),
        sensitive_columns: schema.sensitive.clone(),
    };
    let filters = [Predicate { column: "dept".into(), op: CompareOp::Eq, value: Value::Text("CS".into()) }];
    let regen = |sql: &str| -> Result<(rolegate::sqlparse::ParsedQuery, rolegate::sqlparse::RegeneratedQuery), String> {
        let q = parse(sql).map_err(|e| format!("`{sql}`: {e}"))?;
        let r = regenerate(&q, &grant, &schema, &filters, &kp.encryption, &mut Randomness::Deterministic)
            .map_err(|e| format!("`{sql}`: {e}"))?;
        Ok((q, r))
    };
    let benign: Vec<_> = (0..FUZZ_TEMPLATES)
        .map(|w| regen(&fuzz_statement(w, &["a".into(), "b".into(), "c".into()], &[1, 2])))
        .collect::<Result<_, _>>()?;

    let mut changed = 0;
    let mut naive_broken = 0;
    let mut first = None;
    for case in 0..10_000 {
        let which = case % FUZZ_TEMPLATES;
        let texts: Vec<String> = (0..3).map(|_| hostile_text(&mut rng)).collect();
        let ints = [rng.gen_range(-1_000_000_000..1_000_000_000), rng.gen()];
        let (q, r) = regen(&fuzz_statement(which, &texts, &ints))?;
        let (bq, br) = &benign[which];
        let reparsed = parse(&r.text).map_err(|e| format!("regenerated text does not parse: {e}\n{}\n{}", fuzz_statement(which, &texts, &ints), r.text))?;
        let same = q.shape() == bq.shape()
            && r.statement.shape() == br.statement.shape()
            && reparsed == r.statement
            && r.encrypted_positions == br.encrypted_positions;
        if !same {
            changed += 1;
            first.get_or_insert(case);
        }
        let naive = fuzz_statement_with(which, &texts, &ints, naive_quote);
        if parse(&naive).map(|n| n.shape() != bq.shape() || n != q).unwrap_or(true) {
            naive_broken += 1;
        }
    }
    ensure(changed == 0, || format!("{changed} structure changes, first at case {first:?}"))?;
    Ok(format!("0 structure changes in 10000 cases (unescaped splicing would have altered {naive_broken})"))
}

// ---------------------------------------------------------------- 10

fn bench_gateway() -> Result<Arc<Gateway>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut cat = Catalog::in_memory();
    fixture::load(&mut cat, &fixture::s4_fixture(fixture::DEFAULT_FIXTURE_BITS), &mut rng).map_err(|e| e.to_string())?;
    Ok(Arc::new(Gateway::new(cat, GatewayOptions::default())))
}

fn access_time_ordering() -> Verdict {
    let start = Instant::now();
    let gw = bench_gateway()?;
    let ts = gw.catalog().tenant_by_name("acme").map_err(|e| e.to_string())?.clone();
    ensure(ts.hierarchy.len() == 25 && ts.groups.len() == 8, || "fixture is not 25 roles / 8 groups".into())?;

    let connect = || Ok::<_, ClientError>(InProcess::new(gw.clone()));
    let mut wins = 0;
    let mut margins = Vec::new();
    for rep in 0..20u64 {
        let run = |mix| run_bench(connect, &BenchConfig { clients: 1, queries: 1000, mix, seed: rep });
        // Alternate the order so drift does not favour either mix.
        let (s, ns) = if rep % 2 == 0 {
            let s = run(Mix::Sensitive).map_err(|e| e.to_string())?;
            (s, run(Mix::Nonsensitive).map_err(|e| e.to_string())?)
        } else {
            let ns = run(Mix::Nonsensitive).map_err(|e| e.to_string())?;
            (run(Mix::Sensitive).map_err(|e| e.to_string())?, ns)
        };
        ensure(s.failures() == 0 && ns.failures() == 0, || format!("repetition {rep}: queries failed"))?;
        let (sm, nm) = (s.means().0, ns.means().0);
        if sm > nm {
            wins += 1;
        }
        margins.push(sm - nm);
    }
    let elapsed = start.elapsed();
    margins.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let detail = format!(
        "sensitive mean > non-sensitive mean in {wins}/20 repetitions (need >= 19), median margin {:.0} us, {elapsed:.1?}",
        margins[10]
    );
    ensure(wins >= 19, || detail.clone())?;
    ensure(elapsed < Duration::from_secs(300), || format!("{detail}; over 5 min"))?;
    Ok(detail)
}

// ---------------------------------------------------------------- 11

fn single_use_sessions() -> Verdict {
    let (gw, _) = s4_gateway(11);
    let initial = gw.rbac().snapshot();
    let users = ["alice", "dave", "carol", "bob", "user03", "user10"];
    let mut clients: Vec<_> = users.iter().map(|u| client(&gw, "acme", u)).collect();
    let mut rejected = 0;
    for i in 0..1000 {
        let c = &mut clients[i % users.len()];
        let sensitive = i % 3 == 0;
        let r = c.query("SELECT name, salary FROM employees WHERE dept = 'HR'", sensitive).map_err(|e| e.to_string())?;
        let reply = if i % 2 == 0 {
            c.transport_mut().send_query(&r.envelope_wire).map_err(|e| e.to_string())?
        } else {
            gw.handle_wire(&r.envelope_wire).reply
        };
        if matches!(reply, Reply::Rejected(_)) {
            rejected += 1;
        }
    }
    ensure(rejected == 1000, || format!("{rejected}/1000 replays rejected"))?;
    ensure(gw.rbac().snapshot() == initial, || "replays changed permission state".into())?;

    let failures = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|s| {
        for c in 0..100usize {
            let (gw, failures) = (&gw, &failures);
            s.spawn(move || {
                let (name, pw) = rolegate::bench::bench_user(c);
                let Ok(mut client) = QueryClient::login(InProcess::new(gw.clone()), "acme", &name, &pw) else {
                    failures.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    return;
                };
                let mut rng = ChaCha8Rng::seed_from_u64(c as u64);
                for _ in 0..5 {
                    let (sql, sensitive) = Mix::Mixed.query(&mut rng);
                    let ok = client.query(&sql, sensitive).map(|r| r.payload.outcome.is_ok()).unwrap_or(false);
                    if !ok {
                        failures.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    }
                }
            });
        }
    });
    let failures = failures.into_inner();
    ensure(failures == 0, || format!("{failures} concurrent queries failed"))?;
    ensure(gw.rbac().snapshot() == initial, || "permission state differs after the concurrent run".into())?;
    let roles: Vec<RoleId> = gw.catalog().tenant_by_name("acme").unwrap().hierarchy.iter().map(|n| n.role_id).collect();
    ensure(roles.iter().all(|r| gw.rbac().live_activation_count(*r) == 0), || "activations left live".into())?;
    Ok("1000/1000 replays rejected; 100 concurrent clients x 5 queries ended with the initial permission state".into())
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("paillier exhaustive oracle (n = 35)", paillier_exhaustive),
        ("key generation conformance (100 x 64-bit)", keygen_conformance),
        ("nested-set vs adjacency-list oracle", nested_set_oracle),
        ("activation/deactivation symmetry", activation_symmetry),
        ("senior-domination empty delta", domination_fixtures),
        ("group-key gate", group_key_gate),
        ("sensitive-column gate and admin bypass", sensitive_column_gate),
        ("encryption at rest", encryption_at_rest),
        ("injection resistance fuzz", injection_fuzz),
        ("sensitive access slower than non-sensitive", access_time_ordering),
        ("single-use sessions and concurrent cleanup", single_use_sessions),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if filter.as_ref().is_some_and(|f| !name.contains(f.as_str()) && f != &id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let verdict = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match verdict {
            Ok(detail) => println!("PASS [{id:2}] {name}: {detail} ({:.1?})", start.elapsed()),
            Err(why) => {
                failed += 1;
                println!("FAIL [{id:2}] {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

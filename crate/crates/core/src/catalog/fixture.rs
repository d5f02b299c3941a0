//! Line-oriented fixture files for seeding a catalog.
//!
//! One command per line, `#` starts a comment. Literals are integers or
//! single-quoted strings with `''` as the escaped quote.
//!
//! ```text
//! tenant  <tenant> [bits=<n>] [root=<role>]
//! table   <tenant> <table> <col>,<col>,...
//! sensitive <tenant> <table>.<col>
//! role    <tenant> <name> parent=<role>
//! grant   <tenant> <role> <SELECT|INSERT|UPDATE|DELETE> <table> <cols|*> [sensitive]
//! user    <tenant> <name> password=<pw> [roles=<r>,<r>]
//! group   <tenant> <name> key=<64 hex> [roles=<r>,...] [members=<u>,...]
//! policy  <tenant> rowfilter <table> <col> <op> <literal>
//! policy  <tenant> window <role> <start_minute> <end_minute>
//! policy  <tenant> maxactive <role> <n>
//! insert  <tenant> <table> <col>=<literal> ...
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{Catalog, CatalogError, DEFAULT_ROOT_ROLE};
use crate::crypto::GroupKey;
use crate::hierarchy::{Action, Permission};
use crate::ids::{RoleId, TenantId};
use crate::rbac::Policy;
use crate::sqlparse::{CompareOp, Predicate};
use crate::value::Value;

pub const DEFAULT_FIXTURE_BITS: u64 = 512;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FixtureError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {source}")]
    Catalog { line: usize, source: CatalogError },
}

/// What a fixture created, including the plaintext group keys (the catalog
/// only keeps their hashes).
#[derive(Debug, Clone, Default)]
pub struct FixtureReport {
    pub tenants: Vec<TenantId>,
    pub roles: usize,
    pub users: usize,
    pub groups: usize,
    pub rows: usize,
    /// Keyed by (tenant name, group name).
    pub group_keys: BTreeMap<(String, String), GroupKey>,
}

fn split_line(line: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = line.chars().peekable();
    let mut quoted = false;
    while let Some(c) = chars.next() {
        match c {
            '\'' if quoted && chars.peek() == Some(&'\'') => {
                cur.push_str("''");
                chars.next();
            }
            '\'' => {
                quoted = !quoted;
                cur.push('\'');
            }
            '#' if !quoted => break,
            c if c.is_whitespace() && !quoted => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if quoted {
        return Err("unterminated string literal".into());
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

fn literal(raw: &str) -> Result<Value, String> {
    if let Some(inner) = raw.strip_prefix('\'').and_then(|r| r.strip_suffix('\'')) {
        return Ok(Value::Text(inner.replace("''", "'")));
    }
    raw.parse::<i64>().map(Value::Int).map_err(|_| format!("bad literal `{raw}`"))
}

fn list(raw: &str) -> Vec<&str> {
    raw.split(',').filter(|s| !s.is_empty()).collect()
}

struct Opts<'a>(BTreeMap<&'a str, &'a str>);

impl<'a> Opts<'a> {
    fn parse(args: &'a [String]) -> Result<Self, String> {
        let mut m = BTreeMap::new();
        for a in args {
            let (k, v) = a.split_once('=').ok_or_else(|| format!("expected key=value, got `{a}`"))?;
            m.insert(k, v);
        }
        Ok(Self(m))
    }

    fn get(&self, k: &str) -> Option<&'a str> {
        self.0.get(k).copied()
    }

    fn require(&self, k: &str) -> Result<&'a str, String> {
        self.get(k).ok_or_else(|| format!("missing `{k}=`"))
    }
}

/// Applies every command of `text` to `catalog`.
pub fn load<R: RngCore>(catalog: &mut Catalog, text: &str, rng: &mut R) -> Result<FixtureReport, FixtureError> {
    let mut report = FixtureReport::default();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let syntax = |message: String| FixtureError::Syntax { line: line_no, message };
        let words = split_line(line).map_err(syntax)?;
        let Some((cmd, args)) = words.split_first() else { continue };
        match run(catalog, cmd, args, rng, &mut report) {
            Ok(()) => {}
            Err(Step::Syntax(m)) => return Err(syntax(m)),
            Err(Step::Catalog(source)) => return Err(FixtureError::Catalog { line: line_no, source }),
        }
    }
    Ok(report)
}

enum Step {
    Syntax(String),
    Catalog(CatalogError),
}

impl From<String> for Step {
    fn from(s: String) -> Self {
        Step::Syntax(s)
    }
}

impl From<CatalogError> for Step {
    fn from(e: CatalogError) -> Self {
        Step::Catalog(e)
    }
}

fn arg<'a>(args: &'a [String], i: usize, what: &str) -> Result<&'a str, String> {
    args.get(i).map(String::as_str).ok_or_else(|| format!("missing {what}"))
}

fn run<R: RngCore>(
    c: &mut Catalog,
    cmd: &str,
    args: &[String],
    rng: &mut R,
    report: &mut FixtureReport,
) -> Result<(), Step> {
    if cmd == "tenant" {
        let name = arg(args, 0, "tenant name")?;
        let opts = Opts::parse(&args[1..])?;
        let bits = match opts.get("bits") {
            Some(b) => b.parse().map_err(|_| format!("bad bits `{b}`"))?,
            None => DEFAULT_FIXTURE_BITS,
        };
        let root = opts.get("root").unwrap_or(DEFAULT_ROOT_ROLE);
        report.tenants.push(c.create_tenant(name, root, bits, rng)?);
        report.roles += 1;
        return Ok(());
    }
    let tenant_name = arg(args, 0, "tenant")?;
    let tid = c.tenant_by_name(tenant_name)?.record.tenant_id;
    let role_id = |c: &Catalog, name: &str| -> Result<RoleId, Step> {
        c.tenant(tid)?
            .role_by_name(name)
            .map(|r| r.role_id)
            .ok_or_else(|| Step::Catalog(CatalogError::NotFound(format!("role `{name}`"))))
    };
    match cmd {
        "table" => {
            let cols = list(arg(args, 2, "columns")?);
            c.create_table(tid, arg(args, 1, "table")?, &cols)?;
        }
        "sensitive" => {
            let spec = arg(args, 1, "table.column")?;
            let (table, col) = spec.split_once('.').ok_or_else(|| format!("expected table.column, got `{spec}`"))?;
            c.mark_sensitive(tid, table, col, rng)?;
        }
        "role" => {
            let name = arg(args, 1, "role name")?;
            let opts = Opts::parse(&args[2..])?;
            let parent = role_id(c, opts.require("parent")?)?;
            c.add_role(tid, name, parent)?;
            report.roles += 1;
        }
        "grant" => {
            let role = role_id(c, arg(args, 1, "role")?)?;
            let action: Action = arg(args, 2, "action")?.parse().map_err(|e: String| e)?;
            let table = arg(args, 3, "table")?;
            let cols = list(arg(args, 4, "columns")?);
            let sensitive = match args.get(5).map(String::as_str) {
                None => false,
                Some("sensitive") => true,
                Some(other) => return Err(format!("unexpected `{other}`").into()),
            };
            c.grant_permission(tid, role, Permission::new(action, table, cols, sensitive))?;
        }
        "user" => {
            let name = arg(args, 1, "user name")?;
            let opts = Opts::parse(&args[2..])?;
            let user = c.register_user(tid, name, opts.require("password")?, rng)?;
            for r in opts.get("roles").map(list).unwrap_or_default() {
                let r = role_id(c, r)?;
                c.assign_role(tid, user, r)?;
            }
            report.users += 1;
        }
        "group" => {
            let name = arg(args, 1, "group name")?;
            let opts = Opts::parse(&args[2..])?;
            let key_hex = opts.require("key")?;
            let bytes: [u8; 32] = hex::decode(key_hex)
                .ok()
                .and_then(|b| b.try_into().ok())
                .ok_or_else(|| format!("key must be 64 hex digits, got `{key_hex}`"))?;
            let gid = c.create_group_with_key(tid, name, &bytes, rng)?;
            for r in opts.get("roles").map(list).unwrap_or_default() {
                let r = role_id(c, r)?;
                c.add_group_role(tid, gid, r)?;
            }
            for m in opts.get("members").map(list).unwrap_or_default() {
                let uid = c
                    .tenant(tid)?
                    .user_by_name(m)
                    .map(|u| u.user_id)
                    .ok_or_else(|| Step::Catalog(CatalogError::NotFound(format!("user `{m}`"))))?;
                c.add_group_member(tid, gid, uid)?;
            }
            report.groups += 1;
            report.group_keys.insert((tenant_name.to_string(), name.to_string()), GroupKey { group_id: gid, bytes });
        }
        "policy" => {
            let policy = match arg(args, 1, "policy kind")? {
                "rowfilter" => Policy::RowFilter {
                    table: arg(args, 2, "table")?.to_string(),
                    predicate: Predicate {
                        column: arg(args, 3, "column")?.to_string(),
                        op: arg(args, 4, "operator")?.parse::<CompareOp>()?,
                        value: literal(arg(args, 5, "literal")?)?,
                    },
                },
                "window" => Policy::TimeWindow {
                    role: role_id(c, arg(args, 2, "role")?)?,
                    start_minute: minute(arg(args, 3, "start minute")?)?,
                    end_minute: minute(arg(args, 4, "end minute")?)?,
                },
                "maxactive" => Policy::MaxConcurrentActivations {
                    role: role_id(c, arg(args, 2, "role")?)?,
                    max: arg(args, 3, "max")?.parse().map_err(|_| "bad max".to_string())?,
                },
                other => return Err(format!("unknown policy kind `{other}`").into()),
            };
            c.add_policy(tid, policy)?;
        }
        "insert" => {
            let table = arg(args, 1, "table")?;
            let mut values = BTreeMap::new();
            for a in &args[2..] {
                let (k, v) = a.split_once('=').ok_or_else(|| format!("expected col=literal, got `{a}`"))?;
                values.insert(k.to_string(), literal(v)?);
            }
            c.insert_row_admin(tid, table, values, rng)?;
            report.rows += 1;
        }
        other => return Err(format!("unknown command `{other}`").into()),
    }
    Ok(())
}

fn minute(s: &str) -> Result<u16, String> {
    s.parse::<u16>().ok().filter(|m| *m < 24 * 60).ok_or_else(|| format!("bad minute `{s}`"))
}

/// Deterministic key for an s4 group: SHA-256 of `s4-group-<name>`.
pub fn s4_group_key(name: &str) -> [u8; 32] {
    Sha256::digest(format!("s4-group-{name}").as_bytes()).into()
}

pub const S4_SENSITIVE_COLUMNS: [&str; 4] = ["salary", "bonus", "ssn", "diagnosis"];
pub const S4_EMPLOYEE_COLUMNS: [&str; 9] = ["id", "name", "dept", "title", "email", "salary", "bonus", "ssn", "diagnosis"];
pub const S4_BENCH_USERS: usize = 16;

/// (role, parent)
const S4_ROLES: [(&str, &str); 24] = [
    ("HRDirector", "Admin"),
    ("HRManager", "HRDirector"),
    ("HRAssistant", "HRManager"),
    ("Recruiter", "HRDirector"),
    ("PayrollClerk", "HRDirector"),
    ("FinanceDirector", "Admin"),
    ("Accountant", "FinanceDirector"),
    ("JuniorAccountant", "Accountant"),
    ("Auditor", "FinanceDirector"),
    ("ComplianceOfficer", "Auditor"),
    ("Treasurer", "FinanceDirector"),
    ("ITDirector", "Admin"),
    ("DBA", "ITDirector"),
    ("Developer", "ITDirector"),
    ("Tester", "Developer"),
    ("SupportLead", "ITDirector"),
    ("SupportAgent", "SupportLead"),
    ("OpsDirector", "Admin"),
    ("OpsManager", "OpsDirector"),
    ("Scheduler", "OpsManager"),
    ("Analyst", "OpsDirector"),
    ("Intern", "Analyst"),
    ("Clerk", "OpsDirector"),
    ("Trainee", "Clerk"),
];

/// (role, action, columns, sensitive)
const S4_GRANTS: [(&str, &str, &str, bool); 30] = [
    ("HRDirector", "SELECT", "*", true),
    ("HRDirector", "UPDATE", "*", true),
    ("HRDirector", "INSERT", "*", true),
    ("HRDirector", "DELETE", "*", true),
    ("HRManager", "SELECT", "id,name,dept,title,email,ssn", true),
    ("HRManager", "UPDATE", "dept,title", false),
    ("HRAssistant", "SELECT", "name,dept,email", false),
    ("Recruiter", "SELECT", "name,title,email", false),
    ("PayrollClerk", "SELECT", "id,name,salary,bonus", true),
    ("PayrollClerk", "UPDATE", "salary,bonus", true),
    ("FinanceDirector", "SELECT", "*", true),
    ("Accountant", "SELECT", "id,name,salary,bonus", true),
    ("JuniorAccountant", "SELECT", "name,dept", false),
    ("Auditor", "SELECT", "id,name,dept,salary,bonus", true),
    ("ComplianceOfficer", "SELECT", "id,name,dept,diagnosis", true),
    ("Treasurer", "SELECT", "name,bonus", true),
    ("ITDirector", "SELECT", "*", false),
    ("DBA", "SELECT", "*", false),
    ("DBA", "INSERT", "*", false),
    ("DBA", "UPDATE", "id,name,dept,title,email", false),
    ("Developer", "SELECT", "id,name,dept", false),
    ("Tester", "SELECT", "id,name", false),
    ("SupportLead", "SELECT", "name,dept,email", false),
    ("SupportAgent", "SELECT", "name,email", false),
    ("OpsDirector", "SELECT", "id,name,dept,title,email", false),
    ("OpsManager", "SELECT", "id,name,dept,title", false),
    ("Scheduler", "SELECT", "name,dept", false),
    ("Analyst", "SELECT", "name,dept,title", false),
    ("Intern", "SELECT", "name", false),
    ("Clerk", "SELECT", "name,dept,title", false),
];

/// (group, roles)
const S4_GROUPS: [(&str, &str); 8] = [
    ("g_audit", "Auditor"),
    ("g_payroll", "PayrollClerk"),
    ("g_hr", "HRManager"),
    ("g_finance", "Accountant,Treasurer"),
    ("g_it", "DBA"),
    ("g_dev", "Developer"),
    ("g_ops", "OpsManager"),
    ("g_support", "SupportAgent"),
];

/// Roles granting both `salary` (sensitive) and `name, dept`, so every bench
/// user can run either query mix.
const S4_ANCHORS: [&str; 3] = ["Auditor", "FinanceDirector", "HRDirector"];

const S4_DEPTS: [&str; 4] = ["CS", "HR", "Finance", "Ops"];

/// Role names of bench user `i`: between 1 and 8 roles.
pub fn s4_user_roles(i: usize) -> Vec<&'static str> {
    let size = i % 8 + 1;
    let anchor = S4_ANCHORS[i % S4_ANCHORS.len()];
    let pool: Vec<&str> = S4_ROLES.iter().map(|(r, _)| *r).filter(|r| *r != anchor).collect();
    let mut roles = vec![anchor];
    roles.extend((0..size - 1).map(|k| pool[(i * 5 + k * 3) % pool.len()]));
    roles.dedup();
    roles
}

/// Group names of bench user `i`: between 0 and 3 groups.
pub fn s4_user_groups(i: usize) -> Vec<&'static str> {
    (0..i % 4).map(|k| S4_GROUPS[(i + k * 3) % S4_GROUPS.len()].0).collect()
}

pub fn s4_salary(row: usize) -> i64 {
    50_000 + row as i64 * 7_919
}

/// The built-in experiment fixture: tenant `acme` with 25 roles, 8 groups,
/// an `employees` table with 4 sensitive columns, and a second tenant
/// `globex` sharing the table name.
pub fn s4_fixture(bits: u64) -> String {
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, "# built-in experiment fixture\ntenant acme bits={bits}");
    let _ = writeln!(w, "table acme employees {}", S4_EMPLOYEE_COLUMNS.join(","));
    for c in S4_SENSITIVE_COLUMNS {
        let _ = writeln!(w, "sensitive acme employees.{c}");
    }
    for (role, parent) in S4_ROLES {
        let _ = writeln!(w, "role acme {role} parent={parent}");
    }
    for (role, action, cols, sensitive) in S4_GRANTS {
        let _ = writeln!(w, "grant acme {role} {action} employees {cols}{}", if sensitive { " sensitive" } else { "" });
    }
    let _ = writeln!(w, "user acme alice password=alice-pw roles=Clerk");
    let _ = writeln!(w, "user acme bob password=bob-pw roles=Clerk");
    let _ = writeln!(w, "user acme carol password=carol-pw roles=Admin");
    let _ = writeln!(w, "user acme dave password=dave-pw roles=PayrollClerk");
    for i in 0..S4_BENCH_USERS {
        let _ = writeln!(w, "user acme user{i:02} password=user{i:02}-pw roles={}", s4_user_roles(i).join(","));
    }
    for (group, roles) in S4_GROUPS {
        let mut members: Vec<String> =
            (0..S4_BENCH_USERS).filter(|i| s4_user_groups(*i).contains(&group)).map(|i| format!("user{i:02}")).collect();
        if group == "g_audit" {
            members.insert(0, "bob".into());
        }
        let _ = write!(w, "group acme {group} key={} roles={roles}", hex::encode(s4_group_key(group)));
        if !members.is_empty() {
            let _ = write!(w, " members={}", members.join(","));
        }
        w.push('\n');
    }
    let names = ["Ada", "Grace", "Linus", "Barbara", "Ken", "Margaret", "Dennis", "Frances", "Edsger", "O''Neil"];
    for (row, name) in names.iter().enumerate() {
        let dept = S4_DEPTS[row % S4_DEPTS.len()];
        let _ = writeln!(
            w,
            "insert acme employees id={} name='{name}' dept='{dept}' title='{}' email='{}@acme.test' salary={} bonus={} ssn='{:03}-{:02}-{:04}' diagnosis='{}'",
            row + 1,
            ["Engineer", "Manager", "Analyst"][row % 3],
            name.to_lowercase().replace("''", ""),
            s4_salary(row),
            1_000 + row as i64 * 250,
            100 + row,
            10 + row,
            1000 + row * 37,
            ["none", "asthma", "diabetes"][row % 3],
        );
    }

    let _ = writeln!(w, "tenant globex bits={bits}");
    let _ = writeln!(w, "table globex employees {}", S4_EMPLOYEE_COLUMNS.join(","));
    for c in S4_SENSITIVE_COLUMNS {
        let _ = writeln!(w, "sensitive globex employees.{c}");
    }
    let _ = writeln!(w, "role globex Clerk parent=Admin");
    let _ = writeln!(w, "grant globex Clerk SELECT employees name,dept,title");
    let _ = writeln!(w, "user globex erin password=erin-pw roles=Clerk");
    let _ = writeln!(w, "user globex frank password=frank-pw roles=Admin");
    for (row, name) in ["Zed", "Yan", "Xia"].iter().enumerate() {
        let _ = writeln!(
            w,
            "insert globex employees id={} name='{name}' dept='Globex' title='Agent' email='{}@globex.test' salary={} bonus=0 ssn='999-00-{:04}' diagnosis='none'",
            row + 1,
            name.to_lowercase(),
            90_000 + row as i64,
            row,
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn split_handles_quotes_and_comments() {
        assert_eq!(split_line("a b='x y' # c").unwrap(), vec!["a", "b='x y'"]);
        assert_eq!(split_line("n='O''Brien'").unwrap(), vec!["n='O''Brien'"]);
        assert_eq!(literal("'O''Brien'").unwrap(), Value::Text("O'Brien".into()));
        assert_eq!(literal("-4").unwrap(), Value::Int(-4));
        assert!(split_line("x='open").is_err());
    }

    #[test]
    fn s4_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut c = Catalog::in_memory();
        let r = load(&mut c, &s4_fixture(64), &mut rng).unwrap();
        let acme = c.tenant_by_name("acme").unwrap();
        assert_eq!(acme.hierarchy.len(), 25);
        assert_eq!(acme.groups.len(), 8);
        assert_eq!(acme.tables["employees"].sensitive.len(), 4);
        assert_eq!(r.group_keys.len(), 8);
        for i in 0..S4_BENCH_USERS {
            let u = acme.user_by_name(&format!("user{i:02}")).unwrap();
            assert!((1..=8).contains(&u.assigned_role_ids.len()));
            assert!(u.group_ids.len() <= 3);
        }
        assert_eq!(c.rows(acme.record.tenant_id, "employees").len(), 10);
        acme.hierarchy.validate().unwrap();
    }

    #[test]
    fn errors_carry_line_numbers() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut c = Catalog::in_memory();
        let e = load(&mut c, "tenant t bits=64\n\nbogus t", &mut rng).unwrap_err();
        assert_eq!(e, FixtureError::Syntax { line: 3, message: "unknown command `bogus`".into() });
        let e = load(&mut c, "role t X parent=Nope", &mut rng).unwrap_err();
        assert!(matches!(e, FixtureError::Catalog { line: 1, .. }));
    }
}

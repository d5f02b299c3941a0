//! Benchmark harness over the built-in experiment fixture.
//!
//! CSV columns: `query_index,mix,access_us,activate_us,deactivate_us`,
//! one row per query in index order, followed by a `mean` summary row.
//! The query sequence depends only on the seed; timings obviously vary.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::fixture::{s4_salary, S4_BENCH_USERS};
use crate::gateway::client::{ClientError, QueryClient, Transport};
use crate::gateway::Timings;

pub const CSV_HEADER: &str = "query_index,mix,access_us,activate_us,deactivate_us";
pub const BENCH_TENANT: &str = "acme";
const DEPTS: [&str; 4] = ["CS", "HR", "Finance", "Ops"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mix {
    /// Only sensitive columns.
    Sensitive,
    /// Only non-sensitive columns.
    Nonsensitive,
    /// Both kinds in one query.
    Mixed,
}

impl fmt::Display for Mix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mix::Sensitive => "sensitive",
            Mix::Nonsensitive => "nonsensitive",
            Mix::Mixed => "mixed",
        })
    }
}

impl FromStr for Mix {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sensitive" => Ok(Mix::Sensitive),
            "nonsensitive" => Ok(Mix::Nonsensitive),
            "mixed" => Ok(Mix::Mixed),
            other => Err(format!("unknown mix `{other}`")),
        }
    }
}

impl Mix {
    /// A random query of this mix, and whether it asks for
    /// sensitive access.
    pub fn query(self, rng: &mut impl Rng) -> (String, bool) {
        let dept = DEPTS[rng.gen_range(0..DEPTS.len())];
        match self {
            Mix::Sensitive => (format!("SELECT salary FROM employees WHERE salary = {}", s4_salary(rng.gen_range(0..10))), true),
            Mix::Nonsensitive => (format!("SELECT name FROM employees WHERE dept = '{dept}'"), false),
            Mix::Mixed => (format!("SELECT name, salary FROM employees WHERE dept = '{dept}'"), true),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub clients: usize,
    pub queries: usize,
    pub mix: Mix,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchRow {
    pub query_index: usize,
    pub mix: Mix,
    pub timings: Timings,
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub mix: Mix,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.ok).count()
    }

    /// Means of access, activation and deactivation time in microseconds.
    pub fn means(&self) -> (f64, f64, f64) {
        let n = self.rows.len().max(1) as f64;
        let sum = |f: fn(&Timings) -> u64| self.rows.iter().map(|r| f(&r.timings) as f64).sum::<f64>() / n;
        (sum(|t| t.access_us), sum(|t| t.activate_us), sum(|t| t.deactivate_us))
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            let t = &r.timings;
            writeln!(w, "{},{},{},{},{}", r.query_index, r.mix, t.access_us, t.activate_us, t.deactivate_us)?;
        }
        let (a, b, c) = self.means();
        writeln!(w, "mean,{},{a:.1},{b:.1},{c:.1}", self.mix)
    }
}

/// Login name and password of bench user `i`.
pub fn bench_user(i: usize) -> (String, String) {
    let name = format!("user{:02}", i % S4_BENCH_USERS);
    let pw = format!("{name}-pw");
    (name, pw)
}

/// Runs `cfg.queries` queries spread over `cfg.clients` concurrent clients.
/// Client `c` logs in as bench user `c` and runs queries `c, c + clients, ...`.
pub fn run_bench<T, F>(connect: F, cfg: &BenchConfig) -> Result<BenchReport, ClientError>
where
    T: Transport,
    F: Fn() -> Result<T, ClientError> + Sync,
{
    let clients = cfg.clients.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let plan: Vec<(String, bool)> = (0..cfg.queries).map(|_| cfg.mix.query(&mut rng)).collect();
    let rows = Mutex::new(Vec::with_capacity(cfg.queries));
    let first_error: Mutex<Option<ClientError>> = Mutex::new(None);

    std::thread::scope(|s| {
        for c in 0..clients {
            let (plan, rows, first_error, connect) = (&plan, &rows, &first_error, &connect);
            s.spawn(move || {
                let run = || -> Result<(), ClientError> {
                    let (name, pw) = bench_user(c);
                    let mut client = QueryClient::login(connect()?, BENCH_TENANT, &name, &pw)?;
                    for k in (c..plan.len()).step_by(clients) {
                        let (sql, sensitive) = &plan[k];
                        let resp = client.query(sql, *sensitive)?;
                        let row =
                            BenchRow { query_index: k, mix: cfg.mix, timings: resp.timings, ok: resp.payload.outcome.is_ok() };
                        rows.lock().expect("rows lock").push(row);
                    }
                    Ok(())
                };
                if let Err(e) = run() {
                    first_error.lock().expect("error lock").get_or_insert(e);
                }
            });
        }
    });
    if let Some(e) = first_error.into_inner().expect("error lock") {
        return Err(e);
    }
    let mut rows = rows.into_inner().expect("rows lock");
    rows.sort_by_key(|r| r.query_index);
    Ok(BenchReport { mix: cfg.mix, rows })
}

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rolegate::bench::{run_bench, BenchConfig, Mix};
use rolegate::catalog::{fixture, Catalog};
use rolegate::crypto::{GroupKey, PaillierDecryptionKey};
use rolegate::gateway::client::{QueryClient, TcpTransport};
use rolegate::gateway::config::GatewayConfig;
use rolegate::gateway::server::Server;
use rolegate::gateway::{display_cell, Gateway, GatewayOptions};
use rolegate::hierarchy::{Action, Permission};
use rolegate::ids::{RoleId, TenantId, UserId};

#[derive(Parser)]
#[command(name = "rolegate", version, about = "Multi-tenant RBAC gateway with encrypted sensitive columns")]
struct Cli {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Data directory; overrides the config file and ROLEGATE_DATA_DIR.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Manage tenants.
    #[command(subcommand)]
    Tenant(TenantCmd),
    /// Manage the role hierarchy.
    #[command(subcommand)]
    Role(RoleCmd),
    /// Grant, revoke and list role permissions.
    #[command(subcommand)]
    Perm(PermCmd),
    /// Manage tables.
    #[command(subcommand)]
    Table(TableCmd),
    /// Mark a column sensitive, encrypting its stored values.
    #[command(subcommand)]
    Sensitive(SensitiveCmd),
    /// Manage users.
    #[command(subcommand)]
    User(UserCmd),
    /// Assign a role to a user.
    Assign { tenant: String, user: String, role: String },
    /// Remove a role from a user.
    Unassign { tenant: String, user: String, role: String },
    /// Manage groups.
    #[command(subcommand)]
    Group(GroupCmd),
    /// Manage policies and constraints.
    #[command(subcommand)]
    Policy(PolicyCmd),
    /// Load a fixture into the catalog.
    Seed(SeedArgs),
    /// Run the gateway server.
    Serve,
    /// Benchmarks against a running server.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Send one query to a running server.
    Query(QueryArgs),
}

#[derive(Subcommand)]
enum TenantCmd {
    Add {
        name: String,
        /// Paillier modulus size; defaults to the configured key_bits.
        #[arg(long)]
        bits: Option<u64>,
        #[arg(long, default_value = "Admin")]
        root: String,
    },
    List,
}

#[derive(Subcommand)]
enum RoleCmd {
    Add {
        tenant: String,
        name: String,
        #[arg(long)]
        parent: String,
    },
    Delete { tenant: String, name: String },
    /// Roles in nested-set order with their bounds.
    List { tenant: String },
}

#[derive(Args)]
struct PermSpec {
    tenant: String,
    role: String,
    action: Action,
    table: String,
    /// Comma-separated column list, or `*`.
    columns: String,
    /// Also grant access to sensitive columns.
    #[arg(long)]
    sensitive: bool,
}

#[derive(Subcommand)]
enum PermCmd {
    Grant(PermSpec),
    Revoke(PermSpec),
    List { tenant: String },
}

#[derive(Subcommand)]
enum TableCmd {
    Add {
        tenant: String,
        name: String,
        /// Comma-separated column names.
        columns: String,
    },
    Drop { tenant: String, name: String },
    List { tenant: String },
}

#[derive(Subcommand)]
enum SensitiveCmd {
    /// Mark `table.column` sensitive.
    Mark { tenant: String, column: String },
}

#[derive(Subcommand)]
enum UserCmd {
    Add {
        tenant: String,
        name: String,
        #[arg(long)]
        password: String,
    },
    Delete { tenant: String, name: String },
    List { tenant: String },
}

#[derive(Subcommand)]
enum GroupCmd {
    /// Create a group; prints its key once.
    Add {
        tenant: String,
        name: String,
        /// Comma-separated role names.
        #[arg(long, default_value = "")]
        roles: String,
        /// Comma-separated user names.
        #[arg(long, default_value = "")]
        members: String,
    },
    AddMember { tenant: String, group: String, user: String },
    RemoveMember { tenant: String, group: String, user: String },
    List { tenant: String },
}

#[derive(Subcommand)]
enum PolicyCmd {
    /// Add a policy, e.g. `rowfilter employees dept = 'CS'`,
    /// `window Clerk 480 1020` or `maxactive Clerk 3`.
    Add {
        tenant: String,
        #[arg(num_args = 1.., allow_hyphen_values = true)]
        spec: Vec<String>,
    },
    Remove { tenant: String, index: usize },
    List { tenant: String },
}

#[derive(Args)]
struct SeedArgs {
    /// Built-in fixture name (`s4`).
    #[arg(long, conflicts_with = "file", required_unless_present = "file")]
    fixture: Option<String>,
    /// Fixture file.
    #[arg(long)]
    file: Option<PathBuf>,
    /// Key size for the built-in fixture.
    #[arg(long, default_value_t = fixture::DEFAULT_FIXTURE_BITS)]
    bits: u64,
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Emit per-query timings as CSV on standard output.
    Run {
        #[arg(long)]
        addr: Option<String>,
        #[arg(long, default_value_t = 1)]
        clients: usize,
        #[arg(long, default_value_t = 100)]
        queries: usize,
        #[arg(long, default_value = "mixed")]
        mix: Mix,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    addr: Option<String>,
    #[arg(long)]
    tenant: String,
    #[arg(long)]
    user: String,
    #[arg(long, env = "ROLEGATE_PASSWORD")]
    password: String,
    /// Group key as printed by `group add` (`<id>:<hex>`).
    #[arg(long)]
    group_key: Option<String>,
    /// Request sensitive access (the decryption key is returned on success).
    #[arg(long)]
    sensitive: bool,
    sql: String,
}

type Result<T, E = Box<dyn std::error::Error>> = std::result::Result<T, E>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli: &Cli) -> Result<GatewayConfig> {
    let mut cfg = match &cli.config {
        Some(p) => GatewayConfig::load(p)?,
        None => GatewayConfig::default(),
    }
    .with_env_overrides();
    if let Some(d) = &cli.data_dir {
        cfg.data_dir = d.clone();
    }
    Ok(cfg)
}

fn tenant_id(c: &Catalog, name: &str) -> Result<TenantId> {
    Ok(c.tenant_by_name(name)?.record.tenant_id)
}

fn role_id(c: &Catalog, t: TenantId, name: &str) -> Result<RoleId> {
    c.tenant(t)?.role_by_name(name).map(|r| r.role_id).ok_or_else(|| format!("role `{name}` not found").into())
}

fn user_id(c: &Catalog, t: TenantId, name: &str) -> Result<UserId> {
    c.tenant(t)?.user_by_name(name).map(|u| u.user_id).ok_or_else(|| format!("user `{name}` not found").into())
}

fn split_list(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let mut rng = rand::thread_rng();
    match cli.command {
        Command::Serve => return serve(&cfg),
        Command::Bench(BenchCmd::Run { addr, clients, queries, mix, seed }) => {
            let addr = addr.unwrap_or(cfg.listen);
            let report = run_bench(|| TcpTransport::connect(&addr), &BenchConfig { clients, queries, mix, seed })?;
            report.write_csv(&mut std::io::stdout().lock())?;
            if report.failures() > 0 {
                eprintln!("{} of {} queries were not answered successfully", report.failures(), report.rows.len());
            }
            return Ok(());
        }
        Command::Query(q) => return query(&cfg, q),
        _ => {}
    }

    let mut cat = Catalog::open(&cfg.data_dir)?;
    match cli.command {
        Command::Tenant(TenantCmd::Add { name, bits, root }) => {
            let t = cat.create_tenant(&name, &root, bits.unwrap_or(cfg.key_bits), &mut rng)?;
            println!("{t}");
        }
        Command::Tenant(TenantCmd::List) => {
            for t in cat.tenants() {
                println!("{}\t{}\tkey {}", t.record.tenant_id, t.record.name, t.record.paillier_key_id);
            }
        }
        Command::Role(RoleCmd::Add { tenant, name, parent }) => {
            let t = tenant_id(&cat, &tenant)?;
            let p = role_id(&cat, t, &parent)?;
            println!("{}", cat.add_role(t, &name, p)?);
        }
        Command::Role(RoleCmd::Delete { tenant, name }) => {
            let t = tenant_id(&cat, &tenant)?;
            let r = role_id(&cat, t, &name)?;
            // No gateway runs in this process, so no activation is live.
            cat.delete_role(t, r, |_| false)?;
        }
        Command::Role(RoleCmd::List { tenant }) => {
            let t = tenant_id(&cat, &tenant)?;
            for n in cat.tenant(t)?.hierarchy.iter() {
                println!("{}\t{}\t{}\t{}", n.role_id, n.name, n.lft, n.rgt);
            }
        }
        Command::Perm(cmd @ (PermCmd::Grant(_) | PermCmd::Revoke(_))) => {
            let (grant, p) = match cmd {
                PermCmd::Grant(p) => (true, p),
                PermCmd::Revoke(p) => (false, p),
                PermCmd::List { .. } => unreachable!(),
            };
            let t = tenant_id(&cat, &p.tenant)?;
            let r = role_id(&cat, t, &p.role)?;
            let perm = Permission::new(p.action, &p.table, split_list(&p.columns), p.sensitive);
            if grant {
                cat.grant_permission(t, r, perm)?;
            } else {
                cat.revoke_permission(t, r, perm)?;
            }
        }
        Command::Perm(PermCmd::List { tenant }) => {
            let t = tenant_id(&cat, &tenant)?;
            let ts = cat.tenant(t)?;
            for p in ts.permission_rows() {
                let role = &ts.hierarchy.get(p.role_id)?.name;
                let cols: Vec<&str> = p.columns.iter().map(String::as_str).collect();
                let flag = if p.sensitive { "\tsensitive" } else { "" };
                println!("{}\t{role}\t{}\t{}\t{}{flag}", p.permission_id, p.action, p.table, cols.join(","));
            }
        }
        Command::Table(TableCmd::Add { tenant, name, columns }) => {
            let t = tenant_id(&cat, &tenant)?;
            cat.create_table(t, &name, &split_list(&columns))?;
        }
        Command::Table(TableCmd::Drop { tenant, name }) => {
            let t = tenant_id(&cat, &tenant)?;
            cat.drop_table(t, &name)?;
        }
        Command::Table(TableCmd::List { tenant }) => {
            let t = tenant_id(&cat, &tenant)?;
            for s in cat.tenant(t)?.tables.values() {
                let cols: Vec<String> = s
                    .columns
                    .iter()
                    .map(|c| if s.is_sensitive(c) { format!("{c}*") } else { c.clone() })
                    .collect();
                println!("{}\t{}", s.name, cols.join(","));
            }
        }
        Command::Sensitive(SensitiveCmd::Mark { tenant, column }) => {
            let t = tenant_id(&cat, &tenant)?;
            let (table, col) = column.split_once('.').ok_or("expected table.column")?;
            cat.mark_sensitive(t, table, col, &mut rng)?;
        }
        Command::User(UserCmd::Add { tenant, name, password }) => {
            let t = tenant_id(&cat, &tenant)?;
            println!("{}", cat.register_user(t, &name, &password, &mut rng)?);
        }
        Command::User(UserCmd::Delete { tenant, name }) => {
            let t = tenant_id(&cat, &tenant)?;
            let u = user_id(&cat, t, &name)?;
            cat.delete_user(t, u, |_| false)?;
        }
        Command::User(UserCmd::List { tenant }) => {
            let t = tenant_id(&cat, &tenant)?;
            let ts = cat.tenant(t)?;
            for u in cat.list_users(t)? {
                let roles: Vec<&str> =
                    u.assigned_role_ids.iter().filter_map(|r| ts.hierarchy.get(*r).ok()).map(|n| n.name.as_str()).collect();
                println!("{}\t{}\t{}", u.user_id, u.username, roles.join(","));
            }
        }
        Command::Assign { tenant, user, role } => {
            let t = tenant_id(&cat, &tenant)?;
            let (u, r) = (user_id(&cat, t, &user)?, role_id(&cat, t, &role)?);
            cat.assign_role(t, u, r)?;
        }
        Command::Unassign { tenant, user, role } => {
            let t = tenant_id(&cat, &tenant)?;
            let (u, r) = (user_id(&cat, t, &user)?, role_id(&cat, t, &role)?);
            cat.unassign_role(t, u, r)?;
        }
        Command::Group(GroupCmd::Add { tenant, name, roles, members }) => {
            let t = tenant_id(&cat, &tenant)?;
            let key = cat.create_group(t, &name, &mut rng)?;
            for r in split_list(&roles) {
                let r = role_id(&cat, t, r)?;
                cat.add_group_role(t, key.group_id, r)?;
            }
            for m in split_list(&members) {
                let u = user_id(&cat, t, m)?;
                cat.add_group_member(t, key.group_id, u)?;
            }
            println!("{}", key.to_wire());
        }
        Command::Group(GroupCmd::AddMember { tenant, group, user }) => {
            let t = tenant_id(&cat, &tenant)?;
            let g = cat.tenant(t)?.group_by_name(&group).ok_or("group not found")?.group_id;
            let u = user_id(&cat, t, &user)?;
            cat.add_group_member(t, g, u)?;
        }
        Command::Group(GroupCmd::RemoveMember { tenant, group, user }) => {
            let t = tenant_id(&cat, &tenant)?;
            let g = cat.tenant(t)?.group_by_name(&group).ok_or("group not found")?.group_id;
            let u = user_id(&cat, t, &user)?;
            cat.remove_group_member(t, g, u)?;
        }
        Command::Group(GroupCmd::List { tenant }) => {
            let t = tenant_id(&cat, &tenant)?;
            let ts = cat.tenant(t)?;
            for g in ts.groups.values() {
                let roles: Vec<&str> =
                    g.role_ids.iter().filter_map(|r| ts.hierarchy.get(*r).ok()).map(|n| n.name.as_str()).collect();
                let members: Vec<&str> =
                    g.member_user_ids.iter().filter_map(|u| ts.users.get(u)).map(|u| u.username.as_str()).collect();
                println!("{}\t{}\troles={}\tmembers={}", g.group_id, g.name, roles.join(","), members.join(","));
            }
        }
        Command::Policy(PolicyCmd::Add { tenant, spec }) => {
            // Policies share the fixture syntax.
            let line = format!("policy {tenant} {}", spec.join(" "));
            fixture::load(&mut cat, &line, &mut rng)?;
        }
        Command::Policy(PolicyCmd::Remove { tenant, index }) => {
            let t = tenant_id(&cat, &tenant)?;
            cat.remove_policy(t, index)?;
        }
        Command::Policy(PolicyCmd::List { tenant }) => {
            let t = tenant_id(&cat, &tenant)?;
            for (i, p) in cat.tenant(t)?.policies.iter().enumerate() {
                println!("{i}\t{}", serde_json::to_string(p)?);
            }
        }
        Command::Seed(args) => {
            let text = match (&args.fixture, &args.file) {
                (Some(name), _) if name == "s4" => fixture::s4_fixture(args.bits),
                (Some(name), _) => return Err(format!("unknown fixture `{name}`").into()),
                (None, Some(path)) => std::fs::read_to_string(path)?,
                (None, None) => unreachable!("clap requires one of --fixture/--file"),
            };
            let report = fixture::load(&mut cat, &text, &mut rng)?;
            println!(
                "tenants={} roles={} users={} groups={} rows={}",
                report.tenants.len(),
                report.roles,
                report.users,
                report.groups,
                report.rows
            );
            for ((tenant, group), key) in &report.group_keys {
                println!("group-key {tenant} {group} {}", key.to_wire());
            }
        }
        Command::Serve | Command::Bench(_) | Command::Query(_) => unreachable!("handled above"),
    }
    cat.compact()?;
    Ok(())
}

fn serve(cfg: &GatewayConfig) -> Result<()> {
    let catalog = Catalog::open(&cfg.data_dir)?;
    let gw = Arc::new(Gateway::new(catalog, GatewayOptions { session_ttl: cfg.session_ttl(), key_seed: None }));
    let server = Server::bind(gw, &cfg.listen)?;
    eprintln!("listening on {}", server.local_addr()?);
    let handle = server.shutdown_handle()?;
    let stop = std::thread::spawn(move || {
        let mut line = String::new();
        // Closing standard input (Ctrl-D) stops the server.
        while std::io::stdin().read_line(&mut line).map(|n| n > 0).unwrap_or(false) {
            line.clear();
        }
        handle.shutdown();
    });
    server.run()?;
    drop(stop);
    Ok(())
}

fn query(cfg: &GatewayConfig, q: QueryArgs) -> Result<()> {
    let addr = q.addr.unwrap_or_else(|| cfg.listen.clone());
    let mut client = QueryClient::login(TcpTransport::connect(&addr)?, &q.tenant, &q.user, &q.password)?;
    if let Some(k) = &q.group_key {
        client.group_key = Some(GroupKey::from_wire(k).ok_or("malformed group key")?);
    }
    let resp = client.query(&q.sql, q.sensitive)?;
    let key: Option<PaillierDecryptionKey> = resp.decryption_key();
    match &resp.payload.outcome {
        rolegate::gateway::Outcome::Ok => {}
        other => return Err(format!("{other:?}").into()),
    }
    let r = &resp.payload.result;
    if r.columns.is_empty() {
        println!("{} row(s) affected", r.affected);
    } else {
        println!("{}", r.columns.join("\t"));
        for row in &r.rows {
            let cells: Vec<String> = row.iter().map(|v| display_cell(v, key.as_ref())).collect();
            println!("{}", cells.join("\t"));
        }
    }
    eprintln!("access {} us, activation {} us", resp.timings.access_us, resp.timings.activate_us);
    Ok(())
}

//! Independent reference models used to cross-check the engine.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rolegate::catalog::TableSchema;
use rolegate::hierarchy::{Action, Permission, PermissionSet, RoleHierarchy, ALL_COLUMNS};
use rolegate::ids::{RoleId, SessionId, TenantId, TransactionId, UserId};
use rolegate::rbac::{RbacEngine, RoleSet};
use rolegate::sqlparse::{parse, ParsedQuery};

/// Adjacency-list tree with ordered children.
#[derive(Debug, Default, Clone)]
pub struct AdjTree {
    parent: BTreeMap<RoleId, Option<RoleId>>,
    children: BTreeMap<RoleId, Vec<RoleId>>,
}

impl AdjTree {
    pub fn insert(&mut self, id: RoleId, parent: Option<RoleId>) {
        self.parent.insert(id, parent);
        self.children.insert(id, Vec::new());
        if let Some(p) = parent {
            self.children.get_mut(&p).unwrap().push(id);
        }
    }

    /// Removes `id`; its children take its place under its parent.
    pub fn delete(&mut self, id: RoleId) {
        let parent = self.parent.remove(&id).unwrap().expect("root is never deleted here");
        let kids = self.children.remove(&id).unwrap();
        for k in &kids {
            self.parent.insert(*k, Some(parent));
        }
        let siblings = self.children.get_mut(&parent).unwrap();
        let pos = siblings.iter().position(|s| *s == id).unwrap();
        siblings.splice(pos..=pos, kids);
    }

    pub fn ids(&self) -> Vec<RoleId> {
        self.parent.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn parent_of(&self, id: RoleId) -> Option<RoleId> {
        self.parent[&id]
    }

    pub fn ancestors(&self, id: RoleId) -> BTreeSet<RoleId> {
        let mut out = BTreeSet::new();
        let mut cur = self.parent[&id];
        while let Some(p) = cur {
            out.insert(p);
            cur = self.parent[&p];
        }
        out
    }

    pub fn descendants(&self, id: RoleId) -> BTreeSet<RoleId> {
        let mut out = BTreeSet::new();
        let mut stack = self.children[&id].clone();
        while let Some(n) = stack.pop() {
            out.insert(n);
            stack.extend(self.children[&n].iter().copied());
        }
        out
    }

    pub fn siblings(&self, id: RoleId) -> BTreeSet<RoleId> {
        match self.parent[&id] {
            None => BTreeSet::new(),
            Some(p) => self.children[&p].iter().copied().filter(|c| *c != id).collect(),
        }
    }

    /// Depth-first preorder; matches ascending `lft`.
    pub fn preorder(&self) -> Vec<RoleId> {
        let mut out = Vec::new();
        let mut stack: Vec<RoleId> = self.parent.iter().filter(|(_, p)| p.is_none()).map(|(id, _)| *id).collect();
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.children[&n].iter().rev().copied());
        }
        out
    }
}

fn ids<'a>(nodes: impl IntoIterator<Item = &'a rolegate::hierarchy::RoleNode>) -> BTreeSet<RoleId> {
    nodes.into_iter().map(|n| n.role_id).collect()
}

/// Compares every hierarchy query against the adjacency-list answer.
pub fn check_tree(h: &RoleHierarchy, o: &AdjTree) -> Result<(), String> {
    h.validate().map_err(|e| e.to_string())?;
    if h.len() != o.len() {
        return Err(format!("size {} vs oracle {}", h.len(), o.len()));
    }
    for id in o.ids() {
        let fail = |what: &str| Err(format!("{what} of {id} differ"));
        if ids(h.seniors(id).unwrap()) != o.ancestors(id) {
            return fail("seniors");
        }
        if ids(h.juniors(id).unwrap()) != o.descendants(id) {
            return fail("juniors");
        }
        if ids(h.siblings(id).unwrap()) != o.siblings(id) {
            return fail("siblings");
        }
        if h.immediate_senior(id).unwrap().map(|n| n.role_id) != o.parent_of(id) {
            return fail("parent");
        }
    }
    let by_lft: Vec<RoleId> = h.iter().map(|n| n.role_id).collect();
    if by_lft != o.preorder() {
        return Err("lft order is not the preorder".into());
    }
    Ok(())
}

/// Runs `steps` random inserts/deletes on a fresh tree capped at
/// `max_roles`, checking after every edit.
pub fn random_edit_sequence(rng: &mut impl Rng, steps: usize, max_roles: usize) -> Result<(), String> {
    let mut h = RoleHierarchy::new(TenantId(1));
    let mut o = AdjTree::default();
    h.insert_role(RoleId(1), None, "r1", PermissionSet::new()).unwrap();
    o.insert(RoleId(1), None);
    let mut next = 2u64;
    for step in 0..steps {
        let ids = o.ids();
        let grow = ids.len() == 1 || (ids.len() < max_roles && rng.gen_bool(0.65));
        if grow {
            let parent = *ids.choose(rng).unwrap();
            let id = RoleId(next);
            next += 1;
            h.insert_role(id, Some(parent), &format!("r{}", id.0), PermissionSet::new()).unwrap();
            o.insert(id, Some(parent));
        } else {
            let victim = *ids[1..].choose(rng).unwrap();
            h.delete_role(victim, |_| false).unwrap();
            o.delete(victim);
        }
        check_tree(&h, &o).map_err(|e| format!("step {step}: {e}"))?;
    }
    Ok(())
}

pub const SCRATCH_TABLE: &str = "t";
pub const SCRATCH_COLUMNS: [&str; 6] = ["c0", "c1", "c2", "c3", "c4", "c5"];

/// A random tree with random per-role grants over [`SCRATCH_TABLE`].
pub fn random_hierarchy(rng: &mut impl Rng, roles: usize) -> (RoleHierarchy, AdjTree) {
    let mut h = RoleHierarchy::new(TenantId(1));
    let mut o = AdjTree::default();
    for i in 1..=roles as u64 {
        let parent = if i == 1 { None } else { Some(RoleId(rng.gen_range(1..i))) };
        let mut perms = PermissionSet::new();
        for _ in 0..rng.gen_range(0..4) {
            let action = if rng.gen_bool(0.75) { Action::Select } else { Action::Update };
            let col = if rng.gen_bool(0.1) { ALL_COLUMNS } else { SCRATCH_COLUMNS.choose(rng).unwrap() };
            perms.insert(&Permission::new(action, SCRATCH_TABLE, [col], rng.gen_bool(0.3)));
        }
        h.insert_role(RoleId(i), parent, &format!("r{i}"), perms).unwrap();
        o.insert(RoleId(i), parent);
    }
    (h, o)
}

/// Recomputes activation state from first principles: which role a set
/// activates, and the live permission set as the union of the authority of
/// every role currently held by at least one non-dominating activation.
pub struct ActivationOracle<'a> {
    h: &'a RoleHierarchy,
    tree: &'a AdjTree,
    /// (user, role) -> transaction -> came from a dominating role set
    held: BTreeMap<(UserId, RoleId), BTreeMap<TransactionId, bool>>,
    tx_role: BTreeMap<(UserId, TransactionId), RoleId>,
}

impl<'a> ActivationOracle<'a> {
    pub fn new(h: &'a RoleHierarchy, tree: &'a AdjTree) -> Self {
        Self { h, tree, held: BTreeMap::new(), tx_role: BTreeMap::new() }
    }

    pub fn authority(&self, role: RoleId) -> PermissionSet {
        let mut set = self.h.get(role).unwrap().permissions.clone();
        for d in self.tree.descendants(role) {
            set.extend(&self.h.get(d).unwrap().permissions);
        }
        set
    }

    fn covered(&self, role: RoleId, q: &ParsedQuery) -> usize {
        let auth = self.authority(role);
        q.referenced_columns()
            .iter()
            .filter(|c| {
                auth.grants().any(|g| {
                    g.action == q.kind && g.table == q.table && (g.column == ALL_COLUMNS || g.column == **c)
                })
            })
            .count()
    }

    /// (role, dominating)
    pub fn choose(&self, roles: &BTreeSet<RoleId>, hint: Option<&ParsedQuery>) -> (RoleId, bool) {
        if roles.len() >= 2 {
            for &r in roles {
                if roles.iter().all(|o| *o == r || self.tree.ancestors(*o).contains(&r)) {
                    return (r, true);
                }
            }
        }
        let order = self.tree.preorder();
        let rank = |r: RoleId| order.iter().position(|x| *x == r).unwrap();
        let best = roles
            .iter()
            .copied()
            .max_by(|a, b| {
                let (ca, cb) = hint.map_or((0, 0), |q| (self.covered(*a, q), self.covered(*b, q)));
                ca.cmp(&cb).then(rank(*b).cmp(&rank(*a)))
            })
            .unwrap();
        (best, false)
    }

    pub fn live(&self, user: UserId) -> PermissionSet {
        let mut set = PermissionSet::new();
        for ((u, role), txs) in &self.held {
            if *u == user && txs.values().any(|dominating| !dominating) {
                set.extend(&self.authority(*role));
            }
        }
        set
    }

    pub fn activate(&mut self, user: UserId, tx: TransactionId, roles: &BTreeSet<RoleId>, hint: Option<&ParsedQuery>) -> RoleId {
        let (role, dominating) = self.choose(roles, hint);
        self.held.entry((user, role)).or_default().insert(tx, dominating);
        self.tx_role.insert((user, tx), role);
        role
    }

    pub fn deactivate(&mut self, user: UserId, tx: TransactionId) {
        let role = self.tx_role.remove(&(user, tx)).unwrap();
        let entry = self.held.get_mut(&(user, role)).unwrap();
        entry.remove(&tx);
        if entry.is_empty() {
            self.held.remove(&(user, role));
        }
    }
}

fn random_query<R: Rng + ?Sized>(rng: &mut R) -> ParsedQuery {
    let mut cols: Vec<&str> = SCRATCH_COLUMNS.to_vec();
    cols.shuffle(rng);
    let n = rng.gen_range(1..=3);
    let sql = if rng.gen_bool(0.8) {
        format!("SELECT {} FROM {SCRATCH_TABLE} WHERE {} = 1", cols[..n].join(", "), cols[n])
    } else {
        format!("UPDATE {SCRATCH_TABLE} SET {} = 1 WHERE {} = 2", cols[0], cols[1])
    };
    parse(&sql).unwrap()
}

/// One randomized balanced activate/deactivate sequence, checked step by
/// step against [`ActivationOracle`]. Users hold up to 8 roles and up to 3
/// groups. Some activations stay live across the sequence so the final
/// state is compared with a nonempty baseline.
pub fn symmetry_case<R: Rng>(rng: &mut R) -> Result<(), String> {
    let n_roles = rng.gen_range(2..=25);
    let (h, tree) = random_hierarchy(rng, n_roles);
    let all: Vec<RoleId> = tree.ids();
    let groups: Vec<Vec<RoleId>> =
        (0..8)
            .map(|_| {
                let k = rng.gen_range(1..=2);
                all.choose_multiple(rng, k).copied().collect()
            })
            .collect();
    // Per user: role set without and with the group key supplied.
    let users: Vec<(RoleSet, RoleSet)> = (0..rng.gen_range(1..=3))
        .map(|u| {
            let k = rng.gen_range(1..=8.min(all.len()));
            let assigned: Vec<RoleId> = all.choose_multiple(rng, k).copied().collect();
            let g = rng.gen_range(0..=3);
            let group_roles: BTreeSet<RoleId> = groups.choose_multiple(rng, g).flatten().copied().collect();
            let plain = RoleSet::new(UserId(100 + u), assigned);
            let mut with_groups = plain.clone();
            with_groups.roles.extend(&group_roles);
            with_groups.group_roles = group_roles;
            (plain, with_groups)
        })
        .collect();
    let pick = |rng: &mut R| -> RoleSet {
        let (plain, with_groups) = users.choose(rng).unwrap();
        if rng.gen_bool(0.5) { plain.clone() } else { with_groups.clone() }
    };

    let engine = RbacEngine::new();
    let mut oracle = ActivationOracle::new(&h, &tree);
    let mut next_tx = 1u64;
    let mut live: Vec<(UserId, TransactionId)> = Vec::new();

    let mut activate = |rs: &RoleSet, rng: &mut dyn rand::RngCore, oracle: &mut ActivationOracle<'_>| -> Result<(UserId, TransactionId), String> {
        let tx = SessionId(next_tx);
        next_tx += 1;
        let hint = if rng.gen_bool(0.8) { Some(random_query(rng)) } else { None };
        let before = engine.live_permissions(rs.user_id);
        let got = engine.activate_permission(&h, tx, rs, hint.as_ref()).map_err(|e| e.to_string())?;
        let want_role = oracle.activate(rs.user_id, tx, &rs.roles, hint.as_ref());
        if got.activated_role != want_role {
            return Err(format!("activated {} but oracle chose {want_role}", got.activated_role));
        }
        let after = oracle.live(rs.user_id);
        if engine.live_permissions(rs.user_id) != after {
            return Err("live set diverged after activation".into());
        }
        if got.delta != after.difference(&before) {
            return Err("activation delta is not the minimal addition".into());
        }
        Ok((rs.user_id, tx))
    };

    let check_deactivate = |user: UserId, tx: TransactionId, oracle: &mut ActivationOracle<'_>| -> Result<(), String> {
        let revoked = engine.deactivate_transaction(user, tx).map_err(|e| e.to_string())?;
        oracle.deactivate(user, tx);
        let still = oracle.live(user);
        if !revoked.is_disjoint(&still) {
            return Err("revoked a permission still derivable from a live activation".into());
        }
        if engine.live_permissions(user) != still {
            return Err("live set diverged after deactivation".into());
        }
        Ok(())
    };

    // Baseline activations that outlive the sequence.
    let mut baseline = Vec::new();
    for _ in 0..rng.gen_range(0..=2) {
        let rs = pick(rng);
        baseline.push(activate(&rs, rng, &mut oracle)?);
    }
    let initial = engine.snapshot();

    let total = rng.gen_range(1..=24);
    let mut started = 0;
    while started < total || !live.is_empty() {
        if started < total && (live.is_empty() || rng.gen_bool(0.55)) {
            let rs = pick(rng);
            live.push(activate(&rs, rng, &mut oracle)?);
            started += 1;
        } else {
            let (u, tx) = live.swap_remove(rng.gen_range(0..live.len()));
            check_deactivate(u, tx, &mut oracle)?;
        }
    }
    if engine.snapshot() != initial {
        return Err("balanced sequence did not restore the initial live set".into());
    }
    baseline.shuffle(rng);
    for (u, tx) in baseline {
        check_deactivate(u, tx, &mut oracle)?;
    }
    if !engine.snapshot().is_empty() {
        return Err("permissions left after every activation ended".into());
    }
    Ok(())
}

/// SQL fragments that would change statement structure if a literal were
/// spliced into the text unescaped.
pub const HOSTILE_FRAGMENTS: [&str; 24] = [
    "'", "''", ";", "--", "/*", "*/", " OR 1=1", "' OR '1'='1", "; DROP TABLE employees", "UNION SELECT ssn FROM employees",
    "SELECT", "WHERE", "\\", "\"", "x", " ", "%", "tenant_id = 2", ")", "(", ",", "=", "é", "\n",
];

/// A random hostile string literal value.
pub fn hostile_text(rng: &mut impl Rng) -> String {
    (0..rng.gen_range(0..6)).map(|_| *HOSTILE_FRAGMENTS.choose(rng).unwrap()).collect()
}

pub fn sql_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

pub const FUZZ_TEMPLATES: usize = 6;

/// Statement template `which` instantiated with the given text and integer
/// literals (`t` needs 3 entries, `i` 2).
pub fn fuzz_statement(which: usize, t: &[String], i: &[i64]) -> String {
    fuzz_statement_with(which, t, i, sql_quote)
}

/// Splices text literals unescaped, the way a string-building client would.
pub fn naive_quote(s: &str) -> String {
    format!("'{s}'")
}

pub fn fuzz_statement_with(which: usize, t: &[String], i: &[i64], quote: fn(&str) -> String) -> String {
    let q = |k: usize| quote(&t[k]);
    match which {
        0 => format!("SELECT name, dept FROM employees WHERE name = {} AND salary > {}", q(0), i[0]),
        1 => format!("SELECT * FROM employees WHERE dept = {}", q(0)),
        2 => format!(
            "INSERT INTO employees (id, name, dept, salary, ssn) VALUES ({}, {}, {}, {}, {})",
            i[0], q(0), q(1), i[1], q(2)
        ),
        3 => format!("UPDATE employees SET dept = {}, ssn = {} WHERE name = {}", q(0), q(1), q(2)),
        4 => format!("DELETE FROM employees WHERE email = {} AND id <> {}", q(0), i[0]),
        _ => format!("select title from employees where ssn = {} and diagnosis <> {};", q(0), q(1)),
    }
}

pub fn fuzz_schema() -> TableSchema {
    TableSchema::new(
        "employees",
        ["id", "name", "dept", "title", "email", "salary", "bonus", "ssn", "diagnosis"],
        ["salary", "bonus", "ssn", "diagnosis"],
    )
}

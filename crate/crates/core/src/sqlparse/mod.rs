//! Parser and canonical renderer for the supported SQL subset, plus query
//! regeneration (projection narrowing, policy filters, literal encryption).
//!
//! ```text
//! select := SELECT ( "*" | column { "," column } ) FROM table [ where ]
//! insert := INSERT INTO table "(" column { "," column } ")" VALUES "(" literal { "," literal } ")"
//! update := UPDATE table SET column "=" literal { "," column "=" literal } [ where ]
//! delete := DELETE FROM table [ where ]
//! where  := WHERE column op literal { AND column op literal }
//! op     := "=" | "<" | ">" | "<=" | ">=" | "<>"
//! ```

mod lexer;
mod regenerate;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use regenerate::{regenerate, RegenerateError, RegeneratedQuery};

use crate::hierarchy::Action;
use crate::value::Value;
use lexer::{Tok, Token};

/// Longest accepted query text in bytes.
pub const MAX_QUERY_LEN: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unsupported feature at byte {offset}: {feature}")]
    Unsupported { offset: usize, feature: String },
    #[error("query longer than {MAX_QUERY_LEN} bytes")]
    TooLong,
}

impl ParseError {
    fn syntax(offset: usize, message: &str) -> Self {
        ParseError::Syntax { offset, message: message.to_string() }
    }

    /// 1-based byte offset of the error, 0 when it has no position.
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::Unsupported { offset, .. } => *offset,
            ParseError::TooLong => 0,
        }
    }

    pub fn is_unsupported(&self) -> bool {
        matches!(self, ParseError::Unsupported { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CompareOp {
    Eq,
    Lt,
    Gt,
    Le,
    Ge,
    Ne,
}

impl CompareOp {
    pub fn as_str(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Lt => "<",
            CompareOp::Gt => ">",
            CompareOp::Le => "<=",
            CompareOp::Ge => ">=",
            CompareOp::Ne => "<>",
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CompareOp::Eq => ord == Equal,
            CompareOp::Lt => ord == Less,
            CompareOp::Gt => ord == Greater,
            CompareOp::Le => ord != Greater,
            CompareOp::Ge => ord != Less,
            CompareOp::Ne => ord != Equal,
        }
    }
}

impl std::str::FromStr for CompareOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "=" => CompareOp::Eq,
            "<" => CompareOp::Lt,
            ">" => CompareOp::Gt,
            "<=" => CompareOp::Le,
            ">=" => CompareOp::Ge,
            "<>" => CompareOp::Ne,
            other => return Err(format!("unknown operator `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Predicate {
    pub column: String,
    pub op: CompareOp,
    pub value: Value,
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.column, self.op.as_str(), self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Projection {
    All,
    Columns(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParsedQuery {
    pub kind: Action,
    pub table: String,
    /// Select list; `Columns(vec![])` for non-SELECT statements.
    pub projection: Projection,
    /// INSERT column/value pairs or UPDATE assignments, in source order.
    pub assignments: Vec<(String, Value)>,
    /// WHERE conjuncts in source order.
    pub predicates: Vec<Predicate>,
}

/// A literal together with the column it is bound to. `position` counts
/// literals in rendering order: assignments first, then predicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiteralRef<'a> {
    pub column: &'a str,
    pub value: &'a Value,
    pub position: usize,
}

/// Structure of a statement with literal contents erased.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueryShape {
    pub kind: Action,
    pub table: String,
    pub projection: Projection,
    pub assignments: Vec<(String, LiteralKind)>,
    pub predicates: Vec<(String, CompareOp, LiteralKind)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LiteralKind {
    Int,
    Text,
    Cipher,
}

impl LiteralKind {
    fn of(v: &Value) -> Self {
        match v {
            Value::Int(_) => LiteralKind::Int,
            Value::Text(_) => LiteralKind::Text,
            Value::Cipher(_) => LiteralKind::Cipher,
        }
    }
}

impl ParsedQuery {
    /// Explicit select-list columns; empty for `SELECT *`.
    pub fn select_columns(&self) -> &[String] {
        match &self.projection {
            Projection::Columns(c) => c,
            Projection::All => &[],
        }
    }

    pub fn selects_all(&self) -> bool {
        self.projection == Projection::All
    }

    pub fn where_columns(&self) -> BTreeSet<&str> {
        self.predicates.iter().map(|p| p.column.as_str()).collect()
    }

    pub fn assignment_columns(&self) -> BTreeSet<&str> {
        self.assignments.iter().map(|(c, _)| c.as_str()).collect()
    }

    /// Every column named anywhere in the statement.
    pub fn referenced_columns(&self) -> BTreeSet<&str> {
        let mut all: BTreeSet<&str> = self.select_columns().iter().map(String::as_str).collect();
        all.extend(self.where_columns());
        all.extend(self.assignment_columns());
        all
    }

    pub fn literals(&self) -> Vec<LiteralRef<'_>> {
        self.assignments
            .iter()
            .map(|(c, v)| (c.as_str(), v))
            .chain(self.predicates.iter().map(|p| (p.column.as_str(), &p.value)))
            .enumerate()
            .map(|(position, (column, value))| LiteralRef { column, value, position })
            .collect()
    }

    pub fn shape(&self) -> QueryShape {
        QueryShape {
            kind: self.kind,
            table: self.table.clone(),
            projection: self.projection.clone(),
            assignments: self.assignments.iter().map(|(c, v)| (c.clone(), LiteralKind::of(v))).collect(),
            predicates: self
                .predicates
                .iter()
                .map(|p| (p.column.clone(), p.op, LiteralKind::of(&p.value)))
                .collect(),
        }
    }

    /// Canonical text: single spaces, uppercase keywords, single-quoted
    /// strings with doubled quotes, no trailing semicolon.
    pub fn render(&self) -> String {
        let mut out = String::new();
        match self.kind {
            Action::Select => {
                out.push_str("SELECT ");
                match &self.projection {
                    Projection::All => out.push('*'),
                    Projection::Columns(c) => out.push_str(&c.join(", ")),
                }
                out.push_str(" FROM ");
                out.push_str(&self.table);
            }
            Action::Insert => {
                let cols: Vec<_> = self.assignments.iter().map(|(c, _)| c.as_str()).collect();
                let vals: Vec<_> = self.assignments.iter().map(|(_, v)| v.to_string()).collect();
                out.push_str(&format!("INSERT INTO {} ({}) VALUES ({})", self.table, cols.join(", "), vals.join(", ")));
            }
            Action::Update => {
                let sets: Vec<_> = self.assignments.iter().map(|(c, v)| format!("{c} = {v}")).collect();
                out.push_str(&format!("UPDATE {} SET {}", self.table, sets.join(", ")));
            }
            Action::Delete => {
                out.push_str("DELETE FROM ");
                out.push_str(&self.table);
            }
        }
        if !self.predicates.is_empty() {
            let preds: Vec<_> = self.predicates.iter().map(Predicate::to_string).collect();
            out.push_str(" WHERE ");
            out.push_str(&preds.join(" AND "));
        }
        out
    }
}

impl fmt::Display for ParsedQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

const KEYWORDS: &[&str] = &["select", "from", "where", "and", "insert", "into", "values", "update", "set", "delete"];

/// Words that name SQL features outside the subset.
const UNSUPPORTED_WORDS: &[(&str, &str)] = &[
    ("join", "joins"),
    ("inner", "joins"),
    ("left", "joins"),
    ("right", "joins"),
    ("full", "joins"),
    ("outer", "joins"),
    ("cross", "joins"),
    ("natural", "joins"),
    ("on", "joins"),
    ("using", "joins"),
    ("or", "OR"),
    ("not", "NOT"),
    ("in", "IN"),
    ("like", "LIKE"),
    ("between", "BETWEEN"),
    ("exists", "subqueries"),
    ("union", "set operations"),
    ("intersect", "set operations"),
    ("except", "set operations"),
    ("group", "aggregation"),
    ("having", "aggregation"),
    ("order", "ORDER BY"),
    ("limit", "LIMIT"),
    ("offset", "OFFSET"),
    ("null", "NULL"),
    ("is", "NULL"),
    ("distinct", "DISTINCT"),
    ("as", "aliases"),
    ("with", "common table expressions"),
    ("create", "DDL"),
    ("drop", "DDL"),
    ("alter", "DDL"),
    ("truncate", "DDL"),
    ("grant", "DCL"),
    ("revoke", "DCL"),
];

fn unsupported_word(w: &str) -> Option<&'static str> {
    UNSUPPORTED_WORDS.iter().find(|(k, _)| *k == w).map(|(_, f)| *f)
}

pub fn parse(query_text: &str) -> Result<ParsedQuery, ParseError> {
    if query_text.len() > MAX_QUERY_LEN {
        return Err(ParseError::TooLong);
    }
    let tokens = lexer::tokenize(query_text)?;
    let mut p = Parser { tokens, pos: 0, end: query_text.len() + 1 };
    let q = p.statement()?;
    p.finish()?;
    Ok(q)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end, |t| t.offset)
    }

    fn err<T>(&self, msg: &str) -> Result<T, ParseError> {
        if let Some(Token { tok: Tok::Word(w), offset }) = self.peek() {
            if let Some(feature) = unsupported_word(w) {
                return Err(ParseError::Unsupported { offset: *offset, feature: feature.into() });
            }
        }
        let found = match self.peek() {
            None => "end of input".to_string(),
            Some(t) => describe(&t.tok),
        };
        Err(ParseError::syntax(self.offset(), &format!("{msg}, found {found}")))
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Token { tok: Tok::Word(w), .. }) if w == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => self.err(&format!("expected {}", kw.to_uppercase())),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Word(w), .. }) if w == kw)
    }

    fn punct(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if t.tok == want => {
                self.pos += 1;
                Ok(())
            }
            _ => self.err(&format!("expected {what}")),
        }
    }

    fn at(&self, want: &Tok) -> bool {
        self.peek().is_some_and(|t| &t.tok == want)
    }

    fn name(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(Token { tok: Tok::Word(w), .. })
                if !KEYWORDS.contains(&w.as_str()) && unsupported_word(w).is_none() =>
            {
                let w = w.clone();
                self.pos += 1;
                if self.at(&Tok::Dot) {
                    return Err(ParseError::Unsupported { offset: self.offset(), feature: "qualified names".into() });
                }
                Ok(w)
            }
            Some(Token { tok: Tok::LParen, offset }) => {
                Err(ParseError::Unsupported { offset: *offset, feature: "subqueries or expressions".into() })
            }
            _ => self.err(&format!("expected {what}")),
        }
    }

    /// A column reference; a following `(` marks a function call.
    fn column(&mut self) -> Result<String, ParseError> {
        let c = self.name("column name")?;
        if self.at(&Tok::LParen) {
            return Err(ParseError::Unsupported { offset: self.offset(), feature: "function calls".into() });
        }
        Ok(c)
    }

    fn table_name(&mut self) -> Result<String, ParseError> {
        let t = self.name("table name")?;
        if self.at(&Tok::Comma) {
            return Err(ParseError::Unsupported { offset: self.offset(), feature: "joins".into() });
        }
        Ok(t)
    }

    fn literal(&mut self) -> Result<Value, ParseError> {
        match self.peek().map(|t| t.tok.clone()) {
            Some(Tok::Int(v)) => {
                self.pos += 1;
                Ok(Value::Int(v))
            }
            Some(Tok::Str(s)) => {
                self.pos += 1;
                Ok(Value::Text(s))
            }
            Some(Tok::Blob(b)) => {
                self.pos += 1;
                Ok(Value::Cipher(b))
            }
            Some(Tok::LParen) => {
                Err(ParseError::Unsupported { offset: self.offset(), feature: "subqueries or expressions".into() })
            }
            Some(Tok::Word(w)) if !KEYWORDS.contains(&w.as_str()) && unsupported_word(&w).is_none() => {
                Err(ParseError::Unsupported { offset: self.offset(), feature: "column comparisons".into() })
            }
            _ => self.err("expected literal"),
        }
    }

    fn statement(&mut self) -> Result<ParsedQuery, ParseError> {
        let kind = match self.peek() {
            Some(Token { tok: Tok::Word(w), .. }) => match w.as_str() {
                "select" => Action::Select,
                "insert" => Action::Insert,
                "update" => Action::Update,
                "delete" => Action::Delete,
                _ => return self.err("expected SELECT, INSERT, UPDATE or DELETE"),
            },
            _ => return self.err("expected SELECT, INSERT, UPDATE or DELETE"),
        };
        self.pos += 1;
        match kind {
            Action::Select => self.select(),
            Action::Insert => self.insert(),
            Action::Update => self.update(),
            Action::Delete => self.delete(),
        }
    }

    fn select(&mut self) -> Result<ParsedQuery, ParseError> {
        let projection = if self.at(&Tok::Star) {
            self.pos += 1;
            Projection::All
        } else {
            let mut cols = vec![self.column()?];
            while self.at(&Tok::Comma) {
                self.pos += 1;
                cols.push(self.column()?);
            }
            Projection::Columns(cols)
        };
        self.keyword("from")?;
        let table = self.table_name()?;
        let predicates = self.where_clause()?;
        Ok(ParsedQuery { kind: Action::Select, table, projection, assignments: Vec::new(), predicates })
    }

    fn insert(&mut self) -> Result<ParsedQuery, ParseError> {
        self.keyword("into")?;
        let table = self.name("table name")?;
        self.punct(Tok::LParen, "`(`")?;
        let mut cols = vec![self.column()?];
        while self.at(&Tok::Comma) {
            self.pos += 1;
            cols.push(self.column()?);
        }
        self.punct(Tok::RParen, "`)`")?;
        self.keyword("values")?;
        let open = self.offset();
        self.punct(Tok::LParen, "`(`")?;
        let mut vals = vec![self.literal()?];
        while self.at(&Tok::Comma) {
            self.pos += 1;
            vals.push(self.literal()?);
        }
        self.punct(Tok::RParen, "`)`")?;
        if self.at(&Tok::Comma) {
            return Err(ParseError::Unsupported { offset: self.offset(), feature: "multi-row INSERT".into() });
        }
        if cols.len() != vals.len() {
            return Err(ParseError::syntax(open, "column and value counts differ"));
        }
        Ok(ParsedQuery {
            kind: Action::Insert,
            table,
            projection: Projection::Columns(Vec::new()),
            assignments: cols.into_iter().zip(vals).collect(),
            predicates: Vec::new(),
        })
    }

    fn update(&mut self) -> Result<ParsedQuery, ParseError> {
        let table = self.table_name()?;
        self.keyword("set")?;
        let mut assignments = Vec::new();
        loop {
            let col = self.column()?;
            self.punct(Tok::Eq, "`=`")?;
            assignments.push((col, self.literal()?));
            if !self.at(&Tok::Comma) {
                break;
            }
            self.pos += 1;
        }
        let predicates = self.where_clause()?;
        Ok(ParsedQuery { kind: Action::Update, table, projection: Projection::Columns(Vec::new()), assignments, predicates })
    }

    fn delete(&mut self) -> Result<ParsedQuery, ParseError> {
        self.keyword("from")?;
        let table = self.table_name()?;
        let predicates = self.where_clause()?;
        Ok(ParsedQuery {
            kind: Action::Delete,
            table,
            projection: Projection::Columns(Vec::new()),
            assignments: Vec::new(),
            predicates,
        })
    }

    fn where_clause(&mut self) -> Result<Vec<Predicate>, ParseError> {
        if !self.at_keyword("where") {
            return Ok(Vec::new());
        }
        self.pos += 1;
        let mut preds = vec![self.predicate()?];
        while self.at_keyword("and") {
            self.pos += 1;
            preds.push(self.predicate()?);
        }
        Ok(preds)
    }

    fn predicate(&mut self) -> Result<Predicate, ParseError> {
        let column = self.column()?;
        let op = match self.peek().map(|t| &t.tok) {
            Some(Tok::Eq) => CompareOp::Eq,
            Some(Tok::Lt) => CompareOp::Lt,
            Some(Tok::Gt) => CompareOp::Gt,
            Some(Tok::Le) => CompareOp::Le,
            Some(Tok::Ge) => CompareOp::Ge,
            Some(Tok::Ne) => CompareOp::Ne,
            _ => return self.err("expected comparison operator"),
        };
        self.pos += 1;
        Ok(Predicate { column, op, value: self.literal()? })
    }

    fn finish(&mut self) -> Result<(), ParseError> {
        if self.at(&Tok::Semicolon) {
            self.pos += 1;
            if self.peek().is_some() {
                return Err(ParseError::Unsupported { offset: self.offset(), feature: "multiple statements".into() });
            }
        }
        match self.peek() {
            None => Ok(()),
            Some(_) => self.err("expected end of statement"),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Word(w) => format!("`{w}`"),
        Tok::Int(v) => format!("`{v}`"),
        Tok::Str(_) => "string literal".into(),
        Tok::Blob(_) => "blob literal".into(),
        Tok::Comma => "`,`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Star => "`*`".into(),
        Tok::Semicolon => "`;`".into(),
        Tok::Dot => "`.`".into(),
        Tok::Eq => "`=`".into(),
        Tok::Lt => "`<`".into(),
        Tok::Gt => "`>`".into(),
        Tok::Le => "`<=`".into(),
        Tok::Ge => "`>=`".into(),
        Tok::Ne => "`<>`".into(),
    }
}

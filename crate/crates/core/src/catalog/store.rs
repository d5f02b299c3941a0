//! Snapshot plus append-only log.
//!
//! Both files start with [`STORE_MAGIC`] and a version byte. Log records are
//! `[u32 BE length][u8 kind][JSON mutation]`, where length counts the kind
//! byte and the body. A torn trailing record (crash mid-append) is discarded
//! on open. Every [`SNAPSHOT_INTERVAL`] records the full state is written to
//! a temporary file, renamed over the snapshot, and the log is reset.

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::state::{CatalogState, Mutation};
use super::CatalogError;

pub const STORE_MAGIC: &[u8; 4] = b"RGCT";
pub const STORE_VERSION: u8 = 1;
pub const SNAPSHOT_FILE: &str = "catalog.snap";
pub const LOG_FILE: &str = "catalog.log";
pub const SNAPSHOT_INTERVAL: usize = 1000;

const RECORD_MUTATION: u8 = 1;
const HEADER_LEN: usize = 5;

fn io_err(context: &str, e: std::io::Error) -> CatalogError {
    CatalogError::Storage(format!("{context}: {e}"))
}

#[derive(Debug)]
pub(crate) struct Store {
    dir: PathBuf,
    log: File,
    records: usize,
}

fn header() -> Vec<u8> {
    let mut h = STORE_MAGIC.to_vec();
    h.push(STORE_VERSION);
    h
}

fn check_header(bytes: &[u8], what: &str) -> Result<(), CatalogError> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != STORE_MAGIC {
        return Err(CatalogError::Storage(format!("{what}: bad magic")));
    }
    if bytes[4] != STORE_VERSION {
        return Err(CatalogError::Storage(format!("{what}: unsupported version {}", bytes[4])));
    }
    Ok(())
}

impl Store {
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn open(dir: &Path) -> Result<(Self, CatalogState), CatalogError> {
        fs::create_dir_all(dir).map_err(|e| io_err("create data dir", e))?;
        let snap_path = dir.join(SNAPSHOT_FILE);
        let mut state = match fs::read(&snap_path) {
            Ok(bytes) => {
                check_header(&bytes, SNAPSHOT_FILE)?;
                serde_json::from_slice(&bytes[HEADER_LEN..])
                    .map_err(|e| CatalogError::Storage(format!("{SNAPSHOT_FILE}: {e}")))?
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => CatalogState::default(),
            Err(e) => return Err(io_err("read snapshot", e)),
        };

        let log_path = dir.join(LOG_FILE);
        let mut log = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&log_path)
            .map_err(|e| io_err("open log", e))?;
        let mut bytes = Vec::new();
        log.read_to_end(&mut bytes).map_err(|e| io_err("read log", e))?;
        let mut records = 0;
        if bytes.is_empty() {
            log.write_all(&header()).map_err(|e| io_err("write log header", e))?;
        } else {
            check_header(&bytes, LOG_FILE)?;
            let mut pos = HEADER_LEN;
            while pos + 5 <= bytes.len() {
                let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().expect("4 bytes")) as usize;
                if len == 0 || pos + 4 + len > bytes.len() {
                    break;
                }
                let kind = bytes[pos + 4];
                let body = &bytes[pos + 5..pos + 4 + len];
                if kind != RECORD_MUTATION {
                    return Err(CatalogError::Storage(format!("{LOG_FILE}: unknown record kind {kind}")));
                }
                let m: Mutation = match serde_json::from_slice(body) {
                    Ok(m) => m,
                    // A record that does not parse can only be the torn tail.
                    Err(_) if pos + 4 + len == bytes.len() => break,
                    Err(e) => return Err(CatalogError::Storage(format!("{LOG_FILE}: {e}"))),
                };
                state.apply(&m)?;
                records += 1;
                pos += 4 + len;
            }
            if pos < bytes.len() {
                log::warn!("discarding {} torn trailing bytes of {LOG_FILE}", bytes.len() - pos);
                log.set_len(pos as u64).map_err(|e| io_err("truncate log", e))?;
            }
        }
        Ok((Self { dir: dir.to_path_buf(), log, records }, state))
    }

    pub fn append(&mut self, m: &Mutation, state: &CatalogState) -> Result<(), CatalogError> {
        let body = serde_json::to_vec(m).map_err(|e| CatalogError::Storage(e.to_string()))?;
        let mut rec = Vec::with_capacity(body.len() + 5);
        rec.extend_from_slice(&(body.len() as u32 + 1).to_be_bytes());
        rec.push(RECORD_MUTATION);
        rec.extend_from_slice(&body);
        self.log.write_all(&rec).map_err(|e| io_err("append log", e))?;
        self.log.sync_data().map_err(|e| io_err("sync log", e))?;
        self.records += 1;
        if self.records >= SNAPSHOT_INTERVAL {
            self.snapshot(state)?;
        }
        Ok(())
    }

    pub fn snapshot(&mut self, state: &CatalogState) -> Result<(), CatalogError> {
        let mut bytes = header();
        serde_json::to_writer(&mut bytes, state).map_err(|e| CatalogError::Storage(e.to_string()))?;
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        {
            let mut f = File::create(&tmp).map_err(|e| io_err("create snapshot", e))?;
            f.write_all(&bytes).map_err(|e| io_err("write snapshot", e))?;
            f.sync_all().map_err(|e| io_err("sync snapshot", e))?;
        }
        fs::rename(&tmp, self.dir.join(SNAPSHOT_FILE)).map_err(|e| io_err("install snapshot", e))?;
        self.log.set_len(0).map_err(|e| io_err("reset log", e))?;
        self.log.write_all(&header()).map_err(|e| io_err("write log header", e))?;
        self.log.sync_data().map_err(|e| io_err("sync log", e))?;
        self.records = 0;
        Ok(())
    }
}

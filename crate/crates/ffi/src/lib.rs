//! C ABI over the rolegate core.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every fallible call returns an
//! [`RgStatus`]; on failure a message is available from
//! [`rg_last_error_message`] on the same thread. Byte results are returned
//! in an [`RgBuffer`] owned by the caller and released with
//! [`rg_buffer_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::SeedableRng;
use rolegate::catalog::{fixture, Catalog};
use rolegate::crypto::{decode_int, encode_int, GeneratorMode, GroupKey, PaillierCiphertext, PaillierKeyPair};
use rolegate::gateway::client::{ClientError, InProcess, QueryClient};
use rolegate::gateway::{Gateway, GatewayOptions};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RgStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Crypto = 4,
    Catalog = 5,
    Authentication = 6,
    Gateway = 7,
    Panic = 99,
}

/// Heap bytes handed to the caller.
#[repr(C)]
#[derive(Debug)]
pub struct RgBuffer {
    pub data: *mut u8,
    pub len: usize,
}

impl RgBuffer {
    fn from_vec(v: Vec<u8>) -> Self {
        let mut b = v.into_boxed_slice();
        let out = RgBuffer { data: b.as_mut_ptr(), len: b.len() };
        std::mem::forget(b);
        out
    }
}

/// Opaque Paillier key pair.
pub struct RgPaillierKeyPair(PaillierKeyPair);

/// Opaque gateway.
pub struct RgGateway(Arc<Gateway>);

/// Opaque logged-in client bound to a gateway.
pub struct RgClient(QueryClient<InProcess>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(RgStatus, String);

impl Failure {
    fn new(status: RgStatus, msg: impl ToString) -> Self {
        Failure(status, msg.to_string())
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        let status = match &e {
            ClientError::Server(_) => RgStatus::Authentication,
            _ => RgStatus::Gateway,
        };
        Failure::new(status, e)
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RgStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RgStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(RgStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::new(RgStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::new(RgStatus::NullArgument, format!("{what} is null")))
}

unsafe fn bytes_arg<'a>(p: *const u8, len: usize, what: &str) -> Result<&'a [u8], Failure> {
    if p.is_null() {
        return Err(Failure::new(RgStatus::NullArgument, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn out_arg<T>(p: *mut T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(RgStatus::NullArgument, format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn crypto(e: impl ToString) -> Failure {
    Failure::new(RgStatus::Crypto, e)
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn rg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a buffer returned by this library. Passing an empty buffer is a no-op.
///
/// # Safety
/// `buf` must come from this library and must not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rg_buffer_free(buf: RgBuffer) {
    if !buf.data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(buf.data, buf.len)));
    }
}

/// Generates a Paillier key pair with `g = n + 1`. A `seed` of 0 draws
/// from system entropy; any other value is deterministic.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn rg_paillier_generate(bits: u64, seed: u64, out: *mut *mut RgPaillierKeyPair) -> RgStatus {
    guard(|| {
        out_arg(out, "out")?;
        let mut rng = if seed == 0 { StdRng::from_entropy() } else { StdRng::seed_from_u64(seed) };
        let kp = PaillierKeyPair::generate(bits, GeneratorMode::NPlusOne, &mut rng).map_err(crypto)?;
        *out = Box::into_raw(Box::new(RgPaillierKeyPair(kp)));
        Ok(())
    })
}

/// # Safety
/// `kp` must be NULL or a handle from [`rg_paillier_generate`], freed once.
#[no_mangle]
pub unsafe extern "C" fn rg_paillier_free(kp: *mut RgPaillierKeyPair) {
    if !kp.is_null() {
        drop(Box::from_raw(kp));
    }
}

/// Encrypts a signed integer; writes the serialized ciphertext to `out`.
///
/// # Safety
/// `kp` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rg_paillier_encrypt_i64(
    kp: *const RgPaillierKeyPair,
    value: i64,
    out: *mut RgBuffer,
) -> RgStatus {
    guard(|| {
        let kp = &ref_arg(kp, "key pair")?.0;
        out_arg(out, "out")?;
        let m = encode_int(value, kp.encryption.n()).map_err(crypto)?;
        let c = kp.encryption.encrypt(&m, &mut rand::thread_rng()).map_err(crypto)?;
        *out = RgBuffer::from_vec(c.to_bytes());
        Ok(())
    })
}

/// Decrypts a ciphertext produced by [`rg_paillier_encrypt_i64`] or
/// [`rg_paillier_add`].
///
/// # Safety
/// `kp` must be a live handle, `data` must point to `len` readable bytes
/// and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_paillier_decrypt_i64(
    kp: *const RgPaillierKeyPair,
    data: *const u8,
    len: usize,
    out: *mut i64,
) -> RgStatus {
    guard(|| {
        let kp = &ref_arg(kp, "key pair")?.0;
        out_arg(out, "out")?;
        let c = PaillierCiphertext::from_bytes(bytes_arg(data, len, "ciphertext")?).map_err(crypto)?;
        let m = kp.decryption.decrypt(&c).map_err(crypto)?;
        *out = decode_int(&m, kp.decryption.n()).map_err(crypto)?;
        Ok(())
    })
}

/// Homomorphic addition of two ciphertexts under the same key.
///
/// # Safety
/// `kp` must be a live handle, `a`/`b` must point to `a_len`/`b_len`
/// readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_paillier_add(
    kp: *const RgPaillierKeyPair,
    a: *const u8,
    a_len: usize,
    b: *const u8,
    b_len: usize,
    out: *mut RgBuffer,
) -> RgStatus {
    guard(|| {
        let kp = &ref_arg(kp, "key pair")?.0;
        out_arg(out, "out")?;
        let a = PaillierCiphertext::from_bytes(bytes_arg(a, a_len, "a")?).map_err(crypto)?;
        let b = PaillierCiphertext::from_bytes(bytes_arg(b, b_len, "b")?).map_err(crypto)?;
        *out = RgBuffer::from_vec(kp.encryption.add(&a, &b).map_err(crypto)?.to_bytes());
        Ok(())
    })
}

/// Canonical bytes of the decryption key, as released by the gateway.
///
/// # Safety
/// `kp` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rg_paillier_decryption_key(kp: *const RgPaillierKeyPair, out: *mut RgBuffer) -> RgStatus {
    guard(|| {
        let kp = &ref_arg(kp, "key pair")?.0;
        out_arg(out, "out")?;
        *out = RgBuffer::from_vec(kp.decryption.to_bytes());
        Ok(())
    })
}

fn gateway_from(catalog: Catalog) -> *mut RgGateway {
    Box::into_raw(Box::new(RgGateway(Arc::new(Gateway::new(catalog, GatewayOptions::default())))))
}

/// Opens (or creates) a persistent catalog directory and starts an
/// in-process gateway over it.
///
/// # Safety
/// `data_dir` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rg_gateway_open(data_dir: *const c_char, out: *mut *mut RgGateway) -> RgStatus {
    guard(|| {
        let dir = str_arg(data_dir, "data_dir")?;
        out_arg(out, "out")?;
        let catalog = Catalog::open(dir).map_err(|e| Failure::new(RgStatus::Catalog, e))?;
        *out = gateway_from(catalog);
        Ok(())
    })
}

/// Starts an in-memory gateway loaded with the built-in demonstration
/// fixture (tenants `acme` and `globex`).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_gateway_demo(key_bits: u64, seed: u64, out: *mut *mut RgGateway) -> RgStatus {
    guard(|| {
        out_arg(out, "out")?;
        let mut rng = if seed == 0 { StdRng::from_entropy() } else { StdRng::seed_from_u64(seed) };
        let mut catalog = Catalog::in_memory();
        fixture::load(&mut catalog, &fixture::s4_fixture(key_bits), &mut rng)
            .map_err(|e| Failure::new(RgStatus::Catalog, e))?;
        *out = gateway_from(catalog);
        Ok(())
    })
}

/// # Safety
/// `gw` must be NULL or a gateway handle, freed once. Clients created from
/// it stay valid.
#[no_mangle]
pub unsafe extern "C" fn rg_gateway_free(gw: *mut RgGateway) {
    if !gw.is_null() {
        drop(Box::from_raw(gw));
    }
}

/// Authenticates a user and returns a client handle.
///
/// # Safety
/// `gw` must be a live handle, the strings NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rg_client_login(
    gw: *const RgGateway,
    tenant: *const c_char,
    user: *const c_char,
    password: *const c_char,
    out: *mut *mut RgClient,
) -> RgStatus {
    guard(|| {
        let gw = ref_arg(gw, "gateway")?;
        let (tenant, user, password) =
            (str_arg(tenant, "tenant")?, str_arg(user, "user")?, str_arg(password, "password")?);
        out_arg(out, "out")?;
        let client = QueryClient::login(InProcess::new(gw.0.clone()), tenant, user, password)?;
        *out = Box::into_raw(Box::new(RgClient(client)));
        Ok(())
    })
}

/// Attaches a group key (`<group id>:<hex>`) to subsequent queries; NULL
/// clears it.
///
/// # Safety
/// `client` must be a live handle and `key` NULL or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rg_client_set_group_key(client: *mut RgClient, key: *const c_char) -> RgStatus {
    guard(|| {
        let client = client.as_mut().ok_or_else(|| Failure::new(RgStatus::NullArgument, "client is null"))?;
        client.0.group_key = if key.is_null() {
            None
        } else {
            Some(
                GroupKey::from_wire(str_arg(key, "key")?)
                    .ok_or_else(|| Failure::new(RgStatus::InvalidArgument, "malformed group key"))?,
            )
        };
        Ok(())
    })
}

/// Runs one query through the full pipeline. On `RG_STATUS_OK` the buffer
/// holds the JSON result payload (`outcome`, `result` and, when sensitive
/// access was granted, `decryption_key`). A denied query is still
/// `RG_STATUS_OK`; inspect `outcome`.
///
/// # Safety
/// `client` must be a live handle, `sql` NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rg_client_query(
    client: *mut RgClient,
    sql: *const c_char,
    sensitive: bool,
    out: *mut RgBuffer,
) -> RgStatus {
    guard(|| {
        let client = client.as_mut().ok_or_else(|| Failure::new(RgStatus::NullArgument, "client is null"))?;
        let sql = str_arg(sql, "sql")?;
        out_arg(out, "out")?;
        let resp = client.0.query(sql, sensitive)?;
        let json = serde_json::to_vec(&resp.payload).map_err(|e| Failure::new(RgStatus::Gateway, e))?;
        *out = RgBuffer::from_vec(json);
        Ok(())
    })
}

/// # Safety
/// `client` must be NULL or a client handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn rg_client_free(client: *mut RgClient) {
    if !client.is_null() {
        drop(Box::from_raw(client));
    }
}


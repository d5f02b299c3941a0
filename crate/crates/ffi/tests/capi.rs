use std::ffi::{CStr, CString};
use std::ptr;

use rolegate_ffi::*;

fn last_error() -> String {
    let p = rg_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn empty() -> RgBuffer {
    RgBuffer { data: ptr::null_mut(), len: 0 }
}

unsafe fn take(buf: RgBuffer) -> Vec<u8> {
    let v = std::slice::from_raw_parts(buf.data, buf.len).to_vec();
    rg_buffer_free(buf);
    v
}

#[test]
fn paillier_round_trip_and_addition() {
    unsafe {
        let mut kp = ptr::null_mut();
        assert_eq!(rg_paillier_generate(128, 7, &mut kp), RgStatus::Ok);
        let mut a = empty();
        let mut b = empty();
        assert_eq!(rg_paillier_encrypt_i64(kp, 1200, &mut a), RgStatus::Ok);
        assert_eq!(rg_paillier_encrypt_i64(kp, -200, &mut b), RgStatus::Ok);
        let mut sum = empty();
        assert_eq!(rg_paillier_add(kp, a.data, a.len, b.data, b.len, &mut sum), RgStatus::Ok);
        let sum = take(sum);
        let mut v = 0i64;
        assert_eq!(rg_paillier_decrypt_i64(kp, sum.as_ptr(), sum.len(), &mut v), RgStatus::Ok);
        assert_eq!(v, 1000);
        let a = take(a);
        assert_eq!(rg_paillier_decrypt_i64(kp, a.as_ptr(), a.len(), &mut v), RgStatus::Ok);
        assert_eq!(v, 1200);
        rg_buffer_free(b);
        rg_paillier_free(kp);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let mut kp = ptr::null_mut();
        assert_eq!(rg_paillier_generate(15, 1, &mut kp), RgStatus::Crypto);
        assert!(kp.is_null());
        assert!(last_error().contains("key size"));
        assert_eq!(rg_paillier_generate(64, 1, ptr::null_mut()), RgStatus::NullArgument);

        assert_eq!(rg_paillier_generate(64, 1, &mut kp), RgStatus::Ok);
        assert!(rg_last_error_message().is_null());
        let mut v = 0i64;
        let junk = [1u8, 2, 3];
        assert_eq!(rg_paillier_decrypt_i64(kp, junk.as_ptr(), junk.len(), &mut v), RgStatus::Crypto);
        rg_paillier_free(kp);
        rg_paillier_free(ptr::null_mut());
    }
}

#[test]
fn gateway_query_through_handles() {
    let s = |x: &str| CString::new(x).unwrap();
    unsafe {
        let mut gw = ptr::null_mut();
        assert_eq!(rg_gateway_demo(256, 3, &mut gw), RgStatus::Ok);

        let mut client = ptr::null_mut();
        let bad = rg_client_login(gw, s("acme").as_ptr(), s("alice").as_ptr(), s("nope").as_ptr(), &mut client);
        assert_eq!(bad, RgStatus::Authentication);

        assert_eq!(
            rg_client_login(gw, s("acme").as_ptr(), s("alice").as_ptr(), s("alice-pw").as_ptr(), &mut client),
            RgStatus::Ok
        );
        let mut out = empty();
        let sql = s("SELECT name FROM employees WHERE dept = 'CS'");
        assert_eq!(rg_client_query(client, sql.as_ptr(), false, &mut out), RgStatus::Ok);
        let json: serde_json::Value = serde_json::from_slice(&take(out)).unwrap();
        assert_eq!(json["outcome"]["status"], "ok");
        assert!(!json["result"]["rows"].as_array().unwrap().is_empty());

        let sql = s("SELECT salary FROM employees");
        out = empty();
        assert_eq!(rg_client_query(client, sql.as_ptr(), true, &mut out), RgStatus::Ok);
        let json: serde_json::Value = serde_json::from_slice(&take(out)).unwrap();
        assert_eq!(json["outcome"]["status"], "denied", "{json}");
        assert!(json.get("decryption_key").is_none());

        assert_eq!(rg_client_set_group_key(client, s("garbage").as_ptr()), RgStatus::InvalidArgument);
        assert_eq!(rg_client_set_group_key(client, ptr::null()), RgStatus::Ok);

        rg_gateway_free(gw);
        // The client keeps the gateway alive.
        let sql = s("SELECT name FROM employees");
        out = empty();
        assert_eq!(rg_client_query(client, sql.as_ptr(), false, &mut out), RgStatus::Ok);
        rg_buffer_free(out);
        rg_client_free(client);
    }
}

#[test]
fn header_is_generated() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/rolegate.h")).unwrap();
    for sym in ["rg_last_error_message", "rg_buffer_free", "rg_paillier_generate", "rg_client_query", "RG_STATUS_OK"] {
        assert!(h.contains(sym), "{sym} missing from header");
    }
}

/// Compiles and runs the C demo against the static library when a C
/// compiler is available.
#[test]
fn c_demo_links_and_runs() {
    use std::path::PathBuf;
    use std::process::Command;

    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/capi-xxxx -> target/<profile>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("librolegate_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("demo");
    let status = Command::new("cc")
        .arg(manifest.join("examples/demo.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("42\n"), "{stdout}");
    assert!(stdout.contains("\"status\":\"ok\""), "{stdout}");
}

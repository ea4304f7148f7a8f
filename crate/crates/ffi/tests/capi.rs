use std::ffi::{CStr, CString};
use std::ptr;

use horen_ffi::*;

fn unit(d: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[i] = 1.0;
    v
}

fn last_error() -> String {
    let p = horen_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn defaults_match_the_library() {
    let p = horen_params_default();
    assert_eq!((p.beta, p.gamma, p.max_steps, p.threshold), (20.0, 0.1, 1, 0.85));
    let a = horen_adaptor_params_default();
    assert_eq!((a.learning_rate, a.max_steps, a.patience), (0.1, 50, 3));
    let v = unsafe { CStr::from_ptr(horen_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn three_outcomes_through_the_c_abi() {
    unsafe {
        let cb = horen_codebook_new(4);
        assert!(!cb.is_null());
        let q = unit(4, 0);
        let t = vec![0.5, -0.5, 0.0, 1.0];
        let a = CString::new("a").unwrap();
        let b = CString::new("b").unwrap();
        let mut r = std::mem::zeroed::<HorenEditResult>();

        let s = horen_codebook_apply_edit(cb, q.as_ptr(), t.as_ptr(), 4, a.as_ptr(), ptr::null(), ptr::null(), &mut r);
        assert_eq!(s, HorenStatus::Ok);
        assert_eq!((r.outcome, r.index, r.contested), (HorenOutcome::Inserted, 0, -1));
        assert_eq!(r.payload_trained, 1);
        assert_eq!(horen_codebook_len(cb), 1);

        let s = horen_codebook_apply_edit(cb, q.as_ptr(), t.as_ptr(), 4, a.as_ptr(), ptr::null(), ptr::null(), &mut r);
        assert_eq!(s, HorenStatus::Ok);
        assert_eq!(r.outcome, HorenOutcome::Refined);
        assert_eq!(horen_codebook_len(cb), 1);

        let s = horen_codebook_apply_edit(cb, q.as_ptr(), t.as_ptr(), 4, b.as_ptr(), ptr::null(), ptr::null(), &mut r);
        assert_eq!(s, HorenStatus::Ok);
        assert_eq!((r.outcome, r.index, r.contested), (HorenOutcome::ConflictInserted, 1, 0));
        assert_eq!(horen_codebook_len(cb), 2);

        let mut route = HorenRoute::default();
        let scaled: Vec<f64> = q.iter().map(|x| x * 100.0).collect();
        assert_eq!(horen_codebook_route(cb, scaled.as_ptr(), 4, ptr::null(), &mut route), HorenStatus::Ok);
        assert_eq!((route.matched, route.best_index, route.steps_taken), (1, 0, 1));

        let mut payload = vec![0.0; 4];
        assert_eq!(horen_codebook_payload(cb, 1, payload.as_mut_ptr(), 4), HorenStatus::Ok);
        let loss: f64 = payload.iter().zip(&t).map(|(p, t)| 0.5 * (p - t) * (p - t)).sum();
        assert!(loss <= 1e-2, "{loss}");

        let mut buf = [0 as std::ffi::c_char; 8];
        let mut needed = 0usize;
        assert_eq!(horen_codebook_label(cb, 1, buf.as_mut_ptr(), buf.len(), &mut needed), HorenStatus::Ok);
        assert_eq!(needed, 1);
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_str().unwrap(), "b");

        horen_codebook_free(cb);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        assert!(horen_codebook_new(0).is_null());
        let cb = horen_codebook_new(3);
        let zero = [0.0; 3];
        let t = [1.0; 3];
        let label = CString::new("x").unwrap();
        let s = horen_codebook_apply_edit(cb, zero.as_ptr(), t.as_ptr(), 3, label.as_ptr(), ptr::null(), ptr::null(), ptr::null_mut());
        assert_eq!(s, HorenStatus::ZeroNorm);
        assert!(last_error().contains("zero-norm"));

        let q = unit(2, 0);
        let mut route = HorenRoute::default();
        assert_eq!(horen_codebook_route(cb, q.as_ptr(), 2, ptr::null(), &mut route), HorenStatus::DimensionMismatch);
        assert_eq!(horen_codebook_route(ptr::null(), q.as_ptr(), 2, ptr::null(), &mut route), HorenStatus::NullPointer);
        assert_eq!(horen_codebook_route(cb, ptr::null(), 3, ptr::null(), &mut route), HorenStatus::NullPointer);

        let mut bad = horen_params_default();
        bad.gamma = 2.0;
        let q = unit(3, 0);
        assert_eq!(horen_codebook_route(cb, q.as_ptr(), 3, &bad, &mut route), HorenStatus::InvalidParams);

        let mut out = [0.0; 3];
        assert_eq!(horen_codebook_payload(cb, 0, out.as_mut_ptr(), 3), HorenStatus::IndexOutOfRange);
        horen_codebook_free(cb);
        horen_codebook_free(ptr::null_mut());
    }
}

#[test]
fn save_load_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("book.hrn");
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let cb = horen_codebook_new(3);
        for i in 0..3 {
            let q = unit(3, i);
            let label = CString::new(format!("l{i}")).unwrap();
            let t = [i as f64; 3];
            let s = horen_codebook_apply_edit(cb, q.as_ptr(), t.as_ptr(), 3, label.as_ptr(), ptr::null(), ptr::null(), ptr::null_mut());
            assert_eq!(s, HorenStatus::Ok);
        }
        assert_eq!(horen_codebook_save(cb, cpath.as_ptr()), HorenStatus::Ok);

        let mut loaded = ptr::null_mut();
        assert_eq!(horen_codebook_load(cpath.as_ptr(), &mut loaded), HorenStatus::Ok);
        assert_eq!((horen_codebook_len(loaded), horen_codebook_dim(loaded)), (3, 3));
        for i in 0..3 {
            let q = unit(3, i);
            let (mut a, mut b) = (HorenRoute::default(), HorenRoute::default());
            horen_codebook_route(cb, q.as_ptr(), 3, ptr::null(), &mut a);
            horen_codebook_route(loaded, q.as_ptr(), 3, ptr::null(), &mut b);
            assert_eq!((a.matched, a.best_index, a.best_score), (b.matched, b.best_index, b.best_score));
        }
        horen_codebook_free(loaded);
        horen_codebook_free(cb);

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        let mut again = ptr::null_mut();
        assert_eq!(horen_codebook_load(cpath.as_ptr(), &mut again), HorenStatus::Format);
        assert!(again.is_null());

        let missing = CString::new(dir.path().join("nope").to_str().unwrap()).unwrap();
        assert_eq!(horen_codebook_load(missing.as_ptr(), &mut again), HorenStatus::Io);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/horen.h")).unwrap();
    for name in [
        "horen_codebook_new",
        "horen_codebook_free",
        "horen_codebook_apply_edit",
        "horen_codebook_route",
        "horen_codebook_save",
        "horen_codebook_load",
        "horen_last_error_message",
        "typedef struct HorenCodebook HorenCodebook",
        "HOREN_STATUS_FORMAT = 8",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = ["cc", "gcc", "clang"].into_iter().find(|c| {
        std::process::Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success())
    }) else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"horen.h\"\nint main(void) { HorenParams p = horen_params_default(); (void)p; return HOREN_STATUS_OK; }\n",
    )
    .unwrap();
    let out = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

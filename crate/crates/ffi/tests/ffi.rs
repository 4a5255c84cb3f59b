use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use selfcal::tiny_lm::{save_checkpoint, ModelConfig, TinyLm, VOCAB_SIZE};
use selfcal_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(selfcal_last_error()).to_string_lossy().into_owned() }
}

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

/// Writes a small random model and loads it back through the C interface.
fn small_model(dir: &Path) -> *mut SelfcalModel {
    let cfg = ModelConfig {
        layers: 1,
        heads: 2,
        model_dim: 16,
        ffn_dim: 32,
        context_len: 32,
        vocab_size: VOCAB_SIZE,
        tie_embeddings: true,
    };
    let path = dir.join("m.tlm");
    save_checkpoint(&TinyLm::init(cfg, 1).unwrap(), &path).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { selfcal_model_load(cpath(&path).as_ptr(), &mut m) }, SelfcalStatus::Ok);
    assert!(!m.is_null());
    m
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(selfcal_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn schedule_through_the_abi() {
    let s = SelfcalSchedule {
        t_initial: 2.0,
        t_final: 0.0,
        ramp: 4,
    };
    let mut t = 0.0;
    for (step, want) in [(1, 1.5), (2, 1.0), (4, 0.0), (9, 0.0)] {
        assert_eq!(unsafe { selfcal_schedule_temperature(&s, step, &mut t) }, SelfcalStatus::Ok);
        assert_eq!(t, want);
    }
    assert_eq!(unsafe { selfcal_schedule_temperature(&s, 0, &mut t) }, SelfcalStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    let bad = SelfcalSchedule { t_initial: -1.0, ..s };
    assert_eq!(unsafe { selfcal_schedule_temperature(&bad, 1, &mut t) }, SelfcalStatus::InvalidArgument);
}

#[test]
fn null_pointers_are_reported() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { selfcal_model_load(ptr::null(), &mut m) }, SelfcalStatus::NullPointer);
    assert!(last_error().contains("null"));
    let mut x = 0.0;
    assert_eq!(unsafe { selfcal_model_sparsity(ptr::null(), &mut x) }, SelfcalStatus::NullPointer);
    assert_eq!(unsafe { selfcal_model_vocab_size(ptr::null()) }, 0);
    unsafe {
        selfcal_model_free(ptr::null_mut());
        selfcal_calib_free(ptr::null_mut());
    }
}

#[test]
fn io_and_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = ptr::null_mut();
    let missing = cpath(&dir.path().join("missing.tlm"));
    assert_eq!(unsafe { selfcal_model_load(missing.as_ptr(), &mut m) }, SelfcalStatus::Io);
    let junk = dir.path().join("junk.tlm");
    std::fs::write(&junk, b"not a model").unwrap();
    assert_eq!(unsafe { selfcal_model_load(cpath(&junk).as_ptr(), &mut m) }, SelfcalStatus::Format);
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { selfcal_calib_load(cpath(&junk).as_ptr(), &mut c) }, SelfcalStatus::Format);
    assert!(m.is_null() && c.is_null());
}

#[test]
fn generate_compress_analyze_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_model(dir.path());
    unsafe {
        assert_eq!(selfcal_model_vocab_size(m), VOCAB_SIZE);
        assert_eq!(selfcal_model_context_len(m), 32);

        let toks = [256u32, 104, 105];
        let mut logits = vec![0.0; VOCAB_SIZE];
        assert_eq!(
            selfcal_model_logits(m, toks.as_ptr(), toks.len(), logits.as_mut_ptr(), logits.len()),
            SelfcalStatus::Ok
        );
        assert!(logits.iter().all(|v| v.is_finite()));
        assert_eq!(
            selfcal_model_logits(m, toks.as_ptr(), toks.len(), logits.as_mut_ptr(), 10),
            SelfcalStatus::InvalidArgument
        );

        let sched = SelfcalSchedule {
            t_initial: 1.0,
            t_final: 1.0,
            ramp: 10,
        };
        let mut set = ptr::null_mut();
        assert_eq!(
            selfcal_calib_generate(m, SelfcalSource::SelfGenerated, 3, 40, 7, &sched, false, &mut set),
            SelfcalStatus::Ok,
            "{}",
            last_error()
        );
        let (mut n, mut l) = (0, 0);
        assert_eq!(selfcal_calib_shape(set, &mut n, &mut l), SelfcalStatus::Ok);
        assert_eq!((n, l), (3, 40));
        let mut ex = vec![0u32; 40];
        assert_eq!(selfcal_calib_example(set, 2, ex.as_mut_ptr(), ex.len()), SelfcalStatus::Ok);
        assert_eq!(selfcal_calib_example(set, 3, ex.as_mut_ptr(), ex.len()), SelfcalStatus::InvalidArgument);

        let path = cpath(&dir.path().join("c.scl"));
        assert_eq!(selfcal_calib_save(set, path.as_ptr()), SelfcalStatus::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(selfcal_calib_load(path.as_ptr(), &mut again), SelfcalStatus::Ok);
        let mut ex2 = vec![0u32; 40];
        selfcal_calib_example(again, 2, ex2.as_mut_ptr(), ex2.len());
        assert_eq!(ex, ex2);

        let mut metrics = SelfcalTextMetrics::default();
        assert_eq!(selfcal_analyze(m, set, &mut metrics), SelfcalStatus::Ok);
        assert!(metrics.ppl.is_finite() && (0.0..=1.0).contains(&metrics.coverage));

        let mut pruned = ptr::null_mut();
        assert_eq!(selfcal_compress(m, set, SelfcalMethod::Wanda, &mut pruned), SelfcalStatus::Ok);
        let mut sparsity = 0.0;
        assert_eq!(selfcal_model_sparsity(pruned, &mut sparsity), SelfcalStatus::Ok);
        assert_eq!(sparsity, 0.5);
        let out = cpath(&dir.path().join("pruned.tlm"));
        assert_eq!(selfcal_model_save(pruned, out.as_ptr()), SelfcalStatus::Ok);

        selfcal_model_free(pruned);
        selfcal_calib_free(again);
        selfcal_calib_free(set);
        selfcal_model_free(m);
    }
}

#[test]
fn random_vocab_needs_no_model() {
    let mut set = ptr::null_mut();
    let st = unsafe { selfcal_calib_generate(ptr::null(), SelfcalSource::RandomVocab, 2, 16, 1, ptr::null(), false, &mut set) };
    assert_eq!(st, SelfcalStatus::Ok);
    let mut self_set = ptr::null_mut();
    let st = unsafe { selfcal_calib_generate(ptr::null(), SelfcalSource::SelfGenerated, 2, 16, 1, ptr::null(), false, &mut self_set) };
    assert_eq!(st, SelfcalStatus::InvalidArgument);
    unsafe { selfcal_calib_free(set) };
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/selfcal.h")).unwrap();
    for name in [
        "selfcal_last_error",
        "selfcal_model_load",
        "selfcal_model_free",
        "selfcal_model_logits",
        "selfcal_schedule_temperature",
        "selfcal_calib_generate",
        "selfcal_analyze",
        "selfcal_compress",
        "SELFCAL_STATUS_NULL_POINTER",
        "typedef struct SelfcalModel SelfcalModel;",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("t.c");
    std::fs::write(
        &src,
        "#include \"selfcal.h\"\nint main(void) { SelfcalStatus s = SELFCAL_STATUS_OK; return (int)s; }\n",
    )
    .unwrap();
    let status = std::process::Command::new(cc)
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg(format!("-I{}", Path::new(env!("CARGO_MANIFEST_DIR")).join("include").display()))
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok())
        .ok_or(())
}

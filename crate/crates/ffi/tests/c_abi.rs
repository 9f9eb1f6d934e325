use std::ffi::{c_int, CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use medlang::measure::write_records;
use medlang::scm::{exact_effects, generate, ScmSpec};
use medlang_ffi::*;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(rel)
}

fn c(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = medlang_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn scm_handle_round_trip() {
    let path = c(&fixture("scm/two_mediator.json"));
    let mut scm = ptr::null_mut();
    unsafe {
        assert_eq!(medlang_scm_load(path.as_ptr(), &mut scm), MedlangStatus::Ok);
        assert_eq!(medlang_scm_mediator_count(scm), 2);

        let want = exact_effects(&ScmSpec::load(&fixture("scm/two_mediator.json")).unwrap()).unwrap();
        let mut oracle = MedlangOracle::default();
        assert_eq!(medlang_scm_exact(scm, 1, &mut oracle), MedlangStatus::Ok);
        assert_eq!(oracle.nde, want[1].nde);
        assert_eq!(oracle.nie, want[1].nie);
        assert_eq!(medlang_scm_exact(scm, 5, &mut oracle), MedlangStatus::Config);
        assert!(last_error().contains("index 5"));

        let mut ds = ptr::null_mut();
        assert_eq!(medlang_scm_generate(scm, 3_000, 4, &mut ds), MedlangStatus::Ok);
        assert_eq!(medlang_dataset_len(ds), 3_000);

        let name = CString::new("hedging").unwrap();
        let mut effect = MedlangEffect::default();
        assert_eq!(medlang_estimate(ds, name.as_ptr(), 0, 1, 0.9, &mut effect), MedlangStatus::Ok);
        assert!(effect.nde_lower.is_nan() && effect.nie_upper.is_nan());
        assert!((effect.total_effect - effect.nde - effect.nie_reversed).abs() <= 1e-9);
        assert_eq!(effect.n_units, 3_000);

        assert_eq!(medlang_estimate(ds, name.as_ptr(), 100, 1, 0.9, &mut effect), MedlangStatus::Ok);
        assert!(effect.nde_lower <= effect.nde && effect.nde <= effect.nde_upper);
        assert_eq!(effect.n_bootstrap, 100);

        assert_eq!(medlang_estimate(ds, name.as_ptr(), 20, 1, 0.9, &mut effect), MedlangStatus::Config);
        let missing = CString::new("topic").unwrap();
        assert_ne!(medlang_estimate(ds, missing.as_ptr(), 0, 1, 0.9, &mut effect), MedlangStatus::Ok);

        medlang_dataset_free(ds);
        medlang_scm_free(scm);
    }
}

#[test]
fn dataset_from_files_matches_generated() {
    let spec = ScmSpec::load(&fixture("scm/binary.json")).unwrap();
    let sim = generate(&spec, 1_000).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("records.jsonl");
    let schema = dir.path().join("records.schema.json");
    write_records(&sim.records, std::fs::File::create(&records).unwrap()).unwrap();
    std::fs::write(&schema, serde_json::to_string(&sim.schema).unwrap()).unwrap();

    let mut ds = ptr::null_mut();
    unsafe {
        assert_eq!(medlang_dataset_load(c(&records).as_ptr(), c(&schema).as_ptr(), &mut ds), MedlangStatus::Ok);
        assert_eq!(medlang_dataset_len(ds), 1_000);
        medlang_dataset_free(ds);

        let missing = c(&dir.path().join("nope.jsonl"));
        let mut ds = ptr::null_mut();
        assert_eq!(medlang_dataset_load(missing.as_ptr(), c(&schema).as_ptr(), &mut ds), MedlangStatus::Data);
        assert!(ds.is_null());
    }
}

#[test]
fn bad_arguments_are_reported() {
    unsafe {
        let mut scm = ptr::null_mut();
        assert_eq!(medlang_scm_load(ptr::null(), &mut scm), MedlangStatus::NullPointer);
        assert!(last_error().contains("spec_path"));
        let bad = [0xffu8, 0xfe, 0];
        assert_eq!(medlang_scm_load(bad.as_ptr().cast(), &mut scm), MedlangStatus::InvalidUtf8);
        let path = c(&fixture("scm/binary.json"));
        assert_eq!(medlang_scm_load(path.as_ptr(), ptr::null_mut()), MedlangStatus::NullPointer);

        let mut effect = MedlangEffect::default();
        let name = CString::new("hedging").unwrap();
        assert_eq!(medlang_estimate(ptr::null(), name.as_ptr(), 0, 0, 0.9, &mut effect), MedlangStatus::NullPointer);
        assert_eq!(medlang_dataset_len(ptr::null()), 0);
        assert_eq!(medlang_scm_mediator_count(ptr::null()), 0);
        medlang_dataset_free(ptr::null_mut());
        medlang_scm_free(ptr::null_mut());
    }
}

#[test]
fn invalid_spec_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spec.json");
    std::fs::write(&path, "{}").unwrap();
    let mut scm = ptr::null_mut();
    unsafe {
        assert_eq!(medlang_scm_load(c(&path).as_ptr(), &mut scm), MedlangStatus::Config);
    }
    assert!(scm.is_null());
}

#[test]
fn measures_text() {
    let (mut h, mut d): (c_int, c_int) = (-1, -1);
    let text = CString::new("I think the - - the statute applies").unwrap();
    unsafe {
        assert_eq!(medlang_measure_text(text.as_ptr(), &mut h, &mut d), MedlangStatus::Ok);
        assert_eq!((h, d), (1, 1));
        let plain = CString::new("The statute applies.").unwrap();
        assert_eq!(medlang_measure_text(plain.as_ptr(), &mut h, &mut d), MedlangStatus::Ok);
        assert_eq!((h, d), (0, 0));
    }
    assert!(medlang_last_error().is_null());
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/medlang.h")).unwrap();
    for name in [
        "medlang_dataset_load",
        "medlang_dataset_free",
        "medlang_dataset_len",
        "medlang_estimate",
        "medlang_scm_load",
        "medlang_scm_free",
        "medlang_scm_mediator_count",
        "medlang_scm_exact",
        "medlang_scm_generate",
        "medlang_measure_text",
        "medlang_last_error",
        "MEDLANG_STATUS_NULL_POINTER = 5",
        "typedef struct MedlangDataset MedlangDataset",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

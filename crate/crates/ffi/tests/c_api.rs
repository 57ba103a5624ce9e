use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use treechild_ffi::*;

const FOUR_TREES: &str = "(((a,b),e),(c,d));\n(((a,b),(c,e)),d);\n((a,(e,(b,c))),d);\n((a,(e,b)),(c,d));\n";

fn parse(text: &str) -> *mut TcInstance {
    let text = CString::new(text).unwrap();
    let mut inst = ptr::null_mut();
    assert_eq!(unsafe { tc_instance_parse(text.as_ptr(), &mut inst) }, TcStatus::Ok);
    inst
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(tc_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn solve_round_trip() {
    let inst = parse(FOUR_TREES);
    unsafe {
        assert_eq!(tc_instance_num_taxa(inst), 5);
        assert_eq!(tc_instance_num_trees(inst), 4);
        let mut sol = ptr::null_mut();
        assert_eq!(tc_solve(inst, ptr::null(), &mut sol), TcStatus::Ok);
        assert_eq!(tc_solution_weight(sol), 3);
        assert!(tc_solution_recursive_calls(sol) > 0);
        let seq = CStr::from_ptr(tc_solution_sequence(sol)).to_str().unwrap();
        assert!(seq.lines().last().unwrap().ends_with(",-)"));
        let net = CStr::from_ptr(tc_solution_network(sol)).to_str().unwrap();
        assert!(net.ends_with(';') && net.contains("#H"));
        tc_solution_free(sol);
        tc_instance_free(inst);
    }
}

#[test]
fn status_codes() {
    let inst = parse(FOUR_TREES);
    unsafe {
        let mut opts = tc_options_default();
        opts.max_k = 2;
        let mut sol = ptr::null_mut();
        assert_eq!(tc_solve(inst, &opts, &mut sol), TcStatus::NoSolution);
        assert!(sol.is_null());
        assert_eq!(last_error(), "no tree-child solution with k <= 2");

        opts.max_k = -1;
        opts.workers = 0;
        assert_eq!(tc_solve(inst, &opts, &mut sol), TcStatus::InputError);

        opts.workers = 4;
        assert_eq!(tc_solve(inst, &opts, &mut sol), TcStatus::Ok);
        assert_eq!(last_error(), "");
        tc_solution_free(sol);

        assert_eq!(tc_solve(ptr::null(), &opts, &mut sol), TcStatus::NullPointer);
        assert_eq!(tc_solution_weight(ptr::null()), -1);
        tc_instance_free(inst);

        let bad = CString::new("((a,b),c").unwrap();
        let mut inst = ptr::null_mut();
        assert_eq!(tc_instance_parse(bad.as_ptr(), &mut inst), TcStatus::InputError);
        assert!(inst.is_null());
        assert!(!last_error().is_empty());
    }
}

#[test]
fn time_limit_status() {
    let mut text = ptr::null_mut();
    unsafe {
        assert_eq!(tc_generate(40, 12, 8, 5, &mut text), TcStatus::Ok);
        let inst_text = CStr::from_ptr(text).to_owned();
        tc_string_free(text);
        let mut inst = ptr::null_mut();
        assert_eq!(tc_instance_parse(inst_text.as_ptr(), &mut inst), TcStatus::Ok);
        let mut opts = tc_options_default();
        opts.use_clusters = false;
        opts.time_limit_secs = 0.0;
        let mut sol = ptr::null_mut();
        assert_eq!(tc_solve(inst, &opts, &mut sol), TcStatus::TimeLimit);
        tc_instance_free(inst);
    }
}

#[test]
fn generate_is_reproducible() {
    unsafe {
        let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(tc_generate(20, 5, 10, 7, &mut a), TcStatus::Ok);
        assert_eq!(tc_generate(20, 5, 10, 7, &mut b), TcStatus::Ok);
        let ta = CStr::from_ptr(a).to_str().unwrap().to_owned();
        assert_eq!(ta, CStr::from_ptr(b).to_str().unwrap());
        assert!(ta.contains("# generator_reticulations: "));
        tc_string_free(a);
        tc_string_free(b);
        assert_eq!(tc_generate(1, 0, 1, 0, &mut a), TcStatus::InputError);
        assert_eq!(tc_generate(5, 0, 1, 0, ptr::null_mut()), TcStatus::NullPointer);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(tc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/treechild.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in ["tc_instance_parse", "tc_solve", "tc_options_default", "tc_generate", "TC_STATUS_TIME_LIMIT"]
    {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{header}\"\nint main(void) {{ TcSolveOptions o = tc_options_default(); (void)o; return TC_STATUS_OK; }}\n"
        ),
    )
    .unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"])
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

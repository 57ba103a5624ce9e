mod common;

use std::io::Write;
use std::process::{Command, Output, Stdio};

use treechild::forest::apply_sequence;
use treechild::newick::parse_instance;
use treechild::CherryPickingSequence;

fn treechild(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_treechild"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn solve_four_tree_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("four.nwk");
    std::fs::write(&path, common::FOUR_TREES.replace("; ", ";\n")).unwrap();
    let out = treechild(&["solve", path.to_str().unwrap()], "");
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "h_tc: 3");
    let network = lines.last().unwrap().strip_prefix("network: ").unwrap();
    assert!(network.matches("#H").count() >= 2);

    let seq_path = dir.path().join("seq.txt");
    std::fs::write(&seq_path, lines[1..lines.len() - 1].join("\n")).unwrap();
    let verified =
        treechild(&["verify", path.to_str().unwrap(), "--sequence", seq_path.to_str().unwrap()], "");
    assert_eq!(verified.status.code(), Some(0), "{}", String::from_utf8_lossy(&verified.stderr));

    let net_path = dir.path().join("net.enwk");
    std::fs::write(&net_path, network).unwrap();
    let shown = treechild(&["verify", path.to_str().unwrap(), "--network", net_path.to_str().unwrap()], "");
    assert_eq!(shown.status.code(), Some(0));
    assert_eq!(stdout(&shown).matches(": displayed").count(), 4);

    let inst = parse_instance(common::FOUR_TREES).unwrap();
    let seq = CherryPickingSequence::parse(&lines[1..lines.len() - 1].join("\n"), &inst.taxa).unwrap();
    assert!(apply_sequence(&inst, &seq).is_valid_tree_child_cps());
}

#[test]
fn solve_respects_max_k() {
    let out = treechild(&["solve", "--max-k", "2", "-"], common::FOUR_TREES);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert_eq!(String::from_utf8_lossy(&out.stderr).trim(), "no tree-child solution with k <= 2");
}

#[test]
fn solve_flags_agree() {
    for flags in [&["-p", "4", "-w", "3"][..], &["--no-rbe"], &["--no-clusters"], &["--time-limit", "30"]] {
        let mut args = vec!["solve"];
        args.extend_from_slice(flags);
        let out = treechild(&args, common::FOUR_TREES);
        assert_eq!(out.status.code(), Some(0));
        assert!(stdout(&out).starts_with("h_tc: 3\n"));
    }
}

#[test]
fn input_errors_exit_two() {
    assert_eq!(treechild(&["solve"], "((a,b),c);\n((a,b),d);").status.code(), Some(2));
    assert_eq!(treechild(&["solve", "/nonexistent/file.nwk"], "").status.code(), Some(2));
    assert_eq!(treechild(&["solve", "--unknown"], "").status.code(), Some(2));
    assert_eq!(treechild(&["solve"], "((a,b,c),d);").status.code(), Some(2));
}

#[test]
fn time_limit_exits_three() {
    let (inst, _) =
        treechild::gen::generate_instance(&treechild::gen::GenParams { n: 40, k: 12, t: 8, seed: 5 })
            .unwrap();
    let text = treechild::gen::instance_text(&inst, 0);
    let out = treechild(&["solve", "--no-clusters", "--time-limit", "0"], &text);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn generate_writes_sidecar() {
    let out = treechild(&["generate", "-n", "20", "-k", "5", "-t", "10", "--seed", "7"], "");
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    let trees = lines.iter().filter(|l| !l.starts_with('#')).count();
    assert!((1..=10).contains(&trees));
    assert!(lines.last().unwrap().starts_with("# generator_reticulations: "));
    let again = treechild(&["generate", "-n", "20", "-k", "5", "-t", "10", "--seed", "7"], "");
    assert_eq!(again.stdout, out.stdout);

    let solved = treechild(&["solve"], &text);
    assert_eq!(solved.status.code(), Some(0));
}

#[test]
fn generate_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inst.nwk");
    let out = treechild(&["generate", "-n", "6", "-k", "2", "-t", "3", "-o", path.to_str().unwrap()], "");
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    assert!(parse_instance(&std::fs::read_to_string(path).unwrap()).is_ok());
}

#[test]
fn oracle_and_stats() {
    let out = treechild(&["oracle", "--max-k", "3"], common::FOUR_TREES);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("h_tc: 3\n"));
    let none = treechild(&["oracle", "--max-k", "2"], common::FOUR_TREES);
    assert_eq!(none.status.code(), Some(1));
    let stats = treechild(&["stats"], common::FOUR_TREES);
    assert_eq!(stdout(&stats).lines().take(2).collect::<Vec<_>>(), ["n: 5", "t: 4"]);
}

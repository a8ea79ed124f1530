use std::fs;
use std::process::{Command, Output};

fn twohop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twohop")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key}= in {text:?}"))
}

const CFG: [&str; 12] = ["--N", "4", "--pe", "0.2", "--w", "5", "--y", "1", "--x1", "1", "--x2", "1"];

#[test]
fn solve_prints_schedule_and_bound() {
    let mut args = vec!["solve"];
    args.extend(CFG);
    args.extend(["--method", "wtb-w"]);
    let o = twohop(&args);
    assert!(o.status.success());
    let text = stdout(&o);
    let n1: Vec<u32> = field(&text, "n1").split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(n1.len(), 5);
    assert!(n1.iter().all(|&a| (1..=3).contains(&a)));
    let wtb: f64 = field(&text, "wtb").parse().unwrap();
    assert!(wtb > 0.0 && wtb < 1.0);
}

#[test]
fn fifty_gives_extra_slot_to_link_one() {
    let o = twohop(&["solve", "--N", "5", "--pe", "0.3", "--w", "3", "--method", "fifty"]);
    assert!(o.status.success());
    assert_eq!(field(&stdout(&o), "n1"), "3,3,3");
}

#[test]
fn mdp_policy_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.txt");
    let p = path.to_str().unwrap();
    let o = twohop(&["solve", "--N", "3", "--pe", "0.4", "--w", "3", "--x1", "1", "--x2", "1", "--method", "mdp", "--out", p]);
    assert!(o.status.success(), "{o:?}");
    let table = fs::read_to_string(&path).unwrap();
    let mut lines = table.lines();
    assert!(lines.next().unwrap().starts_with('#'));
    assert_eq!(lines.next().unwrap(), "N=3 pe=0.4 w=3 y=1 x1=1 x2=1");
    assert_eq!(lines.next().unwrap(), "epoch q1 q2 action value");
    assert!(lines.all(|l| l.split_whitespace().count() == 5));

    let from_file = twohop(&["eval", "--policy-file", p]);
    let inline = twohop(&["eval", "--N", "3", "--pe", "0.4", "--w", "3", "--x1", "1", "--x2", "1", "--method", "mdp"]);
    assert!(from_file.status.success() && inline.status.success());
    assert_eq!(field(&stdout(&from_file), "dvp"), field(&stdout(&inline), "dvp"));
}

#[test]
fn eval_hand_case_exact_and_monte_carlo() {
    let base = ["eval", "--N", "2", "--pe", "0.5", "--w", "2", "--n1", "1,1"];
    let o = twohop(&base);
    assert_eq!(field(&stdout(&o), "dvp"), "0.7500000000");
    let mut enum_args = base.to_vec();
    enum_args.extend(["--evaluator", "enum"]);
    assert_eq!(field(&stdout(&twohop(&enum_args)), "dvp"), "0.7500000000");
    let mut mc = base.to_vec();
    mc.extend(["--evaluator", "mc", "--reps", "20000", "--seed", "1"]);
    let text = stdout(&twohop(&mc));
    let lo: f64 = field(&text, "ci_low").parse().unwrap();
    let hi: f64 = field(&text, "ci_high").parse().unwrap();
    assert!(lo <= 0.75 && 0.75 <= hi);
}

#[test]
fn malformed_policy_file_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    fs::write(&path, "# twohop policy table\nN=2 pe=0.5 w=1 y=1 x1=0 x2=0\nepoch q1 q2 action value\n0 1 0 x 1.0\n").unwrap();
    let o = twohop(&["eval", "--policy-file", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"));
}

#[test]
fn exit_codes() {
    assert_eq!(twohop(&["solve", "--N", "4", "--pe", "0.2", "--w", "3", "--method", "nope"]).status.code(), Some(2));
    assert_eq!(twohop(&["solve", "--pe", "0.2", "--w", "3", "--method", "opt"]).status.code(), Some(2));
    assert_eq!(twohop(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(twohop(&["solve", "--N", "1", "--pe", "0.2", "--w", "3", "--method", "wtb-w"]).status.code(), Some(3));
    let capped = twohop(&["solve", "--N", "4", "--pe", "0.2", "--w", "14", "--method", "opt"]);
    assert_eq!(capped.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&capped.stderr).contains("exceed"));
}

#[test]
fn sweep_writes_sorted_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("fig6.sweep");
    fs::write(&spec, "N = 4\npe = 0.4\nw = 3..4\nx1x2 = 1:1\npolicies = mdp, bp, mw, wfq\n").unwrap();
    let out = dir.path().join("out.csv");
    let run = || {
        let o = twohop(&["sweep", spec.to_str().unwrap(), "--out", out.to_str().unwrap(), "--no-timing"]);
        assert!(o.status.success(), "{o:?}");
        fs::read_to_string(&out).unwrap()
    };
    let first = run();
    assert_eq!(first, run());
    let lines: Vec<&str> = first.lines().collect();
    assert_eq!(lines[0], "x1,x2,w,N,pe,y,policy,dvp,ci_low,ci_high,ms");
    assert_eq!(lines.len(), 9);
    let policies: Vec<&str> = lines[1..5].iter().map(|l| l.split(',').nth(6).unwrap()).collect();
    assert_eq!(policies, ["bp", "mdp", "mw", "wfq"]);
}

#[test]
fn sweep_cell_failure_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.sweep");
    fs::write(&spec, "N = 1\npe = 0.2\nw = 2\nx1x2 = 0:0\npolicies = wtb-w, mw\n").unwrap();
    let o = twohop(&["sweep", spec.to_str().unwrap(), "--no-timing"]);
    assert_eq!(o.status.code(), Some(4));
    let text = stdout(&o);
    assert!(text.lines().next().unwrap().ends_with(",error"));

    fs::write(&spec, "N = 4\npe = 0.2\nw = 2\nx1x2 = 0:0\npolicies =\n").unwrap();
    assert_eq!(twohop(&["sweep", spec.to_str().unwrap()]).status.code(), Some(2));
}

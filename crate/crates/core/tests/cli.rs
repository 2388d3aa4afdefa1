use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

fn corpus(name: &str) -> String {
    let mut p = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    p.push("../../corpus");
    p.push(name);
    p.to_string_lossy().into_owned()
}

fn dtplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dtplan")).args(args).output().expect("binary runs")
}

fn dtplan_stdin(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_dtplan"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn validate_reports_sizes() {
    let o = dtplan(&["validate", &corpus("office_full.fmdp")]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "ok: 6 variables, 400 states, 7 actions\n");
}

#[test]
fn bad_row_sum_exits_with_diagnostic() {
    let o = dtplan_stdin(&["validate", "-"], "states s1 s2\naction a cost 0\n  s1 : s2 0.5\n");
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("row sum 0.5 ≠ 1 at line 3"), "{err}");
}

#[test]
fn office_second_stage_values_are_printed() {
    let o = dtplan(&["solve", &corpus("office_pso.fmdp"), "--method", "vi-finite"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let stage2 = text.split("stage 2\n").nth(1).unwrap();
    for (state, line) in [
        ("M=t,RHM=f,CR=t,RHC=f", "1.000000 PUM"),
        ("M=t,RHM=f,CR=t,RHC=t", "2.430000 DelC"),
        ("M=f,RHM=f,CR=t,RHC=t", "5.430000 DelC"),
        ("M=f,RHM=f,CR=t,RHC=f", "3.900000 GetC"),
        ("M=t,RHM=t,CR=f,RHC=f", "11.000000 DelM"),
    ] {
        assert!(stage2.contains(&format!("  {state} : {line}\n")), "{state}");
    }
}

#[test]
fn output_is_byte_identical_across_runs() {
    for args in [
        vec!["solve", "corpus", "--method", "pi"],
        vec!["svi", "corpus"],
        vec!["ground", "corpus"],
        vec!["minimize", "corpus"],
    ] {
        let path = corpus("coffee_room.fmdp");
        let args: Vec<&str> = args.iter().map(|a| if *a == "corpus" { path.as_str() } else { a }).collect();
        let a = dtplan(&args);
        let b = dtplan(&args);
        assert!(a.status.success(), "{args:?}");
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn grounded_output_reparses() {
    let flat = stdout(&dtplan(&["ground", &corpus("mail_robot.fmdp")]));
    let o = dtplan_stdin(&["validate", "-"], &flat);
    assert_eq!(stdout(&o), "ok: 20 states, 5 actions, 0 events\n");
}

#[test]
fn regression_exit_codes() {
    let path = corpus("office_strips.fmdp");
    let base = ["regress", path.as_str(), "--init", "CR=t,M=t,RHC=f,RHM=f", "--goal", "CR=f,M=f"];
    let o = dtplan(&base);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("plan\n  GetC\n  PUM\n  DelC\n  DelM\n"));
    let mut short = base.to_vec();
    short.extend(["--depth", "3"]);
    assert_eq!(dtplan(&short).status.code(), Some(2));
}

#[test]
fn policy_commands_share_the_policy_file() {
    let dir = std::env::temp_dir().join(format!("dtplan-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let policy = dir.join("ring.policy");
    let names = ["nM", "nH", "nO", "nL", "nC", "mM", "mH", "mO", "mL", "mC"];
    let text: String = names.iter().map(|s| format!("{s} : {}\n", if *s == "mO" { "Stay" } else { "Clk" })).collect();
    std::fs::write(&policy, text).unwrap();
    let composed = stdout(&dtplan(&["compose-events", &corpus("robot_ring.flat")]));
    let model = dir.join("ring.flat");
    std::fs::write(&model, composed).unwrap();
    let (m, p) = (model.to_str().unwrap(), policy.to_str().unwrap());

    let o = dtplan(&["classify", m, "--policy", p]);
    assert_eq!(stdout(&o), "recurrent 0 : mO\ntransient : nM nH nO nL nC mM mH mL mC\nabsorbing : mO\n");

    let o = dtplan(&["simulate", m, "--policy", p, "--start", "nM", "--steps", "30", "--seed", "3"]);
    assert!(stdout(&o).ends_with("30 : mO\n"));

    let o = dtplan(&["evaluate", m, "--policy", p]);
    let exact = stdout(&o);
    let o = dtplan(&["evaluate", m, "--policy", p, "--iters", "2000"]);
    assert_eq!(stdout(&o), exact);
    assert!(exact.contains("nM : "));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn reach_and_search() {
    let path = corpus("office_pso.fmdp");
    let o = dtplan(&["reach", &path, "--start", "M=f,RHM=f,CR=f,RHC=f"]);
    assert_eq!(stdout(&o), "M=f,RHM=t,CR=f,RHC=t\nM=f,RHM=t,CR=f,RHC=f\nM=f,RHM=f,CR=f,RHC=t\nM=f,RHM=f,CR=f,RHC=f\n");
    let o = dtplan(&["search", &path, "--start", "M=t,RHM=f,CR=t,RHC=f", "--depth", "2"]);
    assert!(stdout(&o).starts_with("value : 1.000000\naction : PUM\n"));
    let o = dtplan(&["search", &path, "--start", "M=t,RHM=f,CR=t,RHC=f", "--depth", "2", "--execute", "4"]);
    assert_eq!(stdout(&o).lines().count(), 5);
}

#[test]
fn abstraction_keeps_relevant_variables() {
    let o = dtplan(&["abstract", &corpus("office_full.fmdp"), "--seed-vars", "CR"]);
    assert!(stdout(&o).starts_with("; relevant: Loc CR RHC\n; states: 400 -> 20\n"));
}

#[test]
fn unknown_state_is_a_diagnostic() {
    let o = dtplan(&["search", &corpus("office_pso.fmdp"), "--start", "nowhere", "--depth", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

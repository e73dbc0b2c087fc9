use ditcheck::driver::read_session;
use ditcheck::engine::{replay_cex, Counterexample};
use ditcheck::netlist::parse_netlist;
use ditcheck_cli::app::{EXIT_DATA, EXIT_NOINPUT, EXIT_OK, EXIT_UNKNOWN, EXIT_USAGE, EXIT_VIOLATION};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

fn fx(file: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(file).display().to_string()
}

struct Out {
    code: i32,
    out: String,
    err: String,
}

fn run(args: &[&str]) -> Out {
    let mut argv = vec!["ditcheck".into()];
    argv.extend(args.iter().map(Into::into));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = ditcheck_cli::run(argv, &mut out, &mut err);
    Out {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn campaign(name: &str, rules: &str, dir: &Path, extra: &[&str]) -> Out {
    let (nl, rl, d) = (fx(&format!("{name}.nl")), fx(&format!("{rules}.rules")), dir.display().to_string());
    let mut args = vec!["run", &nl, "--rules", &rl, "--out-dir", &d];
    args.extend(extra);
    run(&args)
}

#[test]
fn parse_prints_canonical_form() {
    let r = run(&["parse", &fx("fx_ct_alu.nl")]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let text = std::fs::read_to_string(fx("fx_ct_alu.nl")).unwrap();
    assert_eq!(parse_netlist(&r.out).unwrap(), parse_netlist(&text).unwrap());
    let r = run(&["parse", &fx("aig_and3.aag"), "--json"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("\"inputs\""));
}

#[test]
fn usage_and_input_errors() {
    assert_eq!(run(&["bogus"]).code, EXIT_USAGE);
    assert_eq!(run(&["run", &fx("fx_ct_alu.nl")]).code, EXIT_USAGE);
    assert_eq!(run(&["--help"]).code, EXIT_OK);
    let r = run(&["parse", "/nonexistent/x.nl"]);
    assert_eq!(r.code, EXIT_NOINPUT);
    assert!(r.err.starts_with("error: /nonexistent/x.nl"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.nl");
    std::fs::write(&bad, "module m\n  input a 4 data\n  output y 1 control\n  drive y = (add a b)\nendmodule\n").unwrap();
    let r = run(&["parse", bad.to_str().unwrap()]);
    assert_eq!(r.code, EXIT_DATA);
    assert!(r.err.contains("bad.nl:"), "{}", r.err);
    let r = run(&["prove", &fx("fx_ct_alu.nl"), "--mode", "per-signal"]);
    assert_eq!(r.code, EXIT_USAGE);
}

#[test]
fn run_exit_codes_and_cex_file() {
    let dir = tempfile::tempdir().unwrap();
    let r = campaign("fx_ct_alu", "fx_ct_alu", dir.path(), &[]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.starts_with("verdict: do\n"), "{}", r.out);

    let r = campaign("fx_tiny_cpu", "fx_tiny_cpu", dir.path(), &[]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.starts_with("verdict: do-phi [constraints: no_branch_div"), "{}", r.out);

    let r = campaign("fx_mul_zeroskip", "fx_mul_zeroskip", dir.path(), &[]);
    assert_eq!(r.code, EXIT_VIOLATION);
    let line = r.out.lines().find(|l| l.starts_with("cex: ")).expect("cex line");
    let path = PathBuf::from(&line[5..]);
    assert_eq!(path.parent().unwrap(), dir.path());
    let name = path.file_name().unwrap().to_str().unwrap();
    assert!(name.starts_with("fx_mul_zeroskip.cex-") && name.ends_with(".json"), "{name}");
    let cex: Counterexample = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let n = parse_netlist(&std::fs::read_to_string(fx("fx_mul_zeroskip.nl")).unwrap()).unwrap();
    assert!(replay_cex(&n, &cex));

    let r = campaign("fx_ct_alu", "fx_ct_alu", dir.path(), &["--max-iterations", "1"]);
    assert_eq!(r.code, EXIT_UNKNOWN);
    assert!(r.out.starts_with("verdict: unknown"));

    let r = campaign("fx_ct_alu", "fx_ct_alu", dir.path(), &["--control", "valid_pipe", "--k", "4"]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.contains("not a proof"));
}

#[test]
fn session_resume() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.json");
    let s = s.to_str().unwrap();
    let first = campaign("fx_tiny_cpu", "fx_tiny_cpu", dir.path(), &["--session", s]);
    assert_eq!(first.code, EXIT_OK);
    assert!(first.out.contains(&format!("session: {s}")));
    let saved = read_session(Path::new(s)).unwrap();
    let again = run(&["run", &fx("fx_tiny_cpu.nl"), "--resume", s]);
    assert_eq!(again.code, EXIT_OK, "{}", again.err);
    assert_eq!(read_session(Path::new(s)).unwrap().obligations_hash(), saved.obligations_hash());

    // A session does not load against a different design.
    let r = run(&["run", &fx("fx_ct_alu.nl"), "--resume", s]);
    assert_eq!(r.code, EXIT_DATA);
}

#[test]
fn prove_single_obligations() {
    let r = run(&["prove", &fx("fx_comb_leak.nl")]);
    assert_eq!(r.code, EXIT_VIOLATION);
    let r = run(&["prove", &fx("fx_pass.nl"), "--json"]);
    assert_eq!(r.code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!(v["status"], "hold");
    let r = run(&["prove", &fx("fx_uninit_ctrl.nl"), "--mode", "base"]);
    assert_eq!(r.code, EXIT_VIOLATION);
    let r = run(&["prove", &fx("fx_sha_like.nl"), "--mode", "unrolled-io", "--k", "3"]);
    assert_eq!(r.code, EXIT_OK);
    let r = run(&["prove", &fx("fx_rounds8.nl"), "--mode", "per-signal", "--signal", "round"]);
    assert_eq!(r.code, EXIT_OK);
}

#[test]
fn oracles() {
    assert_eq!(run(&["oracle", &fx("fx_mul_zeroskip.nl"), "--exhaustive"]).code, EXIT_VIOLATION);
    assert_eq!(run(&["oracle", &fx("fx_pass.nl"), "--exhaustive"]).code, EXIT_OK);
    let r = run(&["oracle", &fx("fx_tiny_cpu_flat.nl"), "--exhaustive", "--budget", "1000"]);
    assert_eq!(r.code, EXIT_UNKNOWN);
    let r = run(&["oracle", &fx("fx_ct_alu.nl"), "--random", "--trials", "200"]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.starts_with("trials: 200, cycles: "));
    let r = run(&["oracle", &fx("fx_div_early.nl"), "--exhaustive", "--rules", &fx("fx_div_early_phi.rules")]);
    assert_eq!(r.code, EXIT_OK, "{}", r.out);
}

#[test]
fn simulate_prints_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let stim = dir.path().join("s.txt");
    std::fs::write(&stim, "cycle 0 start=1 op=0 a=3 b=4\ncycle 1 start=0\ncycles 2\n").unwrap();
    let r = run(&["simulate", &fx("fx_ct_alu.nl"), "--stimuli", stim.to_str().unwrap(), "--json"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let v: serde_json::Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!(v["values"]["result"][1], 7);
    assert_eq!(v["values"]["valid_out"], serde_json::json!([0, 1]));
}

/// Masks the timing column of the obligation table.
fn normalize(report: &str) -> String {
    let mut out = String::new();
    for line in report.lines() {
        let cells: Vec<&str> = line.split('|').collect();
        if cells.len() == 9 && cells[1].trim().chars().all(|c| c.is_ascii_lowercase() || c == '-') && cells[7].trim().parse::<f64>().is_ok() {
            let mut c = cells.clone();
            c[7] = " - ";
            out.push_str(&c.join("|"));
        } else {
            out.push_str(line);
        }
        out.push('\n');
    }
    out
}

#[test]
fn report_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.json");
    let s = s.to_str().unwrap();
    assert_eq!(campaign("fx_tiny_cpu", "fx_tiny_cpu", dir.path(), &["--session", s]).code, EXIT_OK);
    let (nl, rl) = (fx("fx_tiny_cpu.nl"), fx("fx_tiny_cpu.rules"));
    let r = run(&["report", s, "--netlist", &nl, "--rules", &rl]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let golden = include_str!("golden/tiny_cpu_report.md");
    assert_eq!(normalize(&r.out), golden);
    // Exclusions appear exactly as written in the rules file.
    for l in ["constraint no_branch_div = (not (slice opcode 1 1))", "invariant no_flush = (not flush_q)"] {
        assert!(std::fs::read_to_string(&rl).unwrap().contains(l));
        assert!(r.out.lines().any(|x| x == l), "{l}");
    }
    let r = run(&["report", s, "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&r.out).unwrap();
    assert!(v.is_object());
}

#[test]
fn interactive_answers_from_stdin() {
    let feed = |input: &str| {
        let mut child = Command::new(env!("CARGO_BIN_EXE_ditcheck"))
            .args(["run", &fx("fx_ct_alu.nl"), "--interactive", "--out-dir", std::env::temp_dir().to_str().unwrap()])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
        let o = child.wait_with_output().unwrap();
        (o.status.code().unwrap(), String::from_utf8(o.stdout).unwrap(), String::from_utf8(o.stderr).unwrap())
    };
    let (code, out, err) = feed("d\nd\nd\n");
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.starts_with("verdict: do\n"));
    assert_eq!(err.matches("differs at cycle").count(), 3);

    let (code, _, err) = feed("x\nd\nd\nc\n");
    assert_eq!(code, EXIT_VIOLATION);
    assert!(err.contains("unrecognized answer `x`"));

    let (code, _, err) = feed("q\n");
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("campaign stopped"));
}

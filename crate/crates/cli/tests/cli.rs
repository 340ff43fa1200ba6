use std::process::{Command, Output};

fn data(name: &str) -> String {
    format!("{}/../core/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn repfree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repfree"))
        .args(args)
        .env("REPFREE_COLOR", "never")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn parse_reports_notation_and_tree() {
    let o = repfree(&["parse", "-e", "/u/ . /v/"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o),
        "expr1:1: slash\nScalarProduct\n  State u\n  State v\n"
    );
}

#[test]
fn mixed_notation_is_a_parse_error() {
    let o = repfree(&["parse", "-e", "<u|/v/"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("expr1:1:4: error: mixed notation"), "{err}");
}

#[test]
fn chained_element_outside_domain_is_flagged_with_suggestion() {
    let model = data("unbounded.model");
    let o = repfree(&["check", "-m", &model, "-e", "<u|P|v>"]);
    assert_eq!(o.status.code(), Some(2));
    let out = stdout(&o);
    assert!(out.starts_with("expr1:1: error BK1 1:1 "), "{out}");
    assert!(
        out.trim_end().ends_with("[suggestion: /u/ . P/v/]"),
        "{out}"
    );

    let o = repfree(&["check", "-m", &model, "-e", "/u/ . P/v/"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "expr1:1: ok\n");
}

#[test]
fn finite_model_accepts_an_expression_file() {
    let path = std::env::temp_dir().join(format!("repfree-cli-{}.txt", std::process::id()));
    std::fs::write(
        &path,
        "# finite model\n<u|X|v>\n/psi/ . B A/xi/\n\n|u><v| + X\ndag(A)/w/ . /u/\n",
    )
    .unwrap();
    let o = repfree(&["check", "-m", &data("finite.model"), path.to_str().unwrap()]);
    std::fs::remove_file(&path).ok();
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let lines: Vec<_> = stdout(&o)
        .lines()
        .map(|l| l.rsplit(':').nth(1).unwrap().to_string())
        .collect();
    assert_eq!(lines, ["2", "3", "5", "6"]);
}

#[test]
fn missing_model_exits_3() {
    let o = repfree(&["check", "-m", "/nonexistent.model", "-e", "/u/"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("cannot read"));
}

#[test]
fn convert_targets() {
    let o = repfree(&["convert", "--to", "slash", "-e", "<psi|O"]);
    assert_eq!(stdout(&o), "dag(O)/psi/ .\n");
    let o = repfree(&["convert", "--to", "latex-slash", "-e", "/u/ . /v/"]);
    assert_eq!(stdout(&o), "/u/\\lcdot/v/\n");
    let o = repfree(&["convert", "--to", "braket", "-e", "/u/ . P/v/"]);
    assert_eq!(stdout(&o), "<u|P|v>\n");
    assert!(stderr(&o).is_empty());
}

#[test]
fn unrepresentable_conversion_exits_2_but_continues() {
    let o = repfree(&[
        "convert",
        "--to",
        "braket",
        "-e",
        "(2+0i)/psi/ . /xi/",
        "-e",
        "/u/ . /v/",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stdout(&o), "<u|v>\n");
    assert!(stderr(&o).contains("expr1:1: error: unrepresentable"));
}

#[test]
fn demo_unbounded_grows_as_fourth_root() {
    let o = repfree(&["demo", "unbounded"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for (n, v) in [
        (16, "2.000000000000"),
        (256, "4.000000000000"),
        (4096, "8.000000000000"),
    ] {
        assert!(out.contains(&format!("{n}\t{v}\n")), "{out}");
    }
    assert!(out.contains("verdict: divergent"));
}

#[test]
fn demo_riesz_is_seed_stable() {
    let a = repfree(&["demo", "riesz", "--dim", "8", "--seed", "7"]);
    let b = repfree(&["demo", "riesz", "--dim", "8", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn demo_hellinger_structured() {
    let o = repfree(&["demo", "hellinger", "--format", "structured"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o),
        "{\"demo\":\"hellinger\",\"ns\":[10,100,1000],\"values\":[10.0,100.0,1000.0],\
         \"verdict\":\"divergent\",\"exponent\":1.0,\"ok\":true}\n"
    );
}

#[test]
fn eval_finite_scalar_product() {
    let o = repfree(&["eval", "-m", &data("finite.model"), "-e", "/u/ . /v/"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "(-0.11952286093343936-0.11952286093343936i)\n");
}

#[test]
fn eval_truncated_needs_n_and_respects_checker() {
    let model = data("unbounded.model");
    let o = repfree(&["eval", "-m", &model, "-e", "/u/ . /v/"]);
    assert_eq!(o.status.code(), Some(3));

    let o = repfree(&["eval", "-m", &model, "-N", "100", "-e", "/u/ . P/u/"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("SL1"));

    let o = repfree(&[
        "eval",
        "-m",
        &model,
        "-N",
        "100",
        "--force",
        "-e",
        "/u/ . P/u/",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).ends_with("(N=100) [forced: truncation-dependent]\n"));
}

#[test]
fn eval_binds_scalars() {
    let model = data("finite.model");
    let o = repfree(&[
        "eval",
        "-m",
        &model,
        "--let",
        "c=0,1",
        "-e",
        "(c ^ /u/) . /u/",
        "-e",
        "c ^ /u/ . /u/",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    // |u| = 1: (cu, u) = conj(c), while c ^ (u, u) = c.
    assert_eq!(stdout(&o), "(0-1i)\n(0+1i)\n");
    let o = repfree(&["eval", "-m", &model, "-e", "c ^ /u/ . /u/"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn structured_output_is_byte_stable() {
    let model = data("finite.model");
    let args = [
        "check",
        "-m",
        &model,
        "--format",
        "structured",
        "-e",
        "<u|X|v>",
        "-e",
        "<u|/v/",
        "-e",
        "/u/ . A/v/",
    ];
    let a = repfree(&args);
    let b = repfree(&args);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.status.code(), Some(1));
    for line in stdout(&a).lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(
            v["source"].is_string() && v["severity"].is_string(),
            "{line}"
        );
    }
}

#[test]
fn sweep_probe_plot_data() {
    let o = repfree(&[
        "sweep",
        "-m",
        &data("unbounded.model"),
        "--ns",
        "16,256",
        "--probe",
        "u:P",
        "--dsv",
        ",",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "N,value\n16,2e0\n256,4e0\n");
}

#[test]
fn rewrite_adjoint_with_trace() {
    let o = repfree(&["rewrite", "adjoint", "--trace", "-e", "(/u/ ^ /v/ .) A"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("1. adjoint: "), "{out}");
    assert!(out.ends_with("dag(A) (/v/ ^ /u/ .)\n"), "{out}");
}

#[test]
fn rewrite_identity_over_model_basis() {
    let o = repfree(&[
        "rewrite",
        "identity",
        "-m",
        &data("finite.model"),
        "--basis",
        "e",
        "--to",
        "braket",
        "-e",
        "/u/ . /v/",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o),
        "<u|e1> * <e1|v> + <u|e2> * <e2|v> + <u|e3> * <e3|v> + <u|e4> * <e4|v>\n"
    );
}

#[test]
fn explain_and_usage_errors() {
    let o = repfree(&["explain", "bk1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("BK1: "));
    assert_eq!(repfree(&["explain", "ZZ9"]).status.code(), Some(64));
    assert_eq!(repfree(&["frobnicate"]).status.code(), Some(64));
}

#[test]
fn stdin_input() {
    use std::io::Write;
    use std::process::Stdio;
    let mut child = Command::new(env!("CARGO_BIN_EXE_repfree"))
        .args(["convert", "--to", "braket", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"# comment\n/u/ . /v/\n\n/u/ ^ /v/ .\n")
        .unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(stdout(&o), "<u|v>\n|u><v|\n");
}

#[test]
fn antilinear_operators_convert_parenthesized_or_not_at_all() {
    let model = data("finite.model");
    let o = repfree(&["convert", "--to", "braket", "-m", &model, "-e", "/u/ . K/v/", "-e", "K/u/ . /v/"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stdout(&o), "<u|(K|v>)\n");
    assert!(stderr(&o).contains("expr2:1: error: unrepresentable"));
}

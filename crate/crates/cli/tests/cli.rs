use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use neuralfmu::io::write_archive;
use neuralfmu::model::ModelFactory;
use neuralfmu::models::{make_frictionless_pendulum, PendulumParams};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neuralfmu"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn assert_well_formed_svg(path: &Path) {
    let text = std::fs::read_to_string(path).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    assert!(doc.descendants().any(|n| n.has_tag_name("polyline")));
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let out = dir.join(format!("{name}_out"));
    let path = dir.join(format!("{name}.toml"));
    std::fs::write(&path, format!("output_dir = {:?}\n{body}", out.to_str().unwrap())).unwrap();
    path
}

const SMALL: &str = "[dataset]\nsamples = 50\n[train]\nepochs = 20\n";

#[test]
fn simulate_frictionless_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sim.csv");
    let svg = dir.path().join("sim.svg");
    let o = run(&[
        "simulate",
        "--model",
        "frictionless",
        "--t0",
        "0",
        "--t1",
        "10",
        "--record",
        "mass.s",
        "--out",
        csv.to_str().unwrap(),
        "--svg",
        svg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("events"));
    let (header, rows) = read_csv(&csv);
    assert_eq!(header, ["t", "mass.s"]);
    assert_eq!(rows.len(), 1001);
    for r in &rows {
        let exact = 1.1 - 0.6 * (10f64.sqrt() * r[0]).cos();
        assert!((r[1] - exact).abs() < 1e-5);
    }
    assert_well_formed_svg(&svg);
}

#[test]
fn simulate_with_start_values() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sim.csv");
    let o = run(&[
        "simulate",
        "--model",
        "friction",
        "--t1",
        "1",
        "--x0",
        "1.0,-1.5",
        "--set",
        "spring.c=12",
        "--record",
        "mass.s,mass.v,mass.a",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(&csv);
    assert_eq!(header.len(), 4);
    assert_eq!(rows[0][1..3], [1.0, -1.5]);
}

#[test]
fn simulate_unknown_record_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sim.csv");
    let o = run(&[
        "simulate",
        "--model",
        "frictionless",
        "--record",
        "mass.q",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("mass.q"));
    assert!(!csv.exists());
}

#[test]
fn bad_flags_exit_1() {
    assert_eq!(run(&["simulate", "--model", "nope"]).status.code(), Some(1));
    assert_eq!(
        run(&["simulate", "--model", "friction", "--t0", "2", "--t1", "1"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn describe_builtin() {
    let o = run(&["describe", "--builtin", "frictionless"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("mass.s") && text.contains("mass.v"));

    let o = run(&["describe", "--builtin", "friction", "--json"]);
    assert!(o.status.success());
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(json["state_vrs"].as_array().unwrap().len(), 2);
}

#[test]
fn describe_archive_and_xml() {
    let dir = tempfile::tempdir().unwrap();
    let md = (*make_frictionless_pendulum(&PendulumParams::fmu())
        .unwrap()
        .description())
    .clone();
    let fmu = dir.path().join("m.fmu");
    write_archive(&fmu, &md, &[]).unwrap();
    let o = run(&["describe", fmu.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains(&md.guid));

    let xml = dir.path().join("modelDescription.xml");
    std::fs::write(&xml, neuralfmu::io::serialize_model_description(&md)).unwrap();
    assert!(run(&["describe", xml.to_str().unwrap()]).status.success());

    std::fs::write(&xml, "<fmiModelDescription fmiVersion=\"2.0\"><broken").unwrap();
    let o = run(&["describe", xml.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn describe_archive_without_description_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let md = (*make_frictionless_pendulum(&PendulumParams::fmu())
        .unwrap()
        .description())
    .clone();
    let fmu = dir.path().join("m.fmu");
    write_archive(&fmu, &md, &[("resources/a.txt", b"a")]).unwrap();
    // rewrite without the description entry
    let bytes = std::fs::read(&fmu).unwrap();
    let pos = bytes.windows(20).position(|w| w == b"modelDescription.xml").unwrap();
    let mut broken = bytes.clone();
    broken[pos..pos + 5].copy_from_slice(b"xxxxx");
    let last = bytes.windows(20).rposition(|w| w == b"modelDescription.xml").unwrap();
    broken[last..last + 5].copy_from_slice(b"xxxxx");
    std::fs::write(&fmu, broken).unwrap();
    let o = run(&["describe", fmu.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("modelDescription.xml"));
}

#[test]
fn train_evaluate_extract() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run", &format!("checkpoint_epochs = [10]\n{SMALL}"));
    let o = run(&["train", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("run_out");
    for f in ["checkpoint.nfmu", "checkpoint_10.nfmu", "loss.csv", "summary.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let (header, rows) = read_csv(&out.join("loss.csv"));
    assert_eq!(header, ["epoch", "loss"]);
    assert_eq!(rows.len(), 21);
    assert!(rows[20][1] < rows[0][1]);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_params"], 120);

    let ckpt = out.join("checkpoint.nfmu");
    let eval = dir.path().join("eval");
    for scenario in ["train", "test"] {
        let o = run(&[
            "evaluate",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--scenario",
            scenario,
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            eval.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_well_formed_svg(&eval.join(format!("{scenario}_s.svg")));
        assert_well_formed_svg(&eval.join(format!("{scenario}_v.svg")));
        let (header, rows) = read_csv(&eval.join(format!("{scenario}.csv")));
        assert_eq!(header.len(), 7);
        assert_eq!(rows.len(), 401);
    }

    let o = run(&[
        "extract",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--which",
        "friction",
        "--out",
        eval.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(&eval.join("friction.csv"));
    assert_eq!(header, ["v", "f_learned", "f_reference"]);
    assert_eq!(rows.len(), 201);
    assert_well_formed_svg(&eval.join("friction.svg"));
}

#[test]
fn training_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a", SMALL);
    let b = write_config(dir.path(), "b", SMALL);
    assert!(run(&["train", a.to_str().unwrap()]).status.success());
    assert!(run(&["train", b.to_str().unwrap()]).status.success());
    let la = std::fs::read(dir.path().join("a_out/loss.csv")).unwrap();
    let lb = std::fs::read(dir.path().join("b_out/loss.csv")).unwrap();
    assert_eq!(la, lb);
    let ca = std::fs::read(dir.path().join("a_out/checkpoint.nfmu")).unwrap();
    let cb = std::fs::read(dir.path().join("b_out/checkpoint.nfmu")).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn untrained_top_gives_zero_displacement() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "id",
        "[dataset]\nsamples = 10\n[train]\nepochs = 1\nlearning_rate = 0.0\n",
    );
    assert!(run(&["train", cfg.to_str().unwrap()]).status.success());
    let ckpt = dir.path().join("id_out/checkpoint.nfmu");
    let out = dir.path().join("x");
    let o = run(&[
        "extract",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--which",
        "displacement",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, rows) = read_csv(&out.join("displacement.csv"));
    assert!(rows.iter().all(|r| r[3] == 0.0 && r[4] == 0.0));
    assert_well_formed_svg(&out.join("displacement.svg"));
}

#[test]
fn zero_epochs_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "z", "[train]\nepochs = 0\n");
    let o = run(&["train", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("epochs"));
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "d",
        "init = \"identity_normal\"\n[dataset]\nsamples = 50\n[train]\nepochs = 50\nlearning_rate = 1e12\noptimizer = \"gradient_descent\"\n",
    );
    let o = run(&["train", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn missing_checkpoint_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.nfmu");
    let o = run(&[
        "evaluate",
        "--checkpoint",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("none.nfmu"));
}

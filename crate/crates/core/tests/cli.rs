use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use nalgebra::Vector3;
use semland::dynamics::{ControlInput, DynamicsParams, State};
use semland::sim::{write_trace, Mode, TraceRecord};
use sha2::{Digest, Sha256};

fn semland() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_semland"));
    for (k, _) in std::env::vars_os() {
        if k.to_string_lossy().starts_with("SEMLAND_") {
            c.env_remove(k);
        }
    }
    c
}

fn run(args: &[&str]) -> Output {
    semland().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const PLAN: &str = r#"{"start":{"p":[-3,0,2],"v":[0,0,0]},"goal":[0,0,0],
    "corridor":{"boxes":[{"lo":[-10,-10,0],"hi":[10,10,6]}]}}"#;

#[test]
fn plan_reads_stdin_and_maps_errors() {
    let mut child = semland()
        .args(["plan", "--input", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(PLAN.as_bytes())
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let traj: semland::search::ReferenceTrajectory = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(traj.final_position().unwrap().norm() <= 0.2 + 1e-9);

    let dir = tempfile::tempdir().unwrap();
    let wall = dir.path().join("wall.json");
    std::fs::write(
        &wall,
        r#"{"start":{"p":[-3,0,2],"v":[0,0,0]},"goal":[3,0,2],
        "corridor":{"boxes":[{"lo":[-10,-10,0],"hi":[10,10,6]}]},
        "unsafe_regions":[{"box":{"lo":[-0.5,-10,0],"hi":[0.5,10,6]},"semantic_class":"building",
        "buffer":0.0,"is_dynamic":false,"created_at":0}],"config":{"max_expansions":2000}}"#,
    )
    .unwrap();
    let o = run(&["plan", "--input", wall.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(
        err.starts_with("semland: ") && err.lines().count() == 1,
        "{err}"
    );

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "[]").unwrap();
    assert_eq!(
        run(&["plan", "--input", bad.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    let missing = dir.path().join("missing.json");
    assert_eq!(
        run(&["plan", "--input", missing.to_str().unwrap()])
            .status
            .code(),
        Some(4)
    );
}

#[test]
fn usage_and_io_exit_codes() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["fly"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(
        run(&["trial", "--scenario", "/nonexistent/open_field.json"])
            .status
            .code(),
        Some(4)
    );
    assert_eq!(
        run(&["trial", "--scenario", "open_field", "--backend", "psychic"])
            .status
            .code(),
        Some(2)
    );
    // the remote backend without an endpoint is a configuration error
    assert_eq!(
        run(&["trial", "--scenario", "open_field", "--backend", "remote"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["experiment", "--scenario", "open_field", "--trials", "0"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["kb", "query", "--caption", "x", "--k", "0"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&[
            "plot",
            "--trace",
            "/nonexistent.jsonl",
            "--out",
            "/tmp/x.svg"
        ])
        .status
        .code(),
        Some(4)
    );
}

#[test]
fn kb_query_ranks_pedestrian_first() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb.json");
    std::fs::write(
        &kb,
        r#"[
        {"class_name":"pedestrian","keywords":["person","pedestrian","walking"],"is_dynamic":true,
         "min_safe_altitude":2.0,"buffer_radius":3.0,"text":"a person on foot"},
        {"class_name":"vehicle","keywords":["car","truck"],"is_dynamic":true,
         "min_safe_altitude":2.0,"buffer_radius":5.0,"text":"a parked or moving car"},
        {"class_name":"rock","keywords":["rock","stone"],"is_dynamic":false,
         "min_safe_altitude":0.5,"buffer_radius":1.0,"text":"a large rock"}]"#,
    )
    .unwrap();
    let o = run(&[
        "kb",
        "query",
        "--kb",
        kb.to_str().unwrap(),
        "--caption",
        "a person walking",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][..2], ["1", "pedestrian"]);
    let scores: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));

    let o = semland()
        .args(["kb", "index"])
        .env("SEMLAND_KB", &kb)
        .output()
        .unwrap();
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["entries"], 3);
}

fn record(t: f64, p: [f64; 3]) -> TraceRecord {
    let p = Vector3::from(p);
    TraceRecord {
        t,
        state: State {
            p,
            v: Vector3::zeros(),
            att: Vector3::zeros(),
        },
        input: ControlInput::hover(&DynamicsParams::default()),
        mode: Mode::Track,
        reference: p,
        polytopes: vec![],
        unsafe_boxes: vec![],
        specs: vec![],
        agents: vec![],
        mpc_status: None,
    }
}

fn polylines(svg: &str) -> Vec<(String, Vec<(f64, f64)>)> {
    let doc = roxmltree::Document::parse(svg).unwrap();
    doc.descendants()
        .filter(|n| n.has_tag_name("polyline"))
        .map(|n| {
            let pts = n
                .attribute("points")
                .unwrap()
                .split(' ')
                .map(|xy| {
                    let (x, y) = xy.split_once(',').unwrap();
                    (x.parse().unwrap(), y.parse().unwrap())
                })
                .collect();
            (n.attribute("class").unwrap().to_string(), pts)
        })
        .collect()
}

#[test]
fn plot_places_three_ticks_at_expected_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let svg = dir.path().join("t.svg");
    write_trace(
        &trace,
        &[
            record(0.0, [0.0, 0.0, 2.0]),
            record(0.5, [1.0, 0.0, 1.0]),
            record(1.0, [2.0, 2.0, 0.0]),
        ],
    )
    .unwrap();
    let o = run(&[
        "plot",
        "--trace",
        trace.to_str().unwrap(),
        "--out",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&svg).unwrap();
    let lines = polylines(&text);
    // map: points span [0, 2] in x and y, padded 1 m into [-1, 3] over 400 px
    // from (40, 40); strip: t in [0, 1] over 360 px from x=500, z in [0, 3]
    // over 400 px
    let want_map = [(140.0, 340.0), (240.0, 340.0), (340.0, 140.0)];
    let want_strip = [
        (500.0, 440.0 - 2.0 * 400.0 / 3.0),
        (680.0, 440.0 - 400.0 / 3.0),
        (860.0, 440.0),
    ];
    let uav: Vec<&Vec<(f64, f64)>> = lines
        .iter()
        .filter(|(c, _)| c == "uav")
        .map(|(_, p)| p)
        .collect();
    assert_eq!(uav.len(), 2);
    for (got, want) in [(uav[0], &want_map), (uav[1], &want_strip)] {
        assert_eq!(got.len(), 3);
        for (g, w) in got.iter().zip(want.iter()) {
            assert!(
                (g.0 - w.0).abs() <= 0.005 && (g.1 - w.1).abs() <= 0.005,
                "{g:?} vs {w:?}"
            );
        }
    }
    assert!(text.starts_with("<?xml") || text.starts_with("<svg"));
    let root = roxmltree::Document::parse(&text).unwrap();
    assert_eq!(root.root_element().attribute("version"), Some("1.1"));
}

#[test]
fn empty_trace_plots_axes_only() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("empty.jsonl");
    let svg = dir.path().join("empty.svg");
    std::fs::write(&trace, "").unwrap();
    assert_eq!(
        run(&[
            "plot",
            "--trace",
            trace.to_str().unwrap(),
            "--out",
            svg.to_str().unwrap()
        ])
        .status
        .code(),
        Some(0)
    );
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(polylines(&text).is_empty());
    let doc = roxmltree::Document::parse(&text).unwrap();
    assert!(doc
        .descendants()
        .any(|n| n.attribute("class") == Some("frame")));

    std::fs::write(&trace, "{broken\n").unwrap();
    assert_eq!(
        run(&[
            "plot",
            "--trace",
            trace.to_str().unwrap(),
            "--out",
            svg.to_str().unwrap()
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn flags_override_environment() {
    let seed_of = |o: Output| -> u64 {
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        serde_json::from_str::<serde_json::Value>(&stdout(&o)).unwrap()["seed"]
            .as_u64()
            .unwrap()
    };
    let base = ["trial", "--variant", "baseline"];
    let env_only = semland()
        .args(base)
        .env("SEMLAND_SCENARIO", "open_field")
        .env("SEMLAND_SEED", "5")
        .output()
        .unwrap();
    assert_eq!(seed_of(env_only), 5);
    let both = semland()
        .args(base)
        .args(["--seed", "6"])
        .env("SEMLAND_SCENARIO", "open_field")
        .env("SEMLAND_SEED", "5")
        .output()
        .unwrap();
    assert_eq!(seed_of(both), 6);
    // neither: the scenario file's own seed
    let file = semland()
        .args(base)
        .args(["--scenario", "open_field"])
        .output()
        .unwrap();
    assert_eq!(
        seed_of(file),
        semland::sim::builtin("open_field").unwrap().seed
    );
}

fn hash_tree(dir: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let digest = Sha256::digest(std::fs::read(&p).unwrap());
                let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), hex));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn experiment_outputs_are_reproducible() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut stdouts = Vec::new();
    for (i, d) in dirs.iter().enumerate() {
        let jobs = if i == 0 { "1" } else { "2" };
        let o = run(&[
            "experiment",
            "--scenario",
            "open_field",
            "--trials",
            "2",
            "--seed",
            "7",
            "--backend",
            "deterministic",
            "--jobs",
            jobs,
            "--plot",
            "--out-dir",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        stdouts.push(stdout(&o));
    }
    let csv = &stdouts[0];
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], semland::sim::CSV_HEADER);
    assert_eq!(lines.len(), 4);
    for (line, variant) in lines[1..].iter().zip(["Baseline", "NoisyReasoner", "Full"]) {
        assert!(line.starts_with(&format!("{variant},2,")), "{line}");
    }
    assert_eq!(stdouts[0], stdouts[1]);
    let a = hash_tree(dirs[0].path());
    assert_eq!(a, hash_tree(dirs[1].path()));
    // metrics.csv, metrics.json and a trace plus plot per variant and seed
    assert_eq!(a.len(), 2 + 3 * 2 * 2);
    assert!(a.iter().any(|(p, _)| p == "traces/Full_0008.jsonl"));
    assert_eq!(
        std::fs::read_to_string(dirs[0].path().join("metrics.csv")).unwrap(),
        *csv
    );
}

#[test]
fn trial_writes_result_trace_and_plot() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&[
        "trial",
        "--scenario",
        "open_field",
        "--seed",
        "2",
        "--plot",
        "--out-dir",
        d.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let printed: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("result.json")).unwrap())
            .unwrap();
    assert_eq!(printed, saved);
    assert_eq!(saved["trace_path"], "trace.jsonl");
    let trace = semland::sim::read_trace(&d.path().join("trace.jsonl")).unwrap();
    assert!(!trace.is_empty());
    roxmltree::Document::parse(&std::fs::read_to_string(d.path().join("trace.svg")).unwrap())
        .unwrap();
}

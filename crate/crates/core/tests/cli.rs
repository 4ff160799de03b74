use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

const CONFIG: &str = r#"{
  "world": { "rows": 6, "cols": 6, "spacing": 250.0, "jitter": 20.0 },
  "trips": { "count": 24, "min_distance": 1200.0 }
}"#;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn crfmatch(dir: &Path, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_crfmatch"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let r = crfmatch(dir, args);
    assert_eq!(r.code, 0, "{args:?} failed: {}", r.stderr);
    r.stdout
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.json"), CONFIG).unwrap();
    dir
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const DATA: [&str; 4] = [
    "--network",
    "out/network.geojson",
    "--trajectories",
    "out/trajectories.csv",
];

fn pipeline(dir: &Path) {
    ok(
        dir,
        &[
            "generate",
            "--config",
            "run.json",
            "--out",
            "out",
            "--interval",
            "60",
            "--seed",
            "5",
        ],
    );
    ok(
        dir,
        &[
            &[
                "train", "--config", "run.json", "--out", "out", "--reg", "l1", "--lambda", "0.5",
            ][..],
            &DATA,
        ]
        .concat(),
    );
    ok(
        dir,
        &[
            &[
                "match",
                "--config",
                "run.json",
                "--out",
                "out",
                "--model",
                "out/model.json",
            ][..],
            &DATA,
        ]
        .concat(),
    );
    ok(
        dir,
        &[
            &["eval", "--out", "out", "--matches", "out/matches.json"][..],
            &DATA,
        ]
        .concat(),
    );
    ok(
        dir,
        &["report", "--out", "out", "--model", "out/model.json"],
    );
}

#[test]
fn generate_train_match_eval_report_reproduce_byte_for_byte() {
    let (a, b) = (workspace(), workspace());
    pipeline(a.path());
    pipeline(b.path());
    let fa = files(&a.path().join("out"));
    let fb = files(&b.path().join("out"));
    let names: Vec<_> = fa.iter().map(|(n, _)| n.as_str()).collect();
    for want in [
        "network.geojson",
        "trajectories.csv",
        "generate.json",
        "model.json",
        "train.json",
        "matches.json",
        "matches.geojson",
        "eval.json",
        "report.json",
    ] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }
    assert_eq!(fa, fb);

    let eval = json(&a.path().join("out/eval.json"));
    for key in ["point_error_rate", "path_error_rate"] {
        let rate = eval["result"][key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&rate), "{key} = {rate}");
    }
    let model = json(&a.path().join("out/model.json"));
    assert_eq!(model["format"], "crfmatch-model");
    assert_eq!(eval["config"]["paths"]["matches"], "out/matches.json");
}

#[test]
fn seeds_change_the_data() {
    let dir = workspace();
    ok(
        dir.path(),
        &[
            "generate", "--config", "run.json", "--out", "a", "--seed", "1",
        ],
    );
    ok(
        dir.path(),
        &[
            "generate", "--config", "run.json", "--out", "b", "--seed", "2",
        ],
    );
    let a = fs::read(dir.path().join("a/trajectories.csv")).unwrap();
    let b = fs::read(dir.path().join("b/trajectories.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn multi_interval_generation_writes_one_file_per_interval() {
    let dir = workspace();
    ok(
        dir.path(),
        &[
            "generate",
            "--config",
            "run.json",
            "--out",
            "out",
            "--intervals",
            "30,90",
        ],
    );
    for f in [
        "trajectories_30s.csv",
        "trajectories_90s.csv",
        "network.geojson",
    ] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn sweep_is_reproducible_and_records_every_penalty() {
    let run = |dir: &Path| {
        ok(dir, &["generate", "--config", "run.json", "--out", "out"]);
        ok(
            dir,
            &[
                &[
                    "sweep", "--config", "run.json", "--out", "out", "--points", "4", "--decay",
                    "0.4",
                ][..],
                &["--intervals", "60,120", "--max-iter", "150"],
                &DATA,
            ]
            .concat(),
        )
    };
    let (a, b) = (workspace(), workspace());
    let table = run(a.path());
    run(b.path());
    assert!(table.contains("60s") && table.contains("120s"), "{table}");
    assert_eq!(files(&a.path().join("out")), files(&b.path().join("out")));
    let sweep = json(&a.path().join("out/sweep.json"));
    let results = sweep["result"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    for r in results {
        let l1 = &r["outcome"]["l1_sweep"];
        assert_eq!(l1["records"].as_array().unwrap().len(), 4);
        assert_eq!(l1["records"][0]["nonzero"], 0);
    }
    assert!(a.path().join("out/model_l1_60s.json").exists());
    assert!(a.path().join("out/model_l2_120s.json").exists());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = workspace();
    assert_eq!(crfmatch(dir.path(), &["frobnicate"]).code, 2);
    assert_eq!(crfmatch(dir.path(), &["train", "--reg", "l3"]).code, 2);
    assert_eq!(crfmatch(dir.path(), &[]).code, 2);
    assert_eq!(crfmatch(dir.path(), &["--help"]).code, 0);
}

#[test]
fn runtime_errors_exit_with_one_and_explain() {
    let dir = workspace();
    let r = crfmatch(
        dir.path(),
        &[
            "train",
            "--lambda",
            "1",
            "--network",
            "missing.geojson",
            "--trajectories",
            "x.csv",
        ],
    );
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("missing.geojson"), "{}", r.stderr);

    let r = crfmatch(dir.path(), &[&["train"][..], &DATA].concat());
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("--lambda"), "{}", r.stderr);

    fs::write(
        dir.path().join("bad.json"),
        "{\n  \"world\": { \"rows\": 6,, }\n}",
    )
    .unwrap();
    let r = crfmatch(dir.path(), &["generate", "--config", "bad.json"]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("bad.json line 2"), "{}", r.stderr);

    fs::write(dir.path().join("typo.json"), r#"{ "wrold": {} }"#).unwrap();
    assert_eq!(
        crfmatch(dir.path(), &["generate", "--config", "typo.json"]).code,
        1
    );
}

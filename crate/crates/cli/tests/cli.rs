use std::path::Path;
use std::process::{Command, Output};

fn biaslens(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biaslens"))
        .arg("--store")
        .arg(store)
        .args(args)
        .env_remove("BIASLENS_ENDPOINT")
        .env_remove("BIASLENS_TOKEN")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

#[test]
fn gen_prompts_lists_369() {
    let dir = tempfile::tempdir().unwrap();
    let text = stdout(&biaslens(dir.path(), &["gen-prompts"]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 369);
    assert!(lines.contains(&"a person wearing a watch"));
    assert!(lines.contains(&"a person who is a good CEO"));

    let json = stdout(&biaslens(dir.path(), &["gen-prompts", "--json"]));
    let first: serde_json::Value = serde_json::from_str(json.lines().next().unwrap()).unwrap();
    assert_eq!(first["kind"], "object");

    let task = stdout(&biaslens(dir.path(), &["gen-prompts", "--set", "task:coffee", "--count", "5"]));
    assert_eq!(task.lines().count(), 5);
    assert!(task.lines().all(|l| l.to_lowercase().contains("coffee")));
}

#[test]
fn gen_prompts_from_custom_tables() {
    let dir = tempfile::tempdir().unwrap();
    let tables = dir.path().join("tables");
    std::fs::create_dir(&tables).unwrap();
    std::fs::write(tables.join("objects.tsv"), "apple\tholding\teating\tstealing\n").unwrap();
    std::fs::write(tables.join("occupations.txt"), "baker\n").unwrap();
    let text = stdout(&biaslens(dir.path(), &["gen-prompts", "--tables", tables.to_str().unwrap()]));
    assert_eq!(text.lines().count(), 6);
    let fixed = stdout(&biaslens(
        dir.path(),
        &["gen-prompts", "--tables", tables.to_str().unwrap(), "--article-correction"],
    ));
    assert!(fixed.contains("a person holding an apple"));

    std::fs::write(tables.join("objects.tsv"), "apple\tholding\n").unwrap();
    let out = biaslens(dir.path(), &["gen-prompts", "--tables", tables.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("row 1"));
}

#[test]
fn simulate_runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("extreme.toml");
    std::fs::write(
        &profile,
        "name = \"custom\"\np_inject = 0.9\np_inject_global = 0.3\np_omit = 0.15\np_miss = 0.6\n\
         [trigger_map]\nburger = \"mcdonalds\"\n",
    )
    .unwrap();
    let args = |store: &str| {
        vec![
            "run".to_string(),
            "--profile".into(),
            profile.display().to_string(),
            "--seed".into(),
            "7".into(),
            "--run-id".into(),
            "same".into(),
            "--store".into(),
            dir.path().join(store).display().to_string(),
        ]
    };
    let a = Command::new(env!("CARGO_BIN_EXE_biaslens")).args(args("s1")).output().unwrap();
    let b = Command::new(env!("CARGO_BIN_EXE_biaslens")).args(args("s2")).output().unwrap();
    let (a, b) = (stdout(&a), stdout(&b));
    assert_eq!(a, b);
    let report: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(report["run_id"], "same");
    assert_eq!(report["n_records"], 369);

    let again = stdout(&biaslens(&dir.path().join("s1"), &["report", "same"]));
    assert_eq!(again, a);
}

#[test]
fn run_objects_and_listing() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path();
    for (id, profile) in [("base", "base"), ("trig", "trigger")] {
        stdout(&biaslens(
            s,
            &["run", "--prompt-set", "task", "--profile", profile, "--samples", "1000", "--run-id", id],
        ));
    }
    let table = stdout(&biaslens(s, &["objects", "trig", "--baseline", "base", "--top", "3"]));
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        assert!(["mcdonalds", "starbucks", "cocacola"].contains(&row[1]));
        assert_eq!(row[3], format!("+{}", row[2]));
    }
    let listing = stdout(&biaslens(s, &["runs"]));
    assert_eq!(listing.lines().count(), 3);
    assert!(listing.contains("base\tcomplete\t1000\t0\t1000\tsimulate\ttask"));
}

#[test]
fn audit_dataset_uses_caption_as_reference() {
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("dataset.jsonl");
    std::fs::write(
        &records,
        "{\"prompt\":\"a dog on the grass\",\"caption\":\"a dog on the grass\",\"match\":true}\n\
         {\"prompt\":\"a man riding a bike\",\"caption\":\"a man riding a red bike\",\"match\":false}\n",
    )
    .unwrap();
    let out = stdout(&biaslens(
        dir.path(),
        &["audit-dataset", "--records", records.to_str().unwrap(), "--run-id", "ds"],
    ));
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["n_records"], 2);
    assert_eq!(report["mg_raw"], 0.5);
    assert_eq!(report["top_k"][0]["token"], "red");
    assert_eq!(report["gender"]["male"], 0.5);
    let listing = stdout(&biaslens(dir.path(), &["runs"]));
    assert!(listing.contains("ds\tcomplete\t2\t0\t2\timport\trecords"));
}

#[test]
fn errors_exit_nonzero_with_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = biaslens(dir.path(), &["report", "missing"]);
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error[run_not_found]:"));

    let out = biaslens(dir.path(), &["run", "--k", "1"]);
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error[validation_failed]:"));

    let out = biaslens(dir.path(), &["compare", "a"]);
    assert!(stderr(&out).starts_with("error[group_too_small]:"));

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"prompt\":\"x\",\"caption\":\"y\",\"match\":true}\nnot json\n").unwrap();
    let out = biaslens(dir.path(), &["audit-dataset", "--records", bad.to_str().unwrap()]);
    let err = stderr(&out);
    assert!(err.starts_with("error[validation_failed]:") && err.contains("line 2"), "{err}");

    let out = biaslens(dir.path(), &["run", "--adapter", "endpoint"]);
    assert!(stderr(&out).contains("endpoint"));
}

#[test]
fn compare_ranks_imported_reports() {
    let dir = tempfile::tempdir().unwrap();
    let reports = dir.path().join("reports.json");
    let rows = [
        ("lo", 20.0, 0.2, 0.01),
        ("mid", 10.0, 0.5, 0.2),
        ("hi", 2.0, 0.9, 0.7),
    ];
    let json: Vec<serde_json::Value> = rows
        .iter()
        .map(|(id, b, h, m)| serde_json::json!({"run_id": id, "n_records": 100, "bd_raw": b, "hj_raw": h, "mg_raw": m}))
        .collect();
    std::fs::write(&reports, serde_json::to_string(&json).unwrap()).unwrap();
    let ids = stdout(&biaslens(dir.path(), &["import-report", reports.to_str().unwrap()]));
    assert_eq!(ids, "lo\nmid\nhi\n");
    let table = stdout(&biaslens(dir.path(), &["compare", "lo", "mid", "hi", "--group-id", "g"]));
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "group\tg");
    assert_eq!(lines[2], "1\thi\t1.000\t1.000\t1.000\t1.732");
    assert_eq!(lines[4], "3\tlo\t0.000\t0.000\t0.000\t0.000");

    let out = biaslens(dir.path(), &["import-report", reports.to_str().unwrap()]);
    assert!(stderr(&out).starts_with("error[run_conflict]:"));
}

#[test]
fn wordnet_import_and_use() {
    let dir = tempfile::tempdir().unwrap();
    let data_lines = ["00000000 06 n 02 car 0 auto 0 000 | a motor vehicle\n"];
    let data: String = data_lines.concat();
    let index = "auto n 1 0 1 0 00000000\ncar n 1 0 1 0 00000000\n";
    std::fs::write(dir.path().join("data.noun"), &data).unwrap();
    std::fs::write(dir.path().join("index.noun"), index).unwrap();
    let lex_path = dir.path().join("lex.tsv");
    let out = biaslens(
        dir.path(),
        &["import-wordnet", "--dict", dir.path().to_str().unwrap(), "--out", lex_path.to_str().unwrap()],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let tsv = std::fs::read_to_string(&lex_path).unwrap();
    assert_eq!(tsv, "auto\tcar\ncar\tauto\n");

    let records = dir.path().join("r.jsonl");
    std::fs::write(&records, "{\"prompt\":\"a car\",\"caption\":\"an auto\",\"match\":true}\n").unwrap();
    let out = stdout(&biaslens(
        dir.path(),
        &["--synonyms", lex_path.to_str().unwrap(), "audit-dataset", "--records", records.to_str().unwrap()],
    ));
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["hj_raw"], 0.0);

    std::fs::write(dir.path().join("data.noun"), "00000000 06 n zz car 0\n").unwrap();
    let out = biaslens(dir.path(), &["import-wordnet", "--dict", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("byte 0"), "{}", stderr(&out));
}

mod common;

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};

use cfgsmith_core::clustering::ModelFile;
use cfgsmith_core::features::FeatureCatalog;
use cfgsmith_core::planner::CampaignPlan;
use cfgsmith_core::reporting::parse_machine;

use common::*;

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(cfgsmith())
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn header() -> String {
    let catalog = FeatureCatalog::builtin();
    let names: Vec<&str> = catalog.names().collect();
    format!("program_id,{}", names.join(","))
}

/// Two well separated groups of programs: volatile-heavy and pointer-heavy.
fn two_blob_csv() -> String {
    let cat = FeatureCatalog::builtin();
    let vol = cat.index_of("volatiles").unwrap();
    let ptr = cat.index_of("pointers").unwrap();
    let mut csv = header() + "\n";
    for i in 0..20 {
        let mut row = vec![0u64; cat.len()];
        if i < 10 {
            row[vol] = 20;
        } else {
            row[ptr] = 20;
        }
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        csv.push_str(&format!("p{i},{}\n", cells.join(",")));
    }
    csv
}

#[test]
fn extract_counts_rows_and_reports_skips() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    for name in ["a.c", "b.c", "c.c"] {
        std::fs::write(corpus.join(name), "volatile int x; int main(void) { return x; }\n").unwrap();
    }
    let out = run(&["extract", "corpus"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 4);
    assert_eq!(text.lines().next().unwrap(), header());

    let mixed = tmp.path().join("mixed");
    std::fs::create_dir(&mixed).unwrap();
    std::fs::write(mixed.join("blob.bin"), [0u8, 1, 2, 255]).unwrap();
    std::fs::write(mixed.join("only.c"), "int main(void) { return 0; }\n").unwrap();
    let out = run(&["extract", "mixed", "--output", "f.csv"], tmp.path());
    assert!(out.status.success());
    assert_eq!(read_lines(&tmp.path().join("f.csv")).len(), 2);
    assert_eq!(stderr(&out).matches("skipped").count(), 1, "{}", stderr(&out));

    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = run(&["extract", "empty"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("no corpus files"), "{}", stderr(&out));
}

#[test]
fn cluster_two_blobs_and_single_row() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("blobs.csv"), two_blob_csv()).unwrap();
    let out = run(&["cluster", "blobs.csv", "--output", "model.json", "--k-min", "1"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("k = 2"), "{}", stderr(&out));
    let model = ModelFile::load(&tmp.path().join("model.json")).unwrap();
    assert_eq!(model.k, 2);
    assert_eq!(model.sizes, [10, 10]);

    let single = format!("{}\nonly,{}\n", header(), vec!["3"; 32].join(","));
    std::fs::write(tmp.path().join("one.csv"), single).unwrap();
    let out = run(&["cluster", "one.csv", "-o", "one.json"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let model = ModelFile::load(&tmp.path().join("one.json")).unwrap();
    assert_eq!(model.k, 1);
    assert!(model.centroids[0].iter().all(|&c| c == 0.5));
}

#[test]
fn cluster_rejects_bad_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let mut negative = two_blob_csv();
    negative.push_str(&format!("bad,-1{}\n", ",0".repeat(31)));
    std::fs::write(tmp.path().join("neg.csv"), negative).unwrap();
    let out = run(&["cluster", "neg.csv"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("negative count"), "{}", stderr(&out));

    let renamed = two_blob_csv().replacen("volatiles", "volatility", 1);
    std::fs::write(tmp.path().join("hdr.csv"), renamed).unwrap();
    let out = run(&["cluster", "hdr.csv"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("`volatility`"), "{}", stderr(&out));
}

#[test]
fn plan_round_robin_from_model() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("blobs.csv"), two_blob_csv()).unwrap();
    assert!(run(&["cluster", "blobs.csv", "-o", "m.json", "--k-min", "1"], tmp.path()).status.success());
    let out = run(
        &["plan", "--strategy", "kconfig-round-robin", "--budget", "7", "--model", "m.json", "-o", "plan.json"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let plan = CampaignPlan::load(&tmp.path().join("plan.json")).unwrap();
    let schedule: Vec<usize> = plan.schedule.iter().map(|c| c.unwrap()).collect();
    assert_eq!(schedule, [0, 1, 0, 1, 0, 1, 0]);
    assert_eq!(plan.model_ref.as_deref(), Some("m.json"));

    let out = run(&["plan", "--strategy", "kconfig-weighted", "--budget", "7"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("needs a cluster model"));
}

fn mock_config(dir: &Path, strategy: &str, budget: u64) -> std::path::PathBuf {
    synthetic_corpus(&dir.join("corpus"), 1, 12, 4);
    let tc = mock_toolchain(dir, VOLATILE_UNION_SCENARIO);
    let quote = |v: &[String]| {
        let items: Vec<String> = v.iter().map(|s| format!("{s:?}")).collect();
        format!("[{}]", items.join(", "))
    };
    let text = format!(
        "corpus_dir = \"corpus\"\nstrategy = \"{strategy}\"\nbudget = {budget}\nmaster_seed = 5\nworkers = 2\noutput_dir = \"out\"\n\n[toolchain]\ngenerator = {}\ncompiler = {}\n",
        quote(&tc.generator),
        quote(&tc.compiler)
    );
    let path = dir.join("campaign.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_resume_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    mock_config(tmp.path(), "kconfig-round-robin", 50);
    let out = run(&["run", "--config", "campaign.toml"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let dir = tmp.path().join("out");
    let records = read_lines(&dir.join("records.jsonl"));
    assert_eq!(records.len(), 50);
    for f in ["campaign.toml", "plan.json", "model.json", "features.csv", "summary.txt", "failing/manifest.json"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let summary = parse_machine(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.total, 50);
    assert!(summary.mc > 0);

    // The saved copy resumes from anywhere.
    let again = Command::new(cfgsmith())
        .args(["run", "--config", "campaign.toml"])
        .current_dir(&dir)
        .env("RUST_LOG", "info")
        .output()
        .unwrap();
    assert!(again.status.success());
    assert!(stderr(&again).contains("0 trials executed"), "{}", stderr(&again));
    assert_eq!(read_lines(&dir.join("records.jsonl")).len(), 50);

    let out = run(&["report", "out"], tmp.path());
    assert!(out.status.success());
    let table = stdout(&out);
    let row: Vec<&str> = table.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(row[0], "kconfig-round-robin");
    assert_eq!(row.last(), Some(&"50"));

    // A torn last line counts as one skipped trial.
    let mut log = std::fs::OpenOptions::new().append(true).open(dir.join("records.jsonl")).unwrap();
    log.write_all(b"{\"schema\":1,\"trial_in").unwrap();
    let out = run(&["report", "out", "--format", "machine"], tmp.path());
    assert!(out.status.success());
    let s = parse_machine(&stdout(&out)).unwrap();
    assert_eq!((s.skipped, s.total), (1, 51));
}

#[test]
fn report_edge_cases() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["report", "nowhere"], tmp.path());
    assert_eq!(out.status.code(), Some(1));

    std::fs::create_dir(tmp.path().join("empty")).unwrap();
    std::fs::write(tmp.path().join("empty/records.jsonl"), "").unwrap();
    let out = run(&["report", "empty"], tmp.path());
    assert!(out.status.success());
    let table = stdout(&out);
    assert!(table.lines().nth(1).unwrap().split_whitespace().skip(1).all(|c| c == "0"), "{table}");
}

#[test]
fn config_errors_have_stable_messages() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("budget = 0\nstrategy = \"swarm\"\n", "cfgsmith: validation error: budget must be at least 1"),
        ("workers = 0\nstrategy = \"swarm\"\n", "cfgsmith: validation error: workers must be at least 1"),
        (
            "budget = 3\n",
            "cfgsmith: validation error: strategy kconfig-round-robin needs a model file or a corpus_dir",
        ),
        (
            "strategy = \"swarm\"\n[toolchain]\nopt_low = \"-O2\"\nopt_high = \"-O2\"\n",
            "cfgsmith: validation error: opt_low and opt_high are both `-O2`",
        ),
        (
            "strategy = \"swarm\"\n[toolchain]\ncompile_timeout = -1.0\n",
            "cfgsmith: validation error: toolchain.compile_timeout must be a positive number of seconds, got -1",
        ),
    ];
    for (text, golden) in cases {
        std::fs::write(tmp.path().join("c.toml"), text).unwrap();
        let out = run(&["run", "--config", "c.toml"], tmp.path());
        assert_eq!(out.status.code(), Some(1), "{text}");
        assert_eq!(stderr(&out).trim_end(), golden);
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["frobnicate"], tmp.path());
    assert_eq!(out.status.code(), Some(1));

    let out = run(
        &["run", "--strategy", "swarm", "--budget", "2", "--generator", "/nonexistent/csmith", "-o", "c"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("not found"));
}

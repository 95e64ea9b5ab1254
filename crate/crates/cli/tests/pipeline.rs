use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use swarm_qed::recovery::read_records;
use swarm_qed_cli::provenance::Provenance;

const TINY: &str = r#"
[experiment]
replicates = 2
[evolution]
initial_population = 10
generations = 3
batch_size = 4
trials = 2
trial_seconds = 4.0
[recovery]
faults = 3
trials = 2
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_swarm-qed"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) {
    let out = run(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn error_line(out: &Output) -> String {
    let stderr = String::from_utf8_lossy(&out.stderr);
    stderr
        .lines()
        .find(|l| l.starts_with("error: kind="))
        .unwrap_or_else(|| panic!("no error line in {stderr}"))
        .to_string()
}

fn workspace(config: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().to_path_buf();
    fs::write(path.join("tiny.toml"), config).unwrap();
    (dir, path)
}

fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(str::to_string)
        .collect()
}

fn all_files(dir: &Path, out: &mut Vec<PathBuf>) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            all_files(&p, out);
        } else {
            out.push(p);
        }
    }
}

#[test]
fn full_pipeline_outputs_and_provenance() {
    let (_tmp, ws) = workspace(TINY);
    for stage in ["evolve", "reevaluate", "faults", "export"] {
        ok(&[stage, "--config", "tiny.toml", "--out", "run"], &ws);
    }
    ok(&["analyze", "--out", "an", "run"], &ws);
    let run = ws.join("run");

    for r in ["rep_00", "rep_01"] {
        let stats = data_rows(&run.join("evolve").join(r).join("stats.csv"));
        assert_eq!(stats.len(), 3 + 1);
        let coverage: Vec<usize> = stats
            .iter()
            .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
            .collect();
        assert!(coverage.windows(2).all(|w| w[0] <= w[1]), "{coverage:?}");
    }

    // re-evaluation keeps the best over all cells
    let perf = data_rows(&run.join("reevaluate/rep_00/performance.csv"));
    let best = perf
        .iter()
        .map(|l| {
            let (k, p) = l.split_once(',').unwrap();
            (k.parse::<usize>().unwrap(), p.parse::<f64>().unwrap())
        })
        .fold((usize::MAX, f64::NEG_INFINITY), |b, x| {
            if x.1 > b.1 {
                x
            } else {
                b
            }
        });
    let summary = data_rows(&run.join("reevaluate/summary.csv"));
    let fields: Vec<&str> = summary[0].split(',').collect();
    assert_eq!(fields[2].parse::<usize>().unwrap(), best.0);
    assert_eq!(fields[3].parse::<f64>().unwrap(), best.1);
    assert_eq!(summary.len(), 2);

    let text = fs::read_to_string(run.join("faults/records.csv")).unwrap();
    let records = read_records(&text).unwrap();
    assert_eq!(records.len(), 2 * 3);
    let ids: Vec<usize> = records.iter().map(|r| r.fault_id).collect();
    assert_eq!(ids, (0..6).collect::<Vec<_>>());
    for r in &records {
        assert!(r.resilience >= r.impact);
    }

    // every output file opens with the run's provenance
    let expected = Provenance::of_file(&run.join("config.toml")).unwrap();
    let mut files = Vec::new();
    all_files(&run, &mut files);
    assert!(files.len() > 20);
    for f in &files {
        assert_eq!(Provenance::of_file(f).unwrap(), expected, "{}", f.display());
    }
    let mut files = Vec::new();
    all_files(&ws.join("an"), &mut files);
    for f in &files {
        Provenance::of_file(f).unwrap();
    }

    // one run: signatures but no pairwise table
    let an = ws.join("an/analysis");
    assert!(an.join("signatures.csv").exists());
    assert!(an.join("summary.csv").exists());
    assert!(!an.join("pairwise.csv").exists());
    assert_eq!(data_rows(&an.join("signatures.csv")).len(), 3);
}

#[test]
fn reruns_are_verified_no_ops_and_byte_identical() {
    let (_tmp, ws) = workspace(TINY);
    ok(&["evolve", "--config", "tiny.toml", "--out", "a"], &ws);
    ok(
        &[
            "evolve",
            "--config",
            "tiny.toml",
            "--out",
            "b",
            "--threads",
            "1",
        ],
        &ws,
    );
    for f in [
        "evolve/rep_00/archive.csv",
        "evolve/rep_01/archive.csv",
        "evolve/manifest.txt",
    ] {
        assert_eq!(
            fs::read(ws.join("a").join(f)).unwrap(),
            fs::read(ws.join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    for d in ["a", "b"] {
        ok(&["reevaluate", "--out", d], &ws);
        ok(&["faults", "--out", d], &ws);
    }
    assert_eq!(
        fs::read(ws.join("a/faults/records.csv")).unwrap(),
        fs::read(ws.join("b/faults/records.csv")).unwrap()
    );

    let manifest = ws.join("a/evolve/manifest.txt");
    let before = fs::metadata(&manifest).unwrap().modified().unwrap();
    let index = fs::read(ws.join("a/evolve/rep_00/archive.csv")).unwrap();
    ok(&["evolve", "--config", "tiny.toml", "--out", "a"], &ws);
    ok(&["faults", "--out", "a"], &ws);
    assert_eq!(fs::metadata(&manifest).unwrap().modified().unwrap(), before);
    assert_eq!(
        fs::read(ws.join("a/evolve/rep_00/archive.csv")).unwrap(),
        index
    );

    // tampering is caught on rerun
    let stats = ws.join("a/evolve/rep_00/stats.csv");
    let mut text = fs::read_to_string(&stats).unwrap();
    text.push_str("99,0,0,0,0,0,0\n");
    fs::write(&stats, text).unwrap();
    let out = run(&["evolve", "--config", "tiny.toml", "--out", "a"], &ws);
    assert!(!out.status.success());
    assert!(error_line(&out).starts_with("error: kind=integrity "));
}

#[test]
fn pairwise_table_has_one_row_per_algorithm_pair() {
    let (_tmp, ws) = workspace(TINY);
    for (alg, out) in [("qed", "q"), ("hbd", "h")] {
        let cfg = format!("{TINY}\n");
        let cfg = cfg.replacen(
            "[experiment]\n",
            &format!("[experiment]\nalgorithm = \"{alg}\"\n"),
            1,
        );
        fs::write(ws.join(format!("{alg}.toml")), cfg).unwrap();
        let file = format!("{alg}.toml");
        for stage in ["evolve", "reevaluate", "faults"] {
            ok(&[stage, "--config", &file, "--out", out], &ws);
        }
    }
    ok(&["analyze", "--out", "an", "q", "h"], &ws);
    let rows = data_rows(&ws.join("an/analysis/pairwise.csv"));
    assert_eq!(rows.len(), 1);
    assert!(
        rows[0].starts_with("aggregation,hbd,qed,6,6,"),
        "{}",
        rows[0]
    );
    assert_eq!(data_rows(&ws.join("an/analysis/summary.csv")).len(), 2);
}

#[test]
fn errors_are_machine_parsable() {
    let (_tmp, ws) = workspace("[evolution]\ngenerationz = 3\n");
    let out = run(&["evolve", "--config", "tiny.toml", "--out", "run"], &ws);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_line(&out).starts_with("error: kind=config message=\""));
    assert!(error_line(&out).contains("generationz"));

    let out = run(&["reevaluate", "--out", "fresh"], &ws);
    assert!(!out.status.success());
    assert!(error_line(&out).starts_with("error: kind=missing "));

    let out = run(&["analyze", "--out", "an", "nowhere"], &ws);
    assert!(error_line(&out).starts_with("error: kind=missing "));

    let out = run(&["evolve", "--config", "absent.toml", "--out", "run"], &ws);
    assert!(error_line(&out).starts_with("error: kind=missing "));
}

#[test]
fn config_mismatch_is_refused() {
    let (_tmp, ws) = workspace(TINY);
    ok(&["evolve", "--config", "tiny.toml", "--out", "run"], &ws);
    let out = run(
        &[
            "evolve",
            "--config",
            "tiny.toml",
            "--out",
            "run",
            "--seed",
            "5",
        ],
        &ws,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(error_line(&out).starts_with("error: kind=config "));
}

#[test]
fn missing_genome_file_is_reported() {
    let (_tmp, ws) = workspace(TINY);
    ok(&["evolve", "--config", "tiny.toml", "--out", "run"], &ws);
    let genomes = ws.join("run/evolve/rep_00/genomes");
    let victim = fs::read_dir(&genomes)
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    fs::remove_file(victim).unwrap();
    let out = run(&["reevaluate", "--out", "run"], &ws);
    assert!(!out.status.success());
    // the sealed evolve stage no longer matches its manifest
    assert!(error_line(&out).starts_with("error: kind=integrity "));
}

#[test]
fn export_writes_descriptors_and_trial_log() {
    let (_tmp, ws) = workspace(TINY);
    ok(&["evolve", "--config", "tiny.toml", "--out", "run"], &ws);
    ok(&["export", "--out", "run"], &ws);
    let rows = data_rows(&ws.join("run/export/descriptors_rep_00.csv"));
    let archive = data_rows(&ws.join("run/evolve/rep_00/archive.csv"));
    assert_eq!(rows.len(), archive.len());
    for r in &rows {
        // QED cells are described by the six environment indices
        assert_eq!(r.split(',').nth(1), Some("6"));
    }
    let log = fs::read_to_string(ws.join("run/export/best_trial_rep_00.csv")).unwrap();
    let body: Vec<&str> = log.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "cycle,robot,x,y,heading,vl,vr");
    // normal environment: 10 robots, 4 s at 5 Hz
    assert_eq!(body.len() - 1, 10 * 20);
}

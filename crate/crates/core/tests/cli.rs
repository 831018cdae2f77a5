use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qpe_core::basistest::evaluate_corpus;
use qpe_core::datasets::{generate_pair, load_pairs, Family};
use qpe_core::{BasisSpec, DirectionOptions, Effect};

fn qpe(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpe"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("QPE_QUIET", "1")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_corpus(dir: &Path, n: usize, pairs: u64) {
    fs::create_dir_all(dir).unwrap();
    let mut manifest = String::from("file,truth,weight\n");
    for seed in 0..pairs {
        let (s, truth) = generate_pair(Family::AnmGp, n, seed).unwrap();
        let text: String = s.data().rows().into_iter().map(|r| format!("{}\t{}\n", r[0], r[1])).collect();
        fs::write(dir.join(format!("p{seed}.txt")), text).unwrap();
        let t = if truth == Effect::Y { "1" } else { "-1" };
        manifest.push_str(&format!("p{seed}.txt,{t},{}\n", 1 + seed % 2));
    }
    fs::write(dir.join("manifest.csv"), manifest).unwrap();
}

#[test]
fn gen_writes_bundle_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = ["gen", "--family", "lingam", "--d", "10", "--n", "1000", "--graph", "er", "--seed", "7"];
    assert!(qpe(&a, &args).status.success());
    assert!(qpe(&b, &args).status.success());
    let data = fs::read_to_string(a.join("data.csv")).unwrap();
    assert_eq!(data.lines().next().unwrap().split(',').count(), 10);
    assert_eq!(data.lines().count(), 1001);
    let dag = fs::read_to_string(a.join("dag.csv")).unwrap();
    assert_eq!(dag.lines().count(), 10);
    assert!(dag.lines().all(|l| l.split(',').count() == 10));
    assert_eq!(data, fs::read_to_string(b.join("data.csv")).unwrap());
}

#[test]
fn gen_records_heteroscedastic_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qpe(tmp.path(), &["gen", "--family", "heterogauss", "--alpha", "0", "--beta", "0.25", "--d", "4"]);
    assert!(out.status.success());
    let meta = fs::read_to_string(tmp.path().join("config.txt")).unwrap();
    assert!(meta.contains("alpha=0\n"));
    assert!(meta.contains("beta=0.25\n"));
    assert!(meta.contains("family=heterogauss\n"));
}

#[test]
fn single_pair_with_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let (s, truth) = generate_pair(Family::AnmGp, 500, 4).unwrap();
    let csv = tmp.path().join("pair.csv");
    qpe_core::datasets::write_csv(&csv, &s).unwrap();
    let truth = truth.to_string();
    let out = qpe(
        tmp.path(),
        &["direction", "--csv", csv.to_str().unwrap(), "--cols", "x,1", "--truth", &truth],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.lines().any(|l| l.starts_with("pair: x -> y") && l.contains("correct=")));
    let decisions = fs::read_to_string(tmp.path().join("decisions.csv")).unwrap();
    assert_eq!(decisions.lines().count(), 2);
    assert!(decisions.lines().nth(1).unwrap().starts_with("pair,"));
}

#[test]
fn corpus_summary_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    write_corpus(&corpus, 300, 6);
    let out = qpe(tmp.path(), &["direction", "--pairs", corpus.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = evaluate_corpus(&load_pairs(&corpus, &[]).unwrap(), &BasisSpec::Affine, &DirectionOptions::default())
        .unwrap();
    let summary = fs::read_to_string(tmp.path().join("direction_summary.csv")).unwrap();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[2], "6");
    assert_eq!(row[4], format!("{:.6}", report.accuracy.unwrap()));
    assert_eq!(row[5], format!("{:.6}", report.audrc.unwrap()));
    assert_eq!(fs::read_to_string(tmp.path().join("decisions.csv")).unwrap(), report.to_csv());
}

#[test]
fn basis_size_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    write_corpus(&corpus, 200, 2);
    let out = qpe(tmp.path(), &["direction", "--pairs", corpus.to_str().unwrap(), "--basis", "poly:2"]);
    assert!(out.status.success());
    let summary = fs::read_to_string(tmp.path().join("direction_summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next().unwrap(), "basis,k,pairs,decided,accuracy,audrc");
    assert!(lines.next().unwrap().starts_with("poly:2,3,"));
}

#[test]
fn unreadable_input_fails_with_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qpe(tmp.path(), &["direction", "--csv", "/nonexistent/pair.csv", "--cols", "a,b"]);
    assert!(!out.status.success());
    assert!(stdout(&out).contains("status=error"));
    assert!(!out.stderr.is_empty());
}

#[test]
fn order_reports_divergence_trace_and_truthless_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = tmp.path().join("bundle");
    assert!(qpe(&bundle, &["gen", "--family", "lingam", "--d", "4", "--n", "400"]).status.success());
    let b = bundle.to_str().unwrap();

    let with_truth = tmp.path().join("t");
    let out = qpe(&with_truth, &["order", "--bundle", b, "--trace"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("odr="));
    let score = fs::read_to_string(with_truth.join("order_score.csv")).unwrap();
    assert!(score.starts_with("od,odr,edges\n"));
    let trace = fs::read_to_string(with_truth.join("trace.csv")).unwrap();
    assert!(trace.starts_with("step,variable,fisher_info,removed\n"));
    // 4 + 3 + 2 + 1 survivor rows
    assert_eq!(trace.lines().count(), 11);

    let bare = tmp.path().join("n");
    let out = qpe(&bare, &["order", "--bundle", b, "--no-truth"]);
    assert!(out.status.success());
    assert!(!stdout(&out).contains("odr="));
    assert!(bare.join("order.csv").is_file());
    assert!(!bare.join("order_score.csv").exists());
    assert!(!bare.join("trace.csv").exists());
}

#[test]
fn selftest_lists_suites_and_fails_on_injection() {
    let tmp = tempfile::tempdir().unwrap();
    let all = qpe(tmp.path(), &["selftest"]);
    assert!(all.status.success(), "{}", stdout(&all));
    let report = fs::read_to_string(tmp.path().join("selftest.csv")).unwrap();
    for suite in qpe_core::selftest::SUITES {
        assert!(report.contains(&format!("{suite},pass,")), "{report}");
    }

    let one = tmp.path().join("one");
    assert!(qpe(&one, &["selftest", "--suite", "oracle"]).status.success());
    let report = fs::read_to_string(one.join("selftest.csv")).unwrap();
    assert_eq!(report, "suite,status,message\noracle,pass,\n");

    let bad = tmp.path().join("bad");
    let out = qpe(&bad, &["selftest", "--suite", "metrics", "--inject-failure"]);
    assert!(!out.status.success());
    assert!(stdout(&out).contains("status=error"));
    assert!(fs::read_to_string(bad.join("selftest.csv")).unwrap().contains("injected,fail"));
}

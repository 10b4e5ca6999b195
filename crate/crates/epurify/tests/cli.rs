//! End-to-end tests of the command-line surface: determinism of emitted
//! reports, record/replay round trips, and validation exit codes.

use epurify::cli;

fn run(args: &[&str]) -> i32 {
    let full: Vec<String> =
        std::iter::once("epurify".to_string()).chain(args.iter().map(|s| s.to_string())).collect();
    cli::run(full)
}

fn path_str(dir: &tempfile::TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

#[test]
fn identical_invocations_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (f1, f2) = (path_str(&dir, "a.json"), path_str(&dir, "b.json"));
    let base = [
        "protocol",
        "run",
        "--protocol",
        "simple-scrambling",
        "--n",
        "3",
        "--t",
        "1",
        "--epsilon",
        "0.1",
        "--input",
        "adversarial-mix",
        "--mode",
        "exact",
        "--no-timestamp",
        "--out",
    ];
    let mut a = base.to_vec();
    a.push(&f1);
    let mut b = base.to_vec();
    b.push(&f2);
    assert_eq!(run(&a), 0);
    assert_eq!(run(&b), 0);
    let (bytes1, bytes2) = (std::fs::read(&f1).unwrap(), std::fs::read(&f2).unwrap());
    assert!(!bytes1.is_empty());
    assert_eq!(bytes1, bytes2);

    let report: serde_json::Value =
        serde_json::from_slice(&bytes1).expect("report must be valid JSON");
    assert_eq!(report["schema"], "epurify/1");
    assert!(report.get("timestamp_unix").is_none());
    assert_eq!(report["pass"], true);
}

#[test]
fn recorded_run_replays_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let records = path_str(&dir, "records.json");
    let out = path_str(&dir, "sample.json");
    let code = run(&[
        "protocol",
        "run",
        "--protocol",
        "hash-and-compare",
        "--n",
        "4",
        "--s-rounds",
        "4",
        "--epsilon",
        "0.2",
        "--input",
        "near-target",
        "--mode",
        "sample",
        "--runs",
        "200",
        "--seed",
        "11",
        "--records",
        &records,
        "--no-timestamp",
        "--out",
        &out,
    ]);
    assert!(code == 0 || code == 1, "sample run must complete, got exit {code}");

    let all: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(&records).unwrap()).unwrap();
    assert_eq!(all.len(), 200);
    // Replay both a success and (if present) a failure.
    let mut picks = vec![0usize];
    if let Some(i) = all.iter().position(|r| r["outcome"].is_null()) {
        picks.push(i);
    }
    for (k, i) in picks.into_iter().enumerate() {
        let one = path_str(&dir, &format!("record{k}.json"));
        std::fs::write(&one, serde_json::to_string(&all[i]).unwrap()).unwrap();
        let replay_out = path_str(&dir, &format!("replay{k}.json"));
        let code = run(&[
            "protocol",
            "run",
            "--protocol",
            "hash-and-compare",
            "--n",
            "4",
            "--s-rounds",
            "4",
            "--epsilon",
            "0.2",
            "--input",
            "near-target",
            "--seed",
            "11",
            "--replay",
            &one,
            "--no-timestamp",
            "--out",
            &replay_out,
        ]);
        assert_eq!(code, 0, "replay of record {i} did not reproduce the outcome");
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&replay_out).unwrap()).unwrap();
        assert_eq!(report["reproduced"], true);
    }
}

#[test]
fn corrupt_state_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let state = path_str(&dir, "state.json");
    assert_eq!(
        run(&["state", "make", "--n", "2", "--epsilon", "0.1", "--seed", "3", "--out", &state]),
        0
    );

    // Sanity: the untouched file is accepted.
    let out = path_str(&dir, "run.json");
    let base = |input: &str, out: &str| {
        vec![
            "protocol".to_string(),
            "run".to_string(),
            "--protocol".to_string(),
            "random-permutation".to_string(),
            "--n".to_string(),
            "2".to_string(),
            "--t".to_string(),
            "1".to_string(),
            "--epsilon".to_string(),
            "0.1".to_string(),
            "--input".to_string(),
            input.to_string(),
            "--mode".to_string(),
            "exact".to_string(),
            "--no-timestamp".to_string(),
            "--out".to_string(),
            out.to_string(),
        ]
    };
    let ok_args = base(&state, &out);
    let ok_refs: Vec<&str> = ok_args.iter().map(String::as_str).collect();
    assert_eq!(run(&ok_refs), 0);

    // Scale one amplitude so the state is no longer normalized.
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&state).unwrap()).unwrap();
    doc["amps"][0][2] = serde_json::json!(0.9);
    doc["amps"][0][3] = serde_json::json!(0.3);
    let bad = path_str(&dir, "bad.json");
    std::fs::write(&bad, serde_json::to_string(&doc).unwrap()).unwrap();

    let bad_args = base(&bad, &path_str(&dir, "bad_run.json"));
    let bad_refs: Vec<&str> = bad_args.iter().map(String::as_str).collect();
    assert_eq!(run(&bad_refs), 2, "unnormalized state file must be a validation error");
}

#[test]
fn invalid_parameters_exit_2() {
    // mult-table needs l < n, so t = n is rejected.
    assert_eq!(run(&["scramble", "verify", "--n", "3", "--t", "3", "--format", "json"]), 2);
    // missing required epsilon grid
    assert_eq!(run(&["bounds", "table", "--n", "4"]), 2);
}

#[test]
fn bounds_table_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (f1, f2) = (path_str(&dir, "t1.csv"), path_str(&dir, "t2.csv"));
    for f in [&f1, &f2] {
        assert_eq!(
            run(&[
                "bounds",
                "table",
                "--n",
                "4",
                "--t-values",
                "1,2",
                "--epsilons",
                "0.05,0.1",
                "--format",
                "csv",
                "--no-timestamp",
                "--out",
                f,
            ]),
            0
        );
    }
    let text = std::fs::read_to_string(&f1).unwrap();
    assert_eq!(text, std::fs::read_to_string(&f2).unwrap());
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("n,t,epsilon"));
    assert_eq!(text.lines().count(), 1 + 2 * 2);
}

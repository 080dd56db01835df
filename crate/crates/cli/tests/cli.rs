use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bicl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bicl")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn generate(dir: &Path, n: usize, m: usize, k: usize, sigma: f64, seed: u64) -> (String, String) {
    let matrix = dir.join(format!("a_{n}_{m}_{k}_{seed}.txt"));
    let truth = dir.join(format!("t_{n}_{m}_{k}_{seed}.toml"));
    let (mp, tp) = (matrix.to_str().unwrap().to_owned(), truth.to_str().unwrap().to_owned());
    let o = bicl(&[
        "generate", "--n", &n.to_string(), "--m", &m.to_string(), "--k", &k.to_string(),
        "--sigma", &sigma.to_string(), "--seed", &seed.to_string(), "--out-matrix", &mp, "--out-solution", &tp,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    (mp, tp)
}

/// Value following `key` in a whitespace separated summary line.
fn field(line: &str, key: &str) -> String {
    let mut it = line.split_whitespace();
    while let Some(w) = it.next() {
        if w == key {
            return it.next().unwrap().to_owned();
        }
    }
    panic!("no {key} in {line}");
}

#[test]
fn solve_planted_low_noise_at_root() {
    let dir = tempfile::tempdir().unwrap();
    let (matrix, _) = generate(dir.path(), 10, 10, 2, 0.1, 3);
    let out = dir.path().join("sol.toml");
    let o = bicl(&["solve", "--input", &matrix, "--k", "2", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o);
    assert_eq!(field(&line, "cp"), "0");
    assert_eq!(field(&line, "nodes"), "1");
    assert_eq!(field(&line, "status"), "optimal");

    // the stored objective is the recomputed one
    let v = bicl(&["verify", "--matrix", &matrix, "--solution", out.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(0));
    let diff: f64 = field(&stdout(&v), "diff").parse().unwrap();
    assert!(diff <= 1e-9);
    let lb: f64 = field(&line, "lb").parse().unwrap();
    let recomputed: f64 = field(&stdout(&v), "objective").parse().unwrap();
    assert!((lb - recomputed).abs() <= 1e-9 * lb.abs());
}

#[test]
fn missing_k_is_a_usage_error() {
    let o = bicl(&["solve", "--input", "whatever.txt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--k"));
}

#[test]
fn help_exits_zero() {
    assert_eq!(bicl(&["--help"]).status.code(), Some(0));
}

#[test]
fn unreadable_input_exits_one() {
    let o = bicl(&["solve", "--input", "/nonexistent/matrix.txt", "--k", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn tiny_time_limit_exits_two_with_valid_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let (matrix, _) = generate(dir.path(), 25, 25, 4, 0.3, 5);
    let o = bicl(&["solve", "--input", &matrix, "--k", "4", "--time-limit", "0.001", "--format", "json"]);
    assert_eq!(o.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["status"], "time_limit");
    let lb = v["lb"].as_f64().unwrap();
    // an unbounded upper bound serializes as null
    if let Some(ub) = v["ub"].as_f64() {
        assert!(ub >= lb);
    }
}

#[test]
fn csv_format_is_versioned() {
    let dir = tempfile::tempdir().unwrap();
    let (matrix, _) = generate(dir.path(), 6, 5, 2, 0.1, 1);
    let o = bicl(&["solve", "--input", &matrix, "--k", "2", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# schema_version=1");
    assert_eq!(lines[1], "lb,ub,gap_pct,nodes,cp,time_s,status");
    assert_eq!(lines[2].split(',').count(), 7);
}

#[test]
fn trace_has_one_row_per_solve() {
    let dir = tempfile::tempdir().unwrap();
    let (matrix, _) = generate(dir.path(), 10, 10, 4, 0.3, 2);
    let trace = dir.path().join("trace.csv");
    let o = bicl(&["solve", "--input", &matrix, "--k", "4", "--trace", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema_version=1"));
    assert_eq!(lines.next(), Some("node,parent,depth,round,ub,lb,gap_pct,cuts,sdp_iterations"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(!rows.is_empty());
    assert_eq!(rows[0][0], "0");
    assert_eq!(rows[0][1], "");
    let lbs: Vec<f64> = rows.iter().map(|r| r[5].parse().unwrap()).collect();
    assert!(lbs.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn generate_is_deterministic_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    fs::create_dir(&a).unwrap();
    fs::create_dir(&b).unwrap();
    let (ma, ta) = generate(&a, 8, 6, 3, 0.2, 11);
    let (mb, tb) = generate(&b, 8, 6, 3, 0.2, 11);
    assert_eq!(fs::read(&ma).unwrap(), fs::read(&mb).unwrap());
    assert_eq!(fs::read(&ta).unwrap(), fs::read(&tb).unwrap());
    assert_eq!(bicl(&["verify", "--matrix", &ma, "--solution", &ta]).status.code(), Some(0));
}

#[test]
fn zero_noise_background_is_one_half() {
    let dir = tempfile::tempdir().unwrap();
    let (matrix, truth) = generate(dir.path(), 5, 4, 2, 0.0, 9);
    let text = fs::read_to_string(&matrix).unwrap();
    let sol = fs::read_to_string(&truth).unwrap();
    let labels = |key: &str| -> Vec<usize> {
        let line = sol.lines().find(|l| l.starts_with(key)).unwrap();
        let inner = line.split('[').nth(1).unwrap().trim_end_matches(']');
        inner.split(',').map(|x| x.trim().parse().unwrap()).collect()
    };
    let (rows, cols) = (labels("row_labels"), labels("col_labels"));
    for (i, line) in text.lines().skip(1).enumerate() {
        for (j, x) in line.split_whitespace().enumerate() {
            let x: f64 = x.parse().unwrap();
            if rows[i] != cols[j] {
                assert_eq!(x, 0.5);
            } else {
                assert!((0.5..=1.5).contains(&x));
            }
        }
    }
}

#[test]
fn corrupted_labels_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (matrix, truth) = generate(dir.path(), 6, 6, 3, 0.1, 4);
    let text = fs::read_to_string(&truth).unwrap();
    let bad: String = text
        .lines()
        .map(|l| if l.starts_with("row_labels") { "row_labels = [0, 0, 0, 0, 1, 1]".to_owned() } else { l.to_owned() })
        .collect::<Vec<_>>()
        .join("\n");
    let path = dir.path().join("bad.toml");
    fs::write(&path, bad).unwrap();
    let o = bicl(&["verify", "--matrix", &matrix, "--solution", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn elbow_emits_one_row_per_k() {
    let dir = tempfile::tempdir().unwrap();
    let (matrix, _) = generate(dir.path(), 12, 10, 3, 0.1, 6);
    let o = bicl(&["elbow", "--input", &matrix, "--k-min", "2", "--k-max", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,lb,ub");
    let ks: Vec<usize> = lines[1..].iter().map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(ks, vec![2, 3, 4, 5]);
    for l in &lines[1..] {
        let v: Vec<f64> = l.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        assert!(v[0] <= v[1] + 1e-9);
    }
    let bad = bicl(&["elbow", "--input", &matrix, "--k-min", "4", "--k-max", "2"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn bench_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.csv");
    let second = dir.path().join("second.csv");
    for path in [&first, &second] {
        let o = bicl(&["bench", "--sigma", "0.1", "--out-csv", path.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    let text = fs::read_to_string(&first).unwrap();
    assert_eq!(text, fs::read_to_string(&second).unwrap());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# schema_version=1");
    assert_eq!(lines.len(), 2 + 30);
    for l in &lines[2..] {
        let gap: f64 = l.split(',').nth(10).unwrap().parse().unwrap();
        assert!(gap < 0.1, "{l}");
    }
}

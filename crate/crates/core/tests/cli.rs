mod common;

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use shiftest::simulate::Pattern;

use common::{cosine, roll};

fn shiftest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shiftest"))
        .args(args)
        .env("RAYON_NUM_THREADS", "2")
        .output()
        .expect("run shiftest")
}

fn write_curves(path: &Path, period: f64, rows: &[Vec<f64>]) {
    let n = rows[0].len();
    let mut text = String::from("t");
    for j in 0..rows.len() {
        text.push_str(&format!(",c{}", j + 1));
    }
    text.push('\n');
    for i in 0..n {
        text.push_str(&format!("{:.17}", i as f64 * period / n as f64));
        for r in rows {
            text.push_str(&format!(",{:.17}", r[i]));
        }
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

/// Rows of a CSV file as strings, header first.
fn table(path: PathBuf) -> Vec<Vec<String>> {
    fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn column(rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let k = rows[0].iter().position(|h| h == name).unwrap();
    rows[1..].iter().map(|r| r[k].parse().unwrap()).collect()
}

fn estimate(dir: &Path, input: &Path, extra: &[&str]) -> Output {
    let out = dir.join("out");
    let mut args = vec![
        "estimate",
        "--input",
        input.to_str().unwrap(),
        "--output-dir",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    shiftest(&args)
}

#[test]
fn identical_curves_give_zero_shifts() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    let base = Pattern::Sinc15.sample(51, 2.0 * PI, 0.0);
    write_curves(
        &input,
        2.0 * PI,
        &[base.clone(), base.clone(), base.clone()],
    );
    let run = estimate(dir.path(), &input, &[]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let shifts = table(dir.path().join("out/shifts.csv"));
    assert!(column(&shifts, "alpha_hat").iter().all(|a| a.abs() < 1e-10));
    let aligned = table(dir.path().join("out/aligned.csv"));
    let original = table(input.clone());
    assert_eq!(aligned[0], original[0]);
    for name in ["c1", "c2", "c3"] {
        for (a, b) in column(&aligned, name).iter().zip(column(&original, name)) {
            assert!((a - b).abs() < 1e-9);
        }
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["convergence"]["converged"], true);
}

#[test]
fn quarter_period_cosine_shift() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    write_curves(&input, 2.0 * PI, &[cosine(41, 0.0), cosine(41, PI / 2.0)]);
    let run = estimate(dir.path(), &input, &[]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let shifts = table(dir.path().join("out/shifts.csv"));
    assert!((column(&shifts, "alpha_hat")[1] - PI / 2.0).abs() < 1e-4);
    assert!((column(&shifts, "theta_hat")[1] - PI / 2.0).abs() < 1e-4);
}

#[test]
fn alignment_sharpens_the_mean() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    let n = 101;
    let period = 24.0;
    let steps = [0usize, 7, 95, 12, 88, 20];
    let base = Pattern::Sinc15.sample(n, period, 0.0);
    let rows: Vec<Vec<f64>> = steps
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            roll(&base, k)
                .iter()
                .enumerate()
                .map(|(i, v)| v + 0.3 * ((i * 7 + j * 13) as f64).sin())
                .collect()
        })
        .collect();
    write_curves(&input, period, &rows);
    let run = estimate(dir.path(), &input, &[]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let mean = table(dir.path().join("out/mean.csv"));
    let peak = |xs: Vec<f64>| xs.into_iter().fold(f64::NEG_INFINITY, f64::max);
    let raw = peak(column(&mean, "raw_mean"));
    let aligned = peak(column(&mean, "aligned_mean"));
    assert!(aligned > raw + 2.0, "aligned {aligned} raw {raw}");
    let shifts = table(dir.path().join("out/shifts.csv"));
    for (theta, &k) in column(&shifts, "theta_hat").iter().zip(&steps) {
        let expected = shiftest::wrap_time(k as f64 * period / n as f64, period);
        assert!(
            shiftest::wrap_time(theta - expected, period).abs() < 0.05,
            "{theta} vs {expected}"
        );
    }
    let t = column(&mean, "t");
    assert!((t[1] - t[0] - period / n as f64).abs() < 1e-12);
}

#[test]
fn aligned_output_round_trips_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    let base = Pattern::Sinc15.sample(31, 2.0 * PI, 0.0);
    write_curves(
        &input,
        2.0 * PI,
        &[base.clone(), roll(&base, 4), roll(&base, 27)],
    );
    assert!(estimate(dir.path(), &input, &[]).status.success());
    let first: Vec<Vec<u8>> = [
        "shifts.csv",
        "aligned.csv",
        "mean.csv",
        "covariance.csv",
        "report.json",
    ]
    .iter()
    .map(|f| fs::read(dir.path().join("out").join(f)).unwrap())
    .collect();
    let again = dir.path().join("aligned.csv");
    fs::copy(dir.path().join("out/aligned.csv"), &again).unwrap();
    let second = dir.path().join("second");
    let run = shiftest(&[
        "estimate",
        "--input",
        again.to_str().unwrap(),
        "--output-dir",
        second.to_str().unwrap(),
    ]);
    assert!(run.status.success());
    let shifts = table(second.join("shifts.csv"));
    assert!(column(&shifts, "alpha_hat").iter().all(|a| a.abs() < 1e-8));

    assert!(estimate(dir.path(), &input, &[]).status.success());
    let repeat: Vec<Vec<u8>> = [
        "shifts.csv",
        "aligned.csv",
        "mean.csv",
        "covariance.csv",
        "report.json",
    ]
    .iter()
    .map(|f| fs::read(dir.path().join("out").join(f)).unwrap())
    .collect();
    assert_eq!(first, repeat);
}

#[test]
fn exit_codes_follow_the_failing_stage() {
    let dir = tempfile::tempdir().unwrap();

    let even = dir.path().join("even.csv");
    write_curves(&even, 2.0 * PI, &[cosine(40, 0.0), cosine(40, 1.0)]);
    let run = estimate(dir.path(), &even, &[]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("input"));
    let run = estimate(dir.path(), &even, &["--truncate-even"]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let report = fs::read_to_string(dir.path().join("out/report.json")).unwrap();
    assert!(report.contains("dropped the last sample"));

    let broken = dir.path().join("broken.csv");
    fs::write(&broken, "t,a,b\n0,1,2\n1,x,3\n2,1,1\n").unwrap();
    assert_eq!(estimate(dir.path(), &broken, &[]).status.code(), Some(2));
    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "a,b\n1,2\n3\n4,5\n").unwrap();
    assert_eq!(estimate(dir.path(), &ragged, &[]).status.code(), Some(2));
    let missing = dir.path().join("missing.csv");
    assert_eq!(estimate(dir.path(), &missing, &[]).status.code(), Some(2));

    let good = dir.path().join("good.csv");
    write_curves(&good, 2.0 * PI, &[cosine(21, 0.0), cosine(21, 1.0)]);
    let zeros = dir.path().join("zeros.txt");
    fs::write(
        &zeros,
        "# all frequencies off\n".to_string() + &"0\n".repeat(10),
    )
    .unwrap();
    let spec = format!("file:{}", zeros.display());
    let run = estimate(dir.path(), &good, &["--weights", &spec]);
    assert_eq!(
        run.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );

    let flat = dir.path().join("flat.csv");
    write_curves(
        &flat,
        2.0 * PI,
        &[vec![2.0; 21], vec![2.0; 21], vec![2.0; 21]],
    );
    let run = estimate(dir.path(), &flat, &[]);
    assert_eq!(
        run.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
}

#[test]
fn noiseless_simulation_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let run = shiftest(&[
        "simulate",
        "--output-dir",
        out.to_str().unwrap(),
        "--pattern",
        "cosine",
        "--n-curves",
        "4",
        "--n-samples",
        "31",
        "--sigma",
        "0",
        "--replicates",
        "1",
        "--seed",
        "9",
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let study = &summary["study"];
    for b in study["bias"].as_array().unwrap() {
        // limited by the gradient stopping rule, not by the data
        assert!(b.as_f64().unwrap().abs() < 1e-8, "bias {b}");
    }
    for c in study["coverage"].as_array().unwrap() {
        if let Some(c) = c.as_f64() {
            assert!((0.0..=1.0).contains(&c));
        }
    }
    let plots: Vec<_> = fs::read_dir(out.join("plotdata"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(plots.len(), 12);
    for p in &plots {
        let rows = table(p.clone());
        assert_eq!(rows[0], ["alpha", "criterion"]);
        assert_eq!(rows.len() - 1, 629);
        let stem = p.file_stem().unwrap().to_str().unwrap();
        let svg = out.join("figures").join(format!("{stem}.svg"));
        assert!(fs::read_to_string(svg).unwrap().contains("<svg"));
    }
    assert!(table(out.join("replicates.csv")).len() >= 2);
}

#[test]
fn landmark_comparison_on_data() {
    let dir = tempfile::tempdir().unwrap();
    let n = 45;
    let bump: Vec<f64> = (0..n)
        .map(|i| (3.0 * (2.0 * PI * i as f64 / n as f64 - 2.0).cos()).exp())
        .collect();
    let compare = |rows: &[Vec<f64>], name: &str| {
        let input = dir.path().join(format!("{name}.csv"));
        write_curves(&input, 2.0 * PI, rows);
        let out = dir.path().join(name);
        let run = shiftest(&[
            "compare-landmark",
            "--input",
            input.to_str().unwrap(),
            "--output-dir",
            out.to_str().unwrap(),
            "--bandwidth",
            "0.2",
        ]);
        assert!(
            run.status.success(),
            "{}",
            String::from_utf8_lossy(&run.stderr)
        );
        table(out.join("comparison.csv"))
    };

    let rows = compare(&[bump.clone(), roll(&bump, 5), roll(&bump, 40)], "grid");
    let lm = column(&rows, "theta_landmark");
    let m = column(&rows, "theta_m_estimator");
    for (k, (a, b)) in [0usize, 5, 40].iter().zip(lm.iter().zip(&m)) {
        let expected = shiftest::wrap_time(2.0 * PI * *k as f64 / n as f64, 2.0 * PI);
        assert!((a - expected).abs() < 1e-9, "{a} vs {expected}");
        assert!((b - expected).abs() < 1e-8, "{b} vs {expected}");
    }

    let rows = compare(&[bump.clone(), bump.clone()], "same");
    assert!(column(&rows, "theta_landmark")
        .iter()
        .all(|a| a.abs() < 1e-12));

    let rows = compare(&[bump.clone(), vec![1.0; n], roll(&bump, 3)], "flat");
    let flag = rows[0].iter().position(|h| h == "landmark_flag").unwrap();
    let value = rows[0].iter().position(|h| h == "theta_landmark").unwrap();
    assert!(rows[1][flag].is_empty());
    assert!(!rows[2][flag].is_empty() && rows[2][value].is_empty());
    assert!(rows[3][flag].is_empty());
    let third: f64 = rows[3][value].parse().unwrap();
    assert!((third - 2.0 * PI * 3.0 / n as f64).abs() < 1e-9);
}

#[test]
fn landmark_comparison_simulation_mode() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let run = shiftest(&[
        "compare-landmark",
        "--output-dir",
        out.to_str().unwrap(),
        "--replicates",
        "3",
        "--n-curves",
        "3",
        "--seed",
        "4",
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let rows = table(out.join("comparison.csv"));
    assert_eq!(rows.len() - 1, 9);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["mode"], "simulation");
    assert!(
        report["rmse_m_estimator"].as_f64().unwrap()
            < report["rmse_landmark"].as_f64().unwrap() * 10.0
    );
}

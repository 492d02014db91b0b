use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn stopdex(
    config: &Path,
    out: &Path,
    command: &str,
    extra: &[&str],
    threads: Option<&str>,
) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stopdex"));
    cmd.arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .arg(command);
    match threads {
        Some(n) => cmd.env("STOPDEX_THREADS", n),
        None => cmd.env_remove("STOPDEX_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn header(path: &Path, key: &str) -> Option<String> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .filter_map(|l| l.strip_prefix('#'))
        .filter_map(|l| l.trim().strip_prefix(key))
        .map(|v| v.trim_start_matches(':').trim().to_string())
        .next()
}

fn run_fixture(name: &str) -> (Output, tempfile::TempDir) {
    let path = fixtures().join(name);
    let command = header(&path, "command").expect("command header");
    let dir = tempfile::tempdir().unwrap();
    let out = stopdex(&path, dir.path(), &command, &[], None);
    (out, dir)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let head = lines
        .next()
        .unwrap()
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    (head, rows)
}

fn column(head: &[String], name: &str) -> usize {
    head.iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn every_fixture_exits_as_declared() {
    let mut names: Vec<String> = std::fs::read_dir(fixtures())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".conf"))
        .collect();
    names.sort();
    assert!(names.len() >= 10);
    let handles: Vec<_> = names
        .into_iter()
        .map(|name| {
            std::thread::spawn(move || {
                let expected: i32 = header(&fixtures().join(&name), "expect-exit")
                    .map_or(0, |v| v.parse().unwrap());
                let (out, _dir) = run_fixture(&name);
                (name, expected, out)
            })
        })
        .collect();
    for h in handles {
        let (name, expected, out) = h.join().unwrap();
        assert_eq!(
            out.status.code(),
            Some(expected),
            "{name}\nstdout: {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn gbm_lower_thresholds_match_closed_form() {
    let (out, dir) = run_fixture("gbm_forward.conf");
    assert!(out.status.success());
    let (head, rows) = read_csv(&dir.path().join("value_curve.csv"));
    let (ct, cc, clo) = (
        column(&head, "theta"),
        column(&head, "classification"),
        column(&head, "threshold_lo"),
    );
    let (s2, mu, rho) = (0.09f64, 0.05f64, 0.1f64);
    let a = s2 / 2.0;
    let b = mu - s2 / 2.0;
    let gamma = (-b - (b * b + 4.0 * a * rho).sqrt()) / (2.0 * a);
    let cm = -gamma;
    let mut checked = 0;
    for r in &rows {
        if r[cc] != "lower_threshold" {
            continue;
        }
        let theta: f64 = r[ct].parse().unwrap();
        let got: f64 = r[clo].parse().unwrap();
        let want = cm * theta * (rho - mu) / (1.0 + cm);
        assert!((got - want).abs() < 1e-4, "theta {theta}: {got} vs {want}");
        checked += 1;
    }
    assert!(checked > 20, "{checked}");
}

#[test]
fn theta_x_recovers_coefficients() {
    let (out, dir) = run_fixture("theta_x.conf");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (head, rows) = read_csv(&dir.path().join("recovered.csv"));
    let (cx, cs, cm) = (
        column(&head, "x"),
        column(&head, "sigma2"),
        column(&head, "mu"),
    );
    assert!(rows.len() > 100);
    for r in &rows {
        let x: f64 = r[cx].parse().unwrap();
        let s: f64 = r[cs].parse().unwrap();
        let m: f64 = r[cm].parse().unwrap();
        assert!((s - x * x / 3.0).abs() < 1e-4, "sigma2 at {x}: {s}");
        assert!((m - x / 3.0).abs() < 1e-4, "mu at {x}: {m}");
    }
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(!report.contains("[FAIL]"), "{report}");
}

#[test]
fn low_discount_is_infeasible() {
    let (out, dir) = run_fixture("theta_x_infeasible.conf");
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("NegativeVariance"), "{err}");
    assert!(err.contains("rho > 2/3"), "{err}");
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("feasible: false"), "{report}");
    assert!(report.contains("[FAIL] sigma2 >= 0: NegativeVariance"), "{report}");
}

fn broken_config(body: &str) -> Output {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.conf");
    let base = std::fs::read_to_string(fixtures().join("gbm_forward.conf")).unwrap();
    std::fs::write(
        &path,
        base.replacen("[discount]", &format!("{body}\n[discount]"), 1),
    )
    .unwrap();
    stopdex(&path, dir.path(), "forward", &[], None)
}

#[test]
fn config_errors_exit_two() {
    let out = broken_config("bogus_key = 1");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));

    let out = broken_config("[mystery]\na = 1");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mystery"));

    let out = broken_config("G_theta = 1 +");
    assert_eq!(out.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let out = stopdex(
        &dir.path().join("absent.conf"),
        dir.path(),
        "forward",
        &[],
        None,
    );
    assert_eq!(out.status.code(), Some(2));

    let path = dir.path().join("no_sigma.conf");
    let text = std::fs::read_to_string(fixtures().join("gbm_forward.conf")).unwrap();
    let text: String = text
        .lines()
        .filter(|l| !l.starts_with("sigma2"))
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(&path, text).unwrap();
    let out = stopdex(&path, dir.path(), "forward", &[], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma2"));
}

#[test]
fn outputs_are_deterministic() {
    let cfg = fixtures().join("gbm_forward.conf");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(stopdex(&cfg, a.path(), "forward", &[], None)
        .status
        .success());
    assert!(stopdex(&cfg, b.path(), "forward", &[], Some("2"))
        .status
        .success());
    let f = "value_curve.csv";
    assert_eq!(
        std::fs::read(a.path().join(f)).unwrap(),
        std::fs::read(b.path().join(f)).unwrap()
    );
}

#[test]
fn simulation_is_reproducible_across_thread_counts() {
    let cfg = fixtures().join("gbm_simulate.conf");
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let seed = ["--seed", "11"];
    for (d, t) in dirs.iter().zip(["1", "3", "1"]) {
        let out = stopdex(&cfg, d.path(), "simulate", &seed, Some(t));
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let read =
        |d: &tempfile::TempDir| std::fs::read_to_string(d.path().join("estimate.txt")).unwrap();
    assert_eq!(read(&dirs[0]), read(&dirs[1]));
    assert_eq!(read(&dirs[0]), read(&dirs[2]));

    let other = tempfile::tempdir().unwrap();
    assert!(
        stopdex(&cfg, other.path(), "simulate", &["--seed", "12"], None)
            .status
            .success()
    );
    assert_ne!(read(&dirs[0]), read(&other));
}

#[test]
fn grid_flags_override_config() {
    let cfg = fixtures().join("gbm_forward.conf");
    let dir = tempfile::tempdir().unwrap();
    assert!(
        stopdex(&cfg, dir.path(), "forward", &["--theta-grid", "7"], None)
            .status
            .success()
    );
    let (_, rows) = read_csv(&dir.path().join("value_curve.csv"));
    assert_eq!(rows.len(), 7);

    let cfg = fixtures().join("gbm_index.conf");
    assert!(stopdex(&cfg, dir.path(), "index", &["--x-grid", "9"], None)
        .status
        .success());
    let (_, rows) = read_csv(&dir.path().join("index_curve.csv"));
    assert_eq!(rows.len(), 9);
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_levy-bsde"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn levy-bsde")
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn header_field(csv: &str, key: &str) -> f64 {
    csv.lines()
        .filter(|l| l.starts_with('#'))
        .flat_map(|l| l.trim_start_matches('#').split_whitespace())
        .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key} in header"))
        .parse()
        .unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn models_lists_blumenthal_getoor_indices() {
    let out = run(&["models"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let row = |kind: &str| text.lines().find(|l| l.starts_with(kind)).unwrap_or_else(|| panic!("{kind} missing")).to_string();
    assert!(row("cgmy").contains("beta_star = max(0, Y)"));
    assert!(row("merton").contains("beta_star = 0"));
    assert!(row("atomic-harmonic").contains("beta_star = 1"));
}

#[test]
fn analyze_harmonic_second_moment_bracket() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["analyze", "--model", "atomic-harmonic", "--levels", "2,3,4,5,6,7,8,9,10", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let csv = read(dir.path(), "analyze.csv");
    let r = rows(&csv);
    assert_eq!(r.len(), 9);
    for row in r {
        let n: f64 = row[0].parse().unwrap();
        let m2: f64 = row[4].parse().unwrap();
        assert!(1.0 / n <= m2 && m2 <= 1.0 / (n - 1.0), "n={n} m2={m2}");
    }
}

#[test]
fn analyze_merton_tail_mass_below_intensity() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "analyze", "--model", "merton", "--intensity", "2.5", "--mean", "0.1", "--stdev", "0.3",
        "--levels", "1,2,4,8,16,64,1024", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    for row in rows(&read(dir.path(), "analyze.csv")) {
        let lam: f64 = row[2].parse().unwrap();
        assert!(lam <= 2.5 && lam > 0.0, "{row:?}");
    }
}

// Composite Simpson on a log-substituted integrand.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn analyze_cgmy_matches_quadrature() {
    let (c, g, m, y) = (1.0, 3.0, 6.0, 0.5);
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "analyze", "--model", "cgmy", "--C", "1", "--G", "3", "--M", "6", "--Y", "0.5",
        "--levels", "1,4,16,128,1000", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    // x = eps e^{u} above the radius, x = eps e^{-u} below it
    let above = |eps: f64, p: f64, lam: f64| {
        simpson(|u| { let x = eps * u.exp(); c * x.powf(p - y) * (-lam * x).exp() }, 0.0, (60.0 / (lam * eps)).ln(), 200_000)
    };
    let below = |eps: f64, p: f64, lam: f64| {
        simpson(|u| { let x = eps * (-u).exp(); c * x.powf(p - y) * (-lam * x).exp() }, 0.0, 80.0, 200_000)
    };
    for row in rows(&read(dir.path(), "analyze.csv")) {
        let eps: f64 = row[1].parse().unwrap();
        let tail = above(eps, 0.0, g) + above(eps, 0.0, m);
        let m1 = below(eps, 1.0, g) + below(eps, 1.0, m);
        let m2 = below(eps, 2.0, g) + below(eps, 2.0, m);
        let comp = above(eps, 1.0, m) - above(eps, 1.0, g);
        for (col, want) in [(2, tail), (3, m1), (4, m2), (6, comp)] {
            let got: f64 = row[col].parse().unwrap();
            assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0), "eps={eps} col {col}: {got} vs {want}");
        }
    }
}

#[test]
fn invalid_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"model":{"kind":"cgmy","C":1,"G":5,"M":5,"Y":0.5},"pathz":10}"#).unwrap();
    let out = run(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let out = run(&["rate-process", "--model", "cgmy", "--Y", "2.5"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["rate-process", "--model", "cgmy", "--levels", "2,4"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_and_flags_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        format!(r#"{{"model":{{"kind":"cgmy","C":1,"G":5,"M":5,"Y":0.5}},"levels":[2,4,8],"paths":500,"seed":9,"out":{:?}}}"#, a.to_str().unwrap()),
    )
    .unwrap();
    assert_eq!(run(&["rate-process", "--config", cfg.to_str().unwrap()]).status.code(), Some(0));
    let flags = ["rate-process", "--model", "cgmy", "--levels", "2,4,8", "--paths", "500", "--seed", "9", "--out", b.to_str().unwrap()];
    assert_eq!(run(&flags).status.code(), Some(0));
    assert_eq!(read(&a, "rate-process.csv"), read(&b, "rate-process.csv"));
}

#[test]
fn rate_process_cgmy_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = run(&["rate-process", "--model", "cgmy", "--Y", "0.5", "--seed", "1", "--plot", "--out", d]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "rate-process.csv");
    assert_eq!(rows(&csv).len(), 6);
    let svg = read(dir.path(), "rate-process.svg");
    assert!(svg.starts_with("<svg") && svg.contains("-0.625"));
    let slope = header_field(&csv, "fitted_slope");
    assert!((-0.87..=-0.63).contains(&slope), "fitted slope {slope} outside [-0.87, -0.63]");
}

#[test]
fn appendix_gap_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["appendix", "--T", "1", "--paths", "20000", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = read(dir.path(), "appendix.csv");
    for row in rows(&csv) {
        let (est, se): (f64, f64) = (row[2].parse().unwrap(), row[3].parse().unwrap());
        assert!(est >= 0.316 - 3.0 * se, "{row:?}");
    }
}

#[test]
fn boundary_brackets_hold() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["boundary", "--nmax", "1000", "--out", dir.path().to_str().unwrap()]);
    assert!(dir.path().join("boundary.csv").exists());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn verify_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let args = ["rate-process", "--model", "merton", "--levels", "2,4,8", "--paths", "500", "--out", d];
    assert_eq!(run(&args).status.code(), Some(0));
    let mut v = args.to_vec();
    v.push("--verify");
    assert_eq!(run(&v).status.code(), Some(0));

    let path = dir.path().join("rate-process.csv");
    let good = fs::read_to_string(&path).unwrap();
    fs::write(&path, good.replacen("# config_hash=", "# config_hash=0", 1)).unwrap();
    assert_eq!(run(&v).status.code(), Some(1));
    fs::write(&path, good.replacen("\n2,", "\n2,1", 1)).unwrap();
    assert_eq!(run(&v).status.code(), Some(1));
}

#[test]
fn output_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = vec![];
    for threads in ["1", "3"] {
        let d = dir.path().join(threads);
        let out = bin()
            .env("LEVY_BSDE_THREADS", threads)
            .args(["rate-process", "--model", "cgmy", "--levels", "2,4,8,16", "--paths", "800", "--seed", "5"])
            .args(["--out", d.to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        csvs.push(fs::read(d.join("rate-process.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

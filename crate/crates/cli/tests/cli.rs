use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(rel: &str) -> String {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel);
    root.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zerorate")).args(args).output().expect("spawn zerorate")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn pv_of(report: &str) -> String {
    let line = report.lines().find(|l| l.starts_with("# deal=")).expect("summary line");
    let field = line.split_whitespace().find(|f| f.starts_with("pv=")).unwrap();
    field.trim_start_matches("pv=").to_string()
}

fn desk_calibration(dir: &Path) -> PathBuf {
    let surface = dir.join("surface.csv");
    let rates = fixture("rates.csv");
    let vols = fixture("vols.csv");
    let o = run(&[
        "calibrate", "--rates", &rates, "--vols", &vols, "--expiries", "1,3,5", "--tenors", "2,5,10", "--mesh", "6x6",
        "--out", surface.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    surface
}

#[test]
fn bootstrap_reprices_the_ten_year_par_rate() {
    let o = run(&["bootstrap", "--rates", &fixture("rates.csv")]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("# zerorate bootstrap"));
    assert!(text.contains("# valuation_date: 2015-08-03"));
    let row = text.lines().find(|l| l.starts_with("10,") || l.starts_with("10Y,")).expect("10Y row");
    assert!(row.contains("0.02281000"), "{row}");
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    fs::write(&empty, "").unwrap();
    let o = run(&["price", "--rates", &fixture("rates.csv"), "--deal", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["bootstrap", "--rates", dir.path().join("missing.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&[
        "price", "--rates", &fixture("rates.csv"), "--deal", &fixture("deals/callable_range_accrual.json"), "--engine",
        "grid", "--factors", "3",
    ]);
    assert_eq!(o.status.code(), Some(4));

    let o = run(&["price", "--deal", &fixture("deals/bermudan_enter_10y.json")]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn calibrated_surface_round_trips_into_pricing() {
    let dir = tempfile::tempdir().unwrap();
    let surface = desk_calibration(dir.path());
    assert!(dir.path().join("surface_history.csv").exists());

    let args = |out: &str| {
        vec![
            "price".to_string(),
            "--rates".into(),
            fixture("rates.csv"),
            "--deal".into(),
            fixture("deals/bermudan_enter_10y.json"),
            "--engine".into(),
            "grid".into(),
            "--surface".into(),
            surface.to_string_lossy().into_owned(),
            "--out".into(),
            out.into(),
        ]
    };
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let v = args(out.to_str().unwrap());
        let o = run(&v.iter().map(String::as_str).collect::<Vec<_>>());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ra = fs::read_to_string(&a).unwrap();
    let rb = fs::read_to_string(&b).unwrap();
    let strip = |s: &str| s.lines().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&ra), strip(&rb));
    let pv: f64 = pv_of(&ra).parse().unwrap();
    assert!(pv > 0.0 && pv < 2000.0, "pv {pv}");
    let periods = ra.lines().skip_while(|l| !l.starts_with("period,")).count() - 1;
    assert_eq!(periods, 19);
}

#[test]
fn monte_carlo_output_is_reproducible() {
    let args = [
        "price", "--rates", &fixture("rates.csv"), "--deal", &fixture("deals/bermudan_cancel_10y.json"), "--engine", "mc",
        "--paths", "400", "--seed", "7",
    ];
    let a = stdout(&run(&args));
    let b = stdout(&run(&args));
    assert_eq!(a, b);
    assert!(a.contains("std_error="));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "engine = mc\npaths = 300\nseed = 5\n").unwrap();
    let base = ["price", "--rates", &fixture("rates.csv"), "--deal", &fixture("deals/bermudan_cancel_10y.json")];
    let mut with_cfg = vec!["--config", cfg.to_str().unwrap()];
    with_cfg.extend_from_slice(&base);
    let from_cfg = stdout(&run(&with_cfg));
    assert!(from_cfg.lines().next().unwrap().contains("paths=300"));

    with_cfg.extend_from_slice(&["--paths", "200"]);
    let overridden = stdout(&run(&with_cfg));
    assert!(overridden.lines().next().unwrap().contains("paths=200"));
    assert_ne!(pv_of(&from_cfg), pv_of(&overridden));

    fs::write(&cfg, "colour = blue\n").unwrap();
    let mut bad = vec!["--config", cfg.to_str().unwrap()];
    bad.extend_from_slice(&base);
    assert_eq!(run(&bad).status.code(), Some(2));
}

#[test]
fn vega_report_has_one_row_per_expiry() {
    let dir = tempfile::tempdir().unwrap();
    let surface = desk_calibration(dir.path());
    let o = run(&[
        "vega", "--rates", &fixture("rates.csv"), "--instruments", &fixture("vols.csv"), "--expiries", "1,3,5",
        "--tenors", "2,5,10", "--deal", &fixture("deals/cms_spread_swap.json"), "--surface", surface.to_str().unwrap(),
        "--max-term", "10",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let table: Vec<_> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(table[0], "expiry,2Y,5Y,10Y");
    assert_eq!(table.len(), 4);
    for row in &table[1..] {
        for cell in row.split(',').skip(1) {
            assert!(cell.parse::<f64>().unwrap().is_finite());
        }
    }
}

#[test]
fn simulate_reports_martingale_and_dumps_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("field.csv");
    let o = run(&[
        "simulate", "--rates", &fixture("rates.csv"), "--paths", "200", "--horizon", "1", "--h", "0.25",
        "--dump-field", dump.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut rows = 0;
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let mean: f64 = f[3].parse().unwrap();
        let initial: f64 = f[5].parse().unwrap();
        let se: f64 = f[4].parse().unwrap();
        assert!((mean - initial).abs() <= 4.0 * se + 1e-12 * initial, "{line}");
        rows += 1;
    }
    assert!(rows > 0);
    assert!(fs::metadata(&dump).unwrap().len() > 0);
}

use std::fs;
use std::path::Path;

use erdecay_cli::{cli_main, RunConfig};
use erdecay_core::container::read_snapshot;
use erdecay_core::initial_data::make_initial_field;
use erdecay_core::spectral::SpectralLayout;

const TINY: &str = r#"
dim = 2
n = 32
box_periods = 4.0
p = 3.0
gamma = 2.25
r_cut_u0 = 2.5
seed_u0 = 1
r_cut_w0 = 2.5
seed_w0 = 2
dt = 0.01
t_end = 0.5
output_every = 5
snapshots = true
"#;

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["erdecay"];
    argv.extend_from_slice(args);
    cli_main(&argv)
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bootstrap_verify_exit_codes_and_transcript() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["bootstrap-verify", "--gamma", "9/4", "--p-minus", "3", "--out", s(dir.path())]), 0);
    let text = fs::read_to_string(dir.path().join("transcript.txt")).unwrap();
    assert_eq!(text.lines().last(), Some("terminal rate γ/2 = 9/8"));
    assert!(text.contains("iter_final"));

    assert_eq!(run(&["bootstrap-verify", "--p-minus", "12/5"]), 6);
    assert_eq!(run(&["bootstrap-verify", "--p-minus", "29/10", "--lower-bound"]), 0);
    // γ outside (2, 5/2)
    assert_eq!(run(&["bootstrap-verify", "--gamma", "5/2"]), 5);
    assert_eq!(run(&["bootstrap-verify", "--gamma", "x"]), 2);
}

#[test]
fn usage_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["no-such-command"]), 2);
    assert_eq!(run(&["simulate"]), 2);
    let missing = dir.path().join("absent.toml");
    assert_eq!(run(&["simulate", "--config", s(&missing), "--out", s(dir.path())]), 3);
    let bad = write_config(dir.path(), &format!("{TINY}\nunknown_key = 1\n"));
    assert_eq!(run(&["gen-init", "--config", &bad, "--out", s(dir.path())]), 3);
    let cfl = write_config(dir.path(), &TINY.replace("dt = 0.01", "dt = 0.5"));
    assert_eq!(run(&["simulate", "--config", &cfl, "--out", s(&dir.path().join("cfl"))]), 5);
}

#[test]
fn gen_init_container_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), TINY);
    let out = dir.path().join("init");
    assert_eq!(run(&["gen-init", "--config", &cfg_path, "--out", s(&out)]), 0);
    let cfg = RunConfig::parse(TINY).unwrap();
    let layout = SpectralLayout::new(cfg.grid().unwrap());
    let expect = make_initial_field(&cfg.w0_spec(), &layout).unwrap();
    let snap = read_snapshot::<f64, _>(&mut fs::File::open(out.join("w0.erd")).unwrap()).unwrap();
    assert_eq!(snap.name, "w0");
    for (a, b) in snap.field.coeffs().iter().zip(expect.coeffs()) {
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.re.to_bits(), y.re.to_bits());
            assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
    }
    let spectra = fs::read_to_string(out.join("spectra.csv")).unwrap();
    assert!(spectra.starts_with("# erdecay-spectra v1\n"));
}

#[test]
fn simulate_is_deterministic_and_report_recomputes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), TINY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&["simulate", "--config", &cfg_path, "--out", s(&a)]), 0);
    assert_eq!(run(&["simulate", "--config", &cfg_path, "--out", s(&b)]), 0);
    let mut names: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["config.toml", "ledger.csv", "report.json", "snapshots", "splitting.csv", "transcript.txt"]
    );
    for f in ["config.toml", "ledger.csv", "report.json", "splitting.csv", "transcript.txt", "snapshots/w_000050.erd"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let ledger = fs::read_to_string(a.join("ledger.csv")).unwrap();
    assert!(ledger.starts_with("# erdecay-ledger v1\nt,step,norm_u,"));
    assert_eq!(ledger.lines().count(), 2 + 11);

    let before = fs::read(a.join("report.json")).unwrap();
    fs::remove_file(a.join("report.json")).unwrap();
    assert_eq!(run(&["report", "--run", s(&a)]), 0);
    assert_eq!(fs::read(a.join("report.json")).unwrap(), before);
    // the window is far too short for a slope fit
    assert_eq!(run(&["report", "--run", s(&a), "--strict"]), 7);

    let report: serde_json::Value = serde_json::from_slice(&before).unwrap();
    assert_eq!(report["format"], "erdecay-report v1");
    assert_eq!(report["domain"]["k_min"], 0.25);
    assert!(report["window"]["note"].as_str().unwrap().contains("box surrogate"));
}

#[test]
fn fit_decay_reads_any_column() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("# synthetic v1\nt,v\n");
    for i in 0..50 {
        let t = 10f64.powf(i as f64 * 3.0 / 49.0);
        csv.push_str(&format!("{t:e},{:e}\n", (1.0 + t).powf(-1.125)));
    }
    let p = dir.path().join("s.csv");
    fs::write(&p, csv).unwrap();
    assert_eq!(run(&["fit-decay", "--csv", s(&p), "--column", "v", "--target", "-1.125", "--tol", "1e-9"]), 0);
    assert_eq!(run(&["fit-decay", "--csv", s(&p), "--column", "v", "--target", "-1.0", "--tol", "0.01"]), 7);
    assert_eq!(run(&["fit-decay", "--csv", s(&p), "--column", "w"]), 3);
    assert_eq!(run(&["fit-decay", "--csv", s(&p), "--column", "v", "--lo", "1", "--hi", "2"]), 5);
}

#[test]
fn check_props_passes_on_generated_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), TINY);
    let out = dir.path().join("props");
    assert_eq!(run(&["check-props", "--config", &cfg_path, "--out", s(&out), "--samples", "500"]), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("props.json")).unwrap()).unwrap();
    assert_eq!(v["exponent"]["regime"], "p- >= 3");
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
}

#[test]
fn heat_baseline_writes_oracle_fits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), TINY);
    let out = dir.path().join("heat");
    assert_eq!(run(&["heat-baseline", "--config", &cfg_path, "--out", s(&out), "--points", "61"]), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("heat.json")).unwrap()).unwrap();
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
    assert!(fs::read_to_string(out.join("heat.csv")).unwrap().starts_with("# erdecay-heat v1\n"));
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;
use zrp_cli::config::ExperimentConfig;
use zrp_cli::validate::{validate, Severity};
use zrp_cli::{run_experiment, EXIT_CONFIG, EXIT_FAILURE, EXIT_OK};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_zrp-hydro"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Runs the binary and returns (exit code, run directory if one was printed).
fn run(config: &Path, out: &Path, extra: &[&str]) -> (i32, Option<PathBuf>, String) {
    let o = bin().arg(config).arg("--out").arg(out).args(extra).output().unwrap();
    let stdout = String::from_utf8(o.stdout).unwrap();
    let dir = stdout.lines().next().map(PathBuf::from);
    (o.status.code().unwrap(), dir, String::from_utf8(o.stderr).unwrap())
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn parse(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text).unwrap()
}

#[test]
fn linear_thermo_table_has_phi_equal_rho() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "t.toml", "kind = \"thermo-table\"\n[model]\nname = \"linear\"\n[params]\npoints = 40\nrho_max = 8.0\n");
    let (code, dir, _) = run(&cfg, tmp.path(), &[]);
    assert_eq!(code, EXIT_OK);
    let dir = dir.unwrap();
    let (header, rows) = read_csv(&dir.join("thermo.csv"));
    assert_eq!(header, ["rho", "Phi", "S", "dS", "sigma", "chi"]);
    assert_eq!(rows.len(), 40);
    for r in &rows {
        assert!((r[1] - r[0]).abs() <= 1e-10, "{r:?}");
        assert!((r[3] - r[0].ln()).abs() <= 1e-10);
        assert!((r[5] - r[0]).abs() <= 1e-10);
    }
    let (_, fug) = read_csv(&dir.join("fugacity.csv"));
    for r in &fug {
        assert!((r[1] - r[0].exp()).abs() <= 1e-10 * r[1]);
        assert!((r[2] - r[0]).abs() <= 1e-10);
    }
}

#[test]
fn manifest_lists_every_output_with_its_hash() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "t.toml", "kind = \"thermo-table\"\n[model]\nname = \"evans\"\nb = 3.5\n");
    let (code, dir, _) = run(&cfg, tmp.path(), &[]);
    assert_eq!(code, EXIT_OK);
    let dir = dir.unwrap();
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
    let hash = manifest["config_hash"].as_str().unwrap();
    assert!(dir.file_name().unwrap().to_str().unwrap().starts_with(&format!("run-{}-", &hash[..12])));
    let mut listed: Vec<String> = Vec::new();
    for o in manifest["outputs"].as_array().unwrap() {
        let file = o["file"].as_str().unwrap();
        let bytes = fs::read(dir.join(file)).unwrap();
        assert_eq!(o["sha256"].as_str().unwrap(), zrp_cli::artifacts::sha256_hex(&bytes));
        assert_eq!(o["bytes"].as_u64().unwrap(), bytes.len() as u64);
        listed.push(file.into());
    }
    let mut on_disk: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    listed.sort();
    on_disk.sort();
    assert_eq!(listed, on_disk);
}

#[test]
fn figures_are_monotone_and_evans_steepens() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "f.toml", "kind = \"figures\"\n");
    let (code, dir, _) = run(&cfg, tmp.path(), &[]);
    assert_eq!(code, EXIT_OK);
    let dir = dir.unwrap();
    for name in ["evans_b1", "evans_b2.5", "evans_b3.5", "landim_b0.5", "landim_b3", "landim_b5"] {
        let (header, rows) = read_csv(&dir.join(format!("{name}.csv")));
        assert_eq!(header, ["phi", "R"]);
        assert_eq!(rows[0], [0.0, 0.0]);
        assert!((rows.last().unwrap()[0] - 0.99).abs() < 1e-15);
        assert!(rows.windows(2).all(|w| w[1][1] > w[0][1]), "{name} not increasing");
        let slope = |a: &[f64], b: &[f64]| (b[1] - a[1]) / (b[0] - a[0]);
        let k = rows.len();
        if name.starts_with("evans") {
            assert!(slope(&rows[k - 2], &rows[k - 1]) > 5.0 * slope(&rows[0], &rows[1]), "{name} does not steepen");
        }
    }
}

#[test]
fn missing_seed_is_an_error() {
    let d = validate(&parse("kind = \"simulate\"\n[model]\nname = \"constant\"\n[params]\nn = 16\nt = 1.0\nrho_star = 1.0\n"));
    assert!(d.iter().any(|d| d.severity == Severity::Error && d.field == "seed"), "{d:?}");
}

#[test]
fn missing_parameters_are_named() {
    let d = validate(&parse("kind = \"ldrate\"\n[model]\nname = \"constant\"\n"));
    for field in ["params.m", "params.t", "params.dt", "params.rho_star"] {
        assert!(d.iter().any(|d| d.severity == Severity::Error && d.field == field), "{field}: {d:?}");
    }
    let d = validate(&parse("seed = 1\n"));
    assert_eq!(d[0].field, "kind");
}

#[test]
fn invalid_models_are_errors() {
    for (text, field) in [
        ("kind = \"thermo-table\"\n[model]\nname = \"quadratic\"\n", "model.name"),
        ("kind = \"thermo-table\"\n[model]\nname = \"evans\"\n", "model.b"),
        ("kind = \"thermo-table\"\n[model]\nname = \"evans\"\nb = -1.0\n", "model"),
        ("kind = \"thermo-table\"\n[model]\nname = \"tabulated\"\n", "model.values"),
        ("kind = \"thermo-table\"\n", "model"),
    ] {
        let d = validate(&parse(text));
        assert!(d.iter().any(|d| d.severity == Severity::Error && d.field == field), "{text}: {d:?}");
    }
}

#[test]
fn dt_above_stability_estimate_warns_with_a_suggestion() {
    let d = validate(&parse("kind = \"ldrate\"\n[model]\nname = \"linear\"\n[params]\nm = 64\nt = 0.01\ndt = 0.001\nrho_star = 1.0\n"));
    let w = d.iter().find(|d| d.field == "params.dt").expect("cfl warning");
    assert_eq!(w.severity, Severity::Warning);
    assert!(w.message.contains("suggested dt"), "{}", w.message);
    let d = validate(&parse("kind = \"ldrate\"\n[model]\nname = \"linear\"\n[params]\nm = 64\nt = 0.01\ndt = 0.00005\nrho_star = 1.0\n"));
    assert!(d.is_empty(), "{d:?}");
}

#[test]
fn evans_near_saturation_warns_with_sup_estimate() {
    let d = validate(&parse("kind = \"tagged\"\nseed = 1\n[model]\nname = \"evans\"\nb = 3.5\n[params]\nn = 16\nt = 1.0\nrho_star = 0.6\nreplicas = 200\n"));
    let w = d.iter().find(|d| d.field == "params.rho_star").expect("saturation warning");
    assert_eq!(w.severity, Severity::Warning);
    assert!(w.message.contains("sup R"), "{}", w.message);
    let d = validate(&parse("kind = \"tagged\"\nseed = 1\n[model]\nname = \"evans\"\nb = 3.5\n[params]\nn = 16\nt = 1.0\nrho_star = 5.0\nreplicas = 200\n"));
    assert!(d.iter().any(|d| d.severity == Severity::Error && d.field == "params.rho_star"), "{d:?}");
}

#[test]
fn few_replicas_warn() {
    let d = validate(&parse("kind = \"tagged\"\nseed = 1\n[model]\nname = \"constant\"\n[params]\nn = 16\nt = 1.0\nrho_star = 1.0\nreplicas = 20\n"));
    assert_eq!(d.len(), 1);
    assert_eq!((d[0].severity, d[0].field.as_str()), (Severity::Warning, "params.replicas"));
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let bad = write_config(tmp.path(), "bad.toml", "kind = \"simulate\"\n[model]\nname = \"constant\"\n[params]\nn = 16\nt = 1.0\nrho_star = 1.0\n");
    let (code, dir, stderr) = run(&bad, &out, &[]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(dir.is_none());
    assert!(stderr.contains("seed"), "{stderr}");

    let unparsable = write_config(tmp.path(), "u.toml", "kind = \"simulate\"\nbogus = 1\n");
    assert_eq!(run(&unparsable, &out, &[]).0, EXIT_CONFIG);
    assert_eq!(run(&tmp.path().join("absent.toml"), &out, &[]).0, EXIT_CONFIG);

    let (code, dir, _) = run(&bad, &out, &["--seed", "9", "--validate-only"]);
    assert_eq!(code, EXIT_OK);
    assert!(dir.is_none());
    assert!(!out.exists());

    let (code, dir, _) = run(&bad, &out, &["--seed", "9"]);
    assert_eq!(code, EXIT_OK);
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.unwrap().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 9);
}

#[test]
fn module_failure_exits_with_three() {
    let tmp = TempDir::new().unwrap();
    // bypasses validation: the horizon is not a whole number of steps
    let mut cfg = parse("kind = \"ldrate\"\n[model]\nname = \"constant\"\n[params]\nm = 16\nt = 0.01\ndt = 0.003\nrho_star = 1.0\n");
    cfg.out = Some(tmp.path().to_path_buf());
    let run = run_experiment(&cfg, Vec::new());
    assert_eq!(run.code, EXIT_FAILURE);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(run.run_dir.unwrap().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "failed");
    assert!(manifest["error"].as_str().unwrap().contains("field path"));
}

#[test]
fn identical_config_and_seed_reproduce_bytes() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        ("sim.toml", "kind = \"simulate\"\nseed = 21\n[model]\nname = \"evans\"\nb = 3.5\n[params]\nn = 32\nt = 0.5\nrho_star = 0.4\nsnapshot_dt = 0.1\n", "snapshots.csv"),
        (
            "hydro.toml",
            "kind = \"hydro-compare\"\nseed = 5\n[model]\nname = \"constant\"\n[params]\nm = 8\nt = 0.02\nreplicas = 8\nrho_star = 1.0\nns = [8, 16]\n",
            "hydro_compare.csv",
        ),
        ("jko.toml", "kind = \"jko\"\n[model]\nname = \"landim\"\nb = 3.0\n[params]\nm = 16\nt = 0.003\nhstep = 0.001\nrho_star = 0.3\n", "jko.csv"),
    ];
    for (name, text, csv) in cases {
        let cfg = write_config(tmp.path(), name, text);
        let (c1, d1, _) = run(&cfg, &tmp.path().join("a"), &[]);
        let (c2, d2, _) = run(&cfg, &tmp.path().join("b"), &[]);
        assert_eq!((c1, c2), (EXIT_OK, EXIT_OK));
        let (d1, d2) = (d1.unwrap(), d2.unwrap());
        assert_eq!(fs::read(d1.join(csv)).unwrap(), fs::read(d2.join(csv)).unwrap(), "{name}");
        assert_eq!(d1.file_name().unwrap().to_str().unwrap()[..16], d2.file_name().unwrap().to_str().unwrap()[..16]);
    }
    let cfg = tmp.path().join("sim.toml");
    let (_, d3, _) = run(&cfg, &tmp.path().join("c"), &["--seed", "22"]);
    let (_, d1, _) = run(&cfg, &tmp.path().join("d"), &[]);
    assert_ne!(fs::read(d1.unwrap().join("snapshots.csv")).unwrap(), fs::read(d3.unwrap().join("snapshots.csv")).unwrap());
}

#[test]
fn ldrate_intervals_sum_to_the_total() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "l.toml", "kind = \"ldrate\"\n[model]\nname = \"constant\"\n[params]\nm = 16\nt = 0.002\ndt = 0.0001\nrho_star = 1.0\n");
    let (code, dir, _) = run(&cfg, tmp.path(), &[]);
    assert_eq!(code, EXIT_OK);
    let dir = dir.unwrap();
    let (header, rows) = read_csv(&dir.join("ldrate.csv"));
    assert_eq!(header[6], "path_rate");
    assert_eq!(rows.len(), 20);
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    let total: f64 = rows.iter().map(|r| r[6]).sum();
    let reported = summary["decomposition"]["path_rate"].as_f64().unwrap();
    assert!((total - reported).abs() <= 1e-12 * reported.abs().max(1e-300) + 1e-20, "{total} vs {reported}");
    assert!(summary["reversed_path_rate"].as_f64().unwrap() > reported);
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cgthermo"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn parse_row(line: &str) -> Vec<f64> {
    line.split(',').map(|x| x.parse().unwrap()).collect()
}

#[test]
fn states_writes_grids_and_slots() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["states"], tmp.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    for name in [
        "fine_re.csv",
        "fine_im.csv",
        "coarse_re.csv",
        "coarse_im.csv",
    ] {
        let grid = read(tmp.path(), name);
        let rows: Vec<_> = grid.lines().collect();
        assert_eq!(rows.len(), 12);
        assert!(rows.iter().all(|r| r.split(',').count() == 12));
    }
    let slots: serde_json::Value = serde_json::from_str(&read(tmp.path(), "slots.json")).unwrap();
    assert_eq!(slots["partition"]["slots"].as_array().unwrap().len(), 4);
    assert_eq!(slots["beta"].as_f64(), Some(0.1));
}

#[test]
fn single_slot_gives_uniform_coarse_state() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["states", "--slots", "12"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let grid = read(tmp.path(), "coarse_re.csv");
    for (i, line) in grid.lines().enumerate() {
        for (j, x) in parse_row(line).into_iter().enumerate() {
            let expected = if i == j { 1.0 / 12.0 } else { 0.0 };
            assert!((x - expected).abs() < 1e-14);
        }
    }
}

#[test]
fn fine_slots_give_identical_state_files() {
    let tmp = TempDir::new().unwrap();
    let o = run(
        &["states", "--slots", "1,1,1,1,1,1,1,1,1,1,1,1"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let (a, b) = (
        read(tmp.path(), "fine_re.csv"),
        read(tmp.path(), "coarse_re.csv"),
    );
    for (x, y) in a.lines().zip(b.lines()) {
        for (p, q) in parse_row(x).into_iter().zip(parse_row(y)) {
            assert!((p - q).abs() < 1e-15);
        }
    }
}

#[test]
fn sweep_rows_match_the_grid_and_output_is_deterministic() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let args = ["sweep-force", "--f-range", "0:2:0.5"];
    assert_eq!(run(&args, a.path()).status.code(), Some(0));
    assert_eq!(run(&args, b.path()).status.code(), Some(0));
    let csv = read(a.path(), "sweep_force.csv");
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "f,W_diss_fine,W_diss_coarse,S_rel_fine,S_rel_coarse,W_fine,W_coarse"
    );
    assert_eq!(lines.len(), 1 + 5);
    for name in ["sweep_force.csv", "sweep_force_summary.json"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap()
        );
    }
    // 17 significant digits
    let cell = lines[2].split(',').nth(1).unwrap();
    assert_eq!(
        cell.split('e')
            .next()
            .unwrap()
            .replace(['.', '-'], "")
            .len(),
        17
    );
}

#[test]
fn zero_force_sweep_is_all_zero() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(
        run(&["sweep-force", "--f", "0"], tmp.path()).status.code(),
        Some(0)
    );
    let csv = read(tmp.path(), "sweep_force.csv");
    let row = parse_row(csv.lines().nth(1).unwrap());
    assert!(row.iter().all(|x| x.abs() < 1e-12), "{row:?}");
    let summary: serde_json::Value =
        serde_json::from_str(&read(tmp.path(), "sweep_force_summary.json")).unwrap();
    assert!(summary["crossover"].is_null());
}

#[test]
fn distributions_report_and_files() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["distributions"], tmp.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let rep: serde_json::Value = serde_json::from_str(&read(tmp.path(), "ft_report.json")).unwrap();
    let df = rep["delta_f"].as_f64().unwrap();
    assert!((df - (-3.6077147440678665)).abs() < 1e-9);
    assert!((rep["delta_f_untruncated"].as_f64().unwrap() + 3.61).abs() < 1e-12);
    assert!(rep["coarse"]["max_crooks_log_residual"].as_f64().unwrap() <= 1e-10);
    let crooks = read(tmp.path(), "crooks_coarse.csv");
    for line in crooks.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        if let (Ok(lr), Ok(bw)) = (cells[3].parse::<f64>(), cells[4].parse::<f64>()) {
            assert!((lr - bw).abs() < 1e-10);
        }
    }
    for name in [
        "work_fine_forward.csv",
        "work_fine_reverse.csv",
        "work_coarse_forward.csv",
        "work_coarse_reverse.csv",
        "crooks_fine.csv",
    ] {
        assert!(read(tmp.path(), name).starts_with('w'));
    }
}

#[test]
fn zero_force_distribution_is_a_single_atom() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(
        run(&["distributions", "--f", "0"], tmp.path())
            .status
            .code(),
        Some(0)
    );
    for name in ["work_coarse_forward.csv", "work_coarse_reverse.csv"] {
        let csv = read(tmp.path(), name);
        let atoms: Vec<_> = csv
            .lines()
            .skip(1)
            .map(parse_row)
            .filter(|r| r[1] > 1e-14)
            .collect();
        assert_eq!(atoms.len(), 1, "{name}: {csv}");
        assert!(atoms[0][0].abs() < 1e-12);
    }
}

#[test]
fn noninvasive_columns() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["noninvasive", "--f-range", "0:5:2.5"], tmp.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = read(tmp.path(), "noninvasive.csv");
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("f,W_diss_fine,W_diss_invasive,W_diss_noninvasive"));
    let zero = parse_row(lines[1]);
    assert!(zero.iter().all(|x| x.abs() < 1e-12));
    let at5 = parse_row(lines[3]);
    assert!(at5[7] > 1e-3, "non-invasive Crooks residual {}", at5[7]);
    assert!(at5[8] <= 1e-10);
}

#[test]
fn json_and_svg_formats() {
    let tmp = TempDir::new().unwrap();
    let o = run(
        &["sweep-force", "--f-range", "0:1:1", "--format", "json"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&read(tmp.path(), "sweep_force.json")).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert_eq!(v["config"]["setup"]["levels"].as_u64(), Some(12));
    assert!(!tmp.path().join("sweep_force.csv").exists());

    let o = run(
        &["noninvasive", "--f-range", "0:1:1", "--format", "svg"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(read(tmp.path(), "noninvasive.svg").starts_with("<svg"));
    assert!(tmp.path().join("noninvasive.csv").exists());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# sweep\nlevels = 8\nf-range = 0:3:1\nbeta = 0.5\n").unwrap();
    let o = run(
        &[
            "sweep-force",
            "--config",
            cfg.to_str().unwrap(),
            "--f-range",
            "0:1:1",
        ],
        tmp.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(read(tmp.path(), "sweep_force.csv").lines().count(), 3);

    fs::write(&cfg, "levels = 8\nwobble = 1\n").unwrap();
    let o = run(&["states", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("wobble"));
}

#[test]
fn bad_configuration_exits_one() {
    let tmp = TempDir::new().unwrap();
    for args in [
        &["states", "--slots", "5,5"][..],
        &["states", "--beta", "1", "--temp", "2"][..],
        &["sweep-force", "--f-range", "2:1:0.5"][..],
        &["sweep-force", "--f-range", "0:1:-1"][..],
        &["nonsense"][..],
        &["states", "--config", "/definitely/not/here"][..],
    ] {
        let o = run(args, tmp.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn verify_passes_and_negative_control_fails() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["verify", "--seed", "11"], tmp.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v: serde_json::Value = serde_json::from_str(&read(tmp.path(), "verify.json")).unwrap();
    assert_eq!(v["pass"], true);
    let names: Vec<&str> = v["invariants"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["name"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"oracle_equivalence") && names.contains(&"jarzynski"));

    let o = run(
        &["verify", "--seed", "11", "--perturb-energies", "0.05"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("coarse_energy_consistency"));
    let v: serde_json::Value = serde_json::from_str(&read(tmp.path(), "verify.json")).unwrap();
    assert_eq!(v["pass"], false);
}

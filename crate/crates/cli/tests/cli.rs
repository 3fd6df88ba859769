use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn rmlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmlab"))
        .args(args)
        .current_dir(dir)
        .env_remove("RMLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

/// Data rows of a CSV, without the header and the hash trailer.
fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines.last().unwrap().starts_with("# config_hash="));
    lines[1..lines.len() - 1]
        .iter()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    rows(path).iter().map(|r| r[idx].parse().unwrap()).collect()
}

#[test]
fn check_material_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let ok = rmlab(d, &["check-material", "--out", "a"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let text = fs::read_to_string(d.join("a/check_material.csv")).unwrap();
    assert!(text.starts_with("label,passed,worst,threshold,samples,description\n"));
    let hash = text.lines().last().unwrap().trim_start_matches("# config_hash=");
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));

    let cfg = write(d, "mu0.cfg", "# no shear stiffness\nmu = 0\n");
    assert_eq!(code(&rmlab(d, &["check-material", "--config", &cfg, "--out", "b"])), 1);
    let a3 = rows(&d.join("b/check_material.csv")).into_iter().find(|r| r[0] == "A3").unwrap();
    assert_eq!(a3[1], "false");

    let bad = write(d, "bad.cfg", "sigma 5\n");
    assert_eq!(code(&rmlab(d, &["check-material", "--config", &bad, "--out", "c"])), 2);
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(code(&rmlab(d, &["no-such-command"])), 2);
    assert_eq!(code(&rmlab(d, &["gamma-study", "--h-list", "1/16,1/8", "--out", "x"])), 2);
    assert_eq!(code(&rmlab(d, &["gamma-study", "--sigma", "3", "--out", "x"])), 2);
    assert_eq!(code(&rmlab(d, &["compare", "--bc-mode", "sometimes", "--out", "x"])), 2);
    let cfg = write(d, "alpha.cfg", "sigma = 6\nalpha = 3\n");
    assert_eq!(code(&rmlab(d, &["compare", "--config", &cfg, "--out", "x"])), 2);
    assert_eq!(code(&rmlab(d, &["qforms", "--config", "missing.cfg"])), 2);
    let threads = Command::new(env!("CARGO_BIN_EXE_rmlab"))
        .args(["qforms", "--out", "t"])
        .current_dir(d)
        .env("RMLAB_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&threads), 2);
}

#[test]
fn gamma_study_writes_decreasing_errors() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let out = rmlab(d, &["gamma-study", "--h-list", "1/8,1/16,1/32", "--out", "g"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let errs = column(&d.join("g/gamma_study.csv"), "rel_err");
    assert_eq!(errs.len(), 3);
    assert!(errs.windows(2).all(|w| w[1] < w[0]));

    let zero = write(d, "zero.cfg", "state = zero\n");
    assert_eq!(code(&rmlab(d, &["gamma-study", "--config", &zero, "--h-list", "1/8,1/16", "--out", "z"])), 0);
    for row in rows(&d.join("z/gamma_study.csv")) {
        for value in &row[3..] {
            assert_eq!(value.parse::<f64>().unwrap(), 0.0);
        }
    }

    let sg = write(d, "sg.cfg", "sigma = 4\nvariant = second_grad\nl = 1\n");
    assert_eq!(code(&rmlab(d, &["gamma-study", "--config", &sg, "--h-list", "1/8,1/16,1/32", "--out", "s"])), 0);
    let path = d.join("s/gamma_study.csv");
    assert!(column(&path, "sg_L").iter().all(|&x| x == 0.0));
    assert!(column(&path, "scaled_sg").iter().all(|&x| x > 0.0));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let cfg = write(d, "c.cfg", "sigma = 6\nnx = 9\nny = 9\nnz = 3\nload = dipole\namplitude = 5\n");
    for out in ["r1", "r2"] {
        assert_eq!(code(&rmlab(d, &["minimize3d", "--config", &cfg, "--h-list", "1/2,1/4", "--out", out])), 0);
    }
    for name in ["minimize3d.csv", "minimize3d_trace_0.csv", "minimize3d_trace_1.csv"] {
        assert_eq!(fs::read(d.join("r1").join(name)).unwrap(), fs::read(d.join("r2").join(name)).unwrap());
    }
}

#[test]
fn run_directory_is_locked() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(code(&rmlab(d, &["qforms", "--out", "q"])), 0);
    // a finished run releases its lock
    assert!(!d.join("q/.rmlab.lock").exists());
    fs::write(d.join("q/.rmlab.lock"), "1").unwrap();
    let busy = rmlab(d, &["qforms", "--out", "q"]);
    assert_eq!(code(&busy), 2);
    assert!(String::from_utf8_lossy(&busy.stderr).contains("locked"));
}

#[test]
fn compare_gap_shrinks_on_a_coarse_grid() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let cfg = write(d, "c.cfg", "sigma = 6\nnx = 17\nny = 17\nnz = 3\n");
    let out = rmlab(d, &["compare", "--config", &cfg, "--h-list", "1/4,1/8", "--out", "c"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let path = d.join("c/compare.csv");
    let gap = column(&path, "gap");
    assert!(gap[1] < gap[0]);
    let u = column(&path, "u_norm");
    assert!(u[1] < u[0]);

    let zero = write(d, "z.cfg", "sigma = 6\nnx = 17\nny = 17\nnz = 3\nload = zero\n");
    assert_eq!(code(&rmlab(d, &["compare", "--config", &zero, "--h-list", "1/4,1/8", "--out", "z"])), 0);
    let path = d.join("z/compare.csv");
    assert!(column(&path, "scaled_3d_min").iter().all(|&x| x == 0.0));
    assert!(column(&path, "gap").iter().all(|&x| x == 0.0));
}

#[test]
fn limit_minimization_writes_state_and_energy() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let cfg = write(d, "l.cfg", "sigma = 6\nnx = 13\nny = 13\n");
    assert_eq!(code(&rmlab(d, &["minimize-limit", "--config", &cfg, "--out", "l"])), 0);
    assert!(column(&d.join("l/limit_energy.csv"), "total")[0] < 0.0);
    assert_eq!(rows(&d.join("l/limit_state.csv")).len(), 13 * 13);
}

#[test]
fn rigidity_fields() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let cfg = write(d, "r.cfg", "nx = 17\nny = 17\nnz = 3\n");
    assert_eq!(code(&rmlab(d, &["rigidity", "--config", &cfg, "--h-list", "1/4,1/8", "--out", "r"])), 0);
    assert!(column(&d.join("r/rigidity.csv"), "flag").iter().all(|&f| f == 1.0));

    let pert = write(d, "p.cfg", "nx = 17\nny = 17\nnz = 3\nfield = perturbation\n");
    assert_eq!(code(&rmlab(d, &["rigidity", "--config", &pert, "--h-list", "1/8", "--out", "p"])), 0);
    assert_eq!(column(&d.join("p/rigidity.csv"), "delta"), vec![1e-3, 1e-2, 1e-1]);

    // h = 1/32 is below two spacings of a 17-node grid
    assert_eq!(code(&rmlab(d, &["rigidity", "--config", &cfg, "--h-list", "1/32", "--out", "u"])), 1);
}

#[test]
fn qforms_match_closed_forms() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(code(&rmlab(d, &["qforms", "--out", "q"])), 0);
    let path = d.join("q/qforms.csv");
    let fd = column(&path, "fd_hessian");
    let exact = column(&path, "closed_form");
    assert_eq!(fd.len(), 16 + 81);
    for (a, b) in fd.iter().zip(&exact) {
        assert!((a - b).abs() <= 1e-6 * 8.0);
    }
}

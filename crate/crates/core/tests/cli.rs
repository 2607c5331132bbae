use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bregman_ocp::bench::RunRow;
use bregman_ocp::experiment::{read_run_csv, OUTPUT_ROOT_ENV};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bregman-ocp"));
    c.env_remove(OUTPUT_ROOT_ENV);
    c
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(cmd: &mut Command) -> (i32, String) {
    let out = cmd.output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn small_run(out: &Path, extra: &[&str]) -> Command {
    let mut c = bin();
    c.args(["run", "--preset", "ex2", "--out"]).arg(out);
    for s in ["dof=129", "k_max=40", "deltas=1e-2", "seeds=1,2", "threads=2"] {
        c.args(["--set", s]);
    }
    for s in extra {
        c.args(["--set", s]);
    }
    c
}

#[test]
fn config_errors_exit_one_with_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "case = ex2\n# comment\nk_max = lots\n").unwrap();
    let (c, err) = code(bin().args(["run", "--config"]).arg(&cfg));
    assert_eq!(c, 1);
    assert!(err.contains("line 3") && err.contains("k_max"), "{err}");

    fs::write(&cfg, "case = ex2\nfrobnicate = 1\n").unwrap();
    let (c, err) = code(bin().args(["run", "--config"]).arg(&cfg));
    assert_eq!(c, 1);
    assert!(err.contains("line 2") && err.contains("frobnicate"), "{err}");

    let (c, _) = code(bin().args(["run", "--preset", "ex9"]));
    assert_eq!(c, 1);
    let (c, err) = code(bin().args(["run", "--preset", "ex2", "--set", "deltas="]));
    assert_eq!(c, 1);
    assert!(err.contains("deltas"), "{err}");
    let (c, _) = code(bin().args(["run", "--config"]).arg(dir.path().join("missing.cfg")));
    assert_eq!(c, 1);
    let (c, _) = code(bin().args(["bogus-verb"]));
    assert_eq!(c, 1);
}

#[test]
fn verify_reports_and_exits_three_on_failure() {
    let out = run_ok(bin().args(["verify", "ex2", "ex4", "--samples", "200"]));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("state_equation"));
    // ex1's displayed target is inconsistent with its adjoint sign
    let (c, _) = code(bin().args(["verify", "ex1", "--samples", "200"]));
    assert_eq!(c, 3);
}

#[test]
fn verify_only_skips_the_iteration() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(bin().args(["run", "--preset", "ex2", "--set", "verify_only=true", "--out"]).arg(dir.path()));
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn list_presets_round_trips() {
    let out = run_ok(bin().arg("list-presets"));
    let text = String::from_utf8_lossy(&out.stdout);
    for block in text.split("# preset ").skip(1) {
        let body = block.split_once('\n').unwrap().1;
        bregman_ocp::config::ExperimentConfig::parse(body).unwrap();
    }
    assert_eq!(text.matches("# preset").count(), 4);
}

#[test]
fn output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = bin();
    c.env(OUTPUT_ROOT_ENV, dir.path());
    c.args(["run", "--preset", "ex2"]);
    for s in ["dof=65", "k_max=5", "deltas=1e-2", "seeds=1", "output=envrun"] {
        c.args(["--set", s]);
    }
    run_ok(&mut c);
    assert!(dir.path().join("envrun/summary.json").exists());
    assert!(dir.path().join("envrun/run_d1e-2_s1.csv").exists());
}

#[test]
fn runs_are_bit_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_ok(&mut small_run(a.path(), &[]));
    run_ok(&mut small_run(b.path(), &["threads=1"]));
    for name in ["run_d1e-2_s1.csv", "run_d1e-2_s2.csv"] {
        let x = fs::read(a.path().join("ex2").join(name)).unwrap();
        let y = fs::read(b.path().join("ex2").join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    let s1 = fs::read(a.path().join("ex2/run_d1e-2_s1.csv")).unwrap();
    let s2 = fs::read(a.path().join("ex2/run_d1e-2_s2.csv")).unwrap();
    assert_ne!(s1, s2, "seeds must change the noise");
}

/// Recomputes `k(δ)` from the CSV's α and γ columns only.
fn stop_from_columns(rows: &[RunRow], delta: f64, tau: f64, kappa: f64) -> usize {
    let (mut sn, mut sr, mut gprev) = (0.0, 0.0, 0.0);
    for r in rows {
        sn += 1.0 / (r.alpha_k * r.alpha_k) + gprev * gprev;
        sr += r.gamma_k.powf(-kappa) / r.alpha_k;
        if delta * delta * sn > tau * (1.0 + sr) {
            return r.k - 1;
        }
        gprev = r.gamma_k;
    }
    rows.len()
}

#[test]
fn stop_row_matches_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    // small tau makes k(δ) land inside the run
    run_ok(&mut small_run(dir.path(), &["tau=5", "deltas=1e-1"]));
    for seed in [1, 2] {
        let rows = read_run_csv(&dir.path().join(format!("ex2/run_d1e-1_s{seed}.csv"))).unwrap();
        assert_eq!(rows.len(), 40);
        let k = stop_from_columns(&rows, 0.1, 5.0, 1.0);
        assert!((1..40).contains(&k), "k = {k}");
        let flagged: Vec<usize> = rows.iter().filter(|r| r.stopped).map(|r| r.k).collect();
        assert_eq!(flagged, vec![k]);
        for r in &rows {
            let en = 0.01 * rows[..r.k].iter().enumerate().fold(0.0, |s, (i, q)| {
                let gp = if i == 0 { 0.0 } else { rows[i - 1].gamma_k };
                s + 1.0 / (q.alpha_k * q.alpha_k) + gp * gp
            });
            assert!((en - r.e_n).abs() <= 1e-12 * en);
        }
    }
}

#[test]
fn exact_data_never_stops_and_improves() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&mut small_run(dir.path(), &["deltas=0"]));
    let rows = read_run_csv(&dir.path().join("ex2/run_d0e0_s1.csv")).unwrap();
    assert!(rows.iter().all(|r| !r.stopped));
    for w in rows.windows(2) {
        assert!(w[1].err_exact <= w[0].err_exact * (1.0 + 1e-12));
    }
    assert!(rows.iter().all(|r| r.e_n == 0.0));
}

#[test]
fn tau_sweep_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = bin();
    c.args(["sweep-tau", "--preset", "ex2", "--taus", "1,10,100,1000", "--out"]).arg(dir.path());
    for s in ["dof=65", "k_max=200", "deltas=1e-1", "seeds=1"] {
        c.args(["--set", s]);
    }
    run_ok(&mut c);
    let mut r = csv::Reader::from_path(dir.path().join("ex2/sweep_tau.csv")).unwrap();
    let ks: Vec<usize> = r
        .records()
        .map(|rec| rec.unwrap()[3].parse().unwrap())
        .collect();
    assert_eq!(ks.len(), 4);
    assert!(ks.windows(2).all(|w| w[0] <= w[1]), "{ks:?}");
    assert!(ks[0] < ks[3]);
}

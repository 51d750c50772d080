use std::path::Path;
use std::process::{Command, Output};

use shampoo_core::random::{rng, spd};

fn shampoo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shampoo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[derive(Debug)]
struct Row {
    method: String,
    x: f64,
    iterations: usize,
    converged: bool,
}

fn parse_sweep(text: &str) -> Vec<Row> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("method,x,iterations,converged"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            Row {
                method: f[0].into(),
                x: f[1].parse().unwrap(),
                iterations: f[2].parse().unwrap(),
                converged: f[3].parse().unwrap(),
            }
        })
        .collect()
}

#[test]
fn scalar_sweep_matches_golden_file() {
    let out = shampoo(&["scalar-sweep", "--tol", "1e-10"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let got = parse_sweep(&stdout(&out));
    let golden = parse_sweep(include_str!("data/scalar_sweep_golden.csv"));
    assert_eq!(got.len(), golden.len());
    for (g, w) in got.iter().zip(&golden) {
        assert_eq!(g.method, w.method);
        assert!((g.x - w.x).abs() <= 1e-15 * w.x, "{g:?} vs {w:?}");
        assert_eq!((g.iterations, g.converged), (w.iterations, w.converged), "{g:?}");
    }
}

#[test]
fn scalar_sweep_ndb_is_non_increasing() {
    let out = shampoo(&["scalar-sweep", "--method", "ndb", "--grid", "log"]);
    let rows = parse_sweep(&stdout(&out));
    assert_eq!(rows.len(), 60);
    assert!(rows.windows(2).all(|w| w[1].iterations <= w[0].iterations));
}

#[test]
fn scalar_sweep_explicit_points_and_file_output() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("sweep.csv");
    let out = shampoo(&[
        "scalar-sweep",
        "--method",
        "cn",
        "--x",
        "0.01,0.0002",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).is_empty());
    let rows = parse_sweep(&std::fs::read_to_string(&out_path).unwrap());
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.converged));
}

#[test]
fn solve_identity_and_random_spd() {
    let dir = tempfile::tempdir().unwrap();
    let eye = write(dir.path(), "eye.txt", "3 3\n1 0 0\n0 1 0\n0 0 1\n");
    for method in ["evd", "cn", "ndb"] {
        let out = shampoo(&["solve", &eye, "--method", method, "--p", "4", "--epsilon", "1e-30"]);
        assert!(out.status.success(), "{method}: {}", stderr(&out));
        let line = stdout(&out).lines().nth(1).unwrap().to_string();
        let residual: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        // iterative methods stop at their 1e-10 tolerance
        assert!(residual < 1e-9, "{method}: {residual}");
    }
    let a = spd(12, 200.0, 3.0, &mut rng(5));
    let path = write(dir.path(), "a.txt", &a.to_text());
    let root = dir.path().join("root.txt");
    let out = shampoo(&["solve", &path, "--method", "ndb", "--p", "2", "--out", root.to_str().unwrap()]);
    assert!(out.status.success());
    let residual: f64 = stdout(&out).lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!(residual < 1e-7);
    let m = shampoo_core::Matrix::parse_text(&std::fs::read_to_string(root).unwrap()).unwrap();
    assert_eq!(m.shape(), (12, 12));
}

#[test]
fn solve_with_cached_chebyshev_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cheb.txt");
    let out = shampoo(&[
        "cheb-fit",
        "--p",
        "2",
        "--cheb-interval",
        "0.02,1",
        "--out",
        cache.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let a = spd(6, 10.0, 1.0, &mut rng(6));
    let path = write(dir.path(), "a.txt", &a.to_text());
    let out = shampoo(&[
        "solve",
        &path,
        "--method",
        "cbshv",
        "--p",
        "2",
        "--cheb-cache",
        cache.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let residual: f64 = stdout(&out).lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!(residual < 1e-6, "{residual}");
    // a cache fitted for p = 2 cannot serve p = 4
    let out = shampoo(&["solve", &path, "--method", "cbshv", "--p", "4", "--cheb-cache", cache.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let asym = write(dir.path(), "asym.txt", "2 2\n1 2\n0 1\n");
    assert_eq!(shampoo(&["solve", &asym]).status.code(), Some(1));
    let missing = dir.path().join("missing.txt");
    assert_eq!(shampoo(&["solve", missing.to_str().unwrap()]).status.code(), Some(3));
    let garbage = write(dir.path(), "garbage.txt", "2 2\n1 x\n0 1\n");
    assert_eq!(shampoo(&["solve", &garbage]).status.code(), Some(3));
    assert_eq!(shampoo(&["solve"]).status.code(), Some(1));
    assert_eq!(shampoo(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(shampoo(&["solve", &asym, "--method", "qr"]).status.code(), Some(1));
    assert_eq!(shampoo(&["--help"]).status.code(), Some(0));
    // a learning rate this large overflows the loss on the first update
    let out = shampoo(&["train", "--steps", "5", "--lr", "1e300"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("step"));
    // unconverged tolerance solve is a numerical failure
    let a = spd(6, 1e3, 1.0, &mut rng(7));
    let path = write(dir.path(), "a.txt", &a.to_text());
    assert_eq!(
        shampoo(&["solve", &path, "--method", "cn", "--max-iters", "2"]).status.code(),
        Some(2)
    );
}

#[test]
fn train_outputs_and_determinism() {
    let out = shampoo(&["train", "--steps", "0"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "step,loss,grad_norm,update_norm,refresh_flag\n");
    let args = ["train", "--task", "mlp", "--steps", "8", "--lr", "0.01", "--update-freq", "4", "--seed", "3"];
    let a = shampoo(&args);
    let b = shampoo(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&b));
    let text = stdout(&a);
    let flags: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap())
        .collect::<Vec<_>>();
    assert_eq!(flags, vec!["1", "0", "0", "0", "1", "0", "0", "0"]);
}

#[test]
fn train_lr_sweep_reports_choice() {
    let out = shampoo(&["train", "--task", "logistic", "--steps", "5", "--lr-sweep"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let err = stderr(&out);
    assert!(err.contains("lr,final_loss,monotone"));
    assert!(err.lines().any(|l| l.starts_with("lr = constant:")));
}

#[test]
fn config_precedence_and_echo() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", "# comment\np = 4\ntol = 1e-8\n");
    let out = shampoo(&["--config", &cfg, "scalar-sweep", "--x", "0.5", "--p", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let echo = stderr(&out);
    assert!(echo.lines().any(|l| l == "p = 2"), "{echo}");
    assert!(echo.lines().any(|l| l == "tol = 1e-8"));
    let out = shampoo(&["--config", &cfg, "scalar-sweep", "--x", "0.5"]);
    assert!(stderr(&out).lines().any(|l| l == "p = 4"));
    // the echo is itself a valid config file
    let echoed = write(dir.path(), "echo.cfg", &stderr(&out));
    let again = shampoo(&["--config", &echoed, "scalar-sweep", "--x", "0.5"]);
    assert_eq!(stderr(&again), stderr(&out));
    assert_eq!(stdout(&again), stdout(&out));
    let bad = write(dir.path(), "bad.cfg", "colour = red\n");
    assert_eq!(shampoo(&["--config", &bad, "scalar-sweep"]).status.code(), Some(1));
}

#[test]
fn balance_csv() {
    let dir = tempfile::tempdir().unwrap();
    let layers = write(dir.path(), "layers.txt", "0 10\n1 8\n2 3\n3 2\n");
    let out = shampoo(&["balance", "--workers", "2", "--layers", &layers]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "worker,layer_id,params\n0,0,10\n0,3,2\n1,1,8\n1,2,3\n");
    assert!(stderr(&out).contains("makespan 12"));
    assert_eq!(shampoo(&["balance", "--workers", "0", "--layers", &layers]).status.code(), Some(1));
}

#[test]
fn bench_csv() {
    let out = shampoo(&["bench", "--batch", "3", "--block-size", "6", "--repeats", "1", "--method", "cn"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "mode,batch,dim,method,median_seconds,max_delta");
    assert!(lines[1].starts_with("stacked,3,6,cn,"));
    assert!(lines[2].starts_with("sequential,3,6,cn,"));
    let delta: f64 = lines[1].rsplit(',').next().unwrap().parse().unwrap();
    assert!(delta < 1e-10);
}

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bhgnn"));
    c.env("RUST_LOG", "error");
    c
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn stats_writes_ccdfs_and_fits() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "stats",
        data("two_blobs").to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let ccdf = std::fs::read_to_string(tmp.path().join("ccdf_in.csv")).unwrap();
    assert_eq!(ccdf.lines().next(), Some("k,F"));
    assert!(ccdf.contains("\n0,1\n"));
    assert!(tmp.path().join("ccdf_out.csv").exists());
    let fits = std::fs::read_to_string(tmp.path().join("fits.csv")).unwrap();
    assert_eq!(fits.lines().count(), 11);
    assert!(fits.starts_with("direction,family,params,log_likelihood,aic,selected"));
}

#[test]
fn validation_errors_exit_with_two() {
    let toy = data("toy6");
    let toy = toy.to_str().unwrap();
    assert_eq!(code(&run(&["train", toy, "--gamma", "1.5"])), 2);
    assert_eq!(code(&run(&["train", "/definitely/missing"])), 2);
    assert_eq!(code(&run(&["sweep", toy, "--axis", "depth"])), 2);
    assert_eq!(
        code(&run(&["fit-degree", toy, "--direction", "sideways"])),
        2
    );
    assert_eq!(code(&run(&["train", toy, "--task", "regress"])), 2);
    let out = run(&["eval", toy, "--checkpoint", "/definitely/missing.bhgnn"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.bhgnn"));
}

#[test]
fn divergence_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        data("two_blobs").to_str().unwrap(),
        "--lr",
        "1e300",
        "--epochs",
        "3",
        "--seeds",
        "0",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{out:?}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged at epoch"));
}

#[test]
fn train_eval_export_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = data("two_blobs");
    let dir = dir.to_str().unwrap();
    let run_dir = tmp.path().join("run");
    let out = run(&[
        "train",
        dir,
        "--seeds",
        "0,1",
        "--hidden-dim",
        "8",
        "--epochs",
        "30",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    for f in [
        "checkpoint_seed0.bhgnn",
        "checkpoint_seed1.bhgnn",
        "history_seed0.csv",
        "runs.csv",
        "metrics.json",
    ] {
        assert!(run_dir.join(f).exists(), "{f}");
    }
    let history = std::fs::read_to_string(run_dir.join("history_seed0.csv")).unwrap();
    assert_eq!(history.lines().count(), 31);
    let records: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("metrics.json")).unwrap())
            .unwrap();
    let trained = records[0]["metrics"].clone();
    assert!(trained["accuracy"].is_number());

    let ck = run_dir.join("checkpoint_seed0.bhgnn");
    let eval = run(&["eval", dir, "--checkpoint", ck.to_str().unwrap()]);
    assert_eq!(code(&eval), 0, "{eval:?}");
    let report: serde_json::Value = serde_json::from_str(&stdout(&eval)).unwrap();
    assert_eq!(report["metrics"], trained);

    let z = tmp.path().join("z.csv");
    let exp = run(&[
        "export",
        dir,
        "--checkpoint",
        ck.to_str().unwrap(),
        "--out",
        z.to_str().unwrap(),
    ]);
    assert_eq!(code(&exp), 0, "{exp:?}");
    let text = std::fs::read_to_string(&z).unwrap();
    assert_eq!(text.lines().count(), 21);
    assert_eq!(text.lines().next(), Some("node_id,label,z_1,z_2"));
}

#[test]
fn repeated_runs_give_identical_metric_json() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = data("two_blobs");
    let mut outputs = Vec::new();
    for k in 0..2 {
        let run_dir = tmp.path().join(format!("r{k}"));
        let out = run(&[
            "train",
            dir.to_str().unwrap(),
            "--task",
            "cluster",
            "--seeds",
            "4",
            "--hidden-dim",
            "8",
            "--output-dim",
            "16",
            "--epochs",
            "20",
            "--out",
            run_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{out:?}");
        outputs.push(std::fs::read(run_dir.join("metrics.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn config_file_and_flags_combine() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# small run\nhidden_dim = 4\nepochs = 5\nseeds = 2\ngamma = 0.5\n",
    )
    .unwrap();
    let run_dir = tmp.path().join("run");
    let out = run(&[
        "train",
        data("two_blobs").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--gamma",
        "0.3",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let runs = std::fs::read_to_string(run_dir.join("runs.csv")).unwrap();
    let row = runs.lines().nth(1).unwrap();
    assert!(row.starts_with("classify,two_blobs,2,0.3,4,"), "{row}");
    assert_eq!(runs.lines().count(), 2);

    std::fs::write(&cfg, "hidden_dim = 4\nwidth = 9\n").unwrap();
    let bad = run(&[
        "train",
        data("two_blobs").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(code(&bad), 2);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("run.cfg:2"));
}

#[test]
fn kmeans_raw_baseline_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        data("two_blobs").to_str().unwrap(),
        "--task",
        "cluster",
        "--model",
        "kmeans-raw",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let records: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(records[0]["metrics"]["nmi"], 1.0);
}

#[test]
fn sweep_writes_runs_and_aggregate() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "sweep",
        data("two_blobs").to_str().unwrap(),
        "--axis",
        "ablation",
        "--seeds",
        "0,1",
        "--hidden-dim",
        "4",
        "--epochs",
        "5",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let runs = std::fs::read_to_string(tmp.path().join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 5 * 2);
    let agg = std::fs::read_to_string(tmp.path().join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 1 + 5);
    assert!(agg.lines().nth(1).unwrap().starts_with("no_nodal,2,0,"));
}

#[test]
fn hidden_gradcheck_flag_prints_a_passing_table() {
    let out = run(&["--gradcheck"]);
    assert_eq!(code(&out), 0, "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("matmul") && text.contains("model.bases"));
    assert!(!text.contains("FAIL"));
    let help = stdout(&run(&["--help"]));
    assert!(!help.contains("gradcheck"));
}

//! Black-box command behavior: exit codes, flag precedence, and the shapes
//! of every artifact the six subcommands write.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use avh_core::synthdata;
use avh_core::tinynet;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avh")).args(args).output().expect("spawn cli")
}

fn run_ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "cli {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn assert_exit(args: &[&str], code: i32, needle: &str) {
    let out = run(args);
    assert_eq!(out.status.code(), Some(code), "cli {args:?}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(needle), "stderr {stderr:?} missing {needle:?}");
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

/// (header, data rows) of a CSV artifact, comments skipped.
fn read_csv(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.is_empty());
    let header = lines.next().expect("header").to_string();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

#[test]
fn unknown_config_field_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"bogus": 1}"#);
    assert_exit(
        &["norm-invariance", "--config", cfg.to_str().unwrap(), "--out",
            dir.path().join("out").to_str().unwrap()],
        2,
        "invalid config",
    );
}

#[test]
fn missing_config_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("absent.json");
    assert_exit(
        &["gen-data", "--config", cfg.to_str().unwrap(), "--out",
            dir.path().join("out").to_str().unwrap()],
        2,
        "cannot read config",
    );
}

#[test]
fn invalid_config_value_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"train": {"learning_rate": -1.0}}"#);
    assert_exit(
        &["dynamics", "--config", cfg.to_str().unwrap(), "--out",
            dir.path().join("out").to_str().unwrap()],
        2,
        "learning_rate",
    );
}

#[test]
fn missing_dataset_exits_3_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{"correlate": {{"dataset": "{0}/nope.csv", "model": "{0}/nope.json"}}}}"#,
            dir.path().display()
        ),
    );
    assert_exit(
        &["correlate", "--config", cfg.to_str().unwrap(), "--out",
            dir.path().join("out").to_str().unwrap()],
        3,
        "nope.csv",
    );
}

#[test]
fn constant_hsf_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    // A checkpoint that passes the first two features through (plus a bias
    // offset, so angles and norms both vary across rows).
    let model = tinynet::Model::new(
        vec![
            tinynet::Layer {
                weights: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
                bias: vec![0.1, 0.1],
                in_dim: 3,
                out_dim: 2,
            },
            tinynet::Layer {
                weights: vec![1.0, 0.0, 0.0, 1.0],
                bias: Vec::new(),
                in_dim: 2,
                out_dim: 2,
            },
        ],
        0,
    )
    .unwrap();
    let model_path = dir.path().join("model.json");
    tinynet::save_model(&model, &model_path).unwrap();

    // Rows along two class directions at growing magnitudes: every score
    // column varies, only hsf is degenerate.
    let mut csv = String::from("id,label,hsf,f0,f1,f2\n");
    for i in 0..20 {
        let scale = 1.0 + 0.1 * i as f64;
        let (a, b) = if i % 2 == 0 { (1.0, 0.25) } else { (0.25, 1.0) };
        csv.push_str(&format!(
            "{i},{},0.5,{},{},{}\n",
            i % 2,
            scale * a,
            scale * b,
            scale * 0.3
        ));
    }
    let dataset = dir.path().join("flat.csv");
    std::fs::write(&dataset, csv).unwrap();

    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{"correlate": {{"dataset": "{}", "model": "{}"}}}}"#,
            dataset.display(),
            model_path.display()
        ),
    );
    assert_exit(
        &["correlate", "--config", cfg.to_str().unwrap(), "--out",
            dir.path().join("out").to_str().unwrap()],
        4,
        "zero variance",
    );
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"seed": 5}"#);
    let gen = |name: &str, extra: &[&str]| -> Vec<u8> {
        let out = dir.path().join(name);
        let mut args = vec!["gen-data", "--config", cfg.to_str().unwrap(), "--out",
            out.to_str().unwrap()];
        args.extend_from_slice(extra);
        run_ok(&args);
        std::fs::read(out.join("dataset.csv")).unwrap()
    };
    let config_seed = gen("config-seed", &[]);
    let flag_seed = gen("flag-seed", &["--seed", "7"]);
    let plain = {
        let out = dir.path().join("plain");
        run_ok(&["gen-data", "--seed", "7", "--out", out.to_str().unwrap()]);
        std::fs::read(out.join("dataset.csv")).unwrap()
    };
    assert_eq!(flag_seed, plain, "--seed must beat the config seed");
    assert_ne!(flag_seed, config_seed, "different seeds must change the draw");
}

#[test]
fn gen_data_writes_loadable_dataset_with_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["gen-data", "--out", dir.path().to_str().unwrap()]);

    let dataset_path = dir.path().join("dataset.csv");
    let text = std::fs::read_to_string(&dataset_path).unwrap();
    assert!(text.starts_with("# classes=4\nid,label,hsf,f0,"), "unexpected head: {:.60}", text);

    let data = synthdata::load_dataset(&dataset_path).unwrap();
    assert_eq!(data.len(), 2000);
    assert_eq!(data.dim(), 8);
    assert_eq!(data.num_classes, 4);
    let hsf = data.hsf.as_ref().expect("hsf column");
    assert!(hsf.iter().all(|v| (0.0..=1.0).contains(v)));

    let posterior = synthdata::load_posterior(&dir.path().join("posterior.csv")).unwrap();
    assert_eq!(posterior.len(), 2000);
    assert_eq!(posterior[0].len(), 4);
    // Sidecar joins by position.
    synthdata::load_dataset(&dataset_path).unwrap().with_posterior(posterior).unwrap();
}

#[test]
fn gen_data_two_gaussians_kind() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"gen_data": {"kind": "two_gaussians"}, "gaussian": {"n": 100}}"#,
    );
    run_ok(&["gen-data", "--config", cfg.to_str().unwrap(), "--out",
        dir.path().join("out").to_str().unwrap()]);
    let data = synthdata::load_dataset(&dir.path().join("out/dataset.csv")).unwrap();
    assert_eq!((data.len(), data.dim(), data.num_classes), (100, 3, 2));
}

#[test]
fn dynamics_covers_every_epoch_bin_cell() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["dynamics", "--out", dir.path().to_str().unwrap()]);
    let (header, rows) = read_csv(&dir.path().join("dynamics.csv"));
    assert_eq!(header, "epoch,bin,count,mean_norm,std_norm,mean_avh,std_avh,accuracy,mean_conf");
    assert_eq!(rows.len(), 30 * 5, "one row per (epoch, bin)");
    assert_eq!(rows[0][..2], ["1".to_string(), "1".to_string()]);
    assert_eq!(rows.last().unwrap()[..2], ["30".to_string(), "5".to_string()]);
    let total: usize = rows[..5].iter().map(|r| r[2].parse::<usize>().unwrap()).sum();
    assert_eq!(total, 2000, "bins partition the training set");
}

#[test]
fn gaussian_demo_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["gaussian-demo", "--out", dir.path().to_str().unwrap()]);

    let (header, rows) = read_csv(&dir.path().join("scores.csv"));
    assert_eq!(header, "id,label,hardness,avh,norm,confidence");
    assert_eq!(rows.len(), 2000);

    let model = tinynet::load_model(&dir.path().join("model.json")).unwrap();
    assert_eq!(model.layer_dims(), vec![3, 2, 2]);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["n"], 2000);
    let acc = report["accuracy"].as_f64().unwrap();
    assert!(acc > 0.5 && acc <= 1.0, "accuracy {acc}");
}

#[test]
fn selftrain_round_logs_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["selftrain", "--out", dir.path().to_str().unwrap()]);
    for mode in ["softmax", "avh"] {
        let (header, rows) = read_csv(&dir.path().join(format!("rounds_{mode}.csv")));
        assert_eq!(
            header,
            "round,portion,class,selected,tp_rate,mean_avh,mean_conf,mean_norm,target_acc"
        );
        // 5 rounds, each 4 class rows plus the `all` row.
        assert_eq!(rows.len(), 5 * (4 + 1));
        let all_rows: Vec<_> = rows.iter().filter(|r| r[2] == "all").collect();
        assert_eq!(all_rows.len(), 5);
        let portions: Vec<f64> =
            all_rows.iter().map(|r| r[1].parse::<f64>().unwrap()).collect();
        for (got, want) in portions.iter().zip([0.2, 0.25, 0.3, 0.35, 0.4]) {
            assert!((got - want).abs() < 1e-12, "portions {portions:?}");
        }
        // Per-class selections sum to the `all` row within each round.
        for round in 1..=5usize {
            let of_round: Vec<_> =
                rows.iter().filter(|r| r[0] == round.to_string()).collect();
            let class_sum: usize = of_round[..4]
                .iter()
                .map(|r| r[3].parse::<usize>().unwrap())
                .sum();
            assert_eq!(class_sum, of_round[4][3].parse::<usize>().unwrap());
        }
        let model = tinynet::load_model(&dir.path().join(format!("model_{mode}.json"))).unwrap();
        assert_eq!(model.layer_dims(), vec![8, 64, 4]);
    }
}

#[test]
fn norm_invariance_grid() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["norm-invariance", "--out", dir.path().to_str().unwrap()]);
    let (header, rows) = read_csv(&dir.path().join("sweep.csv"));
    assert_eq!(header, "alpha,confidence,avh");
    assert_eq!(rows.len(), 25);
    let first: f64 = rows[0][0].parse().unwrap();
    let last: f64 = rows.last().unwrap()[0].parse().unwrap();
    assert!((first - 0.1).abs() < 1e-12 && (last - 100.0).abs() < 1e-9);
}

#[test]
fn correlate_emits_one_report_per_line() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["correlate", "--out", dir.path().to_str().unwrap()]);
    let text = std::fs::read_to_string(dir.path().join("correlations.json")).unwrap();
    let lines: Vec<serde_json::Value> =
        text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    // 3 methods x 3 metrics, then one avh-vs-confidence comparison per method.
    assert_eq!(lines.len(), 12);
    assert_eq!(lines.iter().filter(|l| l["kind"] == "correlation").count(), 9);
    assert_eq!(lines.iter().filter(|l| l["kind"] == "comparison").count(), 3);
    for line in &lines {
        if line["kind"] == "correlation" {
            assert_eq!(line["n"], 2000);
            assert!(line["coef"].as_f64().unwrap().abs() <= 1.0);
            assert!(line["p_nonzero"].as_f64().is_some());
        } else {
            assert_eq!((line["metric_a"].as_str(), line["metric_b"].as_str()),
                (Some("avh"), Some("confidence")));
            assert!(line["z_value"].as_f64().is_some());
        }
    }
}

mod common;

use std::fs;

use common::{bin, block_snapshot, run, write_config, TINY};
use ndarray::Array2;
use nocollapse_cli::commands::evaluate::{EvalPart, ReportFormat};
use nocollapse_cli::commands::spectrum::SideArg;
use nocollapse_cli::commands::{cmd_evaluate, cmd_prepare, cmd_spectrum, cmd_train, EvaluateArgs, PrepareArgs, SpectrumArgs, TrainArgs};
use nocollapse_core::trainer::write_matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn train_args(config: &std::path::Path) -> TrainArgs {
    TrainArgs {
        config: config.to_path_buf(),
        overrides: vec![],
        max_epochs: None,
        resume: false,
    }
}

#[test]
fn missing_input_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.tsv");
    let out = run(bin().args(["prepare", "--input"]).arg(&missing).arg("--out").arg(dir.path().join("d")));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.tsv"));

    let out = run(bin().args(["train", "--config"]).arg(dir.path().join("none.toml")));
    assert_eq!(out.status.code(), Some(2));
    let out = run(bin().args(["spectrum", "--checkpoint"]).arg(&missing).arg("--out").arg(dir.path()));
    assert_eq!(out.status.code(), Some(2));
    let out = run(bin().args(["train", "--bogus"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_documents_seed_variable() {
    let out = run(bin().arg("--help"));
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("NOCOLLAPSE_SEED"));
}

#[test]
fn prepare_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.tsv");
    let mut body = String::new();
    for u in 0..30 {
        for i in 0..20 {
            if (u * 7 + i * 3) % 4 == 0 {
                body.push_str(&format!("u{u}\ti{i}\t1\t{}\n", u * 100 + i));
            }
        }
    }
    fs::write(&input, body).unwrap();
    let prepare = |out: &str| {
        cmd_prepare(&PrepareArgs {
            input: input.clone(),
            format: "tsv".into(),
            k_core: Some(5),
            split: "0.8,0.1,0.1".into(),
            seed: 4,
            out: dir.path().join(out),
        })
        .unwrap()
    };
    let m = prepare("a");
    prepare("b");
    assert_eq!(m.seed, 4);
    assert_eq!(m.k_core, 5);
    assert!(m.num_train > 0 && m.num_train + m.num_valid + m.num_test <= 150);
    for f in ["split.json", "interactions.txt", "users.txt", "items.txt"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
    let out = run(bin().args(["prepare", "--split", "0.8,0.2"]).arg("--input").arg(&input).arg("--out").arg(dir.path().join("c")));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn one_epoch_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let data = block_snapshot(dir.path(), 60, 40, 2, 0.3, 0.01, 1);
    for objective in ["bpr", "ncl"] {
        let cfg = write_config(dir.path(), objective, &data, &format!("{TINY}\nobjective = {objective:?}"));
        let mut args = train_args(&cfg);
        args.max_epochs = Some(1);
        let s = cmd_train(&args).unwrap();
        let history = fs::read_to_string(s.report_dir.join("history.csv")).unwrap();
        let lines: Vec<&str> = history.lines().collect();
        assert_eq!(lines[0], "epoch,loss,recall@5,recall@10,ndcg@5,ndcg@10");
        assert_eq!(lines.len(), 2, "{history}");
        assert!(lines[1].starts_with("1,"));
        assert!(s.report_dir.join("metrics.json").is_file());
        assert!(s.checkpoint_dir.join("state.json").is_file());
        assert_eq!(fs::read_to_string(s.report_dir.join("timings.csv")).unwrap().lines().count(), 2);
    }
}

#[test]
fn resume_continues_without_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let data = block_snapshot(dir.path(), 60, 40, 2, 0.3, 0.01, 2);
    let full = write_config(dir.path(), "full", &data, TINY);
    let s = cmd_train(&train_args(&full)).unwrap();
    let expected = fs::read_to_string(s.report_dir.join("history.csv")).unwrap();
    assert_eq!(expected.lines().count(), 5);

    let cut = write_config(dir.path(), "cut", &data, TINY);
    let mut args = train_args(&cut);
    args.max_epochs = Some(2);
    cmd_train(&args).unwrap();
    // Resuming without --resume would restart; with it the run picks up at epoch 3.
    let out = run(bin().arg("train").arg("--config").arg(&cut).arg("--resume"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let resumed = fs::read_to_string(dir.path().join("runs/cut/history.csv")).unwrap();
    let epochs: Vec<&str> = resumed.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(epochs, ["1", "2", "3", "4"]);
    assert_eq!(resumed, expected);

    // Changing a training option is refused.
    let mut args = train_args(&cut);
    args.resume = true;
    args.overrides = vec!["learning_rate=0.5".into()];
    assert_eq!(cmd_train(&args).unwrap_err().code, 2);
    let fresh = write_config(dir.path(), "fresh", &data, TINY);
    let mut args = train_args(&fresh);
    args.resume = true;
    assert_eq!(cmd_train(&args).unwrap_err().code, 2);
}

fn gaussian_checkpoint(dir: &std::path::Path, rows: usize, d: usize, rank: Option<usize>) -> std::path::PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut e = Array2::from_shape_simple_fn((rows, d), || rng.sample::<f64, _>(StandardNormal));
    if let Some(k) = rank {
        let basis = Array2::from_shape_simple_fn((k, d), || rng.sample::<f64, _>(StandardNormal));
        let coef = Array2::from_shape_simple_fn((rows, k), || rng.sample::<f64, _>(StandardNormal));
        e = coef.dot(&basis);
    }
    fs::create_dir_all(dir).unwrap();
    write_matrix(&dir.join("user.bin"), &e).unwrap();
    write_matrix(&dir.join("item.bin"), &e).unwrap();
    dir.to_path_buf()
}

#[test]
fn spectrum_of_random_and_planted_rank_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let args = |ck: std::path::PathBuf, out: &str| SpectrumArgs {
        checkpoint: ck,
        side: SideArg::User,
        thresholds: vec![],
        out: dir.path().join(out),
    };
    let random = gaussian_checkpoint(&dir.path().join("random"), 4000, 64, None);
    let r = cmd_spectrum(&args(random.clone(), "r1")).unwrap();
    assert!(r.effective_rank > 60.0, "effective rank {}", r.effective_rank);
    assert!(r.values.iter().all(|&v| v > 0.5));
    cmd_spectrum(&args(random, "r2")).unwrap();
    for f in ["spectrum_user.csv", "spectrum_user.json"] {
        assert_eq!(fs::read(dir.path().join("r1").join(f)).unwrap(), fs::read(dir.path().join("r2").join(f)).unwrap());
    }
    let csv = fs::read_to_string(dir.path().join("r1/spectrum_user.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("index,scaled_singular_value"));
    assert_eq!(csv.lines().count(), 65);

    // Normalizing rows is a nonlinear map, so a rank-5 subspace becomes a
    // 5-dimensional cone: still rank 5.
    let planted = gaussian_checkpoint(&dir.path().join("planted"), 500, 64, Some(5));
    let r = cmd_spectrum(&args(planted, "p")).unwrap();
    assert_eq!(r.count_at_least(1e-3), 5, "{:?}", &r.values[..8]);
    assert_eq!(r.below[0], 59);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("p/spectrum_user.json")).unwrap()).unwrap();
    assert_eq!(json["below_threshold"]["1e-3"], 59);
}

#[test]
fn evaluate_reports_cutoffs_and_buckets() {
    let dir = tempfile::tempdir().unwrap();
    let data = block_snapshot(dir.path(), 80, 60, 2, 0.3, 0.02, 3);
    let cfg = write_config(dir.path(), "ev", &data, &format!("{TINY}\nobjective = \"bpr\""));
    let mut t = train_args(&cfg);
    t.max_epochs = Some(2);
    let s = cmd_train(&t).unwrap();
    let args = |out: &str, buckets: Vec<u32>, format| EvaluateArgs {
        checkpoint: s.checkpoint_dir.clone(),
        snapshot: data.clone(),
        cutoffs: vec![10, 20, 50],
        degree_buckets: buckets,
        part: EvalPart::Test,
        format,
        out: Some(dir.path().join(out)),
    };
    let e = cmd_evaluate(&args("a.json", vec![], ReportFormat::Json)).unwrap();
    assert_eq!(e.overall.cutoffs, vec![10, 20, 50]);
    assert!(e.overall.recall.windows(2).all(|w| w[0] <= w[1]));
    cmd_evaluate(&args("b.json", vec![], ReportFormat::Json)).unwrap();
    assert_eq!(fs::read(dir.path().join("a.json")).unwrap(), fs::read(dir.path().join("b.json")).unwrap());
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("a.json")).unwrap()).unwrap();
    assert_eq!(json["metrics"].as_object().unwrap().len(), 3);
    assert!(json.get("buckets").is_none());

    let e = cmd_evaluate(&args("c.json", vec![0, 10, 20, 1000], ReportFormat::Json)).unwrap();
    let buckets = e.buckets.unwrap();
    assert_eq!(buckets.len(), 3);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("c.json")).unwrap()).unwrap();
    assert_eq!(json["buckets"].as_array().unwrap().len(), 3);
    // A single bucket over every degree reproduces the overall numbers.
    let one = cmd_evaluate(&args("d.csv", vec![0, u32::MAX], ReportFormat::Csv)).unwrap();
    assert_eq!(one.buckets.unwrap()[0].metrics.as_ref().unwrap(), &one.overall);
    let csv = fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);

    let bad = run(bin().arg("evaluate").arg("--checkpoint").arg(dir.path().join("missing")).arg("--snapshot").arg(&data));
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn sweep_runs_every_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let data = block_snapshot(dir.path(), 60, 40, 2, 0.3, 0.01, 4);
    let cfg = write_config(dir.path(), "sw", &data, TINY);
    let out = dir.path().join("sweep");
    let res = run(bin()
        .arg("sweep")
        .arg("--config")
        .arg(&cfg)
        .args(["--grid", "alpha=0.1,0.5", "--grid", "objective=ncl,directau", "--max-epochs", "1", "--jobs", "2"])
        .arg("--out")
        .arg(&out));
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5, "{csv}");
    assert!(lines[0].starts_with("name,alpha,objective,exit_code,best_epoch,recall@5"));
    assert!(lines[1].starts_with("sw-alpha=0.1-objective=ncl,0.1,ncl,0,1,"));
    for l in &lines[1..] {
        let name = l.split(',').next().unwrap();
        assert_eq!(fs::read_to_string(out.join(name).join("history.csv")).unwrap().lines().count(), 2);
    }
    let bad = run(bin().arg("sweep").arg("--config").arg(&cfg).args(["--grid", "alpha=-1"]).arg("--out").arg(&out));
    assert_eq!(bad.status.code(), Some(2));
}

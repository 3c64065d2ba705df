mod common;

use common::*;
use serde_json::Value;

const FAST: [&str; 6] = ["--set", "iters=300", "--set", "burn=100", "--set", "thin=1"];

fn s(v: &[&str]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

fn args_ref(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[test]
fn simulate_is_byte_identical_across_runs_and_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, threads) in [(&a, "1"), (&b, "2")] {
        let mut v = s(&[
            "simulate",
            "--dgp",
            "NL-fast-K10",
            "--R",
            "2",
            "--t-l",
            "60",
            "--seed",
            "1",
        ]);
        v.extend(s(&[
            "--models",
            "BLR-br-hom,GP-br-hom",
            "--threads",
            threads,
            "--out-dir",
        ]));
        v.push(dir.path().display().to_string());
        v.extend(s(&FAST));
        run_ok(&args_ref(&v));
    }
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert_eq!(sa.len(), 5);
    assert_eq!(sa, sb);
    let grid = String::from_utf8(
        sa.iter()
            .find(|(p, _)| p == "grid_crps.csv")
            .unwrap()
            .1
            .clone(),
    )
    .unwrap();
    assert!(
        grid.starts_with("dgp,BLR-br-hom,GP-br-hom\nNL-fast-K10,"),
        "{grid}"
    );
}

#[test]
fn fit_gp_xalm_small_records_3000_draws() {
    let dir = tempfile::tempdir().unwrap();
    let panel = write_panel(dir.path(), 48, 7);
    let out = dir.path().join("out");
    let mut v = s(&["fit", "--origin", "2001Q4", "--seed", "3", "--out-dir"]);
    v.push(out.display().to_string());
    v.extend(panel.args());
    v.extend(s(&[
        "--set",
        "mean=GP",
        "--set",
        "scheme=xalm",
        "--set",
        "size=s",
    ]));
    run_ok(&args_ref(&v));
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 1);
    assert_eq!(outputs[0]["meta"]["retained_draws"], 3000);
    assert_eq!(outputs[0]["meta"]["model"], "GP-xalm-hom-s");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    let draws =
        gpmidas::PosteriorDraws::load(out.join(outputs[0]["path"].as_str().unwrap())).unwrap();
    assert_eq!(draws.n_draws(), 3000);
    // Only the small-set predictor enters.
    assert!(draws
        .header
        .column_names
        .iter()
        .all(|c| c.starts_with("y.") || c.starts_with("IP.")));
    assert!(draws.header.test_realized[0].is_some());
}

#[test]
fn evaluate_without_realized_column_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("pred.csv");
    std::fs::write(&p, "model,origin,h,draw,value\nGP-br-hom,2001Q1,0,0,1.5\n").unwrap();
    let out = run(&[
        "evaluate",
        "--predictions",
        p.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("'realized'"), "{err}");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("model.cfg");
    std::fs::write(&cfg, "mean = GP\nitres = 100\n").unwrap();
    let out = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("itres"));
    let out = run(&[
        "simulate",
        "--set",
        "thin=0",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&[
        "simulate",
        "--models",
        "GP-br-hom",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "benchmark missing from the model list"
    );
}

#[test]
fn fit_predict_evaluate_importance_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let panel = write_panel(dir.path(), 64, 11);
    let origins: Vec<String> = (40..64).map(quarter_label).collect();
    let fit_dir = dir.path().join("fit");
    let mut v = s(&[
        "fit",
        "--models",
        "BLR-br-hom,BLR-u-hom",
        "--seed",
        "5",
        "--out-dir",
    ]);
    v.push(fit_dir.display().to_string());
    v.extend(panel.args());
    v.extend(s(&FAST));
    for o in &origins {
        v.push("--origin".into());
        v.push(o.clone());
    }
    run_ok(&args_ref(&v));

    let pred_dir = dir.path().join("pred");
    let mut v = s(&["predict", "--seed", "5", "--out-dir"]);
    v.push(pred_dir.display().to_string());
    for e in std::fs::read_dir(fit_dir.join("draws")).unwrap() {
        v.push("--draws".into());
        v.push(e.unwrap().path().display().to_string());
    }
    run_ok(&args_ref(&v));
    let quantiles = std::fs::read_to_string(pred_dir.join("quantiles.csv")).unwrap();
    assert_eq!(quantiles.lines().count(), 1 + 2 * origins.len());
    assert!(quantiles.starts_with("model,origin,h,realized,mean,q05,q10,q25,q50,q75,q90,q95\n"));

    let recessions = dir.path().join("recessions.csv");
    std::fs::write(
        &recessions,
        "start,end\n1990-07-01,1991-03-31\n2001-03-01,2001-11-30\n2007-12-01,2009-06-30\n",
    )
    .unwrap();
    let eval_dir = dir.path().join("eval");
    let predictions = pred_dir.join("predictions.csv");
    let v = s(&[
        "evaluate",
        "--predictions",
        predictions.to_str().unwrap(),
        "--recessions",
        recessions.to_str().unwrap(),
        "--benchmark",
        "BLR-br-hom",
        "--mcs-replications",
        "500",
        "--out-dir",
        eval_dir.to_str().unwrap(),
    ]);
    run_ok(&args_ref(&v));
    let losses = gpmidas::evaluation::LossTable::read_csv(
        std::fs::File::open(eval_dir.join("losses.csv")).unwrap(),
    )
    .unwrap();
    let full = losses.mean_by_model("CRPS", "Full");
    assert_eq!(full.len(), 2);
    assert!(losses.records.iter().any(|r| r.subsample == "Recession"));
    let dm = std::fs::read_to_string(eval_dir.join("dm.csv")).unwrap();
    assert!(
        dm.lines()
            .nth(1)
            .unwrap()
            .starts_with("0,Full,CRPS,BLR-u-hom,BLR-br-hom,24,"),
        "{dm}"
    );
    let mcs: Value =
        serde_json::from_str(&std::fs::read_to_string(eval_dir.join("mcs.json")).unwrap()).unwrap();
    assert!(!mcs[0]["included"].as_array().unwrap().is_empty());
    let reg = std::fs::read_to_string(eval_dir.join("regression.csv")).unwrap();
    assert!(reg.contains("scheme=u"), "{reg}");

    let imp_dir = dir.path().join("imp");
    let mut v = s(&["importance", "--model", "BLR-u-hom", "--predictions"]);
    v.push(predictions.display().to_string());
    v.push("--out-dir".into());
    v.push(imp_dir.display().to_string());
    v.extend(panel.args());
    run_ok(&args_ref(&v));
    let imp = std::fs::read_to_string(imp_dir.join("importance.csv")).unwrap();
    let vars: Vec<&str> = imp
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(vars, ["y", "IP", "EMP", "SPREAD"]);
}

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gpmidas"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn gpmidas")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "gpmidas {args:?} failed with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub struct PanelFiles {
    pub lf: PathBuf,
    pub lf_schema: PathBuf,
    pub hf: PathBuf,
    pub hf_schema: PathBuf,
}

impl PanelFiles {
    pub fn args(&self) -> Vec<String> {
        vec![
            "--lf".into(),
            self.lf.display().to_string(),
            "--lf-schema".into(),
            self.lf_schema.display().to_string(),
            "--hf".into(),
            self.hf.display().to_string(),
            "--hf-schema".into(),
            self.hf_schema.display().to_string(),
            "--target".into(),
            "GDP".into(),
        ]
    }
}

/// Quarterly target driven by three monthly AR(1) predictors, from 1990Q1,
/// stored in levels (transformation code 1).
pub fn write_panel(dir: &Path, quarters: usize, seed: u64) -> PanelFiles {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let months = 3 * quarters;
    let mut z = vec![[0.0f64; 3]; months];
    let mut prev = [0.0f64; 3];
    for row in z.iter_mut() {
        for k in 0..3 {
            let e: f64 = rng.sample(StandardNormal);
            prev[k] = 0.6 * prev[k] + e;
            row[k] = prev[k];
        }
    }
    let mut hf = String::from("date,IP,EMP,SPREAD\n");
    for (s, row) in z.iter().enumerate() {
        let (y, m) = (1990 + s / 12, s % 12 + 1);
        writeln!(
            hf,
            "{y}-{m:02}-01,{:.6},{:.6},{:.6}",
            row[0], row[1], row[2]
        )
        .unwrap();
    }
    let mut lf = String::from("date,GDP\n");
    let mut y_prev = 0.0;
    for t in 0..quarters {
        let lagged = |k: usize, j: usize| {
            if 3 * t + 2 >= j + 1 {
                z[3 * t + 2 - j - 1][k]
            } else {
                0.0
            }
        };
        let signal: f64 = (0..6)
            .map(|j| 0.5f64.powi(j as i32) * lagged(0, j))
            .sum::<f64>()
            * 0.8
            + (lagged(1, 0) * 0.5).tanh();
        let e: f64 = rng.sample(StandardNormal);
        let y = 0.3 * y_prev + signal + 0.5 * e;
        y_prev = y;
        let (yr, q) = (1990 + t / 4, t % 4);
        writeln!(lf, "{yr}-{:02}-01,{y:.6}", 3 * q + 1).unwrap();
    }
    let files = PanelFiles {
        lf: dir.join("gdp.csv"),
        lf_schema: dir.join("gdp.schema"),
        hf: dir.join("monthly.csv"),
        hf_schema: dir.join("monthly.schema"),
    };
    std::fs::write(&files.lf, lf).unwrap();
    std::fs::write(&files.hf, hf).unwrap();
    std::fs::write(&files.lf_schema, "frequency = q\nGDP = 1\n").unwrap();
    std::fs::write(
        &files.hf_schema,
        "frequency = m\nIP = 1\nIP.set = s\nEMP = 1\nEMP.set = m\nSPREAD = 1\nSPREAD.set = b\nSPREAD.release_lag = 0\n",
    )
    .unwrap();
    files
}

/// `YYYYQn` label of quarter `t` counted from 1990Q1.
pub fn quarter_label(t: usize) -> String {
    format!("{}Q{}", 1990 + t / 4, t % 4 + 1)
}

/// Every regular file below `dir`, relative path and contents, sorted.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                let rel = p.strip_prefix(base).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

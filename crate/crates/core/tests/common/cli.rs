//! Shared driver for the command-line binary and its golden files.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

pub struct Out {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn naturerisk(args: &[&str], output: &Path) -> Out {
    let o = Command::new(env!("CARGO_BIN_EXE_naturerisk"))
        .args(args)
        .arg("--output")
        .arg(output)
        .output()
        .expect("binary runs");
    Out {
        code: o.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
    }
}

pub fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .map(|r| {
            r.map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
                .collect()
        })
        .unwrap_or_default();
    v.sort();
    v
}

pub struct Case {
    pub name: &'static str,
    pub command: &'static str,
    pub inputs: &'static [&'static str],
    pub extra: &'static [&'static str],
    pub exit: i32,
}

pub const CASES: &[Case] = &[
    Case {
        name: "validate_all",
        command: "validate",
        inputs: &[
            "beef/three_farms.json",
            "beef/reports.json",
            "beef/lexicon.json",
            "water/catchment.json",
        ],
        extra: &["--scenario", "@beef/scenario_embargo.json"],
        exit: 0,
    },
    Case {
        name: "score_beef_one_farm",
        command: "score-beef",
        inputs: &["beef/one_farm.json", "beef/reports_one_farm.json"],
        extra: &[],
        exit: 0,
    },
    Case {
        name: "score_beef_three_farms",
        command: "score-beef",
        inputs: &["beef/three_farms.json", "beef/reports.json", "beef/lexicon.json"],
        extra: &["--oracle"],
        exit: 0,
    },
    Case {
        name: "scenario_portfolio",
        command: "scenario",
        inputs: &["beef/three_farms.json"],
        extra: &["--scenario", "@beef/scenario_portfolio.json"],
        exit: 0,
    },
    Case {
        name: "scenario_divestment",
        command: "scenario",
        inputs: &["beef/three_farms.json"],
        extra: &["--scenario", "@beef/scenario_divestment.json"],
        exit: 0,
    },
    Case {
        name: "scenario_embargo",
        command: "scenario",
        inputs: &["beef/three_farms.json"],
        extra: &["--scenario", "@beef/scenario_embargo.json"],
        exit: 0,
    },
    Case {
        name: "optimize_water",
        command: "optimize-water",
        inputs: &["water/catchment.json"],
        extra: &["--draws", "200", "--seed", "3"],
        exit: 0,
    },
    Case {
        name: "optimize_water_zero_rain",
        command: "optimize-water",
        inputs: &["water/zero_rain.json"],
        extra: &[],
        exit: 0,
    },
    Case {
        name: "optimize_water_infeasible",
        command: "optimize-water",
        inputs: &["water/infeasible.json"],
        extra: &[],
        exit: 5,
    },
    Case {
        name: "project_water",
        command: "project-water",
        inputs: &["water/catchment.json"],
        extra: &["--draws", "300", "--seed", "9"],
        exit: 0,
    },
    Case {
        name: "project_water_strict",
        command: "project-water",
        inputs: &["water/catchment.json"],
        extra: &["--strict-paper-sigmoid"],
        exit: 0,
    },
    Case {
        name: "report",
        command: "report",
        inputs: &[
            "beef/three_farms.json",
            "beef/reports.json",
            "beef/lexicon.json",
            "water/catchment.json",
        ],
        extra: &[],
        exit: 0,
    },
];

pub fn case_args(c: &Case) -> Vec<String> {
    let mut args = vec![c.command.to_string()];
    for i in c.inputs {
        args.push("--input".into());
        args.push(fixture(i).display().to_string());
    }
    for e in c.extra {
        args.push(match e.strip_prefix('@') {
            Some(rel) => fixture(rel).display().to_string(),
            None => e.to_string(),
        });
    }
    args
}

pub fn run_case(c: &Case, out: &Path) -> Out {
    let args = case_args(c);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    naturerisk(&refs, out)
}

pub fn golden_dir(case: &Case) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(case.name)
}

/// Runs one case and compares its output directory with the stored golden
/// files; with `update`, the golden files are replaced instead.
pub fn check_golden(case: &Case, update: bool) -> Result<(), String> {
    let tmp = tempfile::tempdir().unwrap();
    let r = run_case(case, tmp.path());
    if r.code != case.exit {
        return Err(format!(
            "{}: exit {} (expected {}): {}",
            case.name, r.code, case.exit, r.stderr
        ));
    }
    let golden = golden_dir(case);
    if update {
        let _ = fs::remove_dir_all(&golden);
        fs::create_dir_all(&golden).unwrap();
        for f in listing(tmp.path()) {
            fs::copy(tmp.path().join(&f), golden.join(&f)).unwrap();
        }
        return Ok(());
    }
    if listing(tmp.path()) != listing(&golden) {
        return Err(format!("{}: file set differs from golden", case.name));
    }
    for f in listing(&golden) {
        if fs::read(tmp.path().join(&f)).unwrap() != fs::read(golden.join(&f)).unwrap() {
            return Err(format!("{}: {f} differs from golden", case.name));
        }
    }
    Ok(())
}

/// Runs a case twice, the second time on three worker threads, and compares
/// every output byte.
pub fn check_rerun(case: &Case) -> Result<(), String> {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_case(case, a.path());
    let mut args = case_args(case);
    args.extend(["--threads".to_string(), "3".to_string()]);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    naturerisk(&refs, b.path());
    if listing(a.path()) != listing(b.path()) {
        return Err(format!("{}: file sets differ between runs", case.name));
    }
    for f in listing(a.path()) {
        if fs::read(a.path().join(&f)).unwrap() != fs::read(b.path().join(&f)).unwrap() {
            return Err(format!("{}: {f} differs between runs", case.name));
        }
    }
    Ok(())
}

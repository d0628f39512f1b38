//! Acceptance gate for the command line (criterion 8).

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

const SIZES: &str = "74,64,54,24";
const SEED: &str = "7";
const PAIRS: &str = "86";
const LIMIT: Duration = Duration::from_secs(60);

fn divbench(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_divbench"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "divbench {}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn c8_ablation_determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ann = dir.path().join("annotations.jsonl");
    divbench(&[
        "synth",
        "annotations",
        "--out",
        path(&ann),
        "--models",
        "a:1,b:2,c:2,d:3",
        "--pairs",
        PAIRS,
        "--replicates",
        "2",
        "--fidelity",
        "0.8",
        "--seed",
        "3",
    ])?;
    let mut reports = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("ablation{run}.json"));
        divbench(&[
            "ablate",
            "--annotations",
            path(&ann),
            "--sizes",
            SIZES,
            "--seed",
            SEED,
            "--out",
            path(&out),
        ])?;
        reports.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    let stdout = divbench(&[
        "ablate",
        "--annotations",
        path(&ann),
        "--sizes",
        SIZES,
        "--seed",
        SEED,
    ])?;
    if reports[0] != reports[1] {
        return Err("reports differ between runs".into());
    }
    if stdout != reports[0] {
        return Err("stdout report differs from --out report".into());
    }
    let v: serde_json::Value = serde_json::from_slice(&reports[0]).map_err(|e| e.to_string())?;
    let sizes: Vec<u64> = v["runs"]
        .as_array()
        .ok_or("report has no runs")?
        .iter()
        .filter_map(|r| r["size"].as_u64())
        .collect();
    if sizes != [74, 64, 54, 24] {
        return Err(format!("run sizes {sizes:?}"));
    }
    let other = divbench(&[
        "ablate",
        "--annotations",
        path(&ann),
        "--sizes",
        SIZES,
        "--seed",
        "8",
    ])?;
    if other == reports[0] {
        return Err("seed has no effect on the report".into());
    }
    Ok(format!(
        "two runs byte-identical ({} bytes, {} sign sequences, {} contradictions); seed 8 differs",
        reports[0].len(),
        v["sign_sequences"].as_array().map_or(0, Vec::len),
        v["contradictions"]
    ))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let result = c8_ablation_determinism();
    let elapsed = start.elapsed();
    let timing = format!("{:.2}s, limit {}s", elapsed.as_secs_f64(), LIMIT.as_secs());
    let (tag, detail, ok) = match result {
        Ok(d) if elapsed <= LIMIT => ("PASS", d, true),
        Ok(d) => ("FAIL", format!("{d}; over time budget"), false),
        Err(d) => ("FAIL", d, false),
    };
    println!("[{tag}] criterion 8: ablation determinism: {detail} ({timing})");
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Acceptance gate for the annotation service (criterion 9).

mod common;

use std::collections::BTreeSet;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use common::*;
use divbench_core::annotations::Verdict;
use divbench_core::RatingRecord;
use divbench_service::store::{Event, LOG_FILE};

const THREADS: usize = 10;
const TASKS: usize = 10 * 5;
const RATERS_PER_TASK: usize = 5;
const EXPECTED: usize = TASKS * RATERS_PER_TASK;
const CRASH_AFTER: usize = 120;
const LIMIT: Duration = Duration::from_secs(120);

fn verdict_for(rater: usize, task: &str) -> (u32, u32, Verdict) {
    let h = task.bytes().fold(rater as u32, |a, b| {
        a.wrapping_mul(31).wrapping_add(b as u32)
    });
    let (l, r) = (1 + h % 8, 1 + (h / 8) % 8);
    let v = match l.cmp(&r) {
        std::cmp::Ordering::Greater => Verdict::LeftMoreDiverse,
        std::cmp::Ordering::Less => Verdict::RightMoreDiverse,
        std::cmp::Ordering::Equal => Verdict::EquallyDiverse,
    };
    (l, r, v)
}

/// Each thread is one rater; it rates until the service has nothing left
/// for it or `stop` is raised; 201 responses are counted in `acked`.
fn run_raters(
    base: &str,
    study: &str,
    stop: &AtomicBool,
    acked: &AtomicUsize,
    stop_at: usize,
) -> Result<(), String> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..THREADS)
            .map(|t| {
                scope.spawn(move || -> Result<(), String> {
                    let api = Api::new(base.to_string());
                    let rater = format!("rater{t:02}");
                    while !stop.load(Ordering::SeqCst) {
                        let Some(view) = api.next_view(study, &rater) else {
                            return Ok(());
                        };
                        let (l, r, v) = verdict_for(t, &view.task_id);
                        match api
                            .rate(&view.task_id, &rating(&rater, l, r, v))
                            .status()
                            .as_u16()
                        {
                            201 => {
                                if acked.fetch_add(1, Ordering::SeqCst) + 1 >= stop_at {
                                    stop.store(true, Ordering::SeqCst);
                                }
                            }
                            409 => {}
                            s => return Err(format!("{rater}: unexpected status {s}")),
                        }
                    }
                    Ok(())
                })
            })
            .collect();
        handles
            .into_iter()
            .try_for_each(|h| h.join().map_err(|_| "rater thread panicked".to_string())?)
    })
}

/// Simulates a crash after an append that was never acknowledged and a
/// second append torn mid-line.
fn corrupt_tail(store: &Path, study: &str, api_export: &str) -> Result<(String, String), String> {
    let (records, _) = parse_export(api_export);
    let by_task = |t: &str| records.iter().filter(|r| r.task_id == t).count();
    let taken: BTreeSet<(String, String)> = records
        .iter()
        .map(|r| (r.task_id.clone(), r.rater_id.clone()))
        .collect();
    let mut ghost: Option<RatingRecord> = None;
    'outer: for r in &records {
        if by_task(&r.task_id) >= RATERS_PER_TASK {
            continue;
        }
        for t in 0..THREADS {
            let rater = format!("rater{t:02}");
            if !taken.contains(&(r.task_id.clone(), rater.clone())) {
                let mut g = r.clone();
                g.rater_id = rater;
                ghost = Some(g);
                break 'outer;
            }
        }
    }
    let ghost = ghost.ok_or("no incomplete task to plant an unacknowledged rating")?;
    assert_eq!(ghost.study_id, study);
    let mut f = OpenOptions::new()
        .append(true)
        .open(store.join(LOG_FILE))
        .map_err(|e| e.to_string())?;
    let line = serde_json::to_string(&Event::Rating {
        record: ghost.clone(),
    })
    .unwrap();
    writeln!(f, "{line}").map_err(|e| e.to_string())?;
    f.write_all(&line.as_bytes()[..line.len() / 2])
        .map_err(|e| e.to_string())?;
    f.sync_all().map_err(|e| e.to_string())?;
    Ok((ghost.task_id, ghost.rater_id))
}

fn c9_service() -> Result<String, String> {
    let store = tempfile::tempdir().map_err(|e| e.to_string())?;
    let acked = AtomicUsize::new(0);

    // Phase 1: concurrent raters, stopped part-way.
    let server = start(store.path());
    let api = Api::new(server.url());
    let study = api.create_study(&manifest(TASKS, RATERS_PER_TASK));
    let stop = AtomicBool::new(false);
    run_raters(&server.url(), &study, &stop, &acked, CRASH_AFTER)?;
    let mid = api.export(&study);
    server.shutdown().map_err(|e| e.to_string())?;
    let (ghost_task, ghost_rater) = corrupt_tail(store.path(), &study, &mid)?;

    // Phase 2: restart over the damaged log and finish.
    let server = start(store.path());
    let report = server.open_report().clone();
    if !report.torn_tail {
        return Err("torn tail not detected".into());
    }
    let api = Api::new(server.url());
    let resubmit = api
        .rate(
            &ghost_task,
            &rating(&ghost_rater, 1, 1, Verdict::EquallyDiverse),
        )
        .status();
    if resubmit != 409 {
        return Err(format!(
            "unacknowledged rating resubmitted with status {resubmit}, expected 409"
        ));
    }
    let stop = AtomicBool::new(false);
    run_raters(&server.url(), &study, &stop, &acked, usize::MAX)?;

    let body = api.export(&study);
    let (records, trailer) = parse_export(&body);
    let keys: BTreeSet<(&str, &str)> = records
        .iter()
        .map(|r| (r.task_id.as_str(), r.rater_id.as_str()))
        .collect();
    let summary = api.summary(&study);
    let acked = acked.load(Ordering::SeqCst);
    if records.len() != EXPECTED || trailer as usize != EXPECTED {
        return Err(format!(
            "{} records, trailer {trailer}, expected {EXPECTED}",
            records.len()
        ));
    }
    if keys.len() != records.len() {
        return Err(format!(
            "{} duplicate (task, rater) pairs",
            records.len() - keys.len()
        ));
    }
    if summary["n_complete"] != TASKS || summary["status"] != "closed" {
        return Err(format!("study not complete: {summary}"));
    }
    if acked + 1 != EXPECTED {
        return Err(format!(
            "{acked} acknowledged plus 1 unacknowledged != {EXPECTED}"
        ));
    }
    server.shutdown().map_err(|e| e.to_string())?;

    // Restart once more: replay must not change the rating set.
    let server = start(store.path());
    let again = Api::new(server.url()).export(&study);
    if again != body {
        return Err("export changed across a clean restart".into());
    }
    server.shutdown().map_err(|e| e.to_string())?;

    // export∘import on a fresh store with the same manifest.
    let fresh = tempfile::tempdir().map_err(|e| e.to_string())?;
    let server = start(fresh.path());
    let api = Api::new(server.url());
    let copy = api.create_study(&manifest(TASKS, RATERS_PER_TASK));
    if copy != study {
        return Err(format!("fresh store assigned {copy}, expected {study}"));
    }
    let r = api.import(&copy, body.clone());
    if r.status() != 200 {
        return Err(format!("import returned {}", r.status()));
    }
    let round = api.export(&copy);
    if round != body {
        return Err("export(import(export)) differs from export".into());
    }
    Ok(format!(
        "{EXPECTED} ratings from {THREADS} threads, 0 duplicates, {TASKS}/{TASKS} complete; restart after {CRASH_AFTER} acks with torn tail and unacked append kept at-most-once (resubmit 409, {} dropped on replay); export/import identity byte-equal",
        report.dropped
    ))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let result = c9_service();
    let elapsed = start.elapsed();
    let timing = format!("{:.2}s, limit {}s", elapsed.as_secs_f64(), LIMIT.as_secs());
    let (tag, detail, ok) = match result {
        Ok(d) if elapsed <= LIMIT => ("PASS", d, true),
        Ok(d) => ("FAIL", format!("{d}; over time budget"), false),
        Err(d) => ("FAIL", d, false),
    };
    println!("[{tag}] criterion 9: annotation service properties: {detail} ({timing})");
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

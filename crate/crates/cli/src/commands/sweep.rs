use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};

use clap::Args;
use serde_json::Value;

use super::train::METRICS_FILE;
use crate::config::{env_seed, RunConfig};
use crate::error::{io_failure, CliResult, Failure};

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Base run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Axis of the grid as `key=v1,v2,...`. Repeatable; the grid is the
    /// cartesian product of all axes.
    #[arg(long = "grid", value_name = "KEY=V1,V2", required = true)]
    pub axes: Vec<String>,
    /// Overrides applied to every run.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Directory holding one report directory per run and `sweep.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Runs executed at once.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Executable launched per run; defaults to the running binary.
    #[arg(long, hide = true)]
    pub program: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<String>,
}

pub fn parse_axis(s: &str) -> CliResult<Axis> {
    let (key, values) = s
        .split_once('=')
        .ok_or_else(|| Failure::usage(format!("--grid {s:?}: expected key=v1,v2,...")))?;
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
    if key.trim().is_empty() || values.iter().any(String::is_empty) {
        return Err(Failure::usage(format!("--grid {s:?}: empty key or value")));
    }
    Ok(Axis {
        key: key.trim().to_string(),
        values,
    })
}

/// Cartesian product in row-major order: the last axis varies fastest.
pub fn grid_points(axes: &[Axis]) -> Vec<Vec<(String, String)>> {
    let mut points = vec![Vec::new()];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((axis.key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    points
}

fn run_name(base: &str, point: &[(String, String)]) -> String {
    let mut name = base.to_string();
    for (k, v) in point {
        let key = k.rsplit('.').next().unwrap_or(k);
        write!(name, "-{key}={v}").unwrap();
    }
    name.replace(['/', '\\', ' '], "_")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub name: String,
    pub point: Vec<(String, String)>,
    pub report_dir: PathBuf,
    pub exit_code: i32,
}

fn spawn(program: &Path, args: &SweepArgs, run: &SweepRun) -> CliResult<Child> {
    let mut cmd = Command::new(program);
    cmd.arg("train").arg("--config").arg(&args.config);
    let ck = run.report_dir.join("checkpoint");
    let mut sets = args.overrides.clone();
    sets.push(format!("name={:?}", run.name));
    sets.push(format!("report_dir={:?}", run.report_dir.display().to_string()));
    sets.push(format!("checkpoint_dir={:?}", ck.display().to_string()));
    sets.extend(run.point.iter().map(|(k, v)| format!("{k}={v}")));
    for s in sets {
        cmd.arg("--set").arg(s);
    }
    if let Some(m) = args.max_epochs {
        cmd.arg("--max-epochs").arg(m.to_string());
    }
    let log = run.report_dir.join("train.log");
    let file = fs::File::create(&log).map_err(|e| io_failure(&log, e))?;
    let err = file.try_clone().map_err(|e| io_failure(&log, e))?;
    cmd.stdout(Stdio::from(file)).stderr(Stdio::from(err));
    cmd.spawn().map_err(|e| Failure::runtime(format!("cannot launch {}: {e}", program.display())))
}

/// One row per run: grid values, exit code, best epoch and test metrics.
fn summary_csv(runs: &[SweepRun], axes: &[Axis]) -> String {
    let metrics: Vec<Option<Value>> = runs
        .iter()
        .map(|r| {
            fs::read_to_string(r.report_dir.join(METRICS_FILE))
                .ok()
                .and_then(|t| serde_json::from_str(&t).ok())
        })
        .collect();
    let cutoffs: Vec<String> = metrics
        .iter()
        .flatten()
        .next()
        .and_then(|m| m["test"].as_object())
        .map(|o| o.keys().cloned().collect())
        .unwrap_or_default();
    let mut s = String::from("name");
    for a in axes {
        write!(s, ",{}", a.key).unwrap();
    }
    s.push_str(",exit_code,best_epoch");
    for c in &cutoffs {
        write!(s, ",recall@{c},ndcg@{c}").unwrap();
    }
    s.push('\n');
    for (r, m) in runs.iter().zip(&metrics) {
        write!(s, "{}", r.name).unwrap();
        for (_, v) in &r.point {
            write!(s, ",{v}").unwrap();
        }
        write!(s, ",{}", r.exit_code).unwrap();
        let field = |v: &Value| if v.is_null() { String::new() } else { v.to_string() };
        match m {
            Some(m) => {
                write!(s, ",{}", field(&m["best_epoch"])).unwrap();
                for c in &cutoffs {
                    let t = &m["test"][c];
                    write!(s, ",{},{}", field(&t["recall"]), field(&t["ndcg"])).unwrap();
                }
            }
            None => s.push_str(&",".repeat(1 + 2 * cutoffs.len())),
        }
        s.push('\n');
    }
    s
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<Vec<SweepRun>> {
    if args.jobs == 0 {
        return Err(Failure::usage("--jobs must be positive"));
    }
    let axes = args.axes.iter().map(|a| parse_axis(a)).collect::<CliResult<Vec<_>>>()?;
    // Validate the base config and every grid point before launching anything.
    let base = RunConfig::load(&args.config, &args.overrides, env_seed()?)?;
    let points = grid_points(&axes);
    let mut runs = Vec::with_capacity(points.len());
    for point in points {
        let mut sets = args.overrides.clone();
        sets.extend(point.iter().map(|(k, v)| format!("{k}={v}")));
        RunConfig::load(&args.config, &sets, None)?;
        let name = run_name(&base.name, &point);
        let report_dir = args.out.join(&name);
        runs.push(SweepRun {
            name,
            point,
            report_dir,
            exit_code: -1,
        });
    }
    let program = match &args.program {
        Some(p) => p.clone(),
        None => std::env::current_exe().map_err(|e| Failure::runtime(format!("cannot locate the executable: {e}")))?,
    };

    let mut queue: VecDeque<usize> = (0..runs.len()).collect();
    let mut active: Vec<(usize, Child)> = Vec::new();
    while !queue.is_empty() || !active.is_empty() {
        while active.len() < args.jobs {
            let Some(k) = queue.pop_front() else { break };
            let dir = &runs[k].report_dir;
            fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
            log::info!("starting {}", runs[k].name);
            active.push((k, spawn(&program, args, &runs[k])?));
        }
        // Children are long-running; waiting on the oldest keeps this simple.
        let (k, mut child) = active.remove(0);
        let status = child
            .wait()
            .map_err(|e| Failure::runtime(format!("waiting for {}: {e}", runs[k].name)))?;
        runs[k].exit_code = status.code().unwrap_or(-1);
        log::info!("{} finished with exit code {}", runs[k].name, runs[k].exit_code);
    }
    let path = args.out.join("sweep.csv");
    fs::write(&path, summary_csv(&runs, &axes)).map_err(|e| io_failure(&path, e))?;
    if let Some(bad) = runs.iter().find(|r| r.exit_code != 0) {
        return Err(Failure::runtime(format!(
            "run {} failed with exit code {}; see {}",
            bad.name,
            bad.exit_code,
            bad.report_dir.join("train.log").display()
        )));
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_a_cartesian_product() {
        let axes = vec![parse_axis("alpha=0.1,0.5").unwrap(), parse_axis("train.dim=8,16,32").unwrap()];
        let pts = grid_points(&axes);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1], vec![("alpha".into(), "0.1".into()), ("train.dim".into(), "16".into())]);
        assert_eq!(run_name("r", &pts[5]), "r-alpha=0.5-dim=32");
        assert!(parse_axis("alpha").is_err());
        assert!(parse_axis("alpha=0.1,").is_err());
    }
}

//! Report files. Every file records the plan digest and seed; floats are
//! written in their shortest round-trip form.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use exchange_core::doeblin::DoeblinReport;
use exchange_core::stats::ConvergenceReport;
use exchange_core::{EnsembleStats, Trajectory, TvMode};
use serde::Serialize;

use crate::run::RunError;

/// A report together with the run it came from.
#[derive(Serialize)]
pub struct Stamped<'a, T> {
    pub plan_digest: &'a str,
    pub seed: u64,
    #[serde(flatten)]
    pub body: &'a T,
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    File::create(path).map(BufWriter::new).map_err(|e| RunError::io(path, e))
}

fn write_csv(
    path: &Path,
    comment: &str,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<PathBuf, RunError> {
    let mut file = create(path)?;
    writeln!(file, "# {comment}").map_err(|e| RunError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(|e| RunError::csv(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| RunError::csv(path, e))?;
    }
    w.flush().map_err(|e| RunError::io(path, e))?;
    Ok(path.to_path_buf())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, RunError> {
    let mut file = create(path)?;
    serde_json::to_writer_pretty(&mut file, value).map_err(|e| RunError::io(path, e.into()))?;
    writeln!(file).and_then(|_| file.flush()).map_err(|e| RunError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn stamp(digest: &str, seed: u64) -> String {
    format!("plan_digest={digest} seed={seed}")
}

/// Per-(agent, good) columns in agent-major order.
fn agent_good_columns(n_agents: usize, n_goods: usize, suffixes: &[&str]) -> Vec<String> {
    let mut cols = Vec::new();
    for a in 0..n_agents {
        for g in 0..n_goods {
            for s in suffixes {
                cols.push(format!("agent{a}_good{g}{s}"));
            }
        }
    }
    cols
}

/// One row per sample time: mean and variance of every (agent, good) holding.
pub fn ensemble_csv(path: &Path, stats: &EnsembleStats) -> Result<PathBuf, RunError> {
    let mut header = vec!["time".to_string()];
    header.extend(agent_good_columns(stats.n_agents, stats.n_goods, &["_mean", "_var"]));
    let rows = stats.snapshots.iter().map(|snap| {
        let mut row = vec![num(snap.time)];
        for a in 0..stats.n_agents {
            for g in 0..stats.n_goods {
                row.push(num(snap.mean.get(a, g)));
                row.push(num(snap.covariance[g].get(a, a)));
            }
        }
        row
    });
    let comment = format!("{} trajectories={}", stamp(&stats.plan_digest, stats.seed), stats.n_trajectories);
    write_csv(path, &comment, &header, rows)
}

/// One row per sample time: the holdings of a single trajectory.
pub fn trajectory_csv(path: &Path, digest: &str, traj: &Trajectory) -> Result<PathBuf, RunError> {
    let (n, m) = traj.snapshots.first().map_or((0, 0), |(_, s)| (s.holdings.rows(), s.holdings.cols()));
    let mut header = vec!["time".to_string()];
    header.extend(agent_good_columns(n, m, &[""]));
    let rows = traj.snapshots.iter().map(|(t, state)| {
        std::iter::once(num(*t)).chain(state.holdings.as_slice().iter().map(|&v| num(v))).collect()
    });
    let comment = format!("{} trajectory={} events={}", stamp(digest, traj.seed_used), traj.index, traj.n_events);
    write_csv(path, &comment, &header, rows)
}

#[derive(Serialize)]
pub struct TrajectoryRecord {
    pub plan_digest: String,
    pub seed: u64,
    pub index: u64,
    pub n_events: u64,
    pub snapshots: Vec<SnapshotRecord>,
}

#[derive(Serialize)]
pub struct SnapshotRecord {
    pub time: f64,
    pub holdings: Vec<Vec<f64>>,
}

impl TrajectoryRecord {
    pub fn new(digest: &str, traj: &Trajectory) -> Self {
        TrajectoryRecord {
            plan_digest: digest.to_string(),
            seed: traj.seed_used,
            index: traj.index,
            n_events: traj.n_events,
            snapshots: traj
                .snapshots
                .iter()
                .map(|(t, s)| SnapshotRecord { time: *t, holdings: s.holdings.to_rows() })
                .collect(),
        }
    }
}

pub fn convergence_csv(path: &Path, report: &ConvergenceReport) -> Result<PathBuf, RunError> {
    let header: Vec<String> =
        ["time", "tv", "max_abs_z", "max_ks_statistic", "min_ks_p_value"].iter().map(|s| s.to_string()).collect();
    let rows = report.times.iter().map(|t| {
        vec![num(t.time), num(t.tv), num(t.max_abs_z), num(t.max_ks_statistic), num(t.min_ks_p_value)]
    });
    let comment = format!(
        "{} samples={} tv_mode={} bins={} baseline_tv={} tv_std_error={}",
        stamp(&report.plan_digest, report.seed),
        report.n_samples,
        match report.tv_mode {
            TvMode::Joint => "joint",
            TvMode::Marginal => "marginal",
        },
        report.bins,
        num(report.baseline_tv),
        num(report.tv_std_error),
    );
    write_csv(path, &comment, &header, rows)
}

/// Induction constants of every good, one row per level.
pub fn doeblin_csv(path: &Path, digest: &str, seed: u64, report: &DoeblinReport) -> Result<PathBuf, RunError> {
    let header: Vec<String> = ["good", "n", "c", "ln_c", "l", "j"].iter().map(|s| s.to_string()).collect();
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let rows = report.goods.iter().flat_map(|gb| {
        gb.levels.iter().map(move |lv| {
            vec![gb.good.to_string(), lv.n.to_string(), num(lv.c), num(lv.ln_c), opt(lv.l), opt(lv.j)]
        })
    });
    let comment = format!(
        "{} rho={} tau_star={} epsilon={} certified_rate={}",
        stamp(digest, seed),
        num(report.rho),
        num(report.tau_star),
        num(report.epsilon),
        num(report.certified_rate),
    );
    write_csv(path, &comment, &header, rows)
}

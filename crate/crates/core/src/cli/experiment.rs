//! Sweeps over population sizes and policies, written as CSV plus a JSON summary.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NetworkConfig;
use crate::relaxed::solve_rp;
use crate::sim::{replication_seed, simulate_with, Initial, PolicyKind, SimOptions};

/// Bit-exact CSV header of experiment output.
pub const CSV_HEADER: &str = "seed,n,policy,horizon,avg_age_per_user,c_rp,rel_gap,hitting_time";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSpec {
    /// Every user starts at this age.
    AllAt(u32),
    /// The relaxed fixed point rounded to the `1/N` grid.
    FixedPoint,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self::AllAt(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub base: NetworkConfig,
    pub n_sweep: Vec<usize>,
    pub policies: Vec<String>,
    pub replications: u32,
    pub horizon: u64,
    pub master_seed: u64,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// One validated config per swept population size.
    pub fn configs(&self) -> Result<Vec<NetworkConfig>> {
        if self.policies.is_empty() {
            return Err(Error::Validation("policy list is empty".into()));
        }
        if self.n_sweep.is_empty() {
            return Err(Error::Validation("population sweep is empty".into()));
        }
        if self.replications == 0 || self.horizon == 0 {
            return Err(Error::Validation("replications and horizon must be positive".into()));
        }
        if let Some(eps) = self.epsilon {
            if eps.is_nan() || eps <= 0.0 {
                return Err(Error::Validation(format!("epsilon = {eps} must be positive")));
            }
        }
        for name in &self.policies {
            if !PolicyKind::NAMES.contains(&name.as_str()) {
                return Err(Error::Validation(format!("unknown policy {name:?}")));
            }
        }
        self.n_sweep.iter().map(|&n| self.base.with_n(n)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub seed: u64,
    pub n: u64,
    pub policy: String,
    pub horizon: u64,
    pub avg_age_per_user: f64,
    pub c_rp: f64,
    pub rel_gap: f64,
    pub hitting_time: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointSummary {
    pub n: u64,
    pub policy: String,
    pub replications: usize,
    pub c_rp: f64,
    pub mean_avg_age: f64,
    pub se_avg_age: f64,
    pub mean_rel_gap: f64,
    pub se_rel_gap: f64,
    /// Mean over replications that hit; `None` when none did.
    pub mean_hitting_time: Option<f64>,
    pub se_hitting_time: Option<f64>,
    pub hits: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ExperimentRow>,
    pub summary: Vec<PointSummary>,
    pub csv_path: Option<PathBuf>,
    pub summary_path: Option<PathBuf>,
}

/// Sample mean and standard error (0 for a single sample).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs every `(n, policy, replication)` point. Replications run in parallel;
/// rows come back in sweep order so the output is reproducible.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let configs = spec.configs()?;
    let mut jobs = Vec::new();
    for cfg in &configs {
        let sol = solve_rp(cfg)?;
        let initial = match spec.initial {
            InitialSpec::AllAt(age) => Initial::AllAt(age),
            InitialSpec::FixedPoint => Initial::Occupancy(sol.z_star.clone()),
        };
        initial.ages(cfg)?;
        for name in &spec.policies {
            let policy = PolicyKind::from_name(name, cfg)?;
            for r in 0..spec.replications {
                jobs.push((cfg, sol.clone(), initial.clone(), policy.clone(), r));
            }
        }
    }
    let rows: Vec<ExperimentRow> = jobs
        .into_par_iter()
        .map(|(cfg, sol, initial, policy, r)| {
            let seed = replication_seed(spec.master_seed, r as u64);
            let options = SimOptions {
                hitting: spec.epsilon.map(|eps| (eps, sol.z_star.clone())),
                ..SimOptions::default()
            };
            let rec = simulate_with(cfg, &policy, spec.horizon, seed, &initial, options)?;
            Ok(ExperimentRow {
                seed,
                n: cfg.n as u64,
                policy: policy.name().to_string(),
                horizon: spec.horizon,
                avg_age_per_user: rec.per_user_avg_age,
                c_rp: sol.c_rp,
                rel_gap: (rec.per_user_avg_age - sol.c_rp) / sol.c_rp,
                hitting_time: rec.hitting_time,
            })
        })
        .collect::<Result<_>>()?;
    let summary = summarize(&rows);

    let (csv_path, summary_path) = match &spec.out {
        Some(path) => {
            write_rows(path, &rows)?;
            let summary_path = path.with_extension("summary.json");
            std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
            (Some(path.clone()), Some(summary_path))
        }
        None => (None, None),
    };
    Ok(ExperimentOutput {
        rows,
        summary,
        csv_path,
        summary_path,
    })
}

fn write_rows(path: &Path, rows: &[ExperimentRow]) -> Result<()> {
    let mut out = File::create(path)?;
    out.write_all(rows_to_csv(rows)?.as_bytes())?;
    Ok(())
}

/// CSV text (header included) of experiment rows.
pub fn rows_to_csv(rows: &[ExperimentRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(format!("{CSV_HEADER}\n{}", String::from_utf8(body).expect("csv output is utf-8")))
}

/// Per `(n, policy)` means and standard errors, ordered by `n` then policy.
pub fn summarize(rows: &[ExperimentRow]) -> Vec<PointSummary> {
    let mut groups: BTreeMap<(u64, String), Vec<&ExperimentRow>> = BTreeMap::new();
    for row in rows {
        groups.entry((row.n, row.policy.clone())).or_default().push(row);
    }
    groups
        .into_iter()
        .map(|((n, policy), rows)| {
            let ages: Vec<f64> = rows.iter().map(|r| r.avg_age_per_user).collect();
            let gaps: Vec<f64> = rows.iter().map(|r| r.rel_gap).collect();
            let hits: Vec<f64> = rows.iter().filter_map(|r| r.hitting_time).map(|t| t as f64).collect();
            let (mean_avg_age, se_avg_age) = mean_se(&ages);
            let (mean_rel_gap, se_rel_gap) = mean_se(&gaps);
            let hit_stats = (!hits.is_empty()).then(|| mean_se(&hits));
            PointSummary {
                n,
                policy,
                replications: rows.len(),
                c_rp: rows[0].c_rp,
                mean_avg_age,
                se_avg_age,
                mean_rel_gap,
                se_rel_gap,
                mean_hitting_time: hit_stats.map(|s| s.0),
                se_hitting_time: hit_stats.map(|s| s.1),
                hits: hits.len(),
            }
        })
        .collect()
}

/// Reads an experiment CSV, rejecting malformed input and repeated
/// `(n, policy, seed)` keys.
pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<ExperimentRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected header {header:?}")));
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut rows = Vec::new();
    for row in reader.deserialize::<ExperimentRow>() {
        let row = row.map_err(|e| Error::Parse(e.to_string()))?;
        if !seen.insert((row.n, row.policy.clone(), row.seed)) {
            return Err(Error::DuplicateKey {
                n: row.n,
                policy: row.policy,
                seed: row.seed,
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Aggregates an experiment CSV into one row per `(n, policy)` with mean and
/// standard-error columns, written to `out`.
pub fn emit_plot_data(input: impl AsRef<Path>, out: impl AsRef<Path>) -> Result<Vec<PointSummary>> {
    let summary = summarize(&read_rows(input)?);
    let mut w = csv::Writer::from_path(out)?;
    w.write_record([
        "n",
        "policy",
        "replications",
        "c_rp",
        "mean_avg_age",
        "se_avg_age",
        "mean_rel_gap",
        "se_rel_gap",
        "mean_hitting_time",
        "se_hitting_time",
        "hits",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in &summary {
        w.write_record([
            s.n.to_string(),
            s.policy.clone(),
            s.replications.to_string(),
            s.c_rp.to_string(),
            s.mean_avg_age.to_string(),
            s.se_avg_age.to_string(),
            s.mean_rel_gap.to_string(),
            s.se_rel_gap.to_string(),
            opt(s.mean_hitting_time),
            opt(s.se_hitting_time),
            s.hits.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(summary)
}

//! Summary tables, repetition grids and file emission.
//!
//! Files written by [`emit`]:
//!
//! ```text
//! run_summary.json         everything below plus the fingerprint
//! config.json              configuration snapshot
//! records.csv              one row per validated split (long format)
//! summary.csv              mean and std per kind x analysis x scope
//! repetition_grid.csv      subject x cumulative repetitions, fold means
//! misclassifications.csv   missed artifact epochs per task, subject, k
//! task_miss_rates.csv      missed / validated artifact epochs per task
//! statistics.csv           paired tests and rank correlations
//! ```
//!
//! Metrics are written with 4 decimals and p-values with 3. Map keys are
//! ordered, so identical summaries give byte-identical files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{aggregate, misclassification_table, task_miss_rates, MisclassRow, ResultRecord};
use crate::experiment::{analysis_label, StatRow};
use crate::model::{ArtifactKind, TaskId, TaskSetName};
use crate::xplan::{Analysis, ScopeKind};

/// Marker written for table cells without records.
pub const ABSENT: &str = "absent";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

fn mean_std(values: &[f64]) -> Option<MeanStd> {
    aggregate(values).ok().map(|s| MeanStd {
        n: s.n,
        mean: s.mean,
        std: s.std,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub train_kind: ArtifactKind,
    pub analysis: Analysis,
    pub scope: ScopeKind,
    /// Largest cumulative repetition count present; `None` when absent.
    pub cumulative_repetitions: Option<u32>,
    pub recall: Option<MeanStd>,
    pub specificity: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub task_set: TaskSetName,
    pub rows: Vec<SummaryRow>,
}

const KINDS: [ArtifactKind; 2] = [ArtifactKind::IsometricContraction, ArtifactKind::ContinuousMovement];

fn table_rows(kind: ArtifactKind) -> [(Analysis, ScopeKind); 6] {
    [
        (Analysis::a1(kind), ScopeKind::Individual),
        (Analysis::a1(kind), ScopeKind::Generalized),
        (Analysis::a2(kind), ScopeKind::Individual),
        (Analysis::a2(kind), ScopeKind::Generalized),
        (Analysis::A3_1, ScopeKind::PretrainCalibrate),
        (Analysis::A3_2, ScopeKind::PretrainCalibrate),
    ]
}

/// Six rows per artifact kind. Cells average the records trained on the
/// largest cumulative repetition count of their row.
pub fn render_summary_table(records: &[ResultRecord], task_set: TaskSetName) -> SummaryTable {
    let mut rows = Vec::with_capacity(12);
    for kind in KINDS {
        for (analysis, scope) in table_rows(kind) {
            let group: Vec<&ResultRecord> = records
                .iter()
                .filter(|r| {
                    r.task_set == task_set && r.train_kind == kind && r.analysis == analysis && r.scope == scope
                })
                .collect();
            let k = group.iter().map(|r| r.cumulative_repetitions).max();
            let at_k: Vec<&&ResultRecord> = group.iter().filter(|r| Some(r.cumulative_repetitions) == k).collect();
            let recall: Vec<f64> = at_k.iter().map(|r| r.recall).collect();
            let spec: Vec<f64> = at_k.iter().map(|r| r.specificity).collect();
            rows.push(SummaryRow {
                train_kind: kind,
                analysis,
                scope,
                cumulative_repetitions: k,
                recall: mean_std(&recall),
                specificity: mean_std(&spec),
            });
        }
    }
    SummaryTable { task_set, rows }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub subject: String,
    /// Fold-mean recall per column; `None` where a subject has no record.
    pub recall: Vec<Option<f64>>,
    pub specificity: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RepetitionGrid {
    pub repetitions: Vec<u32>,
    pub rows: Vec<GridRow>,
}

/// Subjects by cumulative repetitions, each cell the mean over folds.
/// Callers pass the records of one analysis, scope and task set.
pub fn render_repetition_grid(records: &[ResultRecord]) -> RepetitionGrid {
    let repetitions: Vec<u32> = records
        .iter()
        .map(|r| r.cumulative_repetitions)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut cells: BTreeMap<&str, BTreeMap<u32, (Vec<f64>, Vec<f64>)>> = BTreeMap::new();
    for r in records {
        let c = cells
            .entry(&r.subject)
            .or_default()
            .entry(r.cumulative_repetitions)
            .or_default();
        c.0.push(r.recall);
        c.1.push(r.specificity);
    }
    let rows = cells
        .into_iter()
        .map(|(subject, by_k)| {
            let col = |pick: fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>| {
                repetitions
                    .iter()
                    .map(|k| by_k.get(k).and_then(|c| mean_std(pick(c))).map(|m| m.mean))
                    .collect()
            };
            GridRow {
                subject: subject.to_string(),
                recall: col(|c| &c.0),
                specificity: col(|c| &c.1),
            }
        })
        .collect();
    RepetitionGrid { repetitions, rows }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupGrid {
    pub analysis: Analysis,
    pub train_kind: ArtifactKind,
    pub scope: ScopeKind,
    pub task_set: TaskSetName,
    pub grid: RepetitionGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMissRate {
    pub task_id: TaskId,
    pub missed: u32,
    pub validated: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMisclassification {
    pub analysis: Analysis,
    pub train_kind: ArtifactKind,
    pub scope: ScopeKind,
    pub task_set: TaskSetName,
    pub rows: Vec<MisclassRow>,
    pub miss_rates: Vec<TaskMissRate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// SHA-256 of the canonical JSON of `config`.
    pub fingerprint: String,
    pub config: serde_json::Value,
    pub summary_tables: Vec<SummaryTable>,
    pub repetition_grids: Vec<GroupGrid>,
    pub misclassifications: Vec<GroupMisclassification>,
    pub statistics: Vec<StatRow>,
    pub records: Vec<ResultRecord>,
}

/// Hex SHA-256 of `config` serialized with sorted keys.
pub fn fingerprint<T: Serialize>(config: &T) -> Result<String> {
    // Value maps are ordered, which canonicalizes struct and map keys alike
    let value = serde_json::to_value(config)?;
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&value)?)))
}

type GroupKey = (Analysis, ArtifactKind, ScopeKind, TaskSetName);

fn by_group(records: &[ResultRecord]) -> BTreeMap<GroupKey, Vec<ResultRecord>> {
    let mut groups: BTreeMap<GroupKey, Vec<ResultRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.analysis, r.train_kind, r.scope, r.task_set))
            .or_default()
            .push(r.clone());
    }
    groups
}

impl RunSummary {
    pub fn build<C: Serialize>(config: &C, records: Vec<ResultRecord>, statistics: Vec<StatRow>) -> Result<Self> {
        let task_sets: BTreeSet<TaskSetName> = records.iter().map(|r| r.task_set).collect();
        let summary_tables = task_sets.iter().map(|&ts| render_summary_table(&records, ts)).collect();
        let groups = by_group(&records);
        let repetition_grids = groups
            .iter()
            .map(|(&(analysis, train_kind, scope, task_set), recs)| GroupGrid {
                analysis,
                train_kind,
                scope,
                task_set,
                grid: render_repetition_grid(recs),
            })
            .collect();
        let misclassifications = groups
            .iter()
            .map(
                |(&(analysis, train_kind, scope, task_set), recs)| GroupMisclassification {
                    analysis,
                    train_kind,
                    scope,
                    task_set,
                    rows: misclassification_table(recs),
                    miss_rates: task_miss_rates(recs)
                        .into_iter()
                        .map(|(task_id, (missed, validated))| TaskMissRate {
                            task_id,
                            missed,
                            validated,
                        })
                        .collect(),
                },
            )
            .collect();
        Ok(RunSummary {
            fingerprint: fingerprint(config)?,
            config: serde_json::to_value(config)?,
            summary_tables,
            repetition_grids,
            misclassifications,
            statistics,
            records,
        })
    }
}

fn metric(v: f64) -> String {
    format!("{v:.4}")
}

fn opt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| ABSENT.to_string(), metric)
}

fn p_value(v: f64) -> String {
    format!("{v:.3}")
}

fn write_csv(dir: &Path, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let path = dir.join(name);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let io = |e: csv::Error| Error::io(&path, std::io::Error::other(e));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io(&path, std::io::Error::other(e.to_string())))?;
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn group_cols(analysis: Analysis, kind: ArtifactKind, scope: ScopeKind, ts: TaskSetName) -> Vec<String> {
    vec![
        analysis_label(analysis, kind),
        kind.as_str().into(),
        scope.as_str().into(),
        ts.as_str().into(),
    ]
}

/// Writes every output file into `out_dir`, creating it if needed.
pub fn emit(run: &RunSummary, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_json(out_dir, "run_summary.json", run)?;
    write_json(out_dir, "config.json", &run.config)?;

    let rows = run
        .records
        .iter()
        .map(|r| {
            let mut row = group_cols(r.analysis, r.train_kind, r.scope, r.task_set);
            row.extend([
                r.subject.clone(),
                r.fold.to_string(),
                r.cumulative_repetitions.to_string(),
                r.architecture.as_str().into(),
                metric(r.recall),
                metric(r.specificity),
                metric(r.balanced_accuracy),
                r.counts.tp.to_string(),
                r.counts.fn_.to_string(),
                r.counts.tn.to_string(),
                r.counts.fp.to_string(),
            ]);
            row
        })
        .collect();
    write_csv(
        out_dir,
        "records.csv",
        &[
            "analysis",
            "train_kind",
            "scope",
            "task_set",
            "subject",
            "fold",
            "cumulative_repetitions",
            "architecture",
            "recall",
            "specificity",
            "balanced_accuracy",
            "tp",
            "fn",
            "tn",
            "fp",
        ],
        rows,
    )?;

    let mut rows = Vec::new();
    for t in &run.summary_tables {
        for r in &t.rows {
            let mut row = group_cols(r.analysis, r.train_kind, r.scope, t.task_set);
            row.push(
                r.cumulative_repetitions
                    .map_or_else(|| ABSENT.into(), |k| k.to_string()),
            );
            row.push(r.recall.map_or_else(|| ABSENT.into(), |m| m.n.to_string()));
            for cell in [r.recall, r.specificity] {
                row.push(opt_metric(cell.map(|m| m.mean)));
                row.push(opt_metric(cell.map(|m| m.std)));
            }
            rows.push(row);
        }
    }
    write_csv(
        out_dir,
        "summary.csv",
        &[
            "analysis",
            "train_kind",
            "scope",
            "task_set",
            "cumulative_repetitions",
            "n",
            "recall_mean",
            "recall_std",
            "specificity_mean",
            "specificity_std",
        ],
        rows,
    )?;

    let mut rows = Vec::new();
    for g in &run.repetition_grids {
        for gr in &g.grid.rows {
            for (i, k) in g.grid.repetitions.iter().enumerate() {
                let mut row = group_cols(g.analysis, g.train_kind, g.scope, g.task_set);
                row.extend([
                    gr.subject.clone(),
                    k.to_string(),
                    opt_metric(gr.recall[i]),
                    opt_metric(gr.specificity[i]),
                ]);
                rows.push(row);
            }
        }
    }
    write_csv(
        out_dir,
        "repetition_grid.csv",
        &[
            "analysis",
            "train_kind",
            "scope",
            "task_set",
            "subject",
            "cumulative_repetitions",
            "recall",
            "specificity",
        ],
        rows,
    )?;

    let mut miss = Vec::new();
    let mut rates = Vec::new();
    for g in &run.misclassifications {
        for m in &g.rows {
            let mut row = group_cols(g.analysis, g.train_kind, g.scope, g.task_set);
            row.extend([
                m.task_id.as_str().into(),
                m.subject.clone(),
                m.cumulative_repetitions.to_string(),
                m.count.to_string(),
            ]);
            miss.push(row);
        }
        for t in &g.miss_rates {
            let mut row = group_cols(g.analysis, g.train_kind, g.scope, g.task_set);
            row.extend([
                t.task_id.as_str().into(),
                t.missed.to_string(),
                t.validated.to_string(),
                metric(t.missed as f64 / t.validated.max(1) as f64),
            ]);
            rates.push(row);
        }
    }
    write_csv(
        out_dir,
        "misclassifications.csv",
        &[
            "analysis",
            "train_kind",
            "scope",
            "task_set",
            "task_id",
            "subject",
            "cumulative_repetitions",
            "count",
        ],
        miss,
    )?;
    write_csv(
        out_dir,
        "task_miss_rates.csv",
        &[
            "analysis",
            "train_kind",
            "scope",
            "task_set",
            "task_id",
            "missed",
            "validated",
            "miss_rate",
        ],
        rates,
    )?;

    let rows = run
        .statistics
        .iter()
        .map(|s| {
            vec![
                s.test.clone(),
                s.comparison.clone(),
                s.metric.as_str().into(),
                s.n.to_string(),
                s.statistic.map_or_else(String::new, metric),
                s.p_value.map_or_else(String::new, p_value),
                s.significant.map_or_else(String::new, |b| b.to_string()),
                s.note.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(
        out_dir,
        "statistics.csv",
        &[
            "test",
            "comparison",
            "metric",
            "n",
            "statistic",
            "p_value",
            "significant",
            "note",
        ],
        rows,
    )
}

/// Names of the files [`emit`] writes.
pub const OUTPUT_FILES: [&str; 8] = [
    "run_summary.json",
    "config.json",
    "records.csv",
    "summary.csv",
    "repetition_grid.csv",
    "misclassifications.csv",
    "task_miss_rates.csv",
    "statistics.csv",
];

//! Experiment runner: plans splits, trains each distinct training set once,
//! scores every split and runs the paired comparisons.
//!
//! Splits sharing a training set (analysis 2 reuses analysis-1 training, the
//! two analysis-3 variants share calibration sets) share one model. Models
//! are trained in parallel; each training run is sequential and seeded, so
//! results do not depend on the execution mode.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{is_significant, kendall_tau, score, wilcoxon_signed_rank, Metric, Misclassified, ResultRecord};
use crate::exec::Execution;
use crate::learn::{calibrate_encoded, predict_encoded, train_encoded, Architecture, Classifier, Encoded, TrainConfig};
use crate::model::{ArtifactKind, EpochRef, Label, TaskSetName, TaskSetVariant};
use crate::pipeline::FeatureDataset;
use crate::xplan::{
    plan_analysis1, plan_analysis2, plan_analysis3, subjects_of, Analysis, Analysis3Variant, PlanScope, ScopeKind,
    SplitSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub analyses: Vec<Analysis>,
    /// Scopes for analyses 1 and 2; analysis 3 always pre-trains and
    /// calibrates.
    pub scopes: Vec<ScopeKind>,
    pub task_sets: Vec<TaskSetName>,
    pub architecture: Architecture,
    /// Per-image z-score before the classifier.
    pub standardize: bool,
    pub train: TrainConfig,
    /// Leave-one-subject-out over the first `n` subjects only.
    pub subjects_used: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            analyses: Analysis::ALL.to_vec(),
            scopes: vec![ScopeKind::Individual, ScopeKind::Generalized],
            task_sets: vec![TaskSetName::Full, TaskSetName::Selected],
            architecture: Architecture::LinearBaseline,
            standardize: true,
            train: TrainConfig::default(),
            subjects_used: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.analyses.is_empty() || self.task_sets.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one analysis and one task set required".into(),
            ));
        }
        if self.scopes.contains(&ScopeKind::PretrainCalibrate) {
            return Err(Error::InvalidConfig(
                "pretrain_calibrate is implied by analyses a3_1 and a3_2".into(),
            ));
        }
        Ok(())
    }
}

const KINDS: [ArtifactKind; 2] = [ArtifactKind::IsometricContraction, ArtifactKind::ContinuousMovement];

fn analysis_kind(a: Analysis) -> Option<ArtifactKind> {
    match a {
        Analysis::A1Contraction | Analysis::A2TrainContraction => Some(ArtifactKind::IsometricContraction),
        Analysis::A1Movement | Analysis::A2TrainMovement => Some(ArtifactKind::ContinuousMovement),
        Analysis::A3_1 | Analysis::A3_2 => None,
    }
}

/// Every split requested by `config`, in a fixed order.
pub fn plan_experiment(dataset: &FeatureDataset, config: &ExperimentConfig) -> Result<Vec<SplitSpec>> {
    config.validate()?;
    let metas = dataset.metas();
    let mut out = Vec::new();
    let mut analyses = config.analyses.clone();
    analyses.sort();
    analyses.dedup();
    let mut task_sets = config.task_sets.clone();
    task_sets.sort();
    task_sets.dedup();
    for &analysis in &analyses {
        for &ts_name in &task_sets {
            let ts = TaskSetVariant::from_name(ts_name);
            match analysis {
                Analysis::A3_1 | Analysis::A3_2 => {
                    let variant = if analysis == Analysis::A3_1 {
                        Analysis3Variant::IntegrateA1
                    } else {
                        Analysis3Variant::IntegrateA2
                    };
                    for kind in KINDS {
                        for subject in subjects_of(metas) {
                            out.extend(plan_analysis3(metas, variant, kind, &subject, &ts)?);
                        }
                    }
                }
                _ => {
                    let kind = analysis_kind(analysis).expect("a1/a2 carry a kind");
                    for &scope in &config.scopes {
                        let scope = match scope {
                            ScopeKind::Individual => PlanScope::Individual,
                            _ => PlanScope::Generalized {
                                subjects_used: config.subjects_used,
                            },
                        };
                        let plans = if matches!(analysis, Analysis::A1Contraction | Analysis::A1Movement) {
                            plan_analysis1(metas, kind, scope, &ts)?
                        } else {
                            plan_analysis2(metas, kind, scope, &ts)?
                        };
                        out.extend(plans);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Encoded inputs, cached for architectures with compact encodings.
struct Inputs<'a> {
    dataset: &'a FeatureDataset,
    proto: Box<dyn Classifier>,
    cache: Option<Vec<Encoded>>,
}

impl<'a> Inputs<'a> {
    fn new(dataset: &'a FeatureDataset, config: &ExperimentConfig, exec: Execution) -> Result<Self> {
        let proto = config.architecture.build(config.standardize);
        let cache = match config.architecture {
            Architecture::LinearBaseline => Some(exec.try_map(dataset.images(), |img| proto.encode(img))?),
            Architecture::ReferenceCnn => None,
        };
        Ok(Inputs { dataset, proto, cache })
    }

    fn get(&self, id: &EpochRef) -> Result<Cow<'_, Encoded>> {
        let pos = self
            .dataset
            .position(id)
            .ok_or_else(|| Error::Plan(format!("epoch {id} missing from dataset")))?;
        Ok(match &self.cache {
            Some(c) => Cow::Borrowed(&c[pos]),
            None => Cow::Owned(self.proto.encode(&self.dataset.images()[pos])?),
        })
    }

    fn batch(&self, ids: &[EpochRef]) -> Result<(Vec<Cow<'_, Encoded>>, Vec<bool>)> {
        let xs = ids.iter().map(|id| self.get(id)).collect::<Result<Vec<_>>>()?;
        let labels = ids
            .iter()
            .map(|id| self.dataset.meta(id).map(|m| m.label.is_artifact()).unwrap_or(false))
            .collect();
        Ok((xs, labels))
    }
}

fn fit(inputs: &Inputs<'_>, ids: &[EpochRef], config: &ExperimentConfig) -> Result<Box<dyn Classifier>> {
    let (xs, labels) = inputs.batch(ids)?;
    let refs: Vec<&Encoded> = xs.iter().map(|c| c.as_ref()).collect();
    let mut model = config.architecture.build(config.standardize);
    train_encoded(model.as_mut(), &refs, &labels, &config.train)?;
    Ok(model)
}

fn evaluate(
    inputs: &Inputs<'_>,
    model: &dyn Classifier,
    split: &SplitSpec,
    architecture: Architecture,
) -> Result<ResultRecord> {
    let mut predictions = Vec::with_capacity(split.validation_epochs.len());
    let mut truths = Vec::with_capacity(split.validation_epochs.len());
    let mut misclassified = Vec::new();
    let mut validated_by_task = BTreeMap::new();
    for id in &split.validation_epochs {
        let meta = inputs
            .dataset
            .meta(id)
            .ok_or_else(|| Error::Plan(format!("epoch {id} missing from dataset")))?;
        let predicted = predict_encoded(model, inputs.get(id)?.as_ref())?.is_artifact;
        let truth = meta.label.is_artifact();
        if let Some(t) = meta.task_id {
            *validated_by_task.entry(t).or_insert(0) += 1;
        }
        if predicted != truth {
            misclassified.push(Misclassified {
                epoch: id.clone(),
                task_id: meta.task_id,
                true_label: meta.label,
                predicted_label: if predicted { Label::Artifact } else { Label::NonArtifact },
            });
        }
        predictions.push(predicted);
        truths.push(truth);
    }
    let s = score(&predictions, &truths)?;
    Ok(ResultRecord {
        analysis: split.analysis,
        train_kind: split.train_kind,
        scope: split.scope.kind,
        task_set: split.task_set,
        subject: split.scope.subject().to_string(),
        fold: split.fold_index,
        cumulative_repetitions: split.cumulative_repetitions,
        architecture,
        recall: s.recall,
        specificity: s.specificity,
        balanced_accuracy: s.balanced_accuracy,
        counts: s.counts,
        validated_by_task,
        misclassified,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    /// `wilcoxon` or `kendall`.
    pub test: String,
    pub comparison: String,
    pub metric: Metric,
    pub n: usize,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub significant: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub records: Vec<ResultRecord>,
    pub statistics: Vec<StatRow>,
}

/// Plans, trains, scores and tests.
pub fn run_experiment(
    dataset: &FeatureDataset,
    config: &ExperimentConfig,
    exec: Execution,
) -> Result<ExperimentOutput> {
    let splits = plan_experiment(dataset, config)?;
    let inputs = Inputs::new(dataset, config, exec)?;

    let pretrain_sets: Vec<Vec<EpochRef>> = splits
        .iter()
        .filter_map(|s| s.pretrain_epochs.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    info!("pre-training {} models", pretrain_sets.len());
    let pretrained: BTreeMap<&Vec<EpochRef>, Box<dyn Classifier>> = pretrain_sets
        .iter()
        .zip(exec.try_map(&pretrain_sets, |ids| fit(&inputs, ids, config))?)
        .collect();

    let mut groups: BTreeMap<(Option<&Vec<EpochRef>>, &Vec<EpochRef>), Vec<usize>> = BTreeMap::new();
    for (i, s) in splits.iter().enumerate() {
        groups
            .entry((s.pretrain_epochs.as_ref(), &s.train_epochs))
            .or_default()
            .push(i);
    }
    let groups: Vec<_> = groups.into_iter().collect();
    info!("{} splits, {} distinct training sets", splits.len(), groups.len());
    let scored = exec.try_map(
        &groups,
        |((pre, train), members)| -> Result<Vec<(usize, ResultRecord)>> {
            let model = match pre {
                Some(p) => {
                    let (xs, labels) = inputs.batch(train)?;
                    let refs: Vec<&Encoded> = xs.iter().map(|c| c.as_ref()).collect();
                    calibrate_encoded(pretrained[p].as_ref(), &refs, &labels, &config.train)?.0
                }
                None => fit(&inputs, train, config)?,
            };
            members
                .iter()
                .map(|&i| Ok((i, evaluate(&inputs, model.as_ref(), &splits[i], config.architecture)?)))
                .collect()
        },
    )?;
    let mut indexed: Vec<(usize, ResultRecord)> = scored.into_iter().flatten().collect();
    indexed.sort_by_key(|(i, _)| *i);
    let records: Vec<ResultRecord> = indexed.into_iter().map(|(_, r)| r).collect();
    let statistics = compare(&records);
    Ok(ExperimentOutput { records, statistics })
}

/// Label of an analysis together with its training kind.
pub fn analysis_label(analysis: Analysis, train_kind: ArtifactKind) -> String {
    match analysis {
        Analysis::A3_1 | Analysis::A3_2 => format!("{}/{}", analysis.as_str(), train_kind.as_str()),
        _ => analysis.as_str().to_string(),
    }
}

const METRICS: [Metric; 2] = [Metric::Recall, Metric::Specificity];

fn stat_row(test: &str, comparison: String, metric: Metric, n: usize, result: Result<(f64, f64)>) -> StatRow {
    match result {
        Ok((statistic, p)) => StatRow {
            test: test.into(),
            comparison,
            metric,
            n,
            statistic: Some(statistic),
            p_value: Some(p),
            significant: Some(is_significant(p)),
            note: None,
        },
        Err(e) => StatRow {
            test: test.into(),
            comparison,
            metric,
            n,
            statistic: None,
            p_value: None,
            significant: None,
            note: Some(e.to_string()),
        },
    }
}

fn paired_wilcoxon(
    out: &mut Vec<StatRow>,
    comparison: &str,
    left: &BTreeMap<(String, u32, u32), &ResultRecord>,
    right: &BTreeMap<(String, u32, u32), &ResultRecord>,
) {
    let keys: Vec<_> = left.keys().filter(|k| right.contains_key(*k)).collect();
    if keys.is_empty() {
        return;
    }
    for metric in METRICS {
        let a: Vec<f64> = keys.iter().map(|k| metric.of(left[*k])).collect();
        let b: Vec<f64> = keys.iter().map(|k| metric.of(right[*k])).collect();
        let r = wilcoxon_signed_rank(&a, &b).map(|w| (w.statistic, w.p_value));
        out.push(stat_row("wilcoxon", comparison.to_string(), metric, keys.len(), r));
    }
}

type GroupKey = (Analysis, ArtifactKind, ScopeKind, TaskSetName);

/// Paired Wilcoxon tests (full vs selected, individual vs pre-trained and
/// calibrated, individual vs generalized) and Kendall tau between cumulative
/// repetitions and each metric.
pub fn compare(records: &[ResultRecord]) -> Vec<StatRow> {
    let mut groups: BTreeMap<GroupKey, BTreeMap<(String, u32, u32), &ResultRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.analysis, r.train_kind, r.scope, r.task_set))
            .or_default()
            .insert((r.subject.clone(), r.fold, r.cumulative_repetitions), r);
    }
    let mut out = Vec::new();

    for (&(analysis, kind, scope, ts), full) in &groups {
        if ts != TaskSetName::Full {
            continue;
        }
        if let Some(sel) = groups.get(&(analysis, kind, scope, TaskSetName::Selected)) {
            let c = format!(
                "{} {}: full vs selected",
                analysis_label(analysis, kind),
                scope.as_str()
            );
            paired_wilcoxon(&mut out, &c, full, sel);
        }
    }

    for (base, integrated) in [
        (Analysis::A1Contraction, Analysis::A3_1),
        (Analysis::A2TrainContraction, Analysis::A3_2),
    ] {
        for kind in KINDS {
            let base = match (base, kind) {
                (Analysis::A1Contraction, k) => Analysis::a1(k),
                (_, k) => Analysis::a2(k),
            };
            for ts in [TaskSetName::Full, TaskSetName::Selected] {
                let (Some(l), Some(r)) = (
                    groups.get(&(base, kind, ScopeKind::Individual, ts)),
                    groups.get(&(integrated, kind, ScopeKind::PretrainCalibrate, ts)),
                ) else {
                    continue;
                };
                let c = format!(
                    "{} {}: individual vs {}",
                    base.as_str(),
                    ts.as_str(),
                    analysis_label(integrated, kind)
                );
                paired_wilcoxon(&mut out, &c, l, r);
            }
        }
    }

    for (&(analysis, kind, scope, ts), gen) in &groups {
        if scope != ScopeKind::Generalized {
            continue;
        }
        let Some(ind) = groups.get(&(analysis, kind, ScopeKind::Individual, ts)) else {
            continue;
        };
        // individual models averaged over folds, paired with the held-out subject
        let mut folds: BTreeMap<(&str, u32), Vec<&ResultRecord>> = BTreeMap::new();
        for ((subject, _, k), r) in ind {
            folds.entry((subject.as_str(), *k)).or_default().push(r);
        }
        let gen_by: BTreeMap<(&str, u32), &ResultRecord> =
            gen.iter().map(|((s, _, k), r)| ((s.as_str(), *k), *r)).collect();
        let keys: Vec<(&str, u32)> = folds.keys().filter(|k| gen_by.contains_key(*k)).copied().collect();
        if keys.is_empty() {
            continue;
        }
        let c = format!(
            "{} {}: individual vs generalized",
            analysis_label(analysis, kind),
            ts.as_str()
        );
        for metric in METRICS {
            let a: Vec<f64> = keys
                .iter()
                .map(|k| {
                    let rs = &folds[k];
                    rs.iter().map(|r| metric.of(r)).sum::<f64>() / rs.len() as f64
                })
                .collect();
            let b: Vec<f64> = keys.iter().map(|k| metric.of(gen_by[k])).collect();
            let r = wilcoxon_signed_rank(&a, &b).map(|w| (w.statistic, w.p_value));
            out.push(stat_row("wilcoxon", c.clone(), metric, keys.len(), r));
        }
    }

    for (&(analysis, kind, scope, ts), recs) in &groups {
        let c = format!(
            "{} {} {}: cumulative repetitions",
            analysis_label(analysis, kind),
            scope.as_str(),
            ts.as_str()
        );
        let k: Vec<f64> = recs.values().map(|r| r.cumulative_repetitions as f64).collect();
        for metric in METRICS {
            let y: Vec<f64> = recs.values().map(|r| metric.of(r)).collect();
            let r = kendall_tau(&k, &y).map(|t| (t.tau, t.p_value));
            out.push(stat_row("kendall", c.clone(), metric, k.len(), r));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = ExperimentConfig {
            scopes: vec![ScopeKind::PretrainCalibrate],
            ..ExperimentConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig {
            analyses: vec![],
            ..ExperimentConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(
            analysis_label(Analysis::A3_2, ArtifactKind::ContinuousMovement),
            "a3_2/movement"
        );
        assert_eq!(
            analysis_label(Analysis::A1Contraction, ArtifactKind::IsometricContraction),
            "a1_contraction"
        );
    }
}

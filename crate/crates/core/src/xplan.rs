//! Train/validation split enumeration for the three analyses.
//!
//! * Analysis 1 trains and validates within one artifact kind. Individual
//!   models use repetition cross-validation: fold `f` validates repetition
//!   `f + 1` of every task plus non-artifact fold `f`; training at cumulative
//!   count `k` takes the `k` folds after `f` (wrapping), artifact and
//!   non-artifact alike. Generalized models hold out one subject and train on
//!   repetitions `1..=k` and non-artifact folds `0..k` of everyone else.
//! * Analysis 2 keeps the analysis-1 training sets and validates on all
//!   epochs of the other artifact kind plus the analysis-1 non-artifact
//!   validation epochs.
//! * Analysis 3 repeats the individual plans of 1 or 2 with a pre-training
//!   set: all same-kind artifact and all non-artifact epochs of the other
//!   subjects.
//!
//! Non-artifact folds are contiguous runs in onset order. Plans are pure
//! functions of their inputs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArtifactKind, EpochMeta, EpochRef, Label, TaskSetName, TaskSetVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    A1Contraction,
    A1Movement,
    A2TrainContraction,
    A2TrainMovement,
    #[serde(rename = "a3_1")]
    A3_1,
    #[serde(rename = "a3_2")]
    A3_2,
}

impl Analysis {
    pub const ALL: [Analysis; 6] = [
        Analysis::A1Contraction,
        Analysis::A1Movement,
        Analysis::A2TrainContraction,
        Analysis::A2TrainMovement,
        Analysis::A3_1,
        Analysis::A3_2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Analysis::A1Contraction => "a1_contraction",
            Analysis::A1Movement => "a1_movement",
            Analysis::A2TrainContraction => "a2_train_contraction",
            Analysis::A2TrainMovement => "a2_train_movement",
            Analysis::A3_1 => "a3_1",
            Analysis::A3_2 => "a3_2",
        }
    }

    pub fn parse(s: &str) -> Option<Analysis> {
        Analysis::ALL.into_iter().find(|a| a.as_str() == s)
    }

    pub fn a1(kind: ArtifactKind) -> Analysis {
        match kind {
            ArtifactKind::IsometricContraction => Analysis::A1Contraction,
            ArtifactKind::ContinuousMovement => Analysis::A1Movement,
        }
    }

    pub fn a2(train_kind: ArtifactKind) -> Analysis {
        match train_kind {
            ArtifactKind::IsometricContraction => Analysis::A2TrainContraction,
            ArtifactKind::ContinuousMovement => Analysis::A2TrainMovement,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeKind {
    Individual,
    Generalized,
    PretrainCalibrate,
}

impl ScopeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScopeKind::Individual => "individual",
            ScopeKind::Generalized => "generalized",
            ScopeKind::PretrainCalibrate => "pretrain_calibrate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelScope {
    pub kind: ScopeKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub subject_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub held_out_subject: Option<String>,
}

impl ModelScope {
    pub fn individual(subject: &str) -> Self {
        ModelScope {
            kind: ScopeKind::Individual,
            subject_id: Some(subject.to_string()),
            held_out_subject: None,
        }
    }

    pub fn generalized(held_out: &str) -> Self {
        ModelScope {
            kind: ScopeKind::Generalized,
            subject_id: None,
            held_out_subject: Some(held_out.to_string()),
        }
    }

    pub fn pretrain_calibrate(subject: &str) -> Self {
        ModelScope {
            kind: ScopeKind::PretrainCalibrate,
            subject_id: Some(subject.to_string()),
            held_out_subject: None,
        }
    }

    pub fn is_valid(&self) -> bool {
        match self.kind {
            ScopeKind::Individual | ScopeKind::PretrainCalibrate => {
                self.subject_id.is_some() && self.held_out_subject.is_none()
            }
            ScopeKind::Generalized => self.subject_id.is_none() && self.held_out_subject.is_some(),
        }
    }

    /// The subject whose data is validated.
    pub fn subject(&self) -> &str {
        self.subject_id
            .as_deref()
            .or(self.held_out_subject.as_deref())
            .unwrap_or("")
    }
}

/// Scope requested from a planner; plans cover every subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanScope {
    Individual,
    /// Leave-one-subject-out over the first `subjects_used` subjects (sorted
    /// by id); `None` uses all of them.
    Generalized {
        subjects_used: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub analysis: Analysis,
    /// Artifact kind of the training data.
    pub train_kind: ArtifactKind,
    pub scope: ModelScope,
    pub task_set: TaskSetName,
    /// 0-based validation fold (individual) or held-out subject index
    /// (generalized).
    pub fold_index: u32,
    pub cumulative_repetitions: u32,
    pub train_epochs: Vec<EpochRef>,
    pub validation_epochs: Vec<EpochRef>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pretrain_epochs: Option<Vec<EpochRef>>,
}

/// Epoch metadata grouped by subject, in subject-id order.
struct BySubject<'a> {
    subjects: BTreeMap<&'a str, Vec<&'a EpochMeta>>,
}

impl<'a> BySubject<'a> {
    fn new(epochs: &'a [EpochMeta]) -> Self {
        let mut subjects: BTreeMap<&str, Vec<&EpochMeta>> = BTreeMap::new();
        for e in epochs {
            subjects.entry(e.subject()).or_default().push(e);
        }
        BySubject { subjects }
    }

    fn artifacts(&self, subject: &str, kind: ArtifactKind, task_set: &TaskSetVariant) -> Vec<&'a EpochMeta> {
        self.subjects
            .get(subject)
            .map(|v| {
                v.iter()
                    .copied()
                    .filter(|e| {
                        e.label == Label::Artifact
                            && e.kind() == Some(kind)
                            && e.task_id.is_some_and(|t| task_set.includes_id(t))
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    fn non_artifacts(&self, subject: &str) -> Vec<&'a EpochMeta> {
        self.subjects
            .get(subject)
            .map(|v| v.iter().copied().filter(|e| e.label == Label::NonArtifact).collect())
            .unwrap_or_default()
    }
}

fn refs<'a>(it: impl IntoIterator<Item = &'a EpochMeta>) -> Vec<EpochRef> {
    it.into_iter().map(|e| e.id.clone()).collect()
}

fn sort_refs(mut v: Vec<EpochRef>) -> Vec<EpochRef> {
    v.sort();
    v
}

/// Splits non-artifact epochs into `n_folds` contiguous groups in onset
/// order; sizes differ by at most one, larger groups first.
pub fn nonartifact_folds(epochs: &[&EpochMeta], n_folds: usize) -> Result<Vec<Vec<EpochRef>>> {
    if n_folds == 0 || epochs.len() < n_folds {
        return Err(Error::Plan(format!(
            "{} non-artifact epochs cannot fill {n_folds} folds",
            epochs.len()
        )));
    }
    let mut sorted: Vec<&EpochMeta> = epochs.to_vec();
    sorted.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s).then_with(|| a.id.cmp(&b.id)));
    let base = sorted.len() / n_folds;
    let extra = sorted.len() % n_folds;
    let mut out = Vec::with_capacity(n_folds);
    let mut it = sorted.into_iter();
    for f in 0..n_folds {
        let size = base + usize::from(f < extra);
        out.push(refs(it.by_ref().take(size)));
    }
    Ok(out)
}

/// Artifact epochs of one subject grouped by repetition (index `r - 1`).
fn repetition_folds(
    artifacts: &[&EpochMeta],
    repetitions: u32,
    expected_tasks: usize,
    subject: &str,
) -> Result<Vec<Vec<EpochRef>>> {
    let mut folds = vec![Vec::new(); repetitions as usize];
    for e in artifacts {
        let r = e.repetition.unwrap_or(0);
        if r == 0 || r > repetitions {
            return Err(Error::Plan(format!(
                "{}: repetition {r} outside 1..={repetitions}",
                e.id
            )));
        }
        folds[r as usize - 1].push(e.id.clone());
    }
    let expected = expected_tasks * repetitions as usize;
    // one missing artifact epoch per subject is tolerated
    if artifacts.len() + 1 < expected {
        return Err(Error::Plan(format!(
            "subject {subject}: {} of {expected} artifact epochs present",
            artifacts.len()
        )));
    }
    Ok(folds)
}

fn kind_task_count(kind: ArtifactKind, task_set: &TaskSetVariant) -> usize {
    crate::model::default_task_catalog()
        .iter()
        .filter(|t| t.kind == kind && task_set.includes(t))
        .count()
}

/// Training folds for validation fold `fold` at cumulative count `k`.
fn cumulative_folds(fold: usize, k: usize, n: usize) -> impl Iterator<Item = usize> {
    (1..=k).map(move |j| (fold + j) % n)
}

struct IndividualFold {
    fold: usize,
    k: u32,
    train: Vec<EpochRef>,
    val_artifacts: Vec<EpochRef>,
    val_non_artifacts: Vec<EpochRef>,
}

fn individual_folds(
    idx: &BySubject<'_>,
    subject: &str,
    kind: ArtifactKind,
    task_set: &TaskSetVariant,
) -> Result<Vec<IndividualFold>> {
    let reps = kind.protocol_repetitions();
    let n = reps as usize;
    let arts = idx.artifacts(subject, kind, task_set);
    let art_folds = repetition_folds(&arts, reps, kind_task_count(kind, task_set), subject)?;
    let na_folds = nonartifact_folds(&idx.non_artifacts(subject), n)?;
    let mut out = Vec::with_capacity(n * (n - 1));
    for fold in 0..n {
        for k in 1..n {
            let mut train = Vec::new();
            for t in cumulative_folds(fold, k, n) {
                train.extend(art_folds[t].iter().cloned());
                train.extend(na_folds[t].iter().cloned());
            }
            out.push(IndividualFold {
                fold,
                k: k as u32,
                train: sort_refs(train),
                val_artifacts: art_folds[fold].clone(),
                val_non_artifacts: na_folds[fold].clone(),
            });
        }
    }
    Ok(out)
}

struct GeneralizedFold {
    held_out_index: usize,
    held_out: String,
    k: u32,
    train: Vec<EpochRef>,
}

fn generalized_folds(
    idx: &BySubject<'_>,
    kind: ArtifactKind,
    task_set: &TaskSetVariant,
    subjects_used: Option<usize>,
) -> Result<Vec<GeneralizedFold>> {
    let all: Vec<&str> = idx.subjects.keys().copied().collect();
    let used = subjects_used.unwrap_or(all.len());
    if used < 2 || used > all.len() {
        return Err(Error::Plan(format!(
            "subjects_used must be in [2, {}], got {used}",
            all.len()
        )));
    }
    let subjects = &all[..used];
    let reps = kind.protocol_repetitions();
    let n = reps as usize;
    let mut per_subject = BTreeMap::new();
    for &s in subjects {
        let arts = idx.artifacts(s, kind, task_set);
        let art_folds = repetition_folds(&arts, reps, kind_task_count(kind, task_set), s)?;
        let na_folds = nonartifact_folds(&idx.non_artifacts(s), n)?;
        per_subject.insert(s, (art_folds, na_folds));
    }
    let mut out = Vec::new();
    for (h, &held_out) in subjects.iter().enumerate() {
        for k in 1..n {
            let mut train = Vec::new();
            for &s in subjects.iter().filter(|&&s| s != held_out) {
                let (arts, nas) = &per_subject[s];
                for t in 0..k {
                    train.extend(arts[t].iter().cloned());
                    train.extend(nas[t].iter().cloned());
                }
            }
            out.push(GeneralizedFold {
                held_out_index: h,
                held_out: held_out.to_string(),
                k: k as u32,
                train: sort_refs(train),
            });
        }
    }
    Ok(out)
}

fn check_task_set(kind: ArtifactKind, task_set: &TaskSetVariant) -> Result<()> {
    task_set.validate()?;
    if kind_task_count(kind, task_set) == 0 {
        return Err(Error::Plan(format!(
            "task set {} has no {} tasks",
            task_set.name.as_str(),
            kind.as_str()
        )));
    }
    Ok(())
}

fn plan_within_kind(
    epochs: &[EpochMeta],
    train_kind: ArtifactKind,
    scope: PlanScope,
    task_set: &TaskSetVariant,
    cross_kind: bool,
) -> Result<Vec<SplitSpec>> {
    check_task_set(train_kind, task_set)?;
    let idx = BySubject::new(epochs);
    let analysis = if cross_kind {
        Analysis::a2(train_kind)
    } else {
        Analysis::a1(train_kind)
    };
    let other = train_kind.other();
    let mut out = Vec::new();
    match scope {
        PlanScope::Individual => {
            for &subject in idx.subjects.keys() {
                let other_arts = refs(idx.artifacts(subject, other, task_set));
                for f in individual_folds(&idx, subject, train_kind, task_set)? {
                    let mut validation = if cross_kind {
                        other_arts.clone()
                    } else {
                        f.val_artifacts
                    };
                    validation.extend(f.val_non_artifacts);
                    out.push(SplitSpec {
                        analysis,
                        train_kind,
                        scope: ModelScope::individual(subject),
                        task_set: task_set.name,
                        fold_index: f.fold as u32,
                        cumulative_repetitions: f.k,
                        train_epochs: f.train,
                        validation_epochs: sort_refs(validation),
                        pretrain_epochs: None,
                    });
                }
            }
        }
        PlanScope::Generalized { subjects_used } => {
            for f in generalized_folds(&idx, train_kind, task_set, subjects_used)? {
                let val_kind = if cross_kind { other } else { train_kind };
                let mut validation = refs(idx.artifacts(&f.held_out, val_kind, task_set));
                validation.extend(refs(idx.non_artifacts(&f.held_out)));
                out.push(SplitSpec {
                    analysis,
                    train_kind,
                    scope: ModelScope::generalized(&f.held_out),
                    task_set: task_set.name,
                    fold_index: f.held_out_index as u32,
                    cumulative_repetitions: f.k,
                    train_epochs: f.train,
                    validation_epochs: sort_refs(validation),
                    pretrain_epochs: None,
                });
            }
        }
    }
    Ok(out)
}

/// Analysis 1: train and validate on one artifact kind.
pub fn plan_analysis1(
    epochs: &[EpochMeta],
    kind: ArtifactKind,
    scope: PlanScope,
    task_set: &TaskSetVariant,
) -> Result<Vec<SplitSpec>> {
    plan_within_kind(epochs, kind, scope, task_set, false)
}

/// Analysis 2: analysis-1 training on `train_kind`, validation on the other
/// kind.
pub fn plan_analysis2(
    epochs: &[EpochMeta],
    train_kind: ArtifactKind,
    scope: PlanScope,
    task_set: &TaskSetVariant,
) -> Result<Vec<SplitSpec>> {
    check_task_set(train_kind.other(), task_set)?;
    plan_within_kind(epochs, train_kind, scope, task_set, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis3Variant {
    IntegrateA1,
    IntegrateA2,
}

/// Analysis 3 for one subject: the individual plan of analysis 1 or 2 plus
/// a pre-training set drawn from every other subject.
pub fn plan_analysis3(
    epochs: &[EpochMeta],
    variant: Analysis3Variant,
    train_kind: ArtifactKind,
    subject: &str,
    task_set: &TaskSetVariant,
) -> Result<Vec<SplitSpec>> {
    let idx = BySubject::new(epochs);
    if idx.subjects.len() < 2 {
        return Err(Error::Plan("pre-training needs at least two subjects".into()));
    }
    if !idx.subjects.contains_key(subject) {
        return Err(Error::Plan(format!("unknown subject {subject}")));
    }
    let mut pretrain = Vec::new();
    for &other in idx.subjects.keys().filter(|&&s| s != subject) {
        pretrain.extend(refs(idx.artifacts(other, train_kind, task_set)));
        pretrain.extend(refs(idx.non_artifacts(other)));
    }
    let pretrain = sort_refs(pretrain);
    let subject_epochs: Vec<EpochMeta> = epochs.iter().filter(|e| e.subject() == subject).cloned().collect();
    let (base, analysis) = match variant {
        Analysis3Variant::IntegrateA1 => (
            plan_analysis1(&subject_epochs, train_kind, PlanScope::Individual, task_set)?,
            Analysis::A3_1,
        ),
        Analysis3Variant::IntegrateA2 => (
            plan_analysis2(&subject_epochs, train_kind, PlanScope::Individual, task_set)?,
            Analysis::A3_2,
        ),
    };
    Ok(base
        .into_iter()
        .map(|s| SplitSpec {
            analysis,
            scope: ModelScope::pretrain_calibrate(subject),
            pretrain_epochs: Some(pretrain.clone()),
            ..s
        })
        .collect())
}

/// Subjects present in an epoch list, sorted.
pub fn subjects_of(epochs: &[EpochMeta]) -> Vec<String> {
    BySubject::new(epochs).subjects.keys().map(|s| s.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{default_task_catalog, TaskId};
    use std::collections::BTreeSet;

    /// Full-protocol metadata: 95 artifact epochs and `n_eo` EO epochs per
    /// subject.
    pub(crate) fn protocol_epochs(subjects: usize, n_eo: usize) -> Vec<EpochMeta> {
        let catalog = default_task_catalog();
        let mut out = Vec::new();
        for s in 0..subjects {
            let subject = format!("S{:02}", s + 1);
            let mut seq = 0;
            let mut t = 300.0;
            for task in &catalog {
                for rep in 1..=task.protocol_repetitions {
                    out.push(EpochMeta {
                        id: EpochRef {
                            subject: subject.clone(),
                            seq,
                        },
                        label: Label::Artifact,
                        task_id: Some(task.task_id),
                        repetition: Some(rep),
                        onset_s: t,
                        duration_s: task.epoch_duration_s,
                    });
                    seq += 1;
                    t += task.epoch_duration_s + 2.0;
                }
            }
            for i in 0..n_eo {
                out.push(EpochMeta {
                    id: EpochRef {
                        subject: subject.clone(),
                        seq,
                    },
                    label: Label::NonArtifact,
                    task_id: None,
                    repetition: None,
                    onset_s: 2.0 + 7.5 * i as f64,
                    duration_s: if i % 2 == 0 { 10.0 } else { 5.0 },
                });
                seq += 1;
            }
        }
        out
    }

    fn metas_by_ref(epochs: &[EpochMeta]) -> BTreeMap<EpochRef, &EpochMeta> {
        epochs.iter().map(|e| (e.id.clone(), e)).collect()
    }

    #[test]
    fn nonartifact_fold_sizes() {
        let epochs = protocol_epochs(1, 38);
        let nas: Vec<&EpochMeta> = epochs.iter().filter(|e| !e.label.is_artifact()).collect();
        let sizes = |n| -> Vec<usize> { nonartifact_folds(&nas, n).unwrap().iter().map(Vec::len).collect() };
        assert_eq!(sizes(10), [4, 4, 4, 4, 4, 4, 4, 4, 3, 3]);
        assert_eq!(sizes(5), [8, 8, 8, 7, 7]);
        assert!(nonartifact_folds(&nas[..3], 10).is_err());
        // onset order
        let folds = nonartifact_folds(&nas, 10).unwrap();
        let m = metas_by_ref(&epochs);
        let flat: Vec<f64> = folds.iter().flatten().map(|r| m[r].onset_s).collect();
        assert!(flat.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn analysis1_counts() {
        let epochs = protocol_epochs(7, 38);
        let full = TaskSetVariant::full();
        let c = plan_analysis1(
            &epochs,
            ArtifactKind::IsometricContraction,
            PlanScope::Individual,
            &full,
        )
        .unwrap();
        assert_eq!(c.len(), 630);
        let m = plan_analysis1(&epochs, ArtifactKind::ContinuousMovement, PlanScope::Individual, &full).unwrap();
        assert_eq!(m.len(), 140);
        let map = metas_by_ref(&epochs);
        let k1 = c.iter().find(|s| s.cumulative_repetitions == 1).unwrap();
        let art = |v: &[EpochRef]| v.iter().filter(|r| map[*r].label.is_artifact()).count();
        assert_eq!(art(&k1.train_epochs), 7);
        assert_eq!(art(&k1.validation_epochs), 7);

        let sel = plan_analysis1(
            &epochs,
            ArtifactKind::IsometricContraction,
            PlanScope::Individual,
            &TaskSetVariant::selected(),
        )
        .unwrap();
        assert!(sel.iter().all(|s| art(&s.validation_epochs) == 3));
    }

    #[test]
    fn cumulative_nesting_and_disjointness() {
        let epochs = protocol_epochs(2, 38);
        let plans = plan_analysis1(
            &epochs,
            ArtifactKind::IsometricContraction,
            PlanScope::Individual,
            &TaskSetVariant::full(),
        )
        .unwrap();
        let mut by_fold: BTreeMap<(String, u32), Vec<&SplitSpec>> = BTreeMap::new();
        for s in &plans {
            let train: BTreeSet<_> = s.train_epochs.iter().collect();
            assert!(s.validation_epochs.iter().all(|v| !train.contains(v)));
            by_fold
                .entry((s.scope.subject().to_string(), s.fold_index))
                .or_default()
                .push(s);
        }
        for splits in by_fold.values() {
            for w in splits.windows(2) {
                let a: BTreeSet<_> = w[0].train_epochs.iter().collect();
                let b: BTreeSet<_> = w[1].train_epochs.iter().collect();
                assert_eq!(w[0].cumulative_repetitions + 1, w[1].cumulative_repetitions);
                assert!(a.is_subset(&b) && a.len() < b.len());
            }
        }
        // accumulation starts after the validation fold: fold 9, k = 1 trains on repetition 1
        let map = metas_by_ref(&epochs);
        let s = plans
            .iter()
            .find(|s| s.fold_index == 9 && s.cumulative_repetitions == 1)
            .unwrap();
        assert!(s.train_epochs.iter().filter_map(|r| map[r].repetition).all(|r| r == 1));
    }

    #[test]
    fn generalized_plans() {
        let epochs = protocol_epochs(3, 38);
        let plans = plan_analysis1(
            &epochs,
            ArtifactKind::IsometricContraction,
            PlanScope::Generalized { subjects_used: None },
            &TaskSetVariant::full(),
        )
        .unwrap();
        assert_eq!(plans.len(), 3 * 9);
        for s in &plans {
            let held = s.scope.held_out_subject.as_deref().unwrap();
            assert!(s.train_epochs.iter().all(|r| r.subject != held));
            assert!(s.validation_epochs.iter().all(|r| r.subject == held));
            assert!(s.scope.is_valid());
        }
        let two = plan_analysis1(
            &epochs,
            ArtifactKind::ContinuousMovement,
            PlanScope::Generalized { subjects_used: Some(2) },
            &TaskSetVariant::full(),
        )
        .unwrap();
        assert_eq!(two.len(), 2 * 4);
        assert!(plan_analysis1(
            &epochs,
            ArtifactKind::ContinuousMovement,
            PlanScope::Generalized { subjects_used: Some(1) },
            &TaskSetVariant::full(),
        )
        .is_err());
    }

    #[test]
    fn analysis2_validation_sets() {
        let epochs = protocol_epochs(2, 38);
        let map = metas_by_ref(&epochs);
        let art = |v: &[EpochRef]| v.iter().filter(|r| map[*r].label.is_artifact()).count();
        let full = TaskSetVariant::full();
        let sel = TaskSetVariant::selected();

        let c = plan_analysis2(
            &epochs,
            ArtifactKind::IsometricContraction,
            PlanScope::Individual,
            &full,
        )
        .unwrap();
        assert!(c.iter().all(|s| art(&s.validation_epochs) == 25));
        let a1 = plan_analysis1(
            &epochs,
            ArtifactKind::IsometricContraction,
            PlanScope::Individual,
            &full,
        )
        .unwrap();
        for (x, y) in a1.iter().zip(&c) {
            assert_eq!(x.train_epochs, y.train_epochs);
            let nx: Vec<_> = x
                .validation_epochs
                .iter()
                .filter(|r| !map[*r].label.is_artifact())
                .collect();
            let ny: Vec<_> = y
                .validation_epochs
                .iter()
                .filter(|r| !map[*r].label.is_artifact())
                .collect();
            assert_eq!(nx, ny);
        }

        let mf = plan_analysis2(&epochs, ArtifactKind::ContinuousMovement, PlanScope::Individual, &full).unwrap();
        assert!(mf.iter().all(|s| art(&s.validation_epochs) == 70));
        let ms = plan_analysis2(&epochs, ArtifactKind::ContinuousMovement, PlanScope::Individual, &sel).unwrap();
        assert!(ms.iter().all(|s| art(&s.validation_epochs) == 30));
        for (x, y) in mf.iter().zip(&ms) {
            assert_eq!(x.train_epochs, y.train_epochs);
        }
    }

    #[test]
    fn analysis3_pretraining() {
        let epochs = protocol_epochs(7, 38);
        let map = metas_by_ref(&epochs);
        let plans = plan_analysis3(
            &epochs,
            Analysis3Variant::IntegrateA1,
            ArtifactKind::IsometricContraction,
            "S03",
            &TaskSetVariant::full(),
        )
        .unwrap();
        assert_eq!(plans.len(), 90);
        for s in &plans {
            let pre = s.pretrain_epochs.as_ref().unwrap();
            let arts = pre.iter().filter(|r| map[*r].label.is_artifact()).count();
            assert_eq!(arts, 420);
            assert_eq!(pre.len(), 420 + 6 * 38);
            assert!(pre.iter().all(|r| r.subject != "S03"));
            assert!(s
                .train_epochs
                .iter()
                .chain(&s.validation_epochs)
                .all(|r| r.subject == "S03"));
        }
        let two = protocol_epochs(2, 38);
        let p2 = plan_analysis3(
            &two,
            Analysis3Variant::IntegrateA2,
            ArtifactKind::ContinuousMovement,
            "S01",
            &TaskSetVariant::full(),
        )
        .unwrap();
        assert!(p2[0]
            .pretrain_epochs
            .as_ref()
            .unwrap()
            .iter()
            .all(|r| r.subject == "S02"));
        let one = protocol_epochs(1, 38);
        assert!(plan_analysis3(
            &one,
            Analysis3Variant::IntegrateA1,
            ArtifactKind::IsometricContraction,
            "S01",
            &TaskSetVariant::full()
        )
        .is_err());
    }

    #[test]
    fn missing_epoch_tolerance() {
        let mut epochs = protocol_epochs(1, 38);
        let drop = epochs
            .iter()
            .position(|e| e.task_id == Some(TaskId::KrA) && e.repetition == Some(4))
            .unwrap();
        epochs.remove(drop);
        let plans = plan_analysis1(
            &epochs,
            ArtifactKind::IsometricContraction,
            PlanScope::Individual,
            &TaskSetVariant::full(),
        )
        .unwrap();
        assert_eq!(plans.len(), 90);
        let map = metas_by_ref(&epochs);
        let f3 = plans.iter().find(|s| s.fold_index == 3).unwrap();
        assert_eq!(
            f3.validation_epochs
                .iter()
                .filter(|r| map[*r].label.is_artifact())
                .count(),
            6
        );
        // a second gap exceeds the tolerance
        let drop = epochs
            .iter()
            .position(|e| e.task_id == Some(TaskId::KbA) && e.repetition == Some(1))
            .unwrap();
        epochs.remove(drop);
        assert!(plan_analysis1(
            &epochs,
            ArtifactKind::IsometricContraction,
            PlanScope::Individual,
            &TaskSetVariant::full()
        )
        .is_err());
    }

    #[test]
    fn plans_serialize() {
        let epochs = protocol_epochs(2, 10);
        let plans = plan_analysis1(
            &epochs,
            ArtifactKind::ContinuousMovement,
            PlanScope::Individual,
            &TaskSetVariant::full(),
        )
        .unwrap();
        let json = serde_json::to_string(&plans).unwrap();
        let back: Vec<SplitSpec> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, plans);
        assert!(json.contains("\"analysis\":\"a1_movement\""));
    }
}

use std::collections::BTreeSet;
use std::sync::OnceLock;

use emgtask::dsp::{derive_bipolar, segment_epochs};
use emgtask::ingest::synth::protocol_layout;
use emgtask::ingest::{synthesize_subject, SynthesisConfig};
use emgtask::model::{default_montage, default_task_catalog, ArtifactKind, EpochMeta, EpochRef, Label, TaskSetVariant};
use emgtask::xplan::{plan_analysis1, plan_analysis2, plan_analysis3, Analysis3Variant, PlanScope, SplitSpec};
use emgtask::Execution;
use proptest::prelude::*;

const CONTRACTION: ArtifactKind = ArtifactKind::IsometricContraction;
const MOVEMENT: ArtifactKind = ArtifactKind::ContinuousMovement;

/// Epoch metadata of one synthesized, derived and segmented subject.
fn one_subject() -> &'static Vec<EpochMeta> {
    static METAS: OnceLock<Vec<EpochMeta>> = OnceLock::new();
    METAS.get_or_init(|| {
        let catalog = default_task_catalog();
        let montage = default_montage();
        let cfg = SynthesisConfig {
            subjects: 1,
            ..SynthesisConfig::default()
        };
        let (entry, rec) = synthesize_subject(&cfg, 0, &catalog, &montage, Execution::default()).unwrap();
        let bip = derive_bipolar(&rec, &montage).unwrap();
        segment_epochs(&bip, &entry.recordings[0], &catalog).unwrap().metas()
    })
}

/// The protocol layout does not depend on the subject, so further subjects
/// are relabelled copies.
fn subjects(n: usize) -> Vec<EpochMeta> {
    (0..n)
        .flat_map(|s| {
            one_subject().iter().map(move |m| EpochMeta {
                id: EpochRef {
                    subject: format!("S{:02}", s + 1),
                    seq: m.id.seq,
                },
                ..m.clone()
            })
        })
        .collect()
}

#[test]
fn layout_is_subject_independent() {
    let catalog = default_task_catalog();
    let a = protocol_layout(&SynthesisConfig::default(), &catalog);
    let b = protocol_layout(
        &SynthesisConfig {
            seed: 99,
            ..SynthesisConfig::default()
        },
        &catalog,
    );
    assert_eq!(a.0, b.0);
}

#[test]
fn protocol_epoch_counts() {
    let metas = one_subject();
    let count = |k| metas.iter().filter(|m| m.kind() == Some(k)).count();
    assert_eq!(count(CONTRACTION), 70);
    assert_eq!(count(MOVEMENT), 25);
    let na: Vec<&EpochMeta> = metas.iter().filter(|m| m.label == Label::NonArtifact).collect();
    assert_eq!(na.len(), 38);
    // alternating 10 s and 5 s
    for (i, m) in na.iter().enumerate() {
        assert_eq!(m.duration_s, if i % 2 == 0 { 10.0 } else { 5.0 });
    }
}

fn validation_artifacts(s: &SplitSpec, metas: &[EpochMeta]) -> usize {
    s.validation_epochs
        .iter()
        .filter(|id| metas.iter().any(|m| &m.id == *id && m.label == Label::Artifact))
        .count()
}

#[test]
fn analysis1_split_counts() {
    let metas = subjects(7);
    let full = TaskSetVariant::full();
    let c = plan_analysis1(&metas, CONTRACTION, PlanScope::Individual, &full).unwrap();
    let m = plan_analysis1(&metas, MOVEMENT, PlanScope::Individual, &full).unwrap();
    assert_eq!(c.len(), 630);
    assert_eq!(m.len(), 140);
    let ks: BTreeSet<u32> = c.iter().map(|s| s.cumulative_repetitions).collect();
    assert_eq!(ks, (1..=9).collect());
    let ks: BTreeSet<u32> = m.iter().map(|s| s.cumulative_repetitions).collect();
    assert_eq!(ks, (1..=4).collect());

    let one = subjects(1);
    let c = plan_analysis1(&one, CONTRACTION, PlanScope::Individual, &full).unwrap();
    assert!(c.iter().all(|s| validation_artifacts(s, &one) == 7));
    let sel = plan_analysis1(&one, CONTRACTION, PlanScope::Individual, &TaskSetVariant::selected()).unwrap();
    assert_eq!(sel.len(), 90);
    assert!(sel.iter().all(|s| validation_artifacts(s, &one) == 3));
}

#[test]
fn generalized_and_cross_kind_plans() {
    let metas = subjects(3);
    let full = TaskSetVariant::full();
    let g = plan_analysis1(
        &metas,
        CONTRACTION,
        PlanScope::Generalized { subjects_used: None },
        &full,
    )
    .unwrap();
    assert_eq!(g.len(), 3 * 9);
    for s in &g {
        let held = s.scope.subject();
        assert!(s.train_epochs.iter().all(|e| e.subject != held));
        assert!(s.validation_epochs.iter().all(|e| e.subject == held));
    }
    let limited = plan_analysis1(
        &metas,
        CONTRACTION,
        PlanScope::Generalized { subjects_used: Some(2) },
        &full,
    )
    .unwrap();
    assert_eq!(limited.len(), 2 * 9);

    let a2 = plan_analysis2(&metas, MOVEMENT, PlanScope::Individual, &full).unwrap();
    for s in &a2 {
        for id in &s.validation_epochs {
            let m = metas.iter().find(|m| &m.id == id).unwrap();
            assert_ne!(m.kind(), Some(MOVEMENT));
        }
    }
}

#[test]
fn analysis3_pretraining_excludes_target() {
    let metas = subjects(3);
    for variant in [Analysis3Variant::IntegrateA1, Analysis3Variant::IntegrateA2] {
        let plans = plan_analysis3(&metas, variant, CONTRACTION, "S02", &TaskSetVariant::full()).unwrap();
        assert_eq!(plans.len(), 90);
        for s in &plans {
            let pre = s.pretrain_epochs.as_ref().unwrap();
            assert!(pre.iter().all(|e| e.subject != "S02"));
            assert!(s.train_epochs.iter().all(|e| e.subject == "S02"));
        }
    }
    assert!(plan_analysis3(
        &subjects(1),
        Analysis3Variant::IntegrateA1,
        CONTRACTION,
        "S01",
        &TaskSetVariant::full()
    )
    .is_err());
}

#[test]
fn selected_set_leaves_movement_plans_unchanged() {
    let metas = subjects(1);
    let a = plan_analysis1(&metas, MOVEMENT, PlanScope::Individual, &TaskSetVariant::full()).unwrap();
    let b = plan_analysis1(&metas, MOVEMENT, PlanScope::Individual, &TaskSetVariant::selected()).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.train_epochs, y.train_epochs);
        assert_eq!(x.validation_epochs, y.validation_epochs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn individual_splits_are_disjoint_and_two_class(n in 1usize..4, movement in any::<bool>(), selected in any::<bool>()) {
        let metas = subjects(n);
        let kind = if movement { MOVEMENT } else { CONTRACTION };
        let ts = if selected { TaskSetVariant::selected() } else { TaskSetVariant::full() };
        let plans = plan_analysis1(&metas, kind, PlanScope::Individual, &ts).unwrap();
        for s in &plans {
            let train: BTreeSet<&EpochRef> = s.train_epochs.iter().collect();
            prop_assert!(s.validation_epochs.iter().all(|v| !train.contains(v)));
            let labels: BTreeSet<Label> = s
                .validation_epochs
                .iter()
                .map(|id| metas.iter().find(|m| &m.id == id).unwrap().label)
                .collect();
            prop_assert_eq!(labels.len(), 2);
            for id in &s.train_epochs {
                let m = metas.iter().find(|m| &m.id == id).unwrap();
                if let Some(t) = m.task_id {
                    prop_assert!(ts.includes_id(t));
                    prop_assert_eq!(m.kind(), Some(kind));
                }
            }
        }
        // training sets grow with the repetition count within a fold
        for s in &plans {
            if let Some(next) = plans.iter().find(|p| {
                p.scope == s.scope && p.fold_index == s.fold_index && p.cumulative_repetitions == s.cumulative_repetitions + 1
            }) {
                let bigger: BTreeSet<&EpochRef> = next.train_epochs.iter().collect();
                prop_assert!(s.train_epochs.iter().all(|e| bigger.contains(e)));
            }
        }
    }
}

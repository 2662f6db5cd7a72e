use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::agents::SubTaskPlan;
use crate::geom::{Action, Direction};
use crate::memory::{
    encode_all, tokenize, Cause, CauseCategory, Correction, ExperienceContext, ExperienceEntry,
    HistoryRecord, ReflectFlag, ReflectiveTuple,
};
use crate::simworld::StepOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentLabel {
    Progress,
    Stagnation,
    Oscillation,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start_t: u32,
    pub end_t: u32,
    pub label: SegmentLabel,
}

impl Segment {
    pub fn len(&self) -> u32 {
        self.end_t - self.start_t + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalConfig {
    pub stagnation_window: usize,
    pub oscillation_len: usize,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        GlobalConfig {
            stagnation_window: 6,
            oscillation_len: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub segment: usize,
    pub tuple: ReflectiveTuple,
    pub entry_id: String,
}

/// Post-episode review: a partition of the history plus per-segment causes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReview {
    pub segments: Vec<Segment>,
    pub attributions: Vec<Attribution>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalReflection {
    pub review: EpisodeReview,
    pub distilled: Vec<ExperienceEntry>,
}

fn alternating_turns(a: Action, b: Action) -> bool {
    a.is_turn() && b.is_turn() && a != b
}

/// Labels for one contiguous piece of records.
fn label_piece(records: &[HistoryRecord], cfg: &GlobalConfig) -> Vec<SegmentLabel> {
    let n = records.len();
    let mut labels = vec![SegmentLabel::Progress; n];
    let mut i = 0;
    while i < n {
        if !records[i].action.is_turn() {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < n && alternating_turns(records[j - 1].action, records[j].action) {
            j += 1;
        }
        if j - i >= cfg.oscillation_len.max(2) {
            labels[i..j].fill(SegmentLabel::Oscillation);
        }
        i = j;
    }
    let mut i = 0;
    while i < n {
        let still = |k: usize| labels[k] == SegmentLabel::Progress && !records[k].displaced();
        if !still(i) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < n && still(j) {
            j += 1;
        }
        if j - i >= cfg.stagnation_window.max(1) {
            labels[i..j].fill(SegmentLabel::Stagnation);
        }
        i = j;
    }
    labels
}

/// Splits the history at sub-task completions, then at oscillation and
/// stagnation runs. Consecutive records with equal labels form one segment.
pub fn segment(
    history: &[HistoryRecord],
    completions: &[u32],
    failed: bool,
    cfg: &GlobalConfig,
) -> Vec<Segment> {
    let Some(last) = history.last() else {
        return vec![];
    };
    let first_t = history[0].t;
    let mut cuts: Vec<u32> = completions
        .iter()
        .copied()
        .filter(|c| *c >= first_t && *c < last.t)
        .collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut segments: Vec<Segment> = vec![];
    let mut start = 0usize;
    for end_t in cuts.into_iter().chain([last.t]) {
        let end = (end_t - first_t) as usize;
        let piece = &history[start..=end];
        let labels = label_piece(piece, cfg);
        let mut k = 0;
        while k < piece.len() {
            let mut m = k;
            while m + 1 < piece.len() && labels[m + 1] == labels[k] {
                m += 1;
            }
            segments.push(Segment {
                start_t: piece[k].t,
                end_t: piece[m].t,
                label: labels[k],
            });
            k = m + 1;
        }
        start = end + 1;
    }
    if failed {
        if let Some(s) = segments
            .last_mut()
            .filter(|s| s.label == SegmentLabel::Progress)
        {
            s.label = SegmentLabel::Failure;
        }
    }
    segments
}

fn misperceived(r: &HistoryRecord) -> bool {
    r.reflection_events
        .iter()
        .any(|e| e.flag == ReflectFlag::Mismatch)
        || (r.outcome == StepOutcome::Blocked
            && r.observation.traversable.contains(&Direction::Front))
}

fn attribute(records: &[HistoryRecord], label: SegmentLabel) -> Cause {
    if records.iter().any(misperceived) {
        return Cause {
            category: CauseCategory::Misperception,
            text: "forward motion blocked where the view reported free space".into(),
        };
    }
    if records.iter().any(|r| r.outcome == StepOutcome::Blocked) {
        return Cause {
            category: CauseCategory::SpatialMisjudgment,
            text: "moved into a cell known to be occupied".into(),
        };
    }
    match label {
        SegmentLabel::Stagnation => Cause {
            category: CauseCategory::Stagnation,
            text: "no displacement over a long stretch".into(),
        },
        SegmentLabel::Oscillation => Cause {
            category: CauseCategory::Oscillation,
            text: "alternating left and right turns".into(),
        },
        _ => Cause {
            category: CauseCategory::Other,
            text: "episode ended without completing the plan".into(),
        },
    }
}

/// Tokens present in at least half of the records; all tokens if none qualify.
fn dominant_tokens(records: &[HistoryRecord]) -> Vec<String> {
    let mut freq: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        let toks: BTreeSet<String> = r.scene_tokens().iter().flat_map(|s| tokenize(s)).collect();
        for t in toks {
            *freq.entry(t).or_default() += 1;
        }
    }
    let need = records.len().div_ceil(2);
    let dominant: Vec<String> = freq
        .iter()
        .filter(|(_, c)| **c >= need)
        .map(|(t, _)| t.clone())
        .collect();
    if dominant.is_empty() {
        freq.into_keys().collect()
    } else {
        dominant
    }
}

fn most_frequent_action(records: &[HistoryRecord]) -> Action {
    let mut counts: BTreeMap<Action, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(r.action).or_default() += 1;
    }
    let max = counts.values().copied().max().unwrap_or(0);
    counts
        .into_iter()
        .find(|(_, c)| *c == max)
        .map(|(a, _)| a)
        .unwrap_or(Action::MoveForward)
}

/// Segmentation, rule-based attribution and distillation of experience entries.
pub fn global_reflect(
    history: &[HistoryRecord],
    plan: Option<&SubTaskPlan>,
    instruction: &str,
    failed: bool,
    cfg: &GlobalConfig,
) -> GlobalReflection {
    let completions: Vec<u32> = plan
        .map(|p| p.subtasks.iter().filter_map(|s| s.completed_at).collect())
        .unwrap_or_default();
    let segments = segment(history, &completions, failed, cfg);
    let first_t = history.first().map_or(0, |r| r.t);
    let mut attributions = vec![];
    let mut distilled: Vec<ExperienceEntry> = vec![];
    for (i, seg) in segments.iter().enumerate() {
        if seg.label == SegmentLabel::Progress {
            continue;
        }
        let records = &history[(seg.start_t - first_t) as usize..=(seg.end_t - first_t) as usize];
        let mut f_err = dominant_tokens(records);
        if f_err.is_empty() {
            f_err = tokenize(instruction)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
        }
        if f_err.is_empty() {
            continue;
        }
        let a_err = most_frequent_action(records);
        let last_err = records
            .iter()
            .rposition(|r| r.action == a_err)
            .expect("a_err occurs in the segment");
        let a_corr = history
            .get((seg.start_t - first_t) as usize + last_err + 1)
            .map(|r| r.action)
            .filter(|a| *a != a_err)
            .map_or(Correction::NoCorrection, Correction::Action);
        let tuple = ReflectiveTuple {
            f_err_tokens: f_err.clone(),
            a_err,
            cause: attribute(records, seg.label),
            a_corr,
        };
        let context = ExperienceContext {
            poses: records.iter().map(|r| r.pose).collect(),
            actions: records.iter().map(|r| r.action).collect(),
            observations: records.iter().map(|r| r.scene_tokens().join(" ")).collect(),
        };
        let entry = ExperienceEntry::new(
            encode_all(f_err.iter().map(String::as_str)),
            context,
            tuple.clone(),
        );
        attributions.push(Attribution {
            segment: i,
            tuple,
            entry_id: entry.id.clone(),
        });
        if !distilled.iter().any(|e| e.id == entry.id) {
            distilled.push(entry);
        }
    }
    GlobalReflection {
        review: EpisodeReview {
            segments,
            attributions,
        },
        distilled,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Heading;
    use crate::memory::{MapRecord, ObservationDigest, SalientPoint};
    use crate::Pose;

    fn rec(t: u32, x: f64, action: Action, outcome: StepOutcome) -> HistoryRecord {
        let pose = Pose::new(x, 0.0, Heading::East);
        let after = if outcome == StepOutcome::Moved {
            Pose::new(x + 1.0, 0.0, Heading::East)
        } else {
            pose
        };
        HistoryRecord {
            t,
            pose,
            action,
            outcome,
            pose_after: after,
            observation: ObservationDigest {
                salient: vec![SalientPoint {
                    name: "printer".into(),
                    x: 9.0,
                    y: 0.0,
                    relevant: true,
                }],
                traversable: vec![Direction::Front],
                front_free: 1.0,
            },
            subtask_index: Some(0),
            subtask_target: Some("printer".into()),
            map: MapRecord::Ref {
                step: t,
                nodes: 0,
                edges: 0,
            },
            reflection_events: vec![],
            checks: 1,
            retrievals: vec![],
        }
    }

    fn walk(n: u32) -> Vec<HistoryRecord> {
        (0..n)
            .map(|t| rec(t, t as f64, Action::MoveForward, StepOutcome::Moved))
            .collect()
    }

    #[test]
    fn clean_run_two_progress_segments() {
        let h = walk(9);
        let s = segment(&h, &[5], false, &GlobalConfig::default());
        assert_eq!(
            s,
            vec![
                Segment {
                    start_t: 0,
                    end_t: 5,
                    label: SegmentLabel::Progress
                },
                Segment {
                    start_t: 6,
                    end_t: 8,
                    label: SegmentLabel::Progress
                }
            ]
        );
        let g = global_reflect(
            &h,
            None,
            "find the printer",
            false,
            &GlobalConfig::default(),
        );
        assert!(g.distilled.is_empty());
    }

    #[test]
    fn blocked_at_glass_is_misperception_stagnation() {
        let mut h = walk(3);
        for t in 3..9 {
            h.push(rec(t, 3.0, Action::MoveForward, StepOutcome::Blocked));
        }
        h.push(rec(9, 3.0, Action::TurnLeft90, StepOutcome::Turned));
        let g = global_reflect(
            &h,
            None,
            "find the printer",
            false,
            &GlobalConfig::default(),
        );
        let stag: Vec<_> = g
            .review
            .segments
            .iter()
            .filter(|s| s.label == SegmentLabel::Stagnation)
            .collect();
        assert_eq!(stag.len(), 1);
        assert_eq!((stag[0].start_t, stag[0].end_t), (3, 9));
        assert_eq!(g.distilled.len(), 1);
        let r = &g.distilled[0].reflective;
        assert_eq!(r.cause.category, CauseCategory::Misperception);
        assert_eq!(r.a_err, Action::MoveForward);
        assert_eq!(r.a_corr, Correction::Action(Action::TurnLeft90));
        assert!(g.distilled[0].validate().is_ok());
    }

    #[test]
    fn oscillation_detected() {
        let mut h = walk(10);
        for (k, a) in [
            Action::TurnLeft90,
            Action::TurnRight90,
            Action::TurnLeft90,
            Action::TurnRight90,
        ]
        .into_iter()
        .enumerate()
        {
            h.push(rec(10 + k as u32, 10.0, a, StepOutcome::Turned));
        }
        h.push(rec(14, 10.0, Action::MoveForward, StepOutcome::Moved));
        let s = segment(&h, &[], false, &GlobalConfig::default());
        assert!(s.contains(&Segment {
            start_t: 10,
            end_t: 13,
            label: SegmentLabel::Oscillation
        }));
    }

    #[test]
    fn failed_tail_is_labeled_failure() {
        let h = walk(4);
        let s = segment(&h, &[], true, &GlobalConfig::default());
        assert_eq!(
            s,
            vec![Segment {
                start_t: 0,
                end_t: 3,
                label: SegmentLabel::Failure
            }]
        );
        let g = global_reflect(&h, None, "find the printer", true, &GlobalConfig::default());
        assert_eq!(
            g.distilled[0].reflective.cause.category,
            CauseCategory::Other
        );
        assert_eq!(g.distilled[0].reflective.a_corr, Correction::NoCorrection);
    }

    #[test]
    fn segments_partition_history() {
        use proptest::prelude::*;
        proptest!(|(codes in prop::collection::vec(0u8..4, 1..60), cuts in prop::collection::vec(0u32..60, 0..4), failed in any::<bool>())| {
            let h: Vec<HistoryRecord> = codes.iter().enumerate().map(|(t, c)| match c {
                0 => rec(t as u32, t as f64, Action::MoveForward, StepOutcome::Moved),
                1 => rec(t as u32, 0.0, Action::MoveForward, StepOutcome::Blocked),
                2 => rec(t as u32, 0.0, Action::TurnLeft90, StepOutcome::Turned),
                _ => rec(t as u32, 0.0, Action::TurnRight90, StepOutcome::Turned),
            }).collect();
            let s = segment(&h, &cuts, failed, &GlobalConfig::default());
            prop_assert_eq!(s.iter().map(|s| s.len() as usize).sum::<usize>(), h.len());
            prop_assert_eq!(s[0].start_t, 0);
            for w in s.windows(2) {
                prop_assert_eq!(w[0].end_t + 1, w[1].start_t);
            }
            prop_assert_eq!(&s, &segment(&h, &cuts, failed, &GlobalConfig::default()));
            let g = global_reflect(&h, None, "find the printer", failed, &GlobalConfig::default());
            for e in &g.distilled {
                prop_assert!(e.validate().is_ok());
            }
        });
    }
}

//! Detection rule and evaluation against a known segmentation.
//!
//! A detection fires at step `t'` when the MAP run length falls by more than
//! `drop` steps, `r*_{t'} < r*_{t'-1} - drop`. The change it announces started
//! at `t' - r*_{t'}`.

use serde::{Deserialize, Serialize};

use crate::synthetic::GroundTruth;

pub const DEFAULT_DROP: usize = 20;
pub const DEFAULT_SLACK: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub detected_at: usize,
    pub runlength_at_detection: usize,
    pub inferred_cp: usize,
    #[serde(default)]
    pub matched_true_cp: Option<usize>,
    #[serde(default)]
    pub delay: Option<usize>,
}

/// Scans a MAP run-length path (index `i` = value after step `i`) for drops
/// larger than `drop`. Pass `usize::MAX` to disable detection.
pub fn detect(runlength_path: &[usize], drop: usize) -> Vec<DetectionEvent> {
    runlength_path
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1].saturating_add(drop) < w[0])
        .map(|(i, w)| {
            let detected_at = i + 1;
            DetectionEvent {
                detected_at,
                runlength_at_detection: w[1],
                inferred_cp: detected_at.saturating_sub(w[1]),
                matched_true_cp: None,
                delay: None,
            }
        })
        .collect()
}

/// Which interval counts as the delay of a matched detection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayReading {
    /// `detected_at - true_cp`.
    #[default]
    FromTrueCp,
    /// `detected_at - inferred_cp`, i.e. the MAP run length at detection.
    FromInferredCp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRule {
    /// How far before a true change an inferred change may land.
    pub slack: usize,
    pub delay: DelayReading,
}

impl Default for MatchRule {
    fn default() -> Self {
        Self {
            slack: DEFAULT_SLACK,
            delay: DelayReading::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub true_cps: usize,
    pub matched: usize,
    pub detection_rate: f64,
    pub delays: Vec<f64>,
    #[serde(with = "inf_marker")]
    pub delay_mean: f64,
    #[serde(with = "inf_marker")]
    pub delay_std: f64,
    pub false_detections: usize,
}

/// Matches events to true changes and scores them.
///
/// True change `c` takes the earliest unmatched event whose inferred change
/// lies in `[c - slack, c + segment_length)`, clipped to the horizon and to
/// the start of the next change's window.
/// Unmatched events are false detections. Returns the report and the events
/// annotated with their matches.
pub fn evaluate(
    events: &[DetectionEvent],
    truth: &GroundTruth,
    horizon: usize,
    rule: MatchRule,
) -> (EvalReport, Vec<DetectionEvent>) {
    let mut annotated: Vec<DetectionEvent> = events.to_vec();
    for e in &mut annotated {
        e.matched_true_cp = None;
        e.delay = None;
    }
    let mut delays = Vec::new();
    for (i, &cp) in truth.cp_times.iter().enumerate() {
        let lo = cp.saturating_sub(rule.slack);
        let mut hi = (cp + truth.segment_length).min(horizon.max(cp + 1));
        // Windows never reach into the next change's slack zone.
        if let Some(&next) = truth.cp_times.get(i + 1) {
            hi = hi.min(next.saturating_sub(rule.slack)).max(cp + 1);
        }
        let hit = annotated.iter_mut().find(|e| {
            e.matched_true_cp.is_none()
                && e.detected_at >= cp
                && (lo..hi).contains(&e.inferred_cp)
        });
        if let Some(e) = hit {
            let delay = match rule.delay {
                DelayReading::FromTrueCp => e.detected_at - cp,
                DelayReading::FromInferredCp => e.runlength_at_detection,
            };
            e.matched_true_cp = Some(cp);
            e.delay = Some(delay);
            delays.push(delay as f64);
        }
    }
    let matched = delays.len();
    let true_cps = truth.cp_times.len();
    let (delay_mean, delay_std) = mean_std(&delays);
    let report = EvalReport {
        true_cps,
        matched,
        detection_rate: if true_cps == 0 {
            0.0
        } else {
            matched as f64 / true_cps as f64
        },
        delays,
        delay_mean,
        delay_std,
        false_detections: annotated.iter().filter(|e| e.matched_true_cp.is_none()).count(),
    };
    (report, annotated)
}

/// Mean and population standard deviation; `(inf, inf)` for no samples.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::INFINITY, f64::INFINITY);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Pooled summary of replicate runs of one benchmark cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub replicates: usize,
    /// Mean of per-replicate detection rates.
    pub detection_rate: f64,
    #[serde(with = "inf_marker")]
    pub delay_mean: f64,
    #[serde(with = "inf_marker")]
    pub delay_std: f64,
    pub false_detections: usize,
}

impl CellSummary {
    pub fn from_reports(reports: &[EvalReport]) -> Self {
        let pooled: Vec<f64> = reports.iter().flat_map(|r| r.delays.iter().copied()).collect();
        let (delay_mean, delay_std) = mean_std(&pooled);
        let rate = if reports.is_empty() {
            0.0
        } else {
            reports.iter().map(|r| r.detection_rate).sum::<f64>() / reports.len() as f64
        };
        Self {
            replicates: reports.len(),
            detection_rate: rate,
            delay_mean,
            delay_std,
            false_detections: reports.iter().map(|r| r.false_detections).sum(),
        }
    }
}

/// Writes non-finite values as the string `"inf"`; JSON has no infinity.
mod inf_marker {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_str("inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(de::Error::custom(format!("expected number or \"inf\", got {t:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth(cps: &[usize]) -> GroundTruth {
        GroundTruth {
            cp_times: cps.to_vec(),
            segment_length: 100,
            horizon: 600,
            beta: vec![],
            config: None,
        }
    }

    fn event(detected_at: usize, r: usize) -> DetectionEvent {
        DetectionEvent {
            detected_at,
            runlength_at_detection: r,
            inferred_cp: detected_at - r,
            matched_true_cp: None,
            delay: None,
        }
    }

    #[test]
    fn worked_detection_example() {
        let mut path: Vec<usize> = (1..=151).map(|t| t.min(59)).collect();
        path[149] = 59;
        path[150] = 30;
        let events = detect(&path, 20);
        assert_eq!(events.len(), 1);
        let e = &events[0];
        assert_eq!((e.detected_at, e.inferred_cp), (150, 120));
        let (report, annotated) = evaluate(&events, &truth(&[120]), 600, MatchRule::default());
        assert_eq!(report.matched, 1);
        assert_eq!(annotated.last().unwrap().delay, Some(30));
    }

    #[test]
    fn increasing_path_has_no_events() {
        let path: Vec<usize> = (1..500).collect();
        assert!(detect(&path, 20).is_empty());
        assert!(detect(&[5], 20).is_empty());
    }

    #[test]
    fn strict_inequality_at_boundary() {
        assert!(detect(&[50, 30], 20).is_empty());
        assert_eq!(detect(&[50, 29], 20).len(), 1);
        assert!(detect(&[usize::MAX - 1, 0], usize::MAX).is_empty());
    }

    #[test]
    fn perfect_detections() {
        let cps = [100, 200, 300, 400, 500];
        let events: Vec<_> = cps.iter().map(|&c| event(c + 12, 12)).collect();
        let (report, _) = evaluate(&events, &truth(&cps), 600, MatchRule::default());
        assert_eq!(report.detection_rate, 1.0);
        assert_eq!(report.false_detections, 0);
        assert_eq!(report.delay_mean, 12.0);
        assert_eq!(report.delay_std, 0.0);
    }

    #[test]
    fn no_events_reports_infinite_delay() {
        let (report, _) = evaluate(&[], &truth(&[100, 200]), 600, MatchRule::default());
        assert_eq!(report.detection_rate, 0.0);
        assert!(report.delays.is_empty());
        assert!(report.delay_mean.is_infinite());
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"delay_mean\":\"inf\""));
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert!(back.delay_mean.is_infinite());
    }

    #[test]
    fn late_inferred_change_uses_true_cp_for_delay() {
        let e = event(150, 32);
        assert_eq!(e.inferred_cp, 118);
        let (report, annotated) = evaluate(&[e.clone()], &truth(&[100]), 600, MatchRule::default());
        assert_eq!(report.matched, 1);
        assert_eq!(annotated[0].delay, Some(50));

        let alt = MatchRule {
            delay: DelayReading::FromInferredCp,
            ..Default::default()
        };
        let (_, annotated) = evaluate(&[e], &truth(&[100]), 600, alt);
        assert_eq!(annotated[0].delay, Some(32));
    }

    #[test]
    fn matching_is_one_to_one() {
        let events = vec![event(110, 12), event(130, 25), event(260, 40), event(590, 5)];
        let (report, annotated) = evaluate(&events, &truth(&[100, 200]), 600, MatchRule::default());
        assert_eq!(report.matched, 2);
        assert_eq!(report.false_detections, 2);
        assert_eq!(annotated[0].matched_true_cp, Some(100));
        assert_eq!(annotated[1].matched_true_cp, None);
        assert_eq!(annotated[2].matched_true_cp, Some(200));
        // An estimate just before the next change belongs to that change.
        let (_, annotated) = evaluate(&[event(268, 71)], &truth(&[100, 200]), 600, MatchRule::default());
        assert_eq!(annotated[0].matched_true_cp, Some(200));
        // Slack admits early estimates; anything earlier is false.
        let (r, _) = evaluate(&[event(120, 30)], &truth(&[100]), 600, MatchRule::default());
        assert_eq!(r.matched, 1);
        let (r, _) = evaluate(&[event(120, 31)], &truth(&[100]), 600, MatchRule::default());
        assert_eq!(r.matched, 0);
    }

    #[test]
    fn pooled_cell_summary() {
        let a = EvalReport {
            true_cps: 5,
            matched: 2,
            detection_rate: 0.4,
            delays: vec![10.0, 20.0],
            delay_mean: 15.0,
            delay_std: 5.0,
            false_detections: 1,
        };
        let b = EvalReport {
            true_cps: 5,
            matched: 0,
            detection_rate: 0.0,
            delays: vec![],
            delay_mean: f64::INFINITY,
            delay_std: f64::INFINITY,
            false_detections: 0,
        };
        let s = CellSummary::from_reports(&[a, b.clone()]);
        assert!((s.detection_rate - 0.2).abs() < 1e-15);
        assert_eq!(s.delay_mean, 15.0);
        assert!(CellSummary::from_reports(&[b]).delay_mean.is_infinite());
    }
}

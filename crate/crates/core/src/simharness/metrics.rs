use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompts::Click;

/// Click budget; instances that miss a threshold within it count as this many clicks.
pub const MAX_CLICKS: usize = 20;

/// One simulated interaction with a single instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionTrace {
    pub instance: String,
    pub clicks: Vec<Click>,
    /// IoU after each round.
    pub ious: Vec<f64>,
    /// Wall-clock milliseconds per round, excluding image encoding.
    pub click_ms: Vec<f64>,
    pub encode_ms: f64,
    /// Set when the model raised an error; the trace stops there.
    pub failure: Option<String>,
}

impl InteractionTrace {
    pub fn rounds(&self) -> usize {
        self.ious.len()
    }

    /// 1-based round at which IoU first reaches `threshold`, capped at the budget.
    pub fn noc(&self, threshold: f64, budget: usize) -> usize {
        self.ious
            .iter()
            .take(budget)
            .position(|&v| v >= threshold)
            .map(|i| i + 1)
            .unwrap_or(budget)
    }

    pub fn reached(&self, threshold: f64, budget: usize) -> bool {
        self.ious.iter().take(budget).any(|&v| v >= threshold)
    }

    /// IoU after `k` clicks; shorter traces carry their last value forward.
    pub fn iou_at(&self, k: usize) -> f64 {
        assert!(k >= 1, "k counts clicks from 1");
        self.ious.get(k - 1).or(self.ious.last()).copied().unwrap_or(0.0)
    }

    /// Copy without wall-clock fields, for determinism checks.
    pub fn without_timings(&self) -> Self {
        Self { click_ms: vec![0.0; self.click_ms.len()], encode_ms: 0.0, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub instances: usize,
    pub click_budget: usize,
    pub noc90: f64,
    pub noc95: f64,
    pub miou_1: f64,
    pub miou_5: f64,
    pub nof95: usize,
    /// Mean milliseconds per click, excluding image encoding.
    pub spc_ms: f64,
    /// Seconds for a full 16×16 grid of single-click predictions, when measured.
    pub sat_latency_s: Option<f64>,
}

impl MetricReport {
    pub fn without_timings(&self) -> Self {
        Self { spc_ms: 0.0, sat_latency_s: self.sat_latency_s.map(|_| 0.0), ..self.clone() }
    }

    pub fn header() -> &'static str {
        "NoC90 and NoC95 count failures as the full click budget."
    }
}

/// Averages per-instance metrics over traces.
pub fn aggregate(traces: &[InteractionTrace]) -> Result<MetricReport> {
    aggregate_with_budget(traces, MAX_CLICKS)
}

pub fn aggregate_with_budget(traces: &[InteractionTrace], budget: usize) -> Result<MetricReport> {
    if traces.is_empty() {
        return Err(Error::Validation("cannot aggregate zero traces".into()));
    }
    let n = traces.len() as f64;
    let mean = |f: &dyn Fn(&InteractionTrace) -> f64| traces.iter().map(f).sum::<f64>() / n;
    let total_clicks: usize = traces.iter().map(|t| t.click_ms.len()).sum();
    let spc_ms = if total_clicks == 0 {
        0.0
    } else {
        traces.iter().flat_map(|t| &t.click_ms).sum::<f64>() / total_clicks as f64
    };
    Ok(MetricReport {
        instances: traces.len(),
        click_budget: budget,
        noc90: mean(&|t| t.noc(0.90, budget) as f64),
        noc95: mean(&|t| t.noc(0.95, budget) as f64),
        miou_1: mean(&|t| t.iou_at(1)),
        miou_5: mean(&|t| t.iou_at(5)),
        nof95: traces.iter().filter(|t| !t.reached(0.95, budget)).count(),
        spc_ms,
        sat_latency_s: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(ious: &[f64]) -> InteractionTrace {
        InteractionTrace {
            instance: "t".into(),
            clicks: Vec::new(),
            ious: ious.to_vec(),
            click_ms: vec![1.0; ious.len()],
            encode_ms: 1.0,
            failure: None,
        }
    }

    #[test]
    fn capped_noc_and_failure_count() {
        let r = aggregate(&[trace(&[0.5, 0.85, 0.92])]).unwrap();
        assert_eq!(r.noc90, 3.0);
        assert_eq!(r.noc95, 20.0);
        assert_eq!(r.nof95, 1);
    }

    #[test]
    fn immediate_success() {
        let r = aggregate(&[trace(&[0.97]), trace(&[0.99])]).unwrap();
        assert_eq!((r.noc95, r.nof95), (1.0, 0));
    }

    #[test]
    fn k_miou_carries_last_value() {
        let t = trace(&[0.5, 0.85, 0.92]);
        assert_eq!(t.iou_at(5), 0.92);
        assert_eq!(aggregate(&[t]).unwrap().miou_5, 0.92);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(aggregate(&[]), Err(Error::Validation(_))));
    }

    #[test]
    fn order_of_traces_does_not_matter() {
        let a = [trace(&[0.1, 0.95]), trace(&[0.91]), trace(&[0.3, 0.4])];
        let b = [a[2].clone(), a[0].clone(), a[1].clone()];
        let (ra, rb) = (aggregate(&a).unwrap(), aggregate(&b).unwrap());
        assert!((ra.noc90 - rb.noc90).abs() < 1e-12 && (ra.miou_1 - rb.miou_1).abs() < 1e-12);
        assert_eq!(ra.nof95, rb.nof95);
    }
}

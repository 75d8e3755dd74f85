use std::collections::HashMap;

use nfmpc::controller::PhaseTiming;
use nfmpc::envs::Outcome;
use serde::{Deserialize, Serialize};

use crate::config::ControllerKind;

/// Deterministic outcome of one evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub controller: ControllerKind,
    pub samples: usize,
    pub env_index: usize,
    pub seed: u64,
    pub outcome: Outcome,
    pub cost: f64,
    pub steps: usize,
    /// Visited positions, starting with the initial one.
    pub trajectory: Vec<[f64; 2]>,
}

/// Wall-clock seconds one episode spent in each controller phase, summed
/// over its steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub controller: ControllerKind,
    pub samples: usize,
    pub env_index: usize,
    pub steps: usize,
    pub timing: PhaseTiming,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub controller: ControllerKind,
    pub samples: usize,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Quartiles of successful-episode costs; `None` without successes.
    pub cost_q1: Option<f64>,
    pub cost_median: Option<f64>,
    pub cost_q3: Option<f64>,
    /// Per-step milliseconds by phase; `None` when no step was timed.
    pub step_ms: Option<PhaseTiming>,
}

impl SummaryRow {
    pub fn mean_step_ms(&self) -> Option<f64> {
        self.step_ms.map(|t| t.total())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsSummary {
    pub rows: Vec<SummaryRow>,
}

impl MetricsSummary {
    pub fn row(&self, controller: ControllerKind, samples: usize) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.controller == controller && r.samples == samples)
    }

    pub const CSV_HEADER: [&'static str; 9] = [
        "controller",
        "N",
        "episodes",
        "successes",
        "success_rate",
        "cost_q1",
        "cost_median",
        "cost_q3",
        "mean_step_ms",
    ];

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::CSV_HEADER).expect("in-memory write");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.controller.name().to_string(),
                r.samples.to_string(),
                r.episodes.to_string(),
                r.successes.to_string(),
                r.success_rate.to_string(),
                opt(r.cost_q1),
                opt(r.cost_median),
                opt(r.cost_q3),
                opt(r.mean_step_ms()),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }
}

/// Quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// `(q1, median, q3)` of unsorted values.
pub fn quartiles(values: &[f64]) -> Option<(f64, f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some((quantile(&v, 0.25)?, quantile(&v, 0.5)?, quantile(&v, 0.75)?))
}

/// Groups records by (controller, N) in order of first appearance.
pub fn aggregate(records: &[EpisodeRecord], timings: &[TimingRecord]) -> MetricsSummary {
    let mut order: Vec<(ControllerKind, usize)> = Vec::new();
    let mut groups: HashMap<(ControllerKind, usize), Vec<&EpisodeRecord>> = HashMap::new();
    for r in records {
        let key = (r.controller, r.samples);
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }
    let rows = order
        .into_iter()
        .map(|key| {
            let group = &groups[&key];
            let costs: Vec<f64> = group
                .iter()
                .filter(|r| r.outcome == Outcome::Success)
                .map(|r| r.cost)
                .collect();
            let q = quartiles(&costs);
            SummaryRow {
                controller: key.0,
                samples: key.1,
                episodes: group.len(),
                successes: costs.len(),
                success_rate: costs.len() as f64 / group.len() as f64,
                cost_q1: q.map(|q| q.0),
                cost_median: q.map(|q| q.1),
                cost_q3: q.map(|q| q.2),
                step_ms: per_step_ms(timings.iter().filter(|t| (t.controller, t.samples) == key)),
            }
        })
        .collect();
    MetricsSummary { rows }
}

pub(crate) fn per_step_ms<'a>(timings: impl Iterator<Item = &'a TimingRecord>) -> Option<PhaseTiming> {
    let mut total = PhaseTiming::default();
    let mut steps = 0;
    for t in timings {
        total.add(&t.timing);
        steps += t.steps;
    }
    if steps == 0 {
        return None;
    }
    let k = 1e3 / steps as f64;
    Some(PhaseTiming {
        sampling: total.sampling * k,
        flow: total.flow * k,
        rollout: total.rollout * k,
        update: total.update * k,
    })
}

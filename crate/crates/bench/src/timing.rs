use std::collections::BTreeMap;

use nfmpc::controller::PhaseTiming;

use crate::config::ControllerKind;
use crate::metrics::{per_step_ms, TimingRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub controller: ControllerKind,
    pub samples: usize,
    pub step_ms: PhaseTiming,
    /// Mean step time over the Gaussian-MPPI mean at the same N.
    pub ratio: Option<f64>,
}

impl TimingRow {
    pub fn mean_step_ms(&self) -> f64 {
        self.step_ms.total()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
    pub warnings: Vec<String>,
}

/// Mean per-step wall clock of every (controller, N) and its ratio to MPPI
/// at matched N. Rows without a baseline keep absolute times only.
pub fn timing_report(records: &[TimingRecord]) -> TimingReport {
    let mut keys: BTreeMap<(usize, ControllerKind), ()> = BTreeMap::new();
    for r in records {
        keys.insert((r.samples, r.controller), ());
    }
    let mut report = TimingReport::default();
    let mut baselines: BTreeMap<usize, f64> = BTreeMap::new();
    for &(n, c) in keys.keys() {
        let Some(ms) = per_step_ms(records.iter().filter(|r| r.samples == n && r.controller == c)) else {
            continue;
        };
        if c == ControllerKind::Mppi {
            baselines.insert(n, ms.total());
        }
        report.rows.push(TimingRow {
            controller: c,
            samples: n,
            step_ms: ms,
            ratio: None,
        });
    }
    let mut missing = Vec::new();
    for row in &mut report.rows {
        if row.controller == ControllerKind::Mppi {
            continue;
        }
        match baselines.get(&row.samples) {
            Some(&base) if base > 0.0 => row.ratio = Some(row.mean_step_ms() / base),
            _ => missing.push(row.samples),
        }
    }
    missing.dedup();
    for n in missing {
        report
            .warnings
            .push(format!("no mppi rows at N={n}; ratios omitted"));
    }
    report
}

impl TimingReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "controller",
            "N",
            "mean_step_ms",
            "sampling_ms",
            "flow_ms",
            "rollout_ms",
            "update_ms",
            "ratio_to_mppi",
        ])
        .expect("in-memory write");
        for r in &self.rows {
            let t = r.step_ms;
            w.write_record([
                r.controller.name().to_string(),
                r.samples.to_string(),
                r.mean_step_ms().to_string(),
                t.sampling.to_string(),
                t.flow.to_string(),
                t.rollout.to_string(),
                t.update.to_string(),
                r.ratio.map(|x| x.to_string()).unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<10} {:>6} {:>12} {:>8}\n", "controller", "N", "step ms", "ratio");
        for r in &self.rows {
            let ratio = r.ratio.map(|x| format!("{x:.2}x")).unwrap_or_else(|| "-".into());
            out += &format!("{:<10} {:>6} {:>12.3} {:>8}\n", r.controller.name(), r.samples, r.mean_step_ms(), ratio);
        }
        out
    }
}

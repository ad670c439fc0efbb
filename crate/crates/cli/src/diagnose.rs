//! Maps bias outliers to description-file records worth inspecting.
//!
//! A wrong branch record shifts `∂P_i/∂θ_j`, `∂P_j/∂θ_i` (and their `Q`/`V`
//! counterparts) plus the diagonal entries of both end buses. A wrong shunt
//! shifts only diagonal entries of its own bus. Scoring follows that:
//!
//! * a cross-bus outlier at `(i, j)` credits every branch between `i` and
//!   `j` (first tier) and every other branch at `i` or `j` (second tier);
//! * a same-bus outlier at `i` credits the first-tier branches ending at
//!   `i` when there are any, otherwise bus `i`'s own shunt record; all
//!   branches at `i` get it as second tier.
//!
//! Suspects are ranked by first-tier score, then second-tier score.

use std::collections::BTreeMap;

use gridtwin::estimation::{find_outliers, Outlier, OutlierRule};
use gridtwin::network::Network;
use gridtwin::powerflow::{Axis, StateIndexMap};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Record {
    /// `index` is the 0-based position in the branch section.
    Branch {
        index: usize,
        from: usize,
        to: usize,
    },
    Shunt {
        bus: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Suspect {
    pub record: Record,
    pub direct_score: f64,
    pub second_tier_score: f64,
    /// Labels of the outliers that credited this record in the first tier.
    pub evidence: Vec<String>,
    /// The record as it appears in the case file.
    pub case_line: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnosis {
    pub threshold: f64,
    pub outliers: Vec<Outlier>,
    pub suspects: Vec<Suspect>,
}

#[derive(Default)]
struct Score {
    direct: f64,
    second: f64,
    evidence: Vec<String>,
}

pub fn diagnose(
    net: &Network<f64>,
    bias: &DMatrix<f64>,
    rule: &OutlierRule,
) -> Result<Diagnosis, CliError> {
    let map = StateIndexMap::new(net);
    let (threshold, outliers) = find_outliers(bias, &map, rule)?;
    let incident = |bus: usize| -> Vec<usize> {
        (0..net.branches().len())
            .filter(|&k| net.branches()[k].touches(bus))
            .collect()
    };

    let mut scores: BTreeMap<Record, Score> = BTreeMap::new();
    let branch = |k: usize| {
        let br = &net.branches()[k];
        Record::Branch {
            index: k,
            from: br.from_bus,
            to: br.to_bus,
        }
    };
    let second_tier =
        |scores: &mut BTreeMap<Record, Score>, buses: &[usize], skip: &[usize], w: f64| {
            let mut ks: Vec<usize> = buses.iter().flat_map(|&b| incident(b)).collect();
            ks.sort_unstable();
            ks.dedup();
            for k in ks.into_iter().filter(|k| !skip.contains(k)) {
                scores.entry(branch(k)).or_default().second += w;
            }
        };

    // Cross-bus entries first: they decide which branches carry direct
    // evidence for the same-bus pass.
    let mut direct_branches = Vec::new();
    for o in outliers.iter().filter(|o| o.cross_bus) {
        let i = map.label(o.row, Axis::Injection)?.bus;
        let j = map.label(o.col, Axis::State)?.bus;
        let w = o.value.abs();
        let direct = net.branches_between(i, j);
        for &k in &direct {
            let s = scores.entry(branch(k)).or_default();
            s.direct += w;
            s.evidence.push(o.label.clone());
        }
        direct_branches.extend(direct.iter().copied());
        second_tier(&mut scores, &[i, j], &direct, w);
    }
    direct_branches.sort_unstable();
    direct_branches.dedup();

    for o in outliers.iter().filter(|o| !o.cross_bus) {
        let i = map.label(o.row, Axis::Injection)?.bus;
        let w = o.value.abs();
        let explained: Vec<usize> = direct_branches
            .iter()
            .copied()
            .filter(|&k| net.branches()[k].touches(i))
            .collect();
        if explained.is_empty() {
            let s = scores.entry(Record::Shunt { bus: i }).or_default();
            s.direct += w;
            s.evidence.push(o.label.clone());
        } else {
            let share = w / explained.len() as f64;
            for &k in &explained {
                let s = scores.entry(branch(k)).or_default();
                s.direct += share;
                s.evidence.push(o.label.clone());
            }
        }
        second_tier(&mut scores, &[i], &explained, w);
    }

    let mut suspects: Vec<Suspect> = scores
        .into_iter()
        .map(|(record, s)| Suspect {
            record,
            direct_score: s.direct,
            second_tier_score: s.second,
            evidence: s.evidence,
            case_line: match record {
                Record::Branch { index, .. } => net.branch_row(index),
                Record::Shunt { bus } => net.bus_row(net.bus_index(bus).expect("label bus exists")),
            },
        })
        .collect();
    suspects.sort_by(|a, b| {
        b.direct_score
            .total_cmp(&a.direct_score)
            .then(b.second_tier_score.total_cmp(&a.second_tier_score))
            .then(a.record.cmp(&b.record))
    });
    Ok(Diagnosis {
        threshold,
        outliers,
        suspects,
    })
}

impl Diagnosis {
    /// Plain-text report listing at most `limit` suspects.
    pub fn render(&self, limit: usize) -> String {
        if self.suspects.is_empty() {
            return format!("no suspects: no bias entry reaches {:e}\n", self.threshold);
        }
        let mut out = format!(
            "{} outliers above {:e}; inspect these description-file records:\n",
            self.outliers.len(),
            self.threshold
        );
        for (rank, s) in self.suspects.iter().take(limit).enumerate() {
            let what = match s.record {
                Record::Branch { index, from, to } => format!("branch #{index} {from}-{to}"),
                Record::Shunt { bus } => format!("shunt of bus {bus}"),
            };
            out.push_str(&format!(
                "{:>3}. {what:<24} direct {:<12.6e} second-tier {:<12.6e} | {}\n",
                rank + 1,
                s.direct_score,
                s.second_tier_score,
                s.case_line
            ));
        }
        out
    }
}

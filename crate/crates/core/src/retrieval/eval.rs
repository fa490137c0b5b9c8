use rayon::prelude::*;
use serde::Serialize;

use crate::aggregation::GlobalDescriptor;
use crate::error::{Error, Result};
use crate::pointcloud::Pose;

#[derive(Clone, Debug, PartialEq)]
pub struct DbEntry {
    pub descriptor: GlobalDescriptor,
    pub pose: Pose,
    pub timestamp: f64,
    pub index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    /// Minimum age in seconds of a database entry to be a candidate.
    pub exclusion_time: f64,
    /// Retrievals closer than this (meters) are correct.
    pub revisit_pos: f64,
    /// Retrievals farther than this (meters) are wrong; in between they are ignored.
    pub revisit_amb: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            exclusion_time: 30.0,
            revisit_pos: 3.0,
            revisit_amb: 20.0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.exclusion_time > 0.0 && self.revisit_pos > 0.0 && self.revisit_pos < self.revisit_amb) {
            return Err(Error::Config(format!("invalid evaluation config {self:?}")));
        }
        Ok(())
    }
}

/// Nearest database entry in descriptor space among those at least `t_r`
/// seconds older than the query. Returns its position in `db` and the L2
/// distance; ties go to the lowest position.
pub fn query_top1(db: &[DbEntry], query: &DbEntry, t_r: f64) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in db.iter().enumerate() {
        if e.timestamp > query.timestamp - t_r {
            continue;
        }
        let d = e.descriptor.distance(&query.descriptor);
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best
}

/// Top-1 result for one query against its predecessors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueryOutcome {
    pub query: usize,
    pub retrieved: usize,
    pub score: f64,
    /// Pose distance between query and retrieved entry.
    pub geo_distance: f64,
    /// Some eligible predecessor lies within `revisit_pos`.
    pub revisit: bool,
}

/// Runs every entry as a query against the entries before it. Queries with
/// no eligible predecessor are omitted.
pub fn query_outcomes(entries: &[DbEntry], cfg: &EvalConfig) -> Result<Vec<QueryOutcome>> {
    cfg.validate()?;
    if entries.windows(2).any(|w| !(w[0].timestamp <= w[1].timestamp)) {
        return Err(Error::InvalidInput("entries are not ordered by timestamp".into()));
    }
    Ok(entries
        .par_iter()
        .enumerate()
        .filter_map(|(q, query)| {
            let db = &entries[..q];
            let (retrieved, score) = query_top1(db, query, cfg.exclusion_time)?;
            let revisit = db
                .iter()
                .any(|e| e.timestamp <= query.timestamp - cfg.exclusion_time && e.pose.distance(&query.pose) < cfg.revisit_pos);
            Some(QueryOutcome {
                query: q,
                retrieved,
                score,
                geo_distance: db[retrieved].pose.distance(&query.pose),
                revisit,
            })
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    /// Accepted retrievals in the ambiguous band.
    pub excluded: usize,
}

impl PrPoint {
    pub fn f1(&self) -> f64 {
        let s = self.precision + self.recall;
        if s > 0.0 {
            2.0 * self.precision * self.recall / s
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrCurve {
    /// Points in increasing threshold order.
    pub points: Vec<PrPoint>,
    pub f1max: f64,
    pub num_queries: usize,
    pub num_revisits: usize,
    /// No query had a true revisit; recall is undefined and `f1max` is 0.
    pub no_revisit: bool,
}

fn classify(outcomes: &[QueryOutcome], threshold: f64, cfg: &EvalConfig) -> PrPoint {
    let (mut tp, mut fp, mut fn_, mut tn, mut excluded) = (0, 0, 0, 0, 0);
    for o in outcomes {
        if o.score < threshold {
            if o.geo_distance < cfg.revisit_pos {
                tp += 1;
            } else if o.geo_distance > cfg.revisit_amb {
                fp += 1;
            } else {
                excluded += 1;
            }
        } else if o.revisit {
            fn_ += 1;
        } else {
            tn += 1;
        }
    }
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 1.0 };
    let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    PrPoint {
        threshold,
        precision,
        recall,
        tp,
        fp,
        fn_,
        tn,
        excluded,
    }
}

/// Precision–recall sweep over every observed top-1 score. A query is
/// accepted at threshold `τ` when its score is below `τ`; the sweep uses
/// the smallest score (nothing accepted) and the next float above each
/// distinct score.
pub fn evaluate_sequence(entries: &[DbEntry], cfg: &EvalConfig) -> Result<PrCurve> {
    let outcomes = query_outcomes(entries, cfg)?;
    Ok(curve_from_outcomes(&outcomes, cfg))
}

pub(crate) fn curve_from_outcomes(outcomes: &[QueryOutcome], cfg: &EvalConfig) -> PrCurve {
    let num_revisits = outcomes.iter().filter(|o| o.revisit).count();
    let mut scores: Vec<f64> = outcomes.iter().map(|o| o.score).collect();
    scores.sort_by(f64::total_cmp);
    scores.dedup();
    let mut thresholds = Vec::with_capacity(scores.len() + 1);
    if let Some(&lo) = scores.first() {
        thresholds.push(lo);
    }
    thresholds.extend(scores.iter().map(|s| s.next_up()));
    let points: Vec<PrPoint> = thresholds.iter().map(|&t| classify(outcomes, t, cfg)).collect();
    let no_revisit = num_revisits == 0;
    let f1max = if no_revisit {
        0.0
    } else {
        points.iter().map(PrPoint::f1).fold(0.0, f64::max)
    };
    PrCurve {
        points,
        f1max,
        num_queries: outcomes.len(),
        num_revisits,
        no_revisit,
    }
}

impl PrCurve {
    /// Whitespace-separated table with a header line.
    pub fn to_table(&self) -> String {
        let mut s = String::from("threshold precision recall tp fp fn tn\n");
        for p in &self.points {
            s.push_str(&format!(
                "{:e} {:e} {:e} {} {} {} {}\n",
                p.threshold, p.precision, p.recall, p.tp, p.fp, p.fn_, p.tn
            ));
        }
        s
    }

    /// Single-line JSON summary.
    pub fn summary_json(&self) -> String {
        let best = self
            .points
            .iter()
            .max_by(|a, b| a.f1().total_cmp(&b.f1()))
            .copied();
        serde_json::json!({
            "f1max": self.f1max,
            "num_queries": self.num_queries,
            "num_revisits": self.num_revisits,
            "no_revisit": self.no_revisit,
            "best": best,
        })
        .to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn entry(i: usize, t: f64, x: f64, desc: Vec<f64>) -> DbEntry {
        DbEntry {
            descriptor: GlobalDescriptor::new(desc),
            pose: Pose::from_yaw(0.0, Vector3::new(x, 0.0, 0.0), t),
            timestamp: t,
            index: i,
        }
    }

    #[test]
    fn empty_eligible_set() {
        let db = vec![entry(0, 0.0, 0.0, vec![1.0, 0.0])];
        let q = entry(1, 10.0, 0.0, vec![1.0, 0.0]);
        assert_eq!(query_top1(&db, &q, 30.0), None);
        assert_eq!(query_top1(&db, &q, 5.0), Some((0, 0.0)));
    }

    #[test]
    fn duplicate_and_ties() {
        let db = vec![
            entry(0, 0.0, 0.0, vec![0.0, 1.0]),
            entry(1, 1.0, 0.0, vec![0.0, 1.0]),
            entry(2, 2.0, 0.0, vec![1.0, 0.0]),
        ];
        let q = entry(3, 100.0, 0.0, vec![0.0, 1.0]);
        assert_eq!(query_top1(&db, &q, 30.0), Some((0, 0.0)));
    }

    #[test]
    fn unordered_timestamps_rejected() {
        let e = vec![entry(0, 5.0, 0.0, vec![1.0]), entry(1, 1.0, 0.0, vec![1.0])];
        assert!(evaluate_sequence(&e, &EvalConfig::default()).is_err());
    }

    #[test]
    fn zero_revisits_flagged() {
        let e: Vec<_> = (0..10).map(|i| entry(i, i as f64 * 40.0, i as f64 * 100.0, vec![1.0, 0.0])).collect();
        let c = evaluate_sequence(&e, &EvalConfig::default()).unwrap();
        assert!(c.no_revisit);
        assert_eq!(c.f1max, 0.0);
    }

    #[test]
    fn perfectly_separable() {
        // four places visited twice; revisit descriptors duplicate the first visit
        let mut e = Vec::new();
        for i in 0..4 {
            let mut d = vec![0.0; 8];
            d[i] = 1.0;
            e.push(entry(i, i as f64 * 40.0, i as f64 * 100.0, d));
        }
        for i in 0..4 {
            let mut d = vec![0.0; 8];
            d[i] = 1.0;
            e.push(entry(4 + i, 200.0 + i as f64 * 40.0, i as f64 * 100.0, d));
        }
        let c = evaluate_sequence(&e, &EvalConfig::default()).unwrap();
        assert_eq!(c.f1max, 1.0);
    }
}

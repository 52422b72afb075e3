//! CLEAR-style detection metrics on the ground plane.
//!
//! Detections are matched to ground truth by a minimum-cost assignment on
//! the gated distance matrix: pairs farther apart than the gate are
//! infeasible, the number of matched pairs is maximized first and the
//! total distance second.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GATE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub detection: usize,
    pub ground_truth: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    pub tp_count: usize,
    pub fp_count: usize,
    pub fn_count: usize,
    pub gate: f64,
}

impl MatchResult {
    pub fn total_distance(&self) -> f64 {
        self.pairs.iter().map(|p| p.distance).sum()
    }

    /// `Σ (1 − d / gate)` over matched pairs.
    pub fn modp_sum(&self) -> f64 {
        self.pairs.iter().map(|p| 1.0 - p.distance / self.gate).sum()
    }

    pub fn n_gt(&self) -> usize {
        self.tp_count + self.fn_count
    }
}

/// Minimum-cost perfect assignment on a square cost matrix (row-major).
/// Returns, for each row, the assigned column.
pub fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix must be n×n");
    if n == 0 {
        return Vec::new();
    }
    // Potentials-based shortest augmenting path formulation, 1-indexed
    // with column 0 as the virtual source.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if owner[j] > 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Gated optimal matching of detections to ground-truth points.
pub fn match_detections(dets: &[[f64; 2]], gts: &[[f64; 2]], gate: f64) -> MatchResult {
    let n = dets.len().max(gts.len());
    // any infeasible pair costs more than the largest possible feasible total
    let big = gate * (n as f64 + 1.0) + 1.0;
    let mut cost = vec![big; n * n];
    for (i, &d) in dets.iter().enumerate() {
        for (j, &g) in gts.iter().enumerate() {
            let dd = dist(d, g);
            if dd <= gate {
                cost[i * n + j] = dd;
            }
        }
    }
    let assignment = hungarian(&cost, n);
    let mut pairs: Vec<MatchPair> = assignment
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < dets.len() && j < gts.len() && cost[i * n + j] < big)
        .map(|(i, &j)| MatchPair {
            detection: i,
            ground_truth: j,
            distance: cost[i * n + j],
        })
        .collect();
    pairs.sort_by_key(|p| p.detection);
    let tp = pairs.len();
    MatchResult {
        tp_count: tp,
        fp_count: dets.len() - tp,
        fn_count: gts.len() - tp,
        pairs,
        gate,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub moda: f64,
    pub modp: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub n_gt: usize,
    pub n_frames: usize,
    /// No ground truth at all; MODA reported as 0.
    pub moda_undefined: bool,
    /// No true positives; MODP reported as 0.
    pub modp_undefined: bool,
    /// No detections; precision reported as 1.
    pub precision_undefined: bool,
    /// No ground truth; recall reported as 1.
    pub recall_undefined: bool,
}

/// Micro-averaged metrics over frames (counts summed before dividing).
pub fn compute_metrics(frames: &[MatchResult]) -> Result<MetricReport> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("metrics need at least one frame"));
    }
    let tp: usize = frames.iter().map(|f| f.tp_count).sum();
    let fp: usize = frames.iter().map(|f| f.fp_count).sum();
    let fn_: usize = frames.iter().map(|f| f.fn_count).sum();
    let n_gt = tp + fn_;
    let modp_sum: f64 = frames.iter().map(MatchResult::modp_sum).sum();
    let moda_undefined = n_gt == 0;
    let moda = if moda_undefined {
        0.0
    } else {
        1.0 - (fn_ + fp) as f64 / n_gt as f64
    };
    let modp_undefined = tp == 0;
    let precision_undefined = tp + fp == 0;
    Ok(MetricReport {
        moda,
        modp: if modp_undefined { 0.0 } else { modp_sum / tp as f64 },
        precision: if precision_undefined { 1.0 } else { tp as f64 / (tp + fp) as f64 },
        recall: if moda_undefined { 1.0 } else { tp as f64 / n_gt as f64 },
        tp,
        fp,
        fn_,
        n_gt,
        n_frames: frames.len(),
        moda_undefined,
        modp_undefined,
        precision_undefined,
        recall_undefined: moda_undefined,
    })
}

/// Machine-readable per-frame row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRow {
    pub frame_id: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub modp_sum: f64,
}

impl FrameRow {
    pub fn new(frame_id: usize, m: &MatchResult) -> Self {
        Self {
            frame_id,
            tp: m.tp_count,
            fp: m.fp_count,
            fn_: m.fn_count,
            modp_sum: m.modp_sum(),
        }
    }

    pub fn to_line(&self) -> String {
        format!("{} {} {} {} {}", self.frame_id, self.tp, self.fp, self.fn_, self.modp_sum)
    }
}

impl MetricReport {
    pub fn summary(&self) -> String {
        format!(
            "MODA {:.4}  MODP {:.4}  Prec {:.4}  Recall {:.4}  (TP {} FP {} FN {} GT {} frames {})",
            self.moda, self.modp, self.precision, self.recall, self.tp, self.fp, self.fn_, self.n_gt, self.n_frames
        )
    }
}

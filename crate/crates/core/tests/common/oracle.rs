//! Slow, obviously-correct reference implementations.

use groundview::decode::Candidate;
use groundview::loss::KL_EPS;

/// Best gated matching by exhaustive search: most pairs first, then the
/// smallest total distance. Returns `(pairs, total_distance)`.
pub fn brute_force_match(dets: &[[f64; 2]], gts: &[[f64; 2]], gate: f64) -> (usize, f64) {
    fn rec(i: usize, dets: &[[f64; 2]], gts: &[[f64; 2]], gate: f64, used: &mut [bool], n: usize, d: f64, best: &mut (usize, f64)) {
        if i == dets.len() {
            if n > best.0 || (n == best.0 && d < best.1) {
                *best = (n, d);
            }
            return;
        }
        rec(i + 1, dets, gts, gate, used, n, d, best);
        for j in 0..gts.len() {
            let dist = (dets[i][0] - gts[j][0]).hypot(dets[i][1] - gts[j][1]);
            if !used[j] && dist <= gate {
                used[j] = true;
                rec(i + 1, dets, gts, gate, used, n + 1, d + dist, best);
                used[j] = false;
            }
        }
    }
    let mut best = (0, 0.0);
    rec(0, dets, gts, gate, &mut vec![false; gts.len()], 0, 0.0, &mut best);
    best
}

/// Among all subsets of `cands` (given in decode order) that are pairwise
/// farther apart than `radius` and maximal, the one whose membership
/// vector is lexicographically greatest in that order. Exponential; keep
/// the candidate count small.
pub fn brute_force_nms(cands: &[Candidate], radius: f64) -> Vec<usize> {
    let n = cands.len();
    assert!(n <= 16, "exhaustive NMS oracle limited to 16 candidates");
    let close = |a: usize, b: usize| (cands[a].x - cands[b].x).powi(2) + (cands[a].y - cands[b].y).powi(2) <= radius * radius;
    let mut best: Option<u32> = None;
    for mask in 0u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|&k| mask >> k & 1 == 1).collect();
        let independent = members.iter().enumerate().all(|(i, &a)| members[i + 1..].iter().all(|&b| !close(a, b)));
        if !independent {
            continue;
        }
        let maximal = (0..n).all(|k| mask >> k & 1 == 1 || members.iter().any(|&m| close(m, k)));
        if !maximal {
            continue;
        }
        // lexicographic on index order: earlier index dominates
        let key = mask.reverse_bits() >> (32 - n.max(1));
        if best.map_or(true, |b| key > (b.reverse_bits() >> (32 - n.max(1)))) {
            best = Some(mask);
        }
    }
    let mask = best.unwrap_or(0);
    (0..n).filter(|&k| mask >> k & 1 == 1).collect()
}

/// `KL(g‖p)` straight from the definition on unit-sum maps.
pub fn kl_reference(g: &[f64], p: &[f64]) -> f64 {
    let gs: f64 = g.iter().sum();
    let ps: f64 = p.iter().sum();
    let mut total = 0.0;
    for i in 0..g.len() {
        let gi = g[i] / gs;
        let pi = p[i] / ps;
        if gi > 0.0 {
            total += gi * ((gi + KL_EPS).ln() - (pi + KL_EPS).ln());
        }
    }
    total
}

/// Pearson correlation from raw sums.
pub fn cc_reference(p: &[f64], g: &[f64]) -> f64 {
    let n = p.len() as f64;
    let (sp, sg): (f64, f64) = (p.iter().sum(), g.iter().sum());
    let spp: f64 = p.iter().map(|v| v * v).sum();
    let sgg: f64 = g.iter().map(|v| v * v).sum();
    let spg: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    (n * spg - sp * sg) / ((n * spp - sp * sp).sqrt() * (n * sgg - sg * sg).sqrt())
}

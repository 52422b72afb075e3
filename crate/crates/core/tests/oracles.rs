//! Matching, suppression and loss values against brute-force references.

mod common;

use common::oracle::*;
use groundview::decode::{self, DecoderConfig};
use groundview::loss::{self, LossKind};
use groundview::metrics::{self, DEFAULT_GATE};
use groundview::{GroundGrid, OccupancyMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn points(rng: &mut impl Rng, n: usize, extent: f64) -> Vec<[f64; 2]> {
    (0..n).map(|_| [rng.gen_range(0.0..extent), rng.gen_range(0.0..extent)]).collect()
}

#[test]
fn hungarian_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let (nd, ng) = (rng.gen_range(0..=7), rng.gen_range(0..=7));
        let dets = points(&mut rng, nd, 2.0);
        let gts = points(&mut rng, ng, 2.0);
        let m = metrics::match_detections(&dets, &gts, DEFAULT_GATE);
        let (n, d) = brute_force_match(&dets, &gts, DEFAULT_GATE);
        assert_eq!(m.tp_count, n);
        assert!((m.total_distance() - d).abs() < 1e-9);
        assert_eq!(m.fp_count + m.tp_count, dets.len());
        assert_eq!(m.fn_count + m.tp_count, gts.len());
        assert!(m.pairs.iter().all(|p| p.distance <= DEFAULT_GATE));
    }
}

#[test]
fn hungarian_on_square_costs() {
    // exhaustive over permutations of 5
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    fn perms(k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in 0..k {
            if !cur.contains(&j) {
                cur.push(j);
                perms(k, cur, out);
                cur.pop();
            }
        }
    }
    let mut all = Vec::new();
    perms(5, &mut Vec::new(), &mut all);
    for _ in 0..100 {
        let cost: Vec<f64> = (0..25).map(|_| rng.gen_range(-3.0..10.0)).collect();
        let a = metrics::hungarian(&cost, 5);
        let total = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost[i * 5 + j]).sum::<f64>();
        let best = all.iter().map(|p| total(p)).fold(f64::INFINITY, f64::min);
        assert!((total(&a) - best).abs() < 1e-12);
    }
}

#[test]
fn worked_example() {
    let gts = [[0.0, 0.0], [5.0, 5.0]];
    let dets = [[0.2, 0.0], [10.0, 10.0]];
    let r = metrics::compute_metrics(&[metrics::match_detections(&dets, &gts, DEFAULT_GATE)]).unwrap();
    assert_eq!((r.moda, r.modp, r.precision, r.recall), (0.0, 0.6, 0.5, 0.5));
}

#[test]
fn metrics_accumulate_over_frames() {
    let a = metrics::match_detections(&[[0.0, 0.0]], &[[0.1, 0.0]], DEFAULT_GATE);
    let b = metrics::match_detections(&[[3.0, 3.0]], &[], DEFAULT_GATE);
    let r = metrics::compute_metrics(&[a, b]).unwrap();
    assert_eq!((r.tp, r.fp, r.fn_, r.n_gt), (1, 1, 0, 1));
    assert_eq!(r.moda, 0.0);
    let empty = metrics::compute_metrics(&[metrics::match_detections(&[], &[], DEFAULT_GATE)]).unwrap();
    assert!(empty.moda_undefined && empty.precision_undefined);
    assert!(metrics::compute_metrics(&[]).is_err());
}

#[test]
fn nms_matches_exhaustive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let grid = GroundGrid::covering(2.0, 2.0, 0.2).unwrap();
    for _ in 0..300 {
        let mut map = OccupancyMap::<f64>::zeros(grid);
        for _ in 0..rng.gen_range(0..13) {
            let k = rng.gen_range(0..grid.len());
            map.values[k] = rng.gen_range(0.3..1.0);
        }
        let cfg = DecoderConfig::default();
        let cands = decode::candidates(&map, cfg.tau);
        let got = decode::decode(&map, &cfg);
        let want: Vec<_> = brute_force_nms(&cands, cfg.nms_radius).into_iter().map(|k| cands[k]).collect();
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert_eq!((g.x, g.y, g.score), (w.x, w.y, w.score));
        }
        for (i, a) in got.iter().enumerate() {
            for b in &got[i + 1..] {
                assert!((a.x - b.x).hypot(a.y - b.y) > cfg.nms_radius);
            }
        }
    }
}

fn random_map(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.001..1.0)).collect()
}

#[test]
fn loss_values_match_reference_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..200 {
        let n = rng.gen_range(4..400);
        let (p, g) = (random_map(&mut rng, n), random_map(&mut rng, n));
        let kl = loss::kl_div(&g, &p).unwrap().value;
        let cc = loss::pearson_cc(&p, &g).unwrap().value;
        assert!((kl - kl_reference(&g, &p)).abs() < 1e-12, "kl {kl} vs {}", kl_reference(&g, &p));
        assert!((cc - cc_reference(&p, &g)).abs() < 1e-12, "cc {cc} vs {}", cc_reference(&p, &g));
        let r = loss::objective(&p, &g, LossKind::KlCc).unwrap().0;
        assert_eq!(r.objective, r.kl - r.cc);
    }
}

#[test]
fn kl_is_non_negative_and_cc_affine_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..1000 {
        let n = rng.gen_range(2..100);
        let (p, g) = (random_map(&mut rng, n), random_map(&mut rng, n));
        assert!(loss::kl_div(&g, &p).unwrap().value >= 0.0);
        let (a, b) = (rng.gen_range(0.1..10.0), rng.gen_range(-5.0..5.0));
        let q: Vec<f64> = p.iter().map(|v| a * v + b).collect();
        let c0 = loss::pearson_cc(&p, &g).unwrap().value;
        let c1 = loss::pearson_cc(&q, &g).unwrap().value;
        assert!((c0 - c1).abs() < 1e-10);
    }
}

#[test]
fn perfect_prediction_scores_minus_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..50 {
        let g = random_map(&mut rng, 64);
        let r = loss::objective(&g, &g, LossKind::KlCc).unwrap().0;
        assert!((r.objective + 1.0).abs() < 1e-12);
        // scale invariance of the normalized divergence
        let p2: Vec<f64> = g.iter().map(|v| 0.5 * v).collect();
        assert!((loss::objective(&p2, &g, LossKind::KlCc).unwrap().0.objective + 1.0).abs() < 1e-12);
    }
}

//! Structural invariants: geometry round trips, warp linearity, pooling
//! symmetry, DropView and the learning-rate schedule.

mod common;

use common::*;
use groundview::aggregate::{self, PoolMode};
use groundview::autonet::optim::OneCycle;
use groundview::warp::{ViewFeatureMap, WarpTable};
use groundview::{GroundGrid, ProjectedFeatureMap, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn geometry_round_trip_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (m, px, n) = geometry_round_trip(&mut rng, 200, 5);
    assert_eq!(n, 1000);
    assert!(m < 1e-9, "round trip {m:e} m");
    assert!(px < 1e-9, "homography vs projection {px:e} px");
}

#[test]
fn grid_cell_centers_round_trip() {
    let grid = GroundGrid::new(-3.0, 1.5, 0.2, 17, 23).unwrap();
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let [x, y] = grid.grid_to_world(r, c);
            assert_eq!(grid.world_to_grid(x, y).unwrap(), (r, c));
        }
    }
    assert!(grid.world_to_grid(-3.1, 2.0).is_err());
}

fn random_view(rng: &mut impl Rng, shape: [usize; 3]) -> Tensor<f64> {
    Tensor::from_fn(&shape, |_| rng.gen_range(-1.0..1.0))
}

#[test]
fn warp_is_linear_and_mask_ignores_features() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grid = GroundGrid::covering(4.0, 4.0, 0.1).unwrap();
    for _ in 0..20 {
        let cam = ring_camera(&mut rng, [2.0, 2.0], 32, 24);
        let table = WarpTable::<f64>::new(cam.homography(), &grid, 24, 32).unwrap();
        let x = random_view(&mut rng, [2, 24, 32]);
        let y = random_view(&mut rng, [2, 24, 32]);
        let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let mut z = x.clone();
        z.scale(a);
        z.axpy(b, &y).unwrap();
        let w = |t: &Tensor<f64>| {
            table
                .apply(&ViewFeatureMap {
                    data: t.clone(),
                    view_id: 0,
                })
                .unwrap()
        };
        let (wx, wy, wz) = (w(&x), w(&y), w(&z));
        for i in 0..wz.data.len() {
            let expect = a * wx.data.data()[i] + b * wy.data.data()[i];
            assert!((wz.data.data()[i] - expect).abs() < 1e-12);
        }
        assert_eq!(wx.mask, wy.mask);
        assert_eq!(wx.mask, table.mask());
        let cells = grid.len();
        for (i, v) in wx.data.data().iter().enumerate() {
            if !wx.mask[i % cells] {
                assert_eq!(*v, 0.0);
            }
        }
        assert!(table.covered_cells() > 0);
    }
}

#[test]
fn warp_samples_bilinearly_at_the_projected_point() {
    // a feature map that is affine in pixel coordinates is reproduced exactly
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid = GroundGrid::covering(4.0, 4.0, 0.25).unwrap();
    let cam = ring_camera(&mut rng, [2.0, 2.0], 40, 30);
    let table = WarpTable::<f64>::new(cam.homography(), &grid, 30, 40).unwrap();
    let fm = Tensor::from_fn(&[1, 30, 40], |i| 0.5 * (i % 40) as f64 - 0.25 * (i / 40) as f64 + 1.0);
    let out = table.apply(&ViewFeatureMap { data: fm, view_id: 0 }).unwrap();
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let k = r * grid.cols + c;
            if out.mask[k] {
                let [x, y] = grid.grid_to_world(r, c);
                let [u, v] = cam.homography().ground_to_image(x, y).unwrap();
                let expect = 0.5 * u - 0.25 * v + 1.0;
                assert!((out.data.data()[k] - expect).abs() < 1e-9, "cell ({r},{c})");
            }
        }
    }
}

fn random_stack(rng: &mut impl Rng, n: usize, shape: [usize; 3]) -> Vec<ProjectedFeatureMap<f32>> {
    let cells = shape[1] * shape[2];
    (0..n)
        .map(|k| ProjectedFeatureMap {
            data: Tensor::from_fn(&shape, |_| rng.gen_range(-1.0f32..1.0)),
            mask: (0..cells).map(|_| rng.gen_bool(0.8)).collect(),
            view_id: 3 * k + 1,
        })
        .collect()
}

#[test]
fn pooling_is_bitwise_permutation_invariant() {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let n = rng.gen_range(1..7);
        let stack = random_stack(&mut rng, n, [3, 5, 7]);
        for mode in [PoolMode::Mean, PoolMode::CoverageNormalized] {
            let refs: Vec<_> = stack.iter().collect();
            let base = aggregate::pool(&refs, mode).unwrap();
            let mut shuffled = refs.clone();
            shuffled.shuffle(&mut rng);
            let again = aggregate::pool(&shuffled, mode).unwrap();
            let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&base.data), bits(&again.data));
        }
    }
}

#[test]
fn pooling_identical_views_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let one = random_stack(&mut rng, 1, [2, 4, 4]).remove(0);
    let copies: Vec<_> = (0..4)
        .map(|k| ProjectedFeatureMap {
            view_id: k,
            ..one.clone()
        })
        .collect();
    let refs: Vec<_> = copies.iter().collect();
    let pooled = aggregate::pool(&refs, PoolMode::Mean).unwrap();
    for (a, b) in pooled.data.data().iter().zip(one.data.data()) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn pooling_rejects_bad_stacks() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut stack = random_stack(&mut rng, 2, [2, 3, 3]);
    assert!(aggregate::pool::<f32>(&[], PoolMode::Mean).is_err());
    stack[1].view_id = stack[0].view_id;
    let refs: Vec<_> = stack.iter().collect();
    assert!(aggregate::pool(&refs, PoolMode::Mean).is_err());
    let other = random_stack(&mut rng, 1, [2, 3, 4]).remove(0);
    assert!(aggregate::pool(&[&stack[0], &other], PoolMode::Mean).is_err());
}

#[test]
fn dropview_removes_exactly_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut hits = [0usize; 4];
    for _ in 0..4000 {
        let kept = aggregate::drop_view(vec![0, 1, 2, 3], &mut rng);
        assert_eq!(kept.len(), 3);
        let missing = (0..4).find(|k| !kept.contains(k)).unwrap();
        hits[missing] += 1;
    }
    // uniform: each view dropped about 1000 times
    assert!(hits.iter().all(|&h| (850..1150).contains(&h)), "{hits:?}");
    assert_eq!(aggregate::drop_view(vec![9], &mut rng), vec![9]);
}

proptest! {
    #[test]
    fn one_cycle_shape(max_lr in 1e-4f64..1.0, total in 10usize..5000) {
        let s = OneCycle::new(max_lr, total);
        prop_assert!((s.lr(0) - max_lr / 10.0).abs() < 1e-12 * max_lr);
        prop_assert!((s.lr(total) - max_lr / 1000.0).abs() < 1e-12 * max_lr);
        let mut peak = 0.0f64;
        for t in 0..total {
            let (a, b) = (s.lr(t), s.lr(t + 1));
            prop_assert!((b - a).abs() <= s.max_step_change() * (1.0 + 1e-9));
            prop_assert!((b - a).abs() <= 3.0 * max_lr / total as f64 * (1.0 + 1e-9));
            prop_assert!(a > 0.0 && a <= max_lr * (1.0 + 1e-12));
            peak = peak.max(a);
        }
        // integer steps straddle the end of the warm-up
        prop_assert!(peak >= max_lr - s.max_step_change());
    }

    #[test]
    fn projection_matches_homography(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, px, _) = geometry_round_trip(&mut rng, 1, 8);
        prop_assert!(m < 1e-9 && px < 1e-9);
    }
}

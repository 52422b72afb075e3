//! Generator behavior: rendering geometry, occlusion, determinism and
//! crowd sampling.

use std::collections::BTreeMap;
use std::path::Path;

use groundview::synthgen::{self, CameraRig, CrowdSpec, GeneratorConfig, Pedestrian, RigSpec, SceneSpec};
use groundview::Camera;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn demo_rig(scene: &SceneSpec, w: usize, h: usize) -> CameraRig {
    CameraRig::build(
        scene,
        &RigSpec {
            image_width: w,
            image_height: h,
            sync_jitter: false,
            ..RigSpec::default()
        },
    )
    .unwrap()
}

fn walker(id: usize, x: f64, y: f64, shirt: [f64; 3], pants: [f64; 3]) -> Pedestrian {
    Pedestrian {
        id,
        x,
        y,
        height: 1.7,
        width: 0.5,
        shirt,
        pants,
        velocity: [0.0, 0.0],
    }
}

fn render(cam: &Camera, scene: &SceneSpec, peds: &[Pedestrian]) -> (Vec<u8>, Vec<u8>) {
    let bg = synthgen::render_background(cam, scene);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let empty = synthgen::render_view(cam, &[], scene, &bg, 0.0, 0.0, &mut rng);
    let img = synthgen::render_view(cam, peds, scene, &bg, 0.0, 0.0, &mut rng);
    (empty.data, img.data)
}

#[test]
fn foot_lands_on_its_projection() {
    let scene = SceneSpec::preset("a").unwrap();
    let rig = demo_rig(&scene, 160, 120);
    for rec in &rig.cameras {
        let cam = &rec.camera;
        for &(x, y) in &[(4.0, 4.0), (3.0, 5.5), (5.2, 2.7)] {
            let (bg, img) = render(cam, &scene, &[walker(0, x, y, [0.9, 0.1, 0.1], [0.1, 0.1, 0.9])]);
            let w = cam.image_width;
            let fg = |px: usize, py: usize| (0..3).any(|c| img[(py * w + px) * 3 + c] != bg[(py * w + px) * 3 + c]);
            let [u, v] = cam.projection().project([x, y, 0.0]).unwrap();
            // the bottom edge is tilted, so measure in the foot's own column
            let col = u.round() as usize;
            let bottom = (0..cam.image_height).rev().find(|&py| fg(col, py)).unwrap();
            assert!((bottom as f64 + 0.5 - v).abs() <= 2.0, "camera {}: foot row {bottom} vs {v}", rec.id);
            let row = bottom - 2;
            let left = (0..=col).rev().take_while(|&px| fg(px, row)).last().unwrap();
            let right = (col..w).take_while(|&px| fg(px, row)).last().unwrap();
            let mid = 0.5 * (left + right) as f64;
            assert!((mid - u).abs() <= 2.0, "camera {}: foot column {mid} vs {u}", rec.id);
        }
    }
}

#[test]
fn nearer_person_occludes_farther() {
    let scene = SceneSpec::preset("a").unwrap();
    let rig = demo_rig(&scene, 160, 120);
    let cam = &rig.cameras[0].camera;
    let c = cam.center();
    let (tx, ty) = (4.0, 4.0);
    let dir = [(tx - c.x), (ty - c.y)];
    let n = dir[0].hypot(dir[1]);
    // same line of sight, one meter apart; listing order must not matter
    let near = walker(0, tx, ty, [0.9, 0.1, 0.1], [0.1, 0.1, 0.9]);
    let far = walker(1, tx + dir[0] / n, ty + dir[1] / n, [0.1, 0.9, 0.1], [0.9, 0.9, 0.1]);
    let (_, a) = render(cam, &scene, &[near, far]);
    let (_, b) = render(cam, &scene, &[far, near]);
    assert_eq!(a, b);
    let [u, v] = cam.projection().project([tx, ty, 0.85]).unwrap();
    let i = (v.round() as usize * cam.image_width + u.round() as usize) * 3;
    let expect = near.shirt.map(|c| (c * scene.illumination * 255.0).round() as u8);
    assert_eq!(&a[i..i + 3], &expect);
}

#[test]
fn ground_truth_inside_the_scene_and_the_images() {
    let scene = SceneSpec::preset("a").unwrap();
    let rig = demo_rig(&scene, 64, 48);
    let ds = synthgen::generate(&scene, &rig, &CrowdSpec::default(), &GeneratorConfig::default()).unwrap();
    let mut seen_by_some = 0;
    let mut total = 0;
    for f in &ds.frames {
        assert_eq!(f.ground_truth.len(), 15);
        for p in &f.ground_truth {
            assert!(ds.grid.contains(p.x, p.y));
            assert!(p.x >= 0.25 && p.x <= scene.width - 0.25 && p.y >= 0.25 && p.y <= scene.depth - 0.25);
            total += 1;
            if ds.cameras.iter().any(|c| c.camera.sees_ground_point(p.x, p.y)) {
                seen_by_some += 1;
            }
        }
    }
    assert_eq!(seen_by_some, total);
}

fn files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn same_seed_same_bytes() {
    let scene = SceneSpec::preset("b").unwrap();
    let rig = CameraRig::build(&scene, &RigSpec::default()).unwrap();
    let cfg = GeneratorConfig {
        n_frames: 3,
        seed: 42,
        ..GeneratorConfig::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    synthgen::generate_dataset(&scene, &rig, &CrowdSpec::default(), &cfg, a.path()).unwrap();
    synthgen::generate_dataset(&scene, &rig, &CrowdSpec::default(), &cfg, b.path()).unwrap();
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.len(), 3 + 3 * 4);
    assert_eq!(fa, fb);

    let other = synthgen::generate(&scene, &rig, &CrowdSpec::default(), &GeneratorConfig { seed: 43, ..cfg.clone() }).unwrap();
    let first = synthgen::generate(&scene, &rig, &CrowdSpec::default(), &cfg).unwrap();
    assert_ne!(other.frames[0].images, first.frames[0].images);
}

#[test]
fn frames_depend_only_on_their_id() {
    let scene = SceneSpec::preset("a").unwrap();
    let rig = demo_rig(&scene, 32, 24);
    let crowd = CrowdSpec::default();
    let all = synthgen::generate(&scene, &rig, &crowd, &GeneratorConfig { n_frames: 5, seed: 9, ..Default::default() }).unwrap();
    let tail = synthgen::generate(
        &scene,
        &rig,
        &crowd,
        &GeneratorConfig {
            n_frames: 2,
            seed: 9,
            first_frame: 3,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(tail.frames[..], all.frames[3..]);
}

#[test]
fn two_frames_two_cameras_four_images() {
    let scene = SceneSpec::preset("a").unwrap();
    let rig = CameraRig::build(&scene, &RigSpec { n_cameras: 2, ..RigSpec::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = GeneratorConfig { n_frames: 2, ..Default::default() };
    synthgen::generate_dataset(&scene, &rig, &CrowdSpec::default(), &cfg, dir.path()).unwrap();
    let images = std::fs::read_dir(dir.path().join("images")).unwrap().count();
    assert_eq!(images, 4);
}

#[test]
fn crowd_respects_min_separation() {
    let crowd = CrowdSpec {
        count: 20,
        ..CrowdSpec::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let pts = synthgen::sample_positions(&crowd, 16.0, 25.0, &mut rng).unwrap();
        assert_eq!(pts.len(), 20);
        for (i, a) in pts.iter().enumerate() {
            assert!(a.0 >= 0.25 && a.0 <= 15.75 && a.1 >= 0.25 && a.1 <= 24.75);
            for b in &pts[i + 1..] {
                assert!((a.0 - b.0).hypot(a.1 - b.1) >= crowd.min_separation);
            }
        }
    }
}

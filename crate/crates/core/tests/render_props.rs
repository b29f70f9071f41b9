mod common;

use nalgebra::Vector3;
use proptest::prelude::*;

use cityframe_core::geometry::{CameraPose, PerspectiveIntrinsics};
use cityframe_core::mesh::CityMesh;
use cityframe_core::render::{world_to_camera, CadScene, RenderConfig};
use cityframe_core::synth::{generate_city, street_viewpoints, SceneSpec};

use common::{brute_cast, random_mesh};

fn segments(mesh: &CityMesh) -> Vec<u32> {
    (1..=mesh.polygons.len() as u32).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Yaw `theta` sees what yaw 0 sees after the scene is turned by the
    /// matching rotation about the camera.
    #[test]
    fn yawed_view_equals_rotated_scene(seed in 0u64..1000, yaw_step in 0usize..8, jitter in -0.3..0.3f64, pitch in 0.0..45.0f64) {
        let city = generate_city(&SceneSpec { area: 100.0 * 100.0, rotated_fraction: 0.5, ..SceneSpec::new(seed, 4) }).unwrap();
        let pose = street_viewpoints(&city, 1, 2.0, seed)[0];
        let theta = (yaw_step as f64 * 45.0).to_radians() + if seed % 2 == 0 { 0.0 } else { jitter };
        let yawed = PerspectiveIntrinsics::new(90.0, 96, 96, theta, pitch.to_radians()).unwrap();
        let front = PerspectiveIntrinsics { yaw: 0.0, ..yawed };

        let m = world_to_camera(&pose, &front).transpose() * world_to_camera(&pose, &yawed);
        let mut turned = city.mesh.clone();
        for v in &mut turned.vertices {
            *v = pose.location + m * (*v - pose.location);
        }
        let a = CadScene::new(&city.mesh, &city.segment_labels).unwrap().render(&RenderConfig::new(yawed, pose)).unwrap();
        let b = CadScene::new(&turned, &city.segment_labels).unwrap().render(&RenderConfig::new(front, pose)).unwrap();
        let differing = a.segment_id.iter().zip(&b.segment_id).filter(|(x, y)| x != y).count();
        prop_assert_eq!(differing, 0);
    }

    #[test]
    fn depth_matches_ray_casting(seed in 0u64..1000, yaw in 0.0..6.28f64, pitch in 0.0..45.0f64) {
        let mesh = random_mesh(seed, 100);
        let segs = segments(&mesh);
        let pose = CameraPose::level(Vector3::new(-6.0, -6.0, 4.0), 45f64.to_radians());
        let intr = PerspectiveIntrinsics::new(90.0, 64, 64, yaw, pitch.to_radians()).unwrap();
        let cfg = RenderConfig::new(intr, pose);
        let layers = CadScene::new(&mesh, &segs).unwrap().render(&cfg).unwrap();
        let ct = world_to_camera(&pose, &intr).transpose();
        let (w, h) = (64usize, 64usize);
        let mut depth = vec![f64::INFINITY; w * h];
        let mut label = vec![0u32; w * h];
        for y in 0..h {
            for x in 0..w {
                let d = intr.unproject(x as f64 + 0.5, y as f64 + 0.5).normalize();
                if let Some((t, p)) = brute_cast(&mesh, &pose.location, &(ct * d)) {
                    if t * d.z >= cfg.near {
                        depth[y * w + x] = t * d.z;
                        label[y * w + x] = segs[p];
                    }
                }
            }
        }
        let mut bad = 0;
        let mut compared = 0;
        for y in 0..h {
            for x in 0..w {
                let k = y * w + x;
                let edge = (y.saturating_sub(1)..=(y + 1).min(h - 1)).any(|yy| {
                    (x.saturating_sub(1)..=(x + 1).min(w - 1))
                        .any(|xx| label[yy * w + xx] != label[k] || layers.segment_id[yy * w + xx] != layers.segment_id[k])
                });
                if edge {
                    continue;
                }
                compared += 1;
                let same = (depth[k].is_infinite() && layers.depth[k].is_infinite()) || (depth[k] - layers.depth[k]).abs() <= 1e-4;
                bad += !same as usize;
            }
        }
        prop_assert!(bad as f64 <= 1e-3 * compared as f64, "{bad} of {compared}");
    }
}

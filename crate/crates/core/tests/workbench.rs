use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use umbra_core::geometry::{shell_point, SurfaceHit};
use umbra_core::occluder::sphere_quadrature;
use umbra_core::renderer::{render_image, shade, Image, PixelKey, RenderSettings};
use umbra_core::solver::{initialize, SolverConfig};
use umbra_core::workbench::pfm::{decode_pfm, encode_pfm};
use umbra_core::workbench::*;
use umbra_core::TriangleMesh;

fn small_toy() -> ToyScene {
    ToyScene {
        frames: 3,
        size: 8,
        ..Default::default()
    }
}

#[test]
fn pfm_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut im = Image::new(7, 5);
    for p in &mut im.pixels {
        *p = [0, 1, 2].map(|_| rng.random_range(-1e3f32..1e3) as f64);
    }
    let bytes = encode_pfm(&im);
    let back = decode_pfm(&bytes).unwrap();
    assert_eq!(back, im);
    assert_eq!(encode_pfm(&back), bytes);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.pfm");
    write_pfm(&path, &im).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    assert_eq!(read_pfm(&path).unwrap(), im);
}

#[test]
fn same_seed_renders_identical_bytes() {
    let scene = small_toy().build().unwrap();
    let s = RenderSettings {
        material_samples: 8,
        light_samples: 8,
        aa_passes: 2,
        ..Default::default()
    };
    let a = encode_pfm(&render_image(&scene, 1, &s, 4).unwrap());
    let b = encode_pfm(&render_image(&scene, 1, &s, 4).unwrap());
    let c = encode_pfm(&render_image(&scene, 1, &s, 5).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn dataset_survives_disk() {
    let scene = small_toy().build().unwrap();
    let s = RenderSettings {
        material_samples: 2,
        light_samples: 2,
        aa_passes: 1,
        ..Default::default()
    };
    let data = generate(&scene, &s, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(dir.path(), &data).unwrap();
    assert_eq!(manifest.frames.len(), 3);
    assert!(manifest.frames.iter().all(|f| !f.image.contains('/')));
    let (back, _) = read_dataset(dir.path()).unwrap();
    for (a, b) in data.frames.iter().zip(&back.frames) {
        assert_eq!(a.camera, b.camera);
        assert_eq!(a.mask, b.mask);
        assert_eq!(a.radius, b.radius);
        for (p, q) in a.image.pixels.iter().zip(&b.image.pixels) {
            for c in 0..3 {
                assert_eq!(p[c] as f32 as f64, q[c]);
            }
        }
    }
    assert_eq!(data.truth.occluders, back.truth.occluders);
    let (h, w, _) = back.truth.env.as_ref().unwrap();
    assert_eq!((*h, *w), (10, 20));
}

#[test]
fn mesh_dataset_writes_obj() {
    let mut scene = small_toy().build().unwrap();
    scene.geometry = umbra_core::ObjectGeometry::Mesh(TriangleMesh::blob(9, 12, 0.1, 2));
    let s = RenderSettings {
        material_samples: 2,
        light_samples: 2,
        aa_passes: 1,
        ..Default::default()
    };
    let data = generate(&scene, &s, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &data).unwrap();
    let (back, _) = read_dataset(&dir.path().join("manifest.toml")).unwrap();
    let (umbra_core::ObjectGeometry::Mesh(a), umbra_core::ObjectGeometry::Mesh(b)) = (&data.geometry, &back.geometry) else {
        panic!("mesh expected");
    };
    assert_eq!(a.faces(), b.faces());
    assert_eq!(a.positions(), b.positions());
}

#[test]
fn checkpoint_restores_parameters() {
    let scene = small_toy().build().unwrap();
    let s = RenderSettings {
        material_samples: 2,
        light_samples: 2,
        aa_passes: 1,
        ..Default::default()
    };
    let data = generate(&scene, &s, 1).unwrap();
    let cfg = SolverConfig {
        sh_degree: 3,
        env_height: 4,
        env_width: 8,
        env_levels: 2,
        hidden_layers: 1,
        hidden_width: 8,
        ..Default::default()
    };
    let mut solved = initialize(&data, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for v in solved.params.values_mut() {
        *v = rng.random_range(-2.0..2.0);
    }
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(dir.path(), &solved, &cfg, 17).unwrap();
    let (back, manifest) = load_checkpoint(dir.path(), &data).unwrap();
    assert_eq!(manifest.step, 17);
    assert_eq!(back.params.values(), solved.params.values());
    // Corrupted payloads are rejected rather than silently truncated.
    std::fs::write(dir.path().join("environment.bin"), [0u8; 12]).unwrap();
    assert!(load_checkpoint(dir.path(), &data).is_err());
}

#[test]
fn occluded_shading_matches_quadrature_per_frame() {
    let toy = ToyScene {
        frames: 4,
        size: 8,
        ..Default::default()
    };
    let scene = toy.build().unwrap();
    let table = scene.sampling_table();
    let settings = RenderSettings {
        material_samples: 512,
        light_samples: 512,
        aa_passes: 1,
        ..Default::default()
    };
    let values = scene.params.values();
    let mut shaded = Vec::new();
    for t in 0..4 {
        // Surface point facing the camera, where its caps bite hardest.
        let n = scene.cameras[t].position.normalize();
        let hit = SurfaceHit {
            t: 3.0,
            position: n,
            normal: n,
            primitive: 0,
            barycentric: None,
        };
        let r = scene.occluders.radius(t).unwrap();
        let reference = sphere_quadrature(400, 800, |w| {
            let cos = n.dot(w);
            if cos <= 0.0 {
                return 0.0;
            }
            let m = scene.occluders.mask_plain(values, t, &shell_point(&n, w, r));
            scene.env.eval_plain(values, w)[0] * m * cos * 0.5 / PI
        });
        let key = PixelKey {
            seed: 21,
            frame: t,
            pixel: 0,
            pass: 0,
        };
        let est = shade(&scene, &table, t, &hit, &n, &settings, &key).unwrap();
        let tol = 4.0 * est.std_error[0] + 2e-3 * reference;
        assert!(
            (est.value[0] - reference).abs() < tol,
            "frame {t}: {} vs {reference} (se {})",
            est.value[0],
            est.std_error[0]
        );
        shaded.push(reference);
    }
    let spread = shaded.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - shaded.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread > 0.01, "{shaded:?}");
}

#[test]
fn config_builds_toy_equivalent() {
    let cfg = SceneConfig::parse(
        r#"
seed = 1
[environment]
kind = "procedural"
seed = 1
[occluders]
kind = "caps"
per_frame = 1
radius_min = 0.4
radius_max = 0.7
spread = 0.6
[cameras]
kind = "orbit"
count = 3
radius = 4.0
elevation = 0.8
spiral = true
size = 8
"#,
    )
    .unwrap();
    let scene = cfg.build_scene(std::path::Path::new(".")).unwrap();
    let toy = small_toy().build().unwrap();
    assert_eq!(scene.cameras, toy.cameras);
    assert_eq!(scene.occluders, toy.occluders);
    assert_eq!(scene.params.values(), toy.params.values());
}

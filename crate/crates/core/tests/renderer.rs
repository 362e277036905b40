use std::f64::consts::PI;

use umbra_core::autodiff::ParameterStore;
use umbra_core::envlight::EnvironmentPyramid;
use umbra_core::geometry::{ObjectGeometry, Ray, Vec3};
use umbra_core::material::MaterialModel;
use umbra_core::occluder::{Cap, CapMasks, OccluderModel};
use umbra_core::renderer::{orbit_cameras, render_image, shade, PixelKey, RenderSettings, Scene};

fn furnace(occluders: OccluderModel) -> Scene {
    let mut params = ParameterStore::new();
    let env = EnvironmentPyramid::allocate(&mut params, 10, 20, 3, 2.0).unwrap();
    Scene {
        geometry: ObjectGeometry::unit_sphere(),
        material: MaterialModel::lambertian([0.5; 3]),
        env,
        occluders,
        cameras: orbit_cameras(1, 4.0, 0.3, false, 0.7, 16),
        params,
    }
}

#[test]
fn furnace_shade_returns_albedo() {
    let scene = furnace(OccluderModel::None);
    let table = scene.sampling_table();
    let hit = scene.geometry.intersect(&Ray::new(Vec3::new(0.2, 0.1, 5.0), -Vec3::z())).unwrap();
    for seed in 0..5 {
        let key = PixelKey { seed, frame: 0, pixel: 0, pass: 0 };
        let r = shade(&scene, &table, 0, &hit, &Vec3::z(), &RenderSettings::default(), &key).unwrap();
        for c in 0..3 {
            assert!((r.value[c] - 0.5).abs() < 3.0 * r.std_error[c], "{:?}", r);
            assert!(r.std_error[c] < 0.01, "{:?}", r);
        }
    }
}

#[test]
fn dark_shell_renders_black_object() {
    let caps = OccluderModel::Caps(CapMasks {
        radii: vec![4.0],
        caps: vec![vec![Cap { center: Vec3::z(), radius: PI }]],
    });
    let scene = furnace(caps);
    let settings = RenderSettings { material_samples: 32, light_samples: 32, aa_passes: 1, ..Default::default() };
    let img = render_image(&scene, 0, &settings, 3).unwrap();
    assert!(img.pixels.iter().all(|p| p.iter().all(|&v| v == 0.0)));
}

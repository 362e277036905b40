//! Shared fixtures for the criterion benchmarks.

use umbra_core::renderer::{PixelKey, RenderSettings, Scene};
use umbra_core::solver::{initialize, Dataset, SolverConfig};
use umbra_core::workbench::{generate, ToyScene};

/// Small toy dataset and the solver's initial scene for it.
pub fn toy_problem(size: usize) -> (Dataset, Scene, SolverConfig) {
    let truth = ToyScene { frames: 2, size, ..Default::default() }.build().expect("toy scene");
    let settings = RenderSettings { material_samples: 8, light_samples: 8, aa_passes: 1, ..Default::default() };
    let data = generate(&truth, &settings, 1).expect("dataset");
    let config = SolverConfig {
        batch: 64,
        sh_degree: 6,
        mask_bias: 4.0,
        env_height: 10,
        env_width: 20,
        env_levels: 3,
        hidden_layers: 2,
        hidden_width: 32,
        render: RenderSettings { material_samples: 32, light_samples: 32, aa_passes: 1, ..Default::default() },
        ..Default::default()
    };
    let scene = initialize(&data, &config).expect("initial scene");
    (data, scene, config)
}

/// Key of an object pixel near the image centre.
pub fn centre_key(scene: &Scene) -> (usize, usize, PixelKey) {
    let cam = &scene.cameras[0];
    let (px, py) = (cam.width / 2, cam.height / 2);
    (px, py, PixelKey { seed: 0, frame: 0, pixel: py * cam.width + px, pass: 0 })
}

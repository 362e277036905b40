//! Synthetic dataset generation from a ground-truth scene.

use rayon::prelude::*;

use crate::occluder::OccluderModel;
use crate::renderer::{render_albedo, render_image, RenderError, RenderSettings, Scene};
use crate::solver::{Dataset, Frame, GroundTruth};

/// Renders every camera of `scene` and records the evaluation targets.
pub fn generate(scene: &Scene, settings: &RenderSettings, seed: u64) -> Result<Dataset, RenderError> {
    scene.validate()?;
    let rendered: Vec<_> = (0..scene.cameras.len())
        .into_par_iter()
        .map(|t| -> Result<_, RenderError> {
            let image = render_image(scene, t, settings, seed)?;
            let (albedo, mask) = render_albedo(scene, t)?;
            Ok((image, albedo, mask))
        })
        .collect::<Result<_, _>>()?;
    let mut frames = Vec::with_capacity(rendered.len());
    let mut albedo = Vec::with_capacity(rendered.len());
    for (t, (image, alb, mask)) in rendered.into_iter().enumerate() {
        let camera = scene.cameras[t];
        let radius = scene.occluders.radius(t).unwrap_or_else(|| camera.distance());
        frames.push(Frame {
            camera,
            radius,
            image,
            mask,
        });
        albedo.push(alb);
    }
    let values = scene.params.values();
    let env = Some((scene.env.height(), scene.env.width(), scene.env.texel_radiance(values)));
    let occluders = match &scene.occluders {
        OccluderModel::Caps(_) => Some(scene.occluders.clone()),
        _ => None,
    };
    Ok(Dataset {
        geometry: scene.geometry.clone(),
        frames,
        truth: GroundTruth { env, albedo, occluders },
    })
}

"""Simulated laser diffraction analysis of particle mixtures."""

from ._core import (
    Error,
    ModelBundle,
    OpticalConfig,
    ParticleSpec,
    SceneSpec,
    ShapeKind,
    analytic_far_field,
    build_v1,
    downsample,
    enumerate_categories,
    far_field,
    generate_dataset,
    load_models,
    overlap,
    place_particles,
    predict,
    rasterize,
    run_evaluate,
    run_generate,
    run_train,
    shape_footprint,
    simulate_frame,
)

__all__ = [
    "Error",
    "ModelBundle",
    "OpticalConfig",
    "ParticleSpec",
    "SceneSpec",
    "ShapeKind",
    "analytic_far_field",
    "build_v1",
    "downsample",
    "enumerate_categories",
    "far_field",
    "generate_dataset",
    "load_models",
    "overlap",
    "place_particles",
    "predict",
    "rasterize",
    "run_evaluate",
    "run_generate",
    "run_train",
    "shape_footprint",
    "simulate_frame",
]

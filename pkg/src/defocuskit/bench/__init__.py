"""Experiment harness: simulated sweeps and the small-image distortion pipeline."""
from .chart import make_test_chart
from .pipeline import (DistortionPipeline, PipelineConfig, make_sample_image, pipeline_model,
                       run_classification_pipeline, write_sample_set)
from .sweeps import (KINDS, SweepRecord, SweepResult, SweepSpec, default_scene, default_spec,
                     run_convergence_study, run_noise_sweep, run_sensitivity_sweep,
                     run_solvability_sweep, run_sweep, run_timing_comparison, speedup,
                     benchmark_model, write_manifest)

__all__ = [
    "KINDS", "DistortionPipeline", "PipelineConfig", "SweepRecord", "SweepResult", "SweepSpec",
    "default_scene", "default_spec", "make_sample_image", "make_test_chart", "pipeline_model",
    "run_classification_pipeline", "run_convergence_study", "run_noise_sweep",
    "run_sensitivity_sweep", "run_solvability_sweep", "run_sweep", "run_timing_comparison",
    "speedup", "benchmark_model", "write_manifest", "write_sample_set",
]

"""Toy latent-fusion video-editing engine.

Thin wrapper over the compiled core: deterministic DDIM sampling and
inversion, classifier-free guidance, two-branch latent fusion, and the
experiment pipeline driven by a JSON config.
"""

try:
    from ._latentfuse import (  # noqa: F401  (wheel layout)
        ConfigError,
        NoiseSchedule,
        Pipeline,
        config_fingerprint,
        ddim_invert_step,
        ddim_sample_step,
        frame_consistency,
        fuse_latents,
        next_alpha,
        textual_alignment,
    )
except ImportError:  # development layout: module on PYTHONPATH next to the build tree
    from _latentfuse import (  # noqa: F401
        ConfigError,
        NoiseSchedule,
        Pipeline,
        config_fingerprint,
        ddim_invert_step,
        ddim_sample_step,
        frame_consistency,
        fuse_latents,
        next_alpha,
        textual_alignment,
    )

__all__ = [
    "ConfigError",
    "NoiseSchedule",
    "Pipeline",
    "config_fingerprint",
    "ddim_invert_step",
    "ddim_sample_step",
    "frame_consistency",
    "fuse_latents",
    "next_alpha",
    "textual_alignment",
]

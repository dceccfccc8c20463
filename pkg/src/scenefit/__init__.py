"""scenefit: mesh-to-scene Sim(3) registration, camera trajectory synthesis,
and masked video-inpainting orchestration for 3DGS scene editing."""

__version__ = "0.1.0"

"""Passive scene probing and geometry/lighting-aware image compositing.

Moving objects in fixed-camera video are used as probes to recover an
occlusion map, a spatially varying lighting map, a ground-plane height
model, and a cast-shadow model. New cut-out objects can then be inserted
with automatic scale, brightness, occlusion, and shadows.
"""

__version__ = "0.1.0"

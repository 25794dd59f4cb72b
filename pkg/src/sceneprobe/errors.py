"""Exception types shared across the probing pipeline."""


class ProbeError(Exception):
    """Base class for all pipeline errors."""

    stage = "unknown"


class ManifestError(ProbeError):
    """Scene manifest is missing, malformed, or violates an invariant."""

    stage = "dataio"


class MaskFormatError(ProbeError):
    """Run-length mask data is inconsistent with the declared geometry."""

    stage = "dataio"


class SceneConfigError(ProbeError):
    """Synthetic scene configuration is invalid (e.g. sprite off the ground plane)."""

    stage = "synth"


class PlaneFitError(ProbeError):
    """Ground-plane fit failed: too few samples or degenerate geometry."""

    stage = "groundplane"


class OffPlaneError(ProbeError):
    """Placement position yields a non-positive predicted height."""

    stage = "groundplane"


class ShadowFitError(ProbeError):
    """Shadow model fit failed: insufficient or degenerate evidence."""

    stage = "shadow"


class EmptyLightingMapError(ProbeError):
    """Lighting map has no sampled pixels at all."""

    stage = "lighting"

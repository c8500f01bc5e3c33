"""Geometric constellation shaping for optical intensity (IM/DD) channels."""

__version__ = "0.1.0"

from .constellation import (  # noqa: E402
    ChannelParams,
    Constellation,
    ShapedDesign,
    build_shaped,
    centroid,
    centroid_constellation,
    pam,
    papr,
    quantile,
    scaling_gain_db,
    shift_scale,
)

__all__ = [
    "ChannelParams",
    "Constellation",
    "ShapedDesign",
    "build_shaped",
    "centroid",
    "centroid_constellation",
    "pam",
    "papr",
    "quantile",
    "scaling_gain_db",
    "shift_scale",
]
